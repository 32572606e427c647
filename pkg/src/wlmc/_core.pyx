# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False
"""Compiled backend for the hot kernels.

API and numeric conventions mirror wlmc._corepy (see its module docstring
for the kind codes and array layouts). Differences are implementation only:

- time-slice sums use blocked accumulation (block size 256) with compensated
  combination across blocks, so results agree with the numpy backend's
  pairwise sums to a few ulps;
- the bridge recursion performs the same multiply-then-add per element as
  the numpy backend and is bitwise identical to it (builds use
  -ffp-contract=off, so no fused multiply-add creeps in);
- outer loops are OpenMP-parallel over rows; every row writes its partial
  sums to a fixed slot and the reduction over rows happens in numpy in a
  fixed order, so results are independent of the number of threads.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, log, sqrt, fabs, fmax
from scipy.special.cython_special cimport erfcx as c_erfcx

cnp.import_array()

BACKEND_NAME = "cython"

cdef enum:
    BLOCK = 256

cdef double _DEGENERATE_RTOL = 1e-12


# ---------------------------------------------------------------------------
# bridge recursion

def bridge_recursion(double[:, :, ::1] qb, double[::1] c, int num_threads=1):
    cdef Py_ssize_t nl = qb.shape[0]
    cdef Py_ssize_t npm1 = qb.shape[1]
    cdef Py_ssize_t dim = qb.shape[2]
    q_arr = np.zeros((nl, npm1 + 2, dim))
    cdef double[:, :, ::1] q = q_arr
    cdef Py_ssize_t i, k, d
    for i in prange(nl, nogil=True, schedule="static", num_threads=num_threads):
        for k in range(1, npm1 + 1):
            for d in range(dim):
                q[i, k, d] = qb[i, k - 1, d] + c[k - 1] * q[i, k - 1, d]
    return q_arr


# ---------------------------------------------------------------------------
# blocked time-slice sums, specialised per kind and dimension
#
# pa/pb point at the k = 1 row of a worldline (row stride = dim); npts is the
# number of summed slices.

cdef inline double _block_total(double* buf, int nb) noexcept nogil:
    cdef double s0 = 0, s1 = 0, s2 = 0, s3 = 0
    cdef int k = 0
    while k + 4 <= nb:
        s0 += buf[k]
        s1 += buf[k + 1]
        s2 += buf[k + 2]
        s3 += buf[k + 3]
        k += 4
    while k < nb:
        s0 += buf[k]
        k += 1
    return (s0 + s1) + (s2 + s3)


cdef double _central_sum(const double* pa, const double* pb, Py_ssize_t npts,
                         int dim, int kind, double c1) noexcept nogil:
    """sum_k g(r2_k) with the kind's coefficient hoisted out by the caller.

    g: kind 0 -> 1/sqrt(r2+c1), 1 -> 1/sqrt(r2), 2 -> r2,
       3 -> erfcx(sqrt(r2)*c1)
    """
    cdef double buf[BLOCK]
    cdef double total = 0, comp = 0, block, y, t, d0, d1, d2, r2
    cdef Py_ssize_t k = 0, kk, kk2, nb, base
    while k < npts:
        nb = npts - k
        if nb > BLOCK:
            nb = BLOCK
        if dim == 1:
            if kind == 2:
                for kk in range(nb):
                    d0 = pa[k + kk] - pb[k + kk]
                    buf[kk] = d0 * d0
            elif kind == 0:
                for kk in range(nb):
                    d0 = pa[k + kk] - pb[k + kk]
                    buf[kk] = 1.0 / sqrt(d0 * d0 + c1)
            elif kind == 1:
                for kk in range(nb):
                    d0 = pa[k + kk] - pb[k + kk]
                    buf[kk] = 1.0 / sqrt(d0 * d0)
            else:
                for kk in range(nb):
                    d0 = pa[k + kk] - pb[k + kk]
                    buf[kk] = c_erfcx(sqrt(d0 * d0) * c1)
        elif dim == 2:
            base = 2 * k
            if kind == 2:
                for kk in range(nb):
                    d0 = pa[base + 2 * kk] - pb[base + 2 * kk]
                    d1 = pa[base + 2 * kk + 1] - pb[base + 2 * kk + 1]
                    buf[kk] = d0 * d0 + d1 * d1
            elif kind == 0:
                for kk in range(nb):
                    d0 = pa[base + 2 * kk] - pb[base + 2 * kk]
                    d1 = pa[base + 2 * kk + 1] - pb[base + 2 * kk + 1]
                    buf[kk] = 1.0 / sqrt(d0 * d0 + d1 * d1 + c1)
            elif kind == 1:
                for kk in range(nb):
                    d0 = pa[base + 2 * kk] - pb[base + 2 * kk]
                    d1 = pa[base + 2 * kk + 1] - pb[base + 2 * kk + 1]
                    buf[kk] = 1.0 / sqrt(d0 * d0 + d1 * d1)
            else:
                for kk in range(nb):
                    d0 = pa[base + 2 * kk] - pb[base + 2 * kk]
                    d1 = pa[base + 2 * kk + 1] - pb[base + 2 * kk + 1]
                    buf[kk] = c_erfcx(sqrt(d0 * d0 + d1 * d1) * c1)
        elif dim == 3:
            base = 3 * k
            if kind == 2:
                for kk in range(nb):
                    d0 = pa[base + 3 * kk] - pb[base + 3 * kk]
                    d1 = pa[base + 3 * kk + 1] - pb[base + 3 * kk + 1]
                    d2 = pa[base + 3 * kk + 2] - pb[base + 3 * kk + 2]
                    buf[kk] = d0 * d0 + d1 * d1 + d2 * d2
            elif kind == 0:
                for kk in range(nb):
                    d0 = pa[base + 3 * kk] - pb[base + 3 * kk]
                    d1 = pa[base + 3 * kk + 1] - pb[base + 3 * kk + 1]
                    d2 = pa[base + 3 * kk + 2] - pb[base + 3 * kk + 2]
                    buf[kk] = 1.0 / sqrt(d0 * d0 + d1 * d1 + d2 * d2 + c1)
            elif kind == 1:
                for kk in range(nb):
                    d0 = pa[base + 3 * kk] - pb[base + 3 * kk]
                    d1 = pa[base + 3 * kk + 1] - pb[base + 3 * kk + 1]
                    d2 = pa[base + 3 * kk + 2] - pb[base + 3 * kk + 2]
                    buf[kk] = 1.0 / sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            else:
                for kk in range(nb):
                    d0 = pa[base + 3 * kk] - pb[base + 3 * kk]
                    d1 = pa[base + 3 * kk + 1] - pb[base + 3 * kk + 1]
                    d2 = pa[base + 3 * kk + 2] - pb[base + 3 * kk + 2]
                    buf[kk] = c_erfcx(sqrt(d0 * d0 + d1 * d1 + d2 * d2) * c1)
        else:
            base = dim * k
            for kk in range(nb):
                r2 = 0
                for kk2 in range(dim):
                    d0 = pa[base + dim * kk + kk2] - pb[base + dim * kk + kk2]
                    r2 = r2 + d0 * d0
                if kind == 2:
                    buf[kk] = r2
                elif kind == 0:
                    buf[kk] = 1.0 / sqrt(r2 + c1)
                elif kind == 1:
                    buf[kk] = 1.0 / sqrt(r2)
                else:
                    buf[kk] = c_erfcx(sqrt(r2) * c1)
        block = _block_total(buf, <int> nb)
        # compensated combination across blocks
        y = block - comp
        t = total + y
        comp = (t - total) - y
        total = t
        k += nb
    return total


cdef inline double _central_coeff(int kind, double c0, double c2) noexcept nogil:
    if kind == 2:
        return c0
    if kind == 3:
        return c2 * c0
    return c2 * -c0


def central_pair_table(double[:, :, ::1] a, double[:, :, ::1] b, int kind,
                       double c0, double c1, double c2, int num_threads=1):
    cdef Py_ssize_t nla = a.shape[0], nlb = b.shape[0]
    cdef Py_ssize_t npts = a.shape[1] - 1
    cdef int dim = <int> a.shape[2]
    m_arr = np.empty((nla, nlb))
    cdef double[:, ::1] m = m_arr
    cdef double coeff = _central_coeff(kind, c0, c2)
    cdef Py_ssize_t i, j
    for i in prange(nla, nogil=True, schedule="static", num_threads=num_threads):
        for j in range(nlb):
            m[i, j] = coeff * _central_sum(&a[i, 1, 0], &b[j, 1, 0],
                                           npts, dim, kind, c1)
    return m_arr


def central_pair_diag(double[:, :, ::1] a, double[:, :, ::1] b, int kind,
                      double c0, double c1, double c2, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t npts = a.shape[1] - 1
    cdef int dim = <int> a.shape[2]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double coeff = _central_coeff(kind, c0, c2)
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        out[i] = coeff * _central_sum(&a[i, 1, 0], &b[i, 1, 0],
                                      npts, dim, kind, c1)
    return out_arr


def central_single_table(double[:, :, ::1] a, double[::1] center, int kind,
                         double c0, double c1, double c2, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t npts = a.shape[1] - 1
    cdef int dim = <int> a.shape[2]
    # reuse the pair kernel against a constant worldline sitting at `center`
    fixed_arr = np.empty((1, a.shape[1], dim))
    fixed_arr[0] = np.asarray(center)
    cdef double[:, :, ::1] fixed = fixed_arr
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double coeff = _central_coeff(kind, c0, c2)
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        out[i] = coeff * _central_sum(&a[i, 1, 0], &fixed[0, 1, 0],
                                      npts, dim, kind, c1)
    return out_arr


# ---------------------------------------------------------------------------
# well terms

cdef double _well_sum(const double* py, Py_ssize_t npts, int dim, int kind,
                      double c1, const double* cen, const double* wid) noexcept nogil:
    """sum_k f(y_k) for well kinds; y rows at stride dim, k = 1 slice first.

    kind 0: indicator of |y_c - cen_c| < wid_c for all c (value 1 per slice,
    caller multiplies by the depth); kind 1: exp(-c1*|y-cen|^2).
    """
    cdef double buf[BLOCK]
    cdef double total = 0, comp = 0, block, y, t, r2, d0
    cdef Py_ssize_t k = 0, kk, c, nb
    cdef int inside
    while k < npts:
        nb = npts - k
        if nb > BLOCK:
            nb = BLOCK
        for kk in range(nb):
            if kind == 0:
                inside = 1
                for c in range(dim):
                    d0 = py[(k + kk) * dim + c] - cen[c]
                    if not (fabs(d0) < wid[c]):
                        inside = 0
                        break
                buf[kk] = 1.0 if inside else 0.0
            else:
                r2 = 0
                for c in range(dim):
                    d0 = py[(k + kk) * dim + c] - cen[c]
                    r2 += d0 * d0
                buf[kk] = exp(-c1 * r2)
        block = _block_total(buf, <int> nb)
        y = block - comp
        t = total + y
        comp = (t - total) - y
        total = t
        k += nb
    return total


def well_single_table(double[:, :, ::1] a, int kind, double v0, double c1,
                      double[::1] center, double[::1] widths, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t npts = a.shape[1] - 1
    cdef int dim = <int> a.shape[2]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        out[i] = v0 * _well_sum(&a[i, 1, 0], npts, dim, kind, c1,
                                &center[0], &widths[0])
    return out_arr


def well_pair_table(double[:, :, ::1] a, double[:, :, ::1] b, int kind,
                    double v0, double c1, double[::1] center,
                    double[::1] widths, int num_threads=1):
    cdef Py_ssize_t nla = a.shape[0], nlb = b.shape[0]
    cdef Py_ssize_t nk = a.shape[1]
    cdef Py_ssize_t npts = nk - 1
    cdef int dim = <int> a.shape[2]
    m_arr = np.empty((nla, nlb))
    cdef double[:, ::1] m = m_arr
    cdef Py_ssize_t i, j, k, c
    ybuf = np.empty(nk * dim)
    cdef double[::1] yb = ybuf
    for i in range(nla):
        for j in range(nlb):
            for k in range(nk):
                for c in range(dim):
                    yb[k * dim + c] = a[i, k, c] - b[j, k, c]
            m[i, j] = v0 * _well_sum(&yb[dim], npts, dim, kind, c1,
                                     &center[0], &widths[0])
    return m_arr


def well_pair_diag(double[:, :, ::1] a, double[:, :, ::1] b, int kind,
                   double v0, double c1, double[::1] center,
                   double[::1] widths, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t nk = a.shape[1]
    cdef Py_ssize_t npts = nk - 1
    cdef int dim = <int> a.shape[2]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    ybuf_all = np.empty(nk * dim)
    cdef double[::1] yb = ybuf_all
    cdef Py_ssize_t i, k, c
    for i in range(n):
        for k in range(nk):
            for c in range(dim):
                yb[k * dim + c] = a[i, k, c] - b[i, k, c]
        out[i] = v0 * _well_sum(&yb[dim], npts, dim, kind, c1,
                                &center[0], &widths[0])
    return out_arr


# ---------------------------------------------------------------------------
# log-smoothed 1/r segment averages

cdef double _smoothed_sum(const double* pa, const double* pb, Py_ssize_t nk,
                          int dim, bint pb_fixed, unsigned char* flag) noexcept nogil:
    """Sum of per-segment averages of 1/|y| along y_k = a_k - b_k.

    Same robust evaluation as _corepy.segment_average_terms: the cancelling
    factor of (1/|delta|) ln(num/den) is replaced through the Gram identity
    |dp x delta|^2 = (|delta||dp|)^2 - (dp.delta)^2 whenever dp.delta (or
    dn.delta) is negative. pb_fixed means pb points at a single row (a fixed
    centre). Writes 1 to *flag when the right-endpoint fallback was used for
    any segment.
    """
    cdef double total = 0, comp = 0, y, t
    cdef double ap2, an2, ap, an, dot, ad, ad2, dx, dy, dz
    cdef double pxp, pyp, pzp, pxn, pyn, pzn
    cdef double num, den, val, wp, wn, gram, g1, g2, g3
    cdef double comp_p, comp_n, comp_d
    cdef Py_ssize_t k, c, cc, off_p, off_n
    flag[0] = 0
    if dim <= 3:
        pxp = pa[0] - pb[0]
        pyp = (pa[1] - pb[1]) if dim > 1 else 0
        pzp = (pa[2] - pb[2]) if dim > 2 else 0
        ap2 = pxp * pxp + pyp * pyp + pzp * pzp
        ap = sqrt(ap2)
        for k in range(1, nk):
            off_n = k * dim
            if not pb_fixed:
                pxn = pa[off_n] - pb[off_n]
                pyn = (pa[off_n + 1] - pb[off_n + 1]) if dim > 1 else 0
                pzn = (pa[off_n + 2] - pb[off_n + 2]) if dim > 2 else 0
            else:
                pxn = pa[off_n] - pb[0]
                pyn = (pa[off_n + 1] - pb[1]) if dim > 1 else 0
                pzn = (pa[off_n + 2] - pb[2]) if dim > 2 else 0
            an2 = pxn * pxn + pyn * pyn + pzn * pzn
            an = sqrt(an2)
            dx = pxn - pxp
            dy = pyn - pyp
            dz = pzn - pzp
            ad2 = dx * dx + dy * dy + dz * dz
            ad = sqrt(ad2)
            if ad <= _DEGENERATE_RTOL * fmax(ap, an):
                val = 1.0 / ap
            else:
                dot = pxn * pxp + pyn * pyp + pzn * pzp
                wp = dot - ap2
                wn = an2 - dot
                if wn >= 0 and wp >= 0:
                    num = wn + ad * an
                    den = wp + ad * ap
                else:
                    g1 = pyp * dz - pzp * dy
                    g2 = pzp * dx - pxp * dz
                    g3 = pxp * dy - pyp * dx
                    gram = g1 * g1 + g2 * g2 + g3 * g3
                    num = (wn + ad * an) if wn >= 0 else gram / (ad * an - wn)
                    den = (wp + ad * ap) if wp >= 0 else gram / (ad * ap - wp)
                val = log(num / den) / ad
                if not (val - val == 0):  # non-finite: divergent average
                    val = 1.0 / an
                    flag[0] = 1
            # compensated accumulation
            y = val - comp
            t = total + y
            comp = (t - total) - y
            total = t
            pxp = pxn
            pyp = pyn
            pzp = pzn
            ap2 = an2
            ap = an
    else:
        # generic dimension, rarely used
        for k in range(1, nk):
            off_p = (k - 1) * dim
            off_n = k * dim
            ap2 = 0
            an2 = 0
            dot = 0
            ad2 = 0
            for c in range(dim):
                pxp = pa[off_p + c] - (pb[c] if pb_fixed else pb[off_p + c])
                pxn = pa[off_n + c] - (pb[c] if pb_fixed else pb[off_n + c])
                ap2 += pxp * pxp
                an2 += pxn * pxn
                dot += pxn * pxp
                dx = pxn - pxp
                ad2 += dx * dx
            ap = sqrt(ap2)
            an = sqrt(an2)
            ad = sqrt(ad2)
            if ad <= _DEGENERATE_RTOL * fmax(ap, an):
                val = 1.0 / ap
            else:
                wp = dot - ap2
                wn = an2 - dot
                if wn >= 0 and wp >= 0:
                    num = wn + ad * an
                    den = wp + ad * ap
                else:
                    gram = 0
                    for c in range(dim):
                        comp_p = pa[off_p + c] - (pb[c] if pb_fixed else pb[off_p + c])
                        comp_d = (pa[off_n + c] - (pb[c] if pb_fixed else pb[off_n + c])) - comp_p
                        for cc in range(c + 1, dim):
                            pxp = pa[off_p + cc] - (pb[cc] if pb_fixed else pb[off_p + cc])
                            dx = (pa[off_n + cc] - (pb[cc] if pb_fixed else pb[off_n + cc])) - pxp
                            g1 = comp_p * dx - pxp * comp_d
                            gram += g1 * g1
                    num = (wn + ad * an) if wn >= 0 else gram / (ad * an - wn)
                    den = (wp + ad * ap) if wp >= 0 else gram / (ad * ap - wp)
                val = log(num / den) / ad
                if not (val - val == 0):
                    val = 1.0 / an
                    flag[0] = 1
            y = val - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return total


def smoothed_pair_table(double[:, :, ::1] a, double[:, :, ::1] b,
                        double alpha, double sign, int num_threads=1):
    cdef Py_ssize_t nla = a.shape[0], nlb = b.shape[0]
    cdef Py_ssize_t nk = a.shape[1]
    cdef int dim = <int> a.shape[2]
    m_arr = np.empty((nla, nlb))
    f_arr = np.zeros((nla, nlb), dtype=np.uint8)
    cdef double[:, ::1] m = m_arr
    cdef unsigned char[:, ::1] f = f_arr
    cdef double coeff = sign * -alpha
    cdef Py_ssize_t i, j
    for i in prange(nla, nogil=True, schedule="static", num_threads=num_threads):
        for j in range(nlb):
            m[i, j] = coeff * _smoothed_sum(&a[i, 0, 0], &b[j, 0, 0], nk, dim,
                                            0, &f[i, j])
    return m_arr, f_arr


def smoothed_pair_diag(double[:, :, ::1] a, double[:, :, ::1] b,
                       double alpha, double sign, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t nk = a.shape[1]
    cdef int dim = <int> a.shape[2]
    out_arr = np.empty(n)
    f_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] f = f_arr
    cdef double coeff = sign * -alpha
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        out[i] = coeff * _smoothed_sum(&a[i, 0, 0], &b[i, 0, 0], nk, dim,
                                       0, &f[i])
    return out_arr, f_arr


def smoothed_single_table(double[:, :, ::1] a, double[::1] center,
                          double alpha, double sign, int num_threads=1):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t nk = a.shape[1]
    cdef int dim = <int> a.shape[2]
    out_arr = np.empty(n)
    f_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] f = f_arr
    cdef double coeff = sign * -alpha
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        out[i] = coeff * _smoothed_sum(&a[i, 0, 0], &center[0], nk, dim,
                                       1, &f[i])
    return out_arr, f_arr


# ---------------------------------------------------------------------------
# Wilson-line accumulation

def exp_stats(double[::1] expo, unsigned char[::1] flags=None, int num_threads=1):
    cdef Py_ssize_t n = expo.shape[0]
    cdef double s1 = 0, c1k = 0, s2 = 0, c2k = 0, w, y, t
    cdef Py_ssize_t i
    cdef long nf = 0
    with nogil:
        for i in range(n):
            w = exp(expo[i])
            y = w - c1k
            t = s1 + y
            c1k = (t - s1) - y
            s1 = t
            y = w * w - c2k
            t = s2 + y
            c2k = (t - s2) - y
            s2 = t
    if flags is not None:
        for i in range(n):
            if flags[i]:
                nf += 1
    return s1, s2, <int> nf


def combine2(double[:, ::1] msum, double[::1] s0, double[::1] s1,
             double tau, double extra,
             unsigned char[:, ::1] flags=None,
             unsigned char[::1] f0=None, unsigned char[::1] f1=None,
             int num_threads=1):
    cdef Py_ssize_t nla = msum.shape[0], nlb = msum.shape[1]
    row_w_arr = np.empty(nla)
    row_w2_arr = np.empty(nla)
    row_nf_arr = np.zeros(nla, dtype=np.int64)
    cdef double[::1] row_w = row_w_arr
    cdef double[::1] row_w2 = row_w2_arr
    cdef long[::1] row_nf = row_nf_arr
    cdef bint have_flags = flags is not None or f0 is not None or f1 is not None
    cdef bint hf01 = flags is not None, hf0 = f0 is not None, hf1 = f1 is not None
    cdef Py_ssize_t i, j
    cdef double a_i, e, w, y, t, sw, cw, sw2, cw2
    cdef long nf
    for i in prange(nla, nogil=True, schedule="static", num_threads=num_threads):
        sw = 0
        cw = 0
        sw2 = 0
        cw2 = 0
        nf = 0
        a_i = s0[i]
        for j in range(nlb):
            e = -tau * (msum[i, j] + a_i + s1[j]) + extra
            w = exp(e)
            y = w - cw
            t = sw + y
            cw = (t - sw) - y
            sw = t
            y = w * w - cw2
            t = sw2 + y
            cw2 = (t - sw2) - y
            sw2 = t
            if have_flags:
                if (hf01 and flags[i, j]) or (hf0 and f0[i]) or (hf1 and f1[j]):
                    nf = nf + 1
        row_w[i] = sw
        row_w2[i] = sw2
        row_nf[i] = nf
    return (float(np.sum(row_w_arr)), float(np.sum(row_w2_arr)),
            int(np.sum(row_nf_arr)))


def combine3(double[:, ::1] m01, double[:, ::1] m02, double[:, ::1] m12,
             double[::1] s0, double[::1] s1, double[::1] s2,
             double tau, double extra,
             unsigned char[:, ::1] f01=None, unsigned char[:, ::1] f02=None,
             unsigned char[:, ::1] f12=None, int num_threads=1):
    cdef Py_ssize_t nl0 = m01.shape[0], nl1 = m01.shape[1], nl2 = m02.shape[1]
    row_w_arr = np.empty(nl0)
    row_w2_arr = np.empty(nl0)
    row_nf_arr = np.zeros(nl0, dtype=np.int64)
    cdef double[::1] row_w = row_w_arr
    cdef double[::1] row_w2 = row_w2_arr
    cdef long[::1] row_nf = row_nf_arr
    cdef bint hf01 = f01 is not None, hf02 = f02 is not None, hf12 = f12 is not None
    cdef bint have_flags = hf01 or hf02 or hf12
    cdef Py_ssize_t i, j, l
    cdef double e, w, y, t, sw, cw, sw2, cw2, base_ij, s0_i
    cdef long nf
    for i in prange(nl0, nogil=True, schedule="static", num_threads=num_threads):
        sw = 0
        cw = 0
        sw2 = 0
        cw2 = 0
        nf = 0
        s0_i = s0[i]
        for j in range(nl1):
            base_ij = m01[i, j] + s0_i + s1[j]
            for l in range(nl2):
                e = -tau * (base_ij + m02[i, l] + m12[j, l] + s2[l]) + extra
                w = exp(e)
                y = w - cw
                t = sw + y
                cw = (t - sw) - y
                sw = t
                y = w * w - cw2
                t = sw2 + y
                cw2 = (t - sw2) - y
                sw2 = t
                if have_flags:
                    if (hf01 and f01[i, j]) or (hf02 and f02[i, l]) \
                            or (hf12 and f12[j, l]):
                        nf = nf + 1
        row_w[i] = sw
        row_w2[i] = sw2
        row_nf[i] = nf
    return (float(np.sum(row_w_arr)), float(np.sum(row_w2_arr)),
            int(np.sum(row_nf_arr)))
