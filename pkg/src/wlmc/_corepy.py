"""Pure numpy backend for the hot kernels.

Mirrors the API of the compiled core (`wlmc._core`). Selected automatically
when the extension is unavailable, or explicitly via WLMC_BACKEND=python.

Conventions shared by both backends:

- worldline position arrays have shape (n_loops, n_points + 1, dim), C
  order, float64; index k = 0 holds the start endpoint and k = n_points the
  end endpoint;
- time-slice sums run over k = 1 .. n_points (right-endpoint rule);
- pair tables M[i, j] hold sum_k f(|A[i, k] - B[j, k]|), single tables s[i]
  hold sum_k f(|A[i, k] - center|);
- the bridge recursion is elementwise multiply-then-add in a fixed order so
  both backends produce bitwise identical loops.

Central-kind codes (f as a function of squared separation r2):
    0  soft Coulomb      sign * (-alpha) / sqrt(r2 + d^2);  c0=alpha, c1=d^2, c2=sign
    1  bare Coulomb      sign * (-alpha) / sqrt(r2);        c0=alpha,         c2=sign
    2  harmonic          c0 * r2 (offset constant handled by the caller)
    3  screened erfcx    c2 * c0 * erfcx(sqrt(r2) * c1);    c0=pref, c1=inv,  c2=-sign

Well-kind codes (f as a function of the coordinate vector y):
    0  square well       v0 if |y_c - center_c| < half_width_c for all c else 0
    1  gaussian well     v0 * exp(-lam * |y - center|^2);   c1=lam
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfcx as _erfcx

BACKEND_NAME = "python"

# target temp-array size for chunked evaluation, in float64 elements
_CHUNK_ELEMS = 2_000_000

_DEGENERATE_RTOL = 1e-12


def bridge_recursion(qb, c, num_threads=1):
    """Run the sequential bridge filter.

    qb: (n_loops, n_points - 1, dim) scaled noise, c: (n_points - 1,)
    carry coefficients. Returns (n_loops, n_points + 1, dim) with exact
    zeros in the first and last slice.
    """
    nl, npm1, dim = qb.shape
    q = np.zeros((nl, npm1 + 2, dim))
    for k in range(1, npm1 + 1):
        np.multiply(q[:, k - 1], c[k - 1], out=q[:, k])
        q[:, k] += qb[:, k - 1]
    return q


def _central_f(r2, kind, c0, c1, c2):
    if kind == 0:
        return (c2 * -c0) / np.sqrt(r2 + c1)
    if kind == 1:
        with np.errstate(divide="ignore"):
            return (c2 * -c0) / np.sqrt(r2)
    if kind == 2:
        return c0 * r2
    if kind == 3:
        return (c2 * c0) * _erfcx(np.sqrt(r2) * c1)
    raise ValueError(f"unknown central kind {kind}")


def _well_f(y, kind, v0, c1, center, widths):
    if kind == 0:
        inside = np.all(np.abs(y - center) < widths, axis=-1)
        return np.where(inside, v0, 0.0)
    if kind == 1:
        d2 = np.sum((y - center) ** 2, axis=-1)
        return v0 * np.exp(-c1 * d2)
    raise ValueError(f"unknown well kind {kind}")


def _jchunks(n, per_row_elems):
    step = max(1, _CHUNK_ELEMS // max(per_row_elems, 1))
    for j0 in range(0, n, step):
        yield j0, min(j0 + step, n)


def central_pair_table(a, b, kind, c0, c1, c2, num_threads=1):
    a1 = a[:, 1:, :]
    b1 = b[:, 1:, :]
    nla = a1.shape[0]
    nlb, npts, dim = b1.shape
    m = np.empty((nla, nlb))
    for i in range(nla):
        for j0, j1 in _jchunks(nlb, npts * dim):
            diff = b1[j0:j1] - a1[i]
            r2 = np.einsum("jkd,jkd->jk", diff, diff)
            m[i, j0:j1] = _central_f(r2, kind, c0, c1, c2).sum(axis=1)
    return m


def central_pair_diag(a, b, kind, c0, c1, c2, num_threads=1):
    a1 = a[:, 1:, :]
    b1 = b[:, 1:, :]
    n, npts, dim = a1.shape
    out = np.empty(n)
    for i0, i1 in _jchunks(n, npts * dim):
        diff = a1[i0:i1] - b1[i0:i1]
        r2 = np.einsum("jkd,jkd->jk", diff, diff)
        out[i0:i1] = _central_f(r2, kind, c0, c1, c2).sum(axis=1)
    return out


def central_single_table(a, center, kind, c0, c1, c2, num_threads=1):
    a1 = a[:, 1:, :]
    n, npts, dim = a1.shape
    out = np.empty(n)
    for i0, i1 in _jchunks(n, npts * dim):
        diff = a1[i0:i1] - center
        r2 = np.einsum("jkd,jkd->jk", diff, diff)
        out[i0:i1] = _central_f(r2, kind, c0, c1, c2).sum(axis=1)
    return out


def well_pair_table(a, b, kind, v0, c1, center, widths, num_threads=1):
    a1 = a[:, 1:, :]
    b1 = b[:, 1:, :]
    nla = a1.shape[0]
    nlb, npts, dim = b1.shape
    m = np.empty((nla, nlb))
    for i in range(nla):
        for j0, j1 in _jchunks(nlb, npts * dim):
            y = a1[i] - b1[j0:j1]
            m[i, j0:j1] = _well_f(y, kind, v0, c1, center, widths).sum(axis=1)
    return m


def well_pair_diag(a, b, kind, v0, c1, center, widths, num_threads=1):
    a1 = a[:, 1:, :]
    b1 = b[:, 1:, :]
    n, npts, dim = a1.shape
    out = np.empty(n)
    for i0, i1 in _jchunks(n, npts * dim):
        y = a1[i0:i1] - b1[i0:i1]
        out[i0:i1] = _well_f(y, kind, v0, c1, center, widths).sum(axis=1)
    return out


def well_single_table(a, kind, v0, c1, center, widths, num_threads=1):
    a1 = a[:, 1:, :]
    n, npts, dim = a1.shape
    out = np.empty(n)
    for i0, i1 in _jchunks(n, npts * dim):
        out[i0:i1] = _well_f(a1[i0:i1], kind, v0, c1, center, widths).sum(axis=1)
    return out


def segment_average_terms(dp, dn):
    """Per-segment averages of 1/r for segments from dp to dn (..., D).

    Evaluates (1/|delta|) * ln(num/den) with delta = dn - dp,
    num = dn.delta + |delta||dn| and den = dp.delta + |delta||dp|, using the
    Gram identity num*num' = |dp x delta|^2 (num' the sign-flipped twin) to
    sidestep cancellation when a segment points almost straight at the
    origin. Degenerate segments (|delta| ~ 0) take the constant-separation
    value 1/|dp|.

    Returns (values, bad) where bad marks segments whose average diverges
    (log argument not finite); their value is the right-endpoint 1/|dn|.
    """
    delta = dn - dp
    ad2 = np.einsum("...d,...d->...", delta, delta)
    an2 = np.einsum("...d,...d->...", dn, dn)
    ap2 = np.einsum("...d,...d->...", dp, dp)
    ad = np.sqrt(ad2)
    an = np.sqrt(an2)
    ap = np.sqrt(ap2)
    dot = np.einsum("...d,...d->...", dn, dp)
    wp = dot - ap2
    wn = an2 - dot
    # squared cross product |dp x delta|^2, exact componentwise sum
    dim = dp.shape[-1]
    gram = np.zeros(np.broadcast_shapes(dp.shape[:-1], dn.shape[:-1]))
    for c in range(dim):
        for cc in range(c + 1, dim):
            t = dp[..., c] * delta[..., cc] - dp[..., cc] * delta[..., c]
            gram = gram + t * t
    degenerate = ad <= _DEGENERATE_RTOL * np.maximum(ap, an)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.where(wn >= 0, wn + ad * an, gram / (ad * an - wn))
        den = np.where(wp >= 0, wp + ad * ap, gram / (ad * ap - wp))
        smooth = np.log(num / den) / ad
        const = 1.0 / ap
        fallback = 1.0 / an
    val = np.where(degenerate, const, smooth)
    bad = ~np.isfinite(val) & ~degenerate
    val = np.where(bad, fallback, val)
    return val, bad


def _segment_means(y, coeff):
    """Summed segment averages of coeff/r along polylines y (…, N_p+1, D).

    Returns (value sums, flags); a sample is flagged when any of its
    segments needed the right-endpoint fallback.
    """
    val, bad = segment_average_terms(y[..., :-1, :], y[..., 1:, :])
    flag = np.any(bad, axis=-1).astype(np.uint8)
    return coeff * val.sum(axis=-1), flag


def smoothed_pair_table(a, b, alpha, sign, num_threads=1):
    nla = a.shape[0]
    nlb, nk, dim = b.shape
    m = np.empty((nla, nlb))
    flags = np.empty((nla, nlb), dtype=np.uint8)
    coeff = sign * -alpha
    for i in range(nla):
        for j0, j1 in _jchunks(nlb, nk * dim):
            y = a[i] - b[j0:j1]
            m[i, j0:j1], flags[i, j0:j1] = _segment_means(y, coeff)
    return m, flags


def smoothed_pair_diag(a, b, alpha, sign, num_threads=1):
    n, nk, dim = a.shape
    out = np.empty(n)
    flags = np.empty(n, dtype=np.uint8)
    coeff = sign * -alpha
    for i0, i1 in _jchunks(n, nk * dim):
        y = a[i0:i1] - b[i0:i1]
        out[i0:i1], flags[i0:i1] = _segment_means(y, coeff)
    return out, flags


def smoothed_single_table(a, center, alpha, sign, num_threads=1):
    n, nk, dim = a.shape
    out = np.empty(n)
    flags = np.empty(n, dtype=np.uint8)
    coeff = sign * -alpha
    for i0, i1 in _jchunks(n, nk * dim):
        y = a[i0:i1] - center
        out[i0:i1], flags[i0:i1] = _segment_means(y, coeff)
    return out, flags


def _accumulate(w, flags):
    s1 = float(np.sum(np.sum(w, axis=-1))) if w.ndim > 1 else float(np.sum(w))
    w2 = w * w
    s2 = float(np.sum(np.sum(w2, axis=-1))) if w.ndim > 1 else float(np.sum(w2))
    nf = 0 if flags is None else int(np.count_nonzero(flags))
    return s1, s2, nf


def exp_stats(expo, flags=None, num_threads=1):
    """Sum W and W^2 for W = exp(expo)."""
    with np.errstate(over="ignore"):
        w = np.exp(expo)
    return _accumulate(w, flags)


def combine2(msum, s0, s1, tau, extra, flags=None, f0=None, f1=None, num_threads=1):
    """Accumulate W over the double sum: W = exp(-tau*(M+s0+s1) + extra)."""
    x = msum + s0[:, None]
    x = x + s1[None, :]
    x *= -tau
    x += extra
    with np.errstate(over="ignore"):
        w = np.exp(x)
    ftot = None
    if flags is not None or f0 is not None or f1 is not None:
        nla, nlb = msum.shape
        ftot = np.zeros((nla, nlb), dtype=np.uint8)
        if flags is not None:
            ftot |= flags
        if f0 is not None:
            ftot |= f0[:, None]
        if f1 is not None:
            ftot |= f1[None, :]
    return _accumulate(w, ftot)


def combine3(
    m01,
    m02,
    m12,
    s0,
    s1,
    s2,
    tau,
    extra,
    f01=None,
    f02=None,
    f12=None,
    num_threads=1,
):
    """Accumulate W over the triple sum.

    W(i,j,l) = exp(-tau*(M01[i,j] + M02[i,l] + M12[j,l] + s0[i] + s1[j] + s2[l])
               + extra).
    """
    nl0, nl1 = m01.shape
    nl2 = m02.shape[1]
    row_w = np.empty(nl0)
    row_w2 = np.empty(nl0)
    nf = 0
    any_flags = f01 is not None or f02 is not None or f12 is not None
    for i in range(nl0):
        x = m01[i][:, None] + m02[i][None, :]
        x = x + m12
        x += s1[:, None]
        x += s2[None, :]
        x += s0[i]
        x *= -tau
        x += extra
        with np.errstate(over="ignore"):
            w = np.exp(x)
        row_w[i] = np.sum(np.sum(w, axis=-1))
        row_w2[i] = np.sum(np.sum(w * w, axis=-1))
        if any_flags:
            ft = np.zeros((nl1, nl2), dtype=np.uint8)
            if f01 is not None:
                ft |= f01[i][:, None]
            if f02 is not None:
                ft |= f02[i][None, :]
            if f12 is not None:
                ft |= f12
            nf += int(np.count_nonzero(ft))
    return float(np.sum(row_w)), float(np.sum(row_w2)), nf
