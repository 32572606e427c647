"""Command-line interface.

Verbs:
    run        execute the experiment described by a config file
    benchmark  run the wall-time scaling study from the benchmark block
    verify     run the built-in invariant suite and report pass/fail
    describe   print the resolved configuration and its hash

Exit codes: 0 success; 1 configuration error; 2 runtime error (partial
results are preserved in the output directory).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__, bench, records, rng
from .config import load_config
from .diag import GridSpec, assemble, ground_state, ground_state_dense, \
    reduce_relative
from .errors import ConfigError, WlmcError
from .estimator import (
    EstimatorConfig,
    SystemSpec,
    estimate_propagator,
    smoothed_segment,
)
from .loops import sample_unit_loops
from .potentials import PotentialSpec, PotentialTerm, SoftCoulomb
from .analytic import free_ln_kernel
from .runner import run_experiment

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wlmc",
        description=(
            "Worldline Monte Carlo estimation of multi-particle Euclidean "
            "propagators and ground-state energies, with a sparse "
            "grid-diagonalisation baseline."
        ),
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb")
    for verb, text in (
        ("run", "run the configured experiment"),
        ("benchmark", "run the wall-time scaling study"),
        ("verify", "run the built-in invariant suite"),
        ("describe", "print the resolved configuration"),
    ):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", help="path to a YAML config file")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads for batched kernels (default 1)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed from the config")
        p.add_argument("--out", default=None,
                       help="output directory (overrides output.directory)")
    return parser


def _require_config(args, parser) -> str:
    if not args.config:
        parser.print_usage(sys.stderr)
        print(f"wlmc {args.verb}: --config PATH is required",
              file=sys.stderr)
        raise ConfigError("--config PATH is required")
    return args.config


def _cmd_run(args, parser) -> int:
    config = load_config(_require_config(args, parser))
    if config.wmc is None and config.diag is None:
        raise ConfigError(
            "config: run requires a wmc or diag block (benchmark-only "
            "configs go through the benchmark verb)"
        )
    out_dir = args.out or config.output.get("directory", "results")
    result = run_experiment(config, out_dir=out_dir, workers=args.workers,
                            seed_override=args.seed, progress=print)
    for path in result.files:
        print(f"wrote {path}")
    for label, value, stage, message in result.errors:
        print(f"error [{stage}] sweep {label}={value}: {message}",
              file=sys.stderr)
    return result.exit_code


def _cmd_benchmark(args, parser) -> int:
    config = load_config(_require_config(args, parser))
    block = config.benchmark
    if block is None:
        raise ConfigError("config: benchmark verb needs a benchmark block")
    seed = args.seed if args.seed is not None else 0
    repeats = int(block.get("repeats", 2))
    rows = []
    if "wmc_tuple_counts" in block:
        n_points = int(block.get("wmc_n_points", 2000))
        for dim in block.get("wmc_dimensions", [1]):
            res = bench.wmc_scaling(
                block["wmc_tuple_counts"], dim, n_points=n_points,
                seed=seed, repeats=repeats,
            )
            rows.extend(res.timing_rows(n_points=n_points))
            print(f"wmc {dim}D: exponent {res.exponent:.3f} over sizes "
                  f"{res.sizes}")
    if "diag_n_points" in block:
        res = bench.diag_scaling(block["diag_n_points"], dimension=2,
                                 seed=seed, repeats=repeats)
        rows.extend(res.timing_rows())
        print(f"diag 2D: exponent {res.exponent:.3f} over grid sizes "
              f"{res.sizes}")
    comparison = bench.backend_comparison(seed=seed, repeats=repeats)
    for name, wall in sorted(comparison.items()):
        print(f"backend {name}: {wall:.4f} s per nested estimate")
    if "python" in comparison and "cython" in comparison:
        print(f"backend speedup (python/cython): "
              f"{comparison['python'] / comparison['cython']:.2f}x")
    out_dir = args.out or config.output.get("directory", "results")
    path = records.write_records(out_dir, "timing", rows, {
        "version": __version__, "config_sha256": config.sha256, "seed": seed,
    })
    print(f"wrote {path}")
    return 0


def _check_bridge_covariance(seed: int):
    n_points, n_loops = 16, 20000
    key = rng.philox_key(seed)
    loops = sample_unit_loops(key, n_loops, n_points, 1,
                              context=rng.context_hash("verify-bridge"))
    q = loops[:, 1:n_points, 0]
    idx = np.arange(1, n_points)
    exact = (np.minimum.outer(idx, idx)
             * (n_points - np.maximum.outer(idx, idx))) / n_points**2
    sample = (q.T @ q) / n_loops
    prod_sq = np.einsum("ij,ik->jk", q * q, q * q) / n_loops
    se = np.sqrt(np.maximum(prod_sq - sample * sample, 1e-30) / n_loops)
    z = (sample - exact) / se
    frac = float(np.mean(np.abs(z) <= 3.0))
    trace_z = float((np.trace(sample) - np.trace(exact))
                    / math.sqrt(float(np.sum(se * se))))
    ok = frac >= 0.99 and abs(trace_z) <= 3.0
    return ok, (f"{frac:.1%} of covariance entries within 3 SE, "
                f"trace z = {trace_z:+.2f}")


def _check_zero_potential(seed: int):
    x0 = np.array([[0.2, -0.3], [0.4, 0.1]])
    x1 = np.array([[-0.1, 0.2], [0.3, -0.2]])
    system = SystemSpec(
        masses=(1.0, 1.5), dimension=2,
        potential=PotentialSpec(n_particles=2, dimension=2, terms=()),
        x_start=x0, x_end=x1,
    )
    est = estimate_propagator(
        system, EstimatorConfig(n_loops=8, n_points=16, seed=seed), 1.3)
    free = sum(free_ln_kernel(x1[j], x0[j], 1.3, m)
               for j, m in enumerate(system.masses))
    ok = est.ln_k == free and est.wilson_sem == 0.0
    return ok, f"ln K deviation {est.ln_k - free:.1e}, SEM {est.wilson_sem}"


def _check_smoothing_quadrature(seed: int):
    from scipy.integrate import quad

    gen = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(100):
        dim = int(gen.integers(2, 4))
        d_prev = gen.normal(0.0, 1.0, dim)
        d_next = gen.normal(0.0, 1.0, dim)
        if np.linalg.norm(d_next - d_prev) < 1e-3:
            continue
        value = smoothed_segment(d_prev, d_next)
        delta = d_next - d_prev
        t_min = float(np.clip(-(d_prev @ delta) / (delta @ delta), 0.0, 1.0))
        oracle, _ = quad(
            lambda l: 1.0 / np.linalg.norm(d_prev + l * delta), 0.0, 1.0,
            points=[t_min], limit=200,
        )
        worst = max(worst, abs(value - oracle) / abs(oracle))
    ok = worst < 1e-8
    return ok, f"max relative deviation from quadrature {worst:.2e}"


def _check_dense_eigensolve(seed: int):
    potential = PotentialSpec(
        n_particles=2, dimension=1,
        terms=(PotentialTerm(SoftCoulomb(alpha=1.0, d=1.0), (0, 1)),),
    )
    mu, reduced = reduce_relative((1.0, 1.0), potential)
    grid = GridSpec(n_points=24, half_width=8.0, n_particles=1, dimension=1)
    ham = assemble((mu,), reduced, grid)
    sparse_e = ground_state(ham, seed=seed + 11).energy
    dense_e = ground_state_dense(ham)
    rel = abs(sparse_e - dense_e) / abs(dense_e)
    return rel < 1e-10, f"sparse vs dense relative gap {rel:.2e}"


def _cmd_verify(args, parser) -> int:
    if args.config:
        load_config(args.config)  # validated for diagnostics only
    seed = args.seed if args.seed is not None else 0
    checks = (
        ("bridge-covariance", _check_bridge_covariance),
        ("zero-potential-exactness", _check_zero_potential),
        ("smoothing-quadrature", _check_smoothing_quadrature),
        ("dense-eigensolve", _check_dense_eigensolve),
    )
    failures = 0
    for name, fn in checks:
        ok, detail = fn(seed)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 2


def _cmd_describe(args, parser) -> int:
    import yaml

    config = load_config(_require_config(args, parser))
    resolved = dict(config.raw)
    print(yaml.safe_dump(resolved, sort_keys=True).rstrip())
    print(f"config_sha256: {config.sha256}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors;
        # usage errors are configuration errors under this CLI's contract.
        return 0 if exc.code == 0 else 1
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return 1
    handler = {
        "run": _cmd_run,
        "benchmark": _cmd_benchmark,
        "verify": _cmd_verify,
        "describe": _cmd_describe,
    }[args.verb]
    try:
        return handler(args, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except WlmcError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
