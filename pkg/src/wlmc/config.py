"""Experiment configuration: YAML schema, validation, and system building.

A config file has these blocks (exactly one `system`; at least one of
`wmc` / `diag` / `benchmark`):

    system:
      name: harmonic_pair | exciton_sqwell | trion_soft | trion_erfc |
            exciton_3d | free | custom
      params: {omega: 1.0, d: 0.0, ...}     # factory parameters by name
      masses: [1.0, 1.0]
      dimension: 1
      x_start: [[0.0], [0.0]]               # optional, default origin
      x_end:   [[0.0], [0.0]]               # optional, default origin
      terms:                                 # custom systems only
        - {type: soft_coulomb, particles: [0, 1], alpha: 1.0, d: 1.0, sign: 1}
    wmc:
      n_loops: 200          # loops per particle (nested mode)
      n_points: 5000
      repetitions: 8
      mode: nested | flat
      n_tuples: null        # flat mode: tuples drawn (default n_loops^n)
      smoothing: false
      potential_offset: 0.0
      seed: 0
      t_grid: [1.0, 2.0, 4.0]               # or {start, stop, step}
    diag:
      n_points: [50, 100, 200]              # interior nodes per axis
      half_width: 10.0
      tolerance: 0.0
      reduce_relative: auto | true | false
      extrapolation_orders: [3, 4]
    fit:
      form: auto | linear | linear_plus_log
      min_span: 10.0
      preferred_span: 15.0
    sweep:
      parameter: d
      values: [0.5, 1.0, 2.0]
    output:
      directory: results
    benchmark:
      wmc_tuple_counts: [100000, 1000000]
      wmc_dimensions: [1, 2, 3]
      wmc_n_points: 2000
      diag_n_points: [40, 64, 100]
      repeats: 2

Sweeps rewrite one entry of system.params per value, so they apply to
named systems (whose factories consume params), not to custom term lists.
The config hash is the SHA-256 of the canonical JSON serialisation
(sorted keys), so key order in the file does not affect it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .estimator import EstimatorConfig, SystemSpec
from .potentials import (
    BareCoulomb,
    ErfcEffective,
    GaussianWell,
    Harmonic,
    PotentialSpec,
    PotentialTerm,
    SoftCoulomb,
    SquareWell,
    make_3d_confined_exciton,
    make_exciton_sqwell,
    make_trion_erfc,
    make_trion_soft,
)

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "config_hash",
    "build_system",
    "resolve_t_grid",
    "estimator_config",
]


_TERM_TYPES = {
    "soft_coulomb": (SoftCoulomb, ("alpha", "d", "sign")),
    "bare_coulomb": (BareCoulomb, ("alpha", "sign")),
    "harmonic": (Harmonic, ("mu", "omega", "d")),
    "erfc_effective": (ErfcEffective, ("d", "sign")),
    "square_well": (SquareWell, ("v0", "half_widths", "center")),
    "gaussian_well": (GaussianWell, ("v0", "lam", "center")),
}

_SYSTEM_NAMES = (
    "harmonic_pair", "exciton_sqwell", "trion_soft", "trion_erfc",
    "exciton_3d", "free", "custom",
)


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment configuration plus its raw dict and hash."""

    raw: dict
    sha256: str
    system: dict
    wmc: dict = None
    diag: dict = None
    fit: dict = field(default_factory=dict)
    sweep: dict = None
    output: dict = field(default_factory=dict)
    benchmark: dict = None


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _as_positive_int(value, path: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool)
             and value > 0, path, f"must be a positive integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool)
             and math.isfinite(float(value)),
             path, f"must be a finite number, got {value!r}")
    return float(value)


def _validate_block_keys(block: dict, allowed, path: str):
    _require(isinstance(block, dict), path, "must be a mapping")
    for key in block:
        _require(key in allowed, f"{path}.{key}",
                 f"unknown key (allowed: {', '.join(sorted(allowed))})")


def parse_config(raw: dict) -> RunConfig:
    """Validate a loaded config dict; error messages carry field paths."""
    _require(isinstance(raw, dict), "config", "top level must be a mapping")
    _validate_block_keys(
        raw,
        {"system", "wmc", "diag", "fit", "sweep", "output", "benchmark"},
        "config",
    )
    _require("system" in raw, "config", "a system block is required")
    _require(
        any(k in raw for k in ("wmc", "diag", "benchmark")),
        "config", "at least one of wmc, diag, benchmark is required",
    )

    system = raw["system"]
    _validate_block_keys(
        system,
        {"name", "params", "masses", "dimension", "x_start", "x_end",
         "terms"},
        "system",
    )
    name = system.get("name")
    _require(name in _SYSTEM_NAMES, "system.name",
             f"must be one of {', '.join(_SYSTEM_NAMES)}, got {name!r}")
    masses = system.get("masses")
    _require(isinstance(masses, list) and len(masses) >= 1, "system.masses",
             "must be a non-empty list")
    for i, m in enumerate(masses):
        _require(_as_number(m, f"system.masses[{i}]") > 0,
                 f"system.masses[{i}]", "must be positive")
    dimension = _as_positive_int(system.get("dimension", 1),
                                 "system.dimension")
    _require(dimension <= 3, "system.dimension", "must be 1, 2, or 3")
    params = system.get("params", {})
    _require(isinstance(params, dict), "system.params", "must be a mapping")
    if name == "custom":
        terms = system.get("terms")
        _require(isinstance(terms, list), "system.terms",
                 "custom systems require a terms list")
        for i, term in enumerate(terms):
            tpath = f"system.terms[{i}]"
            _require(isinstance(term, dict), tpath, "must be a mapping")
            ttype = term.get("type")
            _require(ttype in _TERM_TYPES, f"{tpath}.type",
                     f"unknown term type {ttype!r} (known: "
                     f"{', '.join(sorted(_TERM_TYPES))})")
            particles = term.get("particles")
            n_req = 1 if ttype in ("square_well", "gaussian_well") else 2
            _require(
                isinstance(particles, list) and len(particles) == n_req
                and all(isinstance(p, int) and 0 <= p < len(masses)
                        for p in particles)
                and len(set(particles)) == n_req,
                f"{tpath}.particles",
                f"must list {n_req} distinct particle "
                f"{'index' if n_req == 1 else 'indices'} below {len(masses)}",
            )
            allowed = set(_TERM_TYPES[ttype][1]) | {"type", "particles",
                                                    "term_center"}
            for key in term:
                _require(key in allowed, f"{tpath}.{key}",
                         f"unknown field for {ttype}")
    else:
        _require("terms" not in system, "system.terms",
                 f"only custom systems take terms (system is {name!r})")

    for key in ("x_start", "x_end"):
        if key in system:
            arr = system[key]
            _require(isinstance(arr, list) and len(arr) == len(masses),
                     f"system.{key}",
                     f"must list one point per particle ({len(masses)})")
            for i, row in enumerate(arr):
                _require(
                    isinstance(row, list) and len(row) == dimension
                    and all(isinstance(v, (int, float)) for v in row),
                    f"system.{key}[{i}]",
                    f"must be a list of {dimension} numbers",
                )

    wmc = raw.get("wmc")
    if wmc is not None:
        _validate_block_keys(
            wmc,
            {"n_loops", "n_points", "repetitions", "mode", "n_tuples",
             "smoothing", "potential_offset", "seed", "t_grid"},
            "wmc",
        )
        _as_positive_int(wmc.get("n_loops", 200), "wmc.n_loops")
        _as_positive_int(wmc.get("n_points", 5000), "wmc.n_points")
        _as_positive_int(wmc.get("repetitions", 1), "wmc.repetitions")
        mode = wmc.get("mode", "nested")
        _require(mode in ("nested", "flat"), "wmc.mode",
                 f"must be nested or flat, got {mode!r}")
        if wmc.get("n_tuples") is not None:
            _as_positive_int(wmc["n_tuples"], "wmc.n_tuples")
        _require(isinstance(wmc.get("smoothing", False), bool),
                 "wmc.smoothing", "must be true or false")
        _as_number(wmc.get("potential_offset", 0.0), "wmc.potential_offset")
        seed = wmc.get("seed", 0)
        _require(isinstance(seed, int) and not isinstance(seed, bool)
                 and 0 <= seed < 2**64, "wmc.seed",
                 "must be an unsigned 64-bit integer")
        _require("t_grid" in wmc, "wmc.t_grid", "is required")
        resolve_t_grid(wmc["t_grid"])  # validates

    diag = raw.get("diag")
    if diag is not None:
        _validate_block_keys(
            diag,
            {"n_points", "half_width", "tolerance", "reduce_relative",
             "extrapolation_orders"},
            "diag",
        )
        nlist = diag.get("n_points")
        _require(isinstance(nlist, list) and len(nlist) >= 1, "diag.n_points",
                 "must be a non-empty list of grid sizes")
        for i, n in enumerate(nlist):
            _as_positive_int(n, f"diag.n_points[{i}]")
        _require(
            _as_number(diag.get("half_width", 10.0), "diag.half_width") > 0,
            "diag.half_width", "must be positive",
        )
        _as_number(diag.get("tolerance", 0.0), "diag.tolerance")
        rr = diag.get("reduce_relative", "auto")
        _require(rr in ("auto", True, False), "diag.reduce_relative",
                 "must be auto, true, or false")
        orders = diag.get("extrapolation_orders", [3])
        _require(isinstance(orders, list)
                 and all(isinstance(o, int) and o >= 1 for o in orders),
                 "diag.extrapolation_orders", "must be a list of orders >= 1")

    fit = raw.get("fit", {})
    _validate_block_keys(fit, {"form", "min_span", "preferred_span"}, "fit")
    form = fit.get("form", "auto")
    _require(form in ("auto", "linear", "linear_plus_log"), "fit.form",
             f"must be auto, linear, or linear_plus_log, got {form!r}")
    _as_number(fit.get("min_span", 10.0), "fit.min_span")
    _as_number(fit.get("preferred_span", 15.0), "fit.preferred_span")

    sweep = raw.get("sweep")
    if sweep is not None:
        _validate_block_keys(sweep, {"parameter", "values"}, "sweep")
        _require(isinstance(sweep.get("parameter"), str), "sweep.parameter",
                 "must name a system parameter")
        _require(name != "custom", "sweep",
                 "sweeps apply to named systems, not custom term lists")
        values = sweep.get("values")
        _require(isinstance(values, list) and len(values) >= 1,
                 "sweep.values", "must be a non-empty list")
        for i, v in enumerate(values):
            _as_number(v, f"sweep.values[{i}]")

    output = raw.get("output", {})
    _validate_block_keys(output, {"directory"}, "output")
    if "directory" in output:
        _require(isinstance(output["directory"], str), "output.directory",
                 "must be a path string")

    benchmark = raw.get("benchmark")
    if benchmark is not None:
        _validate_block_keys(
            benchmark,
            {"wmc_tuple_counts", "wmc_dimensions", "wmc_n_points",
             "diag_n_points", "repeats"},
            "benchmark",
        )
        for key in ("wmc_tuple_counts", "diag_n_points"):
            if key in benchmark:
                lst = benchmark[key]
                _require(isinstance(lst, list) and len(lst) >= 2,
                         f"benchmark.{key}", "must list at least two sizes")
                for i, v in enumerate(lst):
                    _as_positive_int(v, f"benchmark.{key}[{i}]")
        if "wmc_dimensions" in benchmark:
            dims = benchmark["wmc_dimensions"]
            _require(isinstance(dims, list)
                     and all(d in (1, 2, 3) for d in dims),
                     "benchmark.wmc_dimensions", "must be a list from {1,2,3}")
        if "wmc_n_points" in benchmark:
            _as_positive_int(benchmark["wmc_n_points"],
                             "benchmark.wmc_n_points")
        if "repeats" in benchmark:
            _as_positive_int(benchmark["repeats"], "benchmark.repeats")

    return RunConfig(
        raw=raw, sha256=config_hash(raw), system=system, wmc=wmc, diag=diag,
        fit=fit, sweep=sweep, output=output, benchmark=benchmark,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") \
            from exc
    return parse_config(raw)


def resolve_t_grid(spec) -> np.ndarray:
    """t_grid as an array from either an explicit list or start/stop/step."""
    if isinstance(spec, dict):
        _validate_block_keys(spec, {"start", "stop", "step"}, "wmc.t_grid")
        for key in ("start", "stop", "step"):
            _require(key in spec, f"wmc.t_grid.{key}", "is required")
        start = _as_number(spec["start"], "wmc.t_grid.start")
        stop = _as_number(spec["stop"], "wmc.t_grid.stop")
        step = _as_number(spec["step"], "wmc.t_grid.step")
        _require(step > 0, "wmc.t_grid.step", "must be positive")
        _require(stop >= start, "wmc.t_grid.stop", "must be >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = start + step * np.arange(n)
    else:
        _require(isinstance(spec, list) and len(spec) >= 1, "wmc.t_grid",
                 "must be a list of times or {start, stop, step}")
        grid = np.array([_as_number(v, f"wmc.t_grid[{i}]")
                         for i, v in enumerate(spec)])
    _require(bool(np.all(grid > 0)), "wmc.t_grid",
             "times must be strictly positive")
    _require(bool(np.all(np.diff(grid) > 0)), "wmc.t_grid",
             "times must be strictly increasing")
    return grid


def _float_or(params: dict, key: str, default, path: str):
    if key not in params:
        if default is None:
            raise ConfigError(f"{path}.{key}: is required for this system")
        return default
    return _as_number(params[key], f"{path}.{key}")


def _build_custom_terms(system: dict, dimension: int) -> PotentialSpec:
    terms = []
    for i, spec in enumerate(system["terms"]):
        tpath = f"system.terms[{i}]"
        cls, fields = _TERM_TYPES[spec["type"]]
        kwargs = {}
        for key in fields:
            if key in spec:
                value = spec[key]
                if key in ("half_widths", "center"):
                    value = tuple(
                        _as_number(v, f"{tpath}.{key}[{j}]")
                        for j, v in enumerate(
                            value if isinstance(value, list) else [value]
                        )
                    )
                else:
                    value = _as_number(value, f"{tpath}.{key}")
                kwargs[key] = value
        try:
            try:
                form = cls(**kwargs)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
            term_center = spec.get("term_center")
            if term_center is not None:
                term_center = tuple(
                    _as_number(v, f"{tpath}.term_center[{j}]")
                    for j, v in enumerate(term_center)
                )
            terms.append(PotentialTerm(
                form=form, particles=tuple(spec["particles"]),
                center=term_center,
            ))
        except ConfigError as exc:
            raise ConfigError(f"{tpath} ({spec['type']}): {exc}") from exc
    return PotentialSpec(
        n_particles=len(system["masses"]), dimension=dimension,
        terms=tuple(terms),
    )


def build_system(config: RunConfig, override: dict = None) -> SystemSpec:
    """SystemSpec from the system block, with sweep overrides applied."""
    system = config.system
    name = system["name"]
    params = dict(system.get("params", {}))
    if override:
        params.update(override)
    dimension = system.get("dimension", 1)
    masses = tuple(float(m) for m in system["masses"])
    n = len(masses)
    p = "system.params"

    if name == "harmonic_pair":
        _require(n == 2, "system.masses", "harmonic_pair needs two particles")
        mu = _float_or(params, "mu", masses[0] * masses[1] / sum(masses), p)
        potential = PotentialSpec(
            n_particles=2, dimension=dimension,
            terms=(PotentialTerm(
                Harmonic(mu=mu, omega=_float_or(params, "omega", 1.0, p),
                         d=_float_or(params, "d", 0.0, p)),
                (0, 1),
            ),),
        )
    elif name == "exciton_sqwell":
        _require(n == 2, "system.masses",
                 "exciton_sqwell needs two particles")
        ly = params.get("ly")
        potential = make_exciton_sqwell(
            ve=_float_or(params, "ve", None, p),
            vh=_float_or(params, "vh", None, p),
            lx=_float_or(params, "lx", None, p),
            ly=None if ly is None else _as_number(ly, f"{p}.ly"),
            alpha=_float_or(params, "alpha", 1.0, p),
            d=_float_or(params, "d", 1.0, p),
        )
        _require(potential.dimension == dimension, "system.dimension",
                 f"exciton_sqwell with{'out' if ly is None else ''} ly is "
                 f"{potential.dimension}D")
    elif name == "trion_soft":
        _require(n == 3, "system.masses", "trion_soft needs three particles")
        potential = make_trion_soft(
            alpha=_float_or(params, "alpha", 1.0, p),
            d=_float_or(params, "d", 1.0, p),
            dimension=dimension,
        )
    elif name == "trion_erfc":
        _require(n == 3, "system.masses", "trion_erfc needs three particles")
        potential = make_trion_erfc(
            d=_float_or(params, "d", 1.0, p), dimension=dimension,
        )
    elif name == "exciton_3d":
        _require(n == 2, "system.masses", "exciton_3d needs two particles")
        _require(dimension == 3, "system.dimension", "exciton_3d is 3D")
        potential = make_3d_confined_exciton(
            alpha=_float_or(params, "alpha", 1.0, p),
            ve=_float_or(params, "ve", -10.0, p),
            vh=_float_or(params, "vh", -10.0, p),
            lz=_float_or(params, "lz", 1.0, p),
            d=_float_or(params, "d", 2.0, p),
        )
    elif name == "free":
        potential = PotentialSpec(n_particles=n, dimension=dimension,
                                  terms=())
    else:  # custom
        potential = _build_custom_terms(system, dimension)

    def endpoints(key):
        if key in system:
            return np.asarray(system[key], dtype=float)
        return np.zeros((n, dimension))

    return SystemSpec(
        masses=masses, dimension=dimension, potential=potential,
        x_start=endpoints("x_start"), x_end=endpoints("x_end"),
    )


def estimator_config(config: RunConfig, seed_override: int = None,
                     workers: int = 1) -> EstimatorConfig:
    wmc = config.wmc or {}
    seed = wmc.get("seed", 0) if seed_override is None else seed_override
    return EstimatorConfig(
        n_loops=wmc.get("n_loops", 200),
        n_points=wmc.get("n_points", 5000),
        repetitions=wmc.get("repetitions", 1),
        mode=wmc.get("mode", "nested"),
        n_tuples=wmc.get("n_tuples"),
        smoothing=wmc.get("smoothing", False),
        potential_offset=wmc.get("potential_offset", 0.0),
        seed=seed,
        workers=workers,
    )
