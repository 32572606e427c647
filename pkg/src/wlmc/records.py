"""Result persistence: one CSV file per record kind.

Files carry a single provenance comment line (JSON: package version,
config hash, master seed), then a header naming the columns, then numeric
rows. Floats are written with repr(), the shortest round-trip form, so a
rerun with the same seed reproduces files byte-for-byte. Wall-clock times
appear only in "timing" records; all other kinds hold pure numerics and
are covered by the bitwise-reproducibility contract.
"""

from __future__ import annotations

import json
import os

from .errors import ConfigError

__all__ = [
    "KERNEL_POINT_COLUMNS",
    "ENERGY_COLUMNS",
    "DIAG_POINT_COLUMNS",
    "TIMING_COLUMNS",
    "KIND_FILES",
    "write_records",
    "read_records",
]

KERNEL_POINT_COLUMNS = (
    "sweep_parameter", "sweep_value", "t", "ln_k", "ln_k_err",
    "wilson_mean", "wilson_sem", "n_samples", "n_repetitions",
    "n_excluded", "n_flagged",
)
ENERGY_COLUMNS = (
    "sweep_parameter", "sweep_value", "source", "e0", "e0_err",
    "t_min", "t_max", "form", "chi2_per_dof", "n_points",
)
DIAG_POINT_COLUMNS = (
    "sweep_parameter", "sweep_value", "n_grid", "n_total", "e0", "residual",
)
TIMING_COLUMNS = (
    "method", "dimension", "size", "n_points", "wall_time",
)

KIND_FILES = {
    "kernel-point": ("kernel_points.csv", KERNEL_POINT_COLUMNS),
    "energy": ("energies.csv", ENERGY_COLUMNS),
    "diag-point": ("diag_points.csv", DIAG_POINT_COLUMNS),
    "timing": ("timings.csv", TIMING_COLUMNS),
}


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(out_dir: str, kind: str, rows, provenance: dict) -> str:
    """Write rows (sequences of dicts) of one kind; returns the file path."""
    if kind not in KIND_FILES:
        raise ConfigError(f"unknown record kind {kind!r}")
    name, columns = KIND_FILES[kind]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    lines = [
        "# " + json.dumps(provenance, sort_keys=True,
                          separators=(", ", ": ")),
        ",".join(columns),
    ]
    for row in rows:
        unknown = set(row) - set(columns)
        if unknown:
            raise ConfigError(
                f"record of kind {kind!r} has unknown fields {sorted(unknown)}"
            )
        lines.append(",".join(_format_cell(row.get(c)) for c in columns))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_records(path: str):
    """Read one record file -> (provenance dict, list of row dicts)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("#"):
        raise ConfigError(f"{path}: missing provenance line")
    provenance = json.loads(lines[0][1:].strip())
    if len(lines) < 2:
        raise ConfigError(f"{path}: missing column header")
    columns = lines[1].split(",")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        cells = ln.split(",")
        if len(cells) != len(columns):
            raise ConfigError(f"{path}: row width does not match header")
        rows.append({c: _parse_cell(v) for c, v in zip(columns, cells)})
    return provenance, rows
