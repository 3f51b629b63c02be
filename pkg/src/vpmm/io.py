"""Trajectory CSV and run-summary JSON.

CSV layout (schema ``vpmm-csv-1``)::

    # vpmm-csv-1
    # meta {"mode": ..., "tau": ..., "shapes": {...}, "rows": N+1, ...}
    t,E,psi_inc,...,P_0_0_0,...,phi_...,Xi_...
    <one row per time node>

Cells hold ``repr(float)``, the shortest decimal string that parses back
to the same double, so a save/load/save cycle is byte-identical.
"""

from __future__ import annotations

import csv
import io as _io
import json
from itertools import product
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch, VpmmIOError
from .scheme import Trajectory

CSV_SCHEMA = "vpmm-csv-1"
JSON_SCHEMA = "vpmm-json-1"

SCALAR_COLUMNS = (
    "t",
    "E",
    "psi_inc",
    "psi_star_inc",
    "power_inc",
    "fenchel_gap",
    "edi_prefix_residual",
    "min_det_P",
    "inner_grad_norm",
    "comparison_slack",
)
_STORED = tuple(c for c in SCALAR_COLUMNS if c != "edi_prefix_residual")
FIELDS = ("P", "phi", "Xi")


def _fmt(x) -> str:
    return repr(float(x))


def _field_columns(name, shape):
    return [name + "_" + "_".join(map(str, idx)) for idx in product(*(range(s) for s in shape))]


def trajectory_to_csv(traj: Trajectory) -> str:
    shapes = {f: list(np.shape(getattr(traj, f)[0])) for f in FIELDS}
    meta = {
        "mode": traj.mode,
        "quadrature": traj.quadrature,
        "tau": _fmt(traj.tau),
        "config_hash": traj.config_hash,
        "rows": len(traj.t),
        "shapes": shapes,
        "info": traj.meta,
    }
    buf = _io.StringIO()
    buf.write(f"# {CSV_SCHEMA}\n")
    buf.write("# meta " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = list(SCALAR_COLUMNS)
    for f in FIELDS:
        header += _field_columns(f, shapes[f])
    writer.writerow(header)
    prefix = traj.edi_prefix_residuals()
    for n in range(len(traj.t)):
        row = []
        for c in SCALAR_COLUMNS:
            row.append(_fmt(prefix[n] if c == "edi_prefix_residual" else getattr(traj, c)[n]))
        for f in FIELDS:
            row += [_fmt(v) for v in np.ravel(getattr(traj, f)[n])]
        writer.writerow(row)
    return buf.getvalue()


def serialize_trajectory(traj: Trajectory, path) -> None:
    try:
        Path(path).write_text(trajectory_to_csv(traj))
    except OSError as exc:
        raise VpmmIOError(f"cannot write {path}: {exc}") from exc


def trajectory_from_csv(text: str) -> Trajectory:
    lines = text.split("\n")
    if not lines or lines[0].strip() != f"# {CSV_SCHEMA}":
        found = lines[0].strip() if lines else ""
        raise SchemaMismatch(f"expected header '# {CSV_SCHEMA}', found {found!r}")
    if len(lines) < 3 or not lines[1].startswith("# meta "):
        raise VpmmIOError("missing meta line", row=None)
    try:
        meta = json.loads(lines[1][len("# meta ") :])
    except json.JSONDecodeError as exc:
        raise VpmmIOError(f"corrupt meta line: {exc}") from exc
    reader = csv.reader(lines[2:])
    header = next(reader)
    shapes = {f: tuple(meta["shapes"][f]) for f in FIELDS}
    expected = list(SCALAR_COLUMNS)
    for f in FIELDS:
        expected += _field_columns(f, shapes[f])
    if header != expected:
        raise SchemaMismatch("column header does not match the declared field shapes")
    traj = Trajectory(mode=meta["mode"], quadrature=meta["quadrature"], tau=float(meta["tau"]))
    traj.config_hash = meta["config_hash"]
    traj.meta = meta["info"]
    rows = [r for r in reader if r]
    for i, row in enumerate(rows):
        if len(row) != len(expected):
            raise VpmmIOError(f"row {i} has {len(row)} cells, expected {len(expected)}", row=i)
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise VpmmIOError(f"row {i}: {exc}", row=i) from exc
        rec = dict(zip(SCALAR_COLUMNS, vals))
        for c in _STORED:
            getattr(traj, c).append(rec[c])
        k = len(SCALAR_COLUMNS)
        for f in FIELDS:
            size = int(np.prod(shapes[f]))
            getattr(traj, f).append(np.array(vals[k : k + size]).reshape(shapes[f]))
            k += size
    if len(rows) != meta["rows"]:
        raise VpmmIOError(f"file truncated: {len(rows)} of {meta['rows']} rows present", row=len(rows))
    return traj


def load_trajectory(path) -> Trajectory:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise VpmmIOError(f"cannot read {path}: {exc}") from exc
    return trajectory_from_csv(text)


def summary_dict(traj: Trajectory, extra=None) -> dict:
    E = np.asarray(traj.E)
    prefix = traj.edi_prefix_residuals()
    out = {
        "schema": JSON_SCHEMA,
        "config_hash": traj.config_hash,
        "mode": traj.mode,
        "quadrature": traj.quadrature,
        "N": len(traj.t) - 1,
        "T": traj.t[-1],
        "tau": traj.tau,
        "E_initial": float(E[0]),
        "E_final": float(E[-1]),
        "total_dissipation": float(np.sum(traj.psi_inc) + np.sum(traj.psi_star_inc)),
        "total_power": float(np.sum(traj.power_inc)),
        "edi_prefix_max": float(np.max(prefix[1:])) if len(prefix) > 1 else 0.0,
        "edb_residual": float(abs(prefix[-1])),
        "max_fenchel_gap": float(np.max(traj.fenchel_gap)),
        "min_comparison_slack": float(np.min(traj.comparison_slack)),
        "min_det_P": float(np.min(traj.min_det_P)),
        "max_inner_grad_norm": float(np.max(traj.inner_grad_norm)),
    }
    if extra:
        out.update(extra)
    return out


def write_json(obj, path) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise VpmmIOError(f"cannot write {path}: {exc}") from exc
