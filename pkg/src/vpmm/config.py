"""Run configuration: TOML files with a closed set of keys.

Unknown sections or keys are errors, as are exponent sets violating the
model's growth and integrability conditions.  ``load_config`` accepts a
path or the name of a shipped reference configuration.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import constitutive as cm
from . import tensor as tc
from .discretization import FEModel, LoadSpec, Material, PointModel
from .errors import ConfigError, DeterminantNotPositive
from .scheme import QUADRATURES, StepSettings, TimeGrid
from .system import ViscoplasticSystem

REFERENCE_CONFIGS = ("point_stationary", "point_ramp", "fem2d_ramp", "fem2d_regularized")

# section -> key -> default (None: required)
SCHEMA = {
    "": {"mode": None, "dim": 2, "seed": 0, "eta": 0.0},
    "mesh": {"n": 4, "size": [1.0, 1.0], "dirichlet": "left", "volume": 1.0, "pinned": False},
    "exponents": {"q_phi": 3.0, "q_F": 6.0, "q_P": 6.0, "q_G": 6.0, "q_gamma": 12.0},
    "hardening": {"c1": 1.0, "c2": 1.0},
    "elastic": {"c3": 1.0, "c4": 1.0, "eta_W": 2.0},
    "dissipation": {"sigma_yield": 1.0, "nu": 1.0, "p": 2.0},
    "regularizer": {"C7": 1.0, "C8": 0.0, "q_W": 6.0},
    "load": {"shape": "constant", "omega": 1.0, "body_force": [], "traction": []},
    "time": {"T": 1.0, "N": 16},
    "initial": {"P0": None, "F0": None},
    "tolerances": {
        "inner_grad": None,
        "fenchel_gap": 1e-6,
        "comparison": 1e-10,
        "residual_scale": 1e-6,
    },
    "solver": {"max_inner_iter": 500, "max_step_iter": 400, "edi_quadrature": "midpoint"},
    "output": {"csv": "trajectory.csv", "json": "summary.json"},
}


def _merge(raw: dict) -> dict:
    out = {}
    for key in raw:
        if key not in SCHEMA[""] and key not in SCHEMA:
            raise ConfigError(f"unknown top-level key {key!r}")
    for key, default in SCHEMA[""].items():
        out[key] = raw.get(key, default)
    for section, keys in SCHEMA.items():
        if not section:
            continue
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        for k in given:
            if k not in keys:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
        out[section] = {k: copy.deepcopy(given.get(k, v)) for k, v in keys.items()}
    if out["mode"] is None:
        raise ConfigError("missing required key 'mode'")
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``data`` mirrors the TOML layout with defaults filled in."""

    data: dict
    name: str = ""

    # construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, name: str = "") -> "RunConfig":
        cfg = cls(_merge(raw), name)
        cfg.validate()
        return cfg

    def replace(self, eta=None, steps=None) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if eta is not None:
            data["eta"] = float(eta)
        if steps is not None:
            data["time"]["N"] = int(steps)
        cfg = RunConfig(data, self.name)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def hash(self) -> str:
        text = json.dumps(self.data, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    # validation --------------------------------------------------------
    def validate(self):
        d = self.data
        if d["mode"] not in ("point", "fem2d"):
            raise ConfigError(f"mode must be 'point' or 'fem2d', got {d['mode']!r}")
        if d["dim"] not in (2, 3):
            raise ConfigError("dim must be 2 or 3")
        if d["mode"] == "fem2d" and d["dim"] != 2:
            raise ConfigError("fem2d mode requires dim = 2")
        if d["eta"] < 0:
            raise ConfigError("eta must be >= 0")
        ex = self.exponents
        bad = ex.violations()
        if bad:
            raise ConfigError("invalid exponents: " + "; ".join(bad))
        rp = self.regularizer
        need = max(ex.q_F, d["dim"] * self.elastic.eta_W)
        if rp.q_W < need:
            raise ConfigError(f"regularizer growth condition: q_W={rp.q_W} must be >= max(q_F, d*eta_W) = {need}")
        if d["solver"]["edi_quadrature"] not in QUADRATURES:
            raise ConfigError(f"edi_quadrature must be one of {sorted(QUADRATURES)}")
        T, N = d["time"]["T"], d["time"]["N"]
        if not (T > 0 and isinstance(N, int) and N >= 1):
            raise ConfigError("[time] needs T > 0 and integer N >= 1")
        if d["mode"] == "fem2d" and not (isinstance(d["mesh"]["n"], int) and d["mesh"]["n"] >= 1):
            raise ConfigError("[mesh] n must be a positive integer")
        P0 = self.P0_matrix
        try:
            tc.inverse_glplus(P0)
        except DeterminantNotPositive as exc:
            raise ConfigError(f"initial plastic state is not admissible: {exc}") from exc
        self.model()  # surfaces load/mesh inconsistencies
        self.dissipation
        return self

    # typed views -------------------------------------------------------
    @property
    def mode(self):
        return self.data["mode"]

    @property
    def dim(self):
        return self.data["dim"]

    @property
    def eta(self):
        return float(self.data["eta"])

    @property
    def exponents(self) -> cm.ExponentSet:
        e = self.data["exponents"]
        return cm.ExponentSet(e["q_phi"], e["q_F"], e["q_P"], e["q_G"], e["q_gamma"], self.data["dissipation"]["p"], self.dim)

    @property
    def elastic(self):
        e = self.data["elastic"]
        return cm.ElasticParams(e["c3"], e["c4"], e["eta_W"])

    @property
    def regularizer(self):
        r = self.data["regularizer"]
        return cm.RegularizerParams(r["C7"], r["C8"], r["q_W"])

    @property
    def dissipation(self):
        s = self.data["dissipation"]
        return cm.DissipationParams(s["sigma_yield"], s["nu"], s["p"])

    @property
    def material(self) -> Material:
        ex = self.exponents
        h = self.data["hardening"]
        return Material(ex, cm.HardeningParams(h["c1"], h["c2"], ex.q_P, ex.q_gamma), self.elastic, self.regularizer)

    @property
    def load(self) -> LoadSpec:
        ld = self.data["load"]
        return LoadSpec(ld["shape"], ld["omega"], tuple(ld["body_force"]), tuple(map(tuple, ld["traction"])))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(float(self.data["time"]["T"]), int(self.data["time"]["N"]))

    @property
    def P0_matrix(self):
        P0 = self.data["initial"]["P0"]
        return np.eye(self.dim) if P0 is None else tc.as_mat(P0, self.dim)

    @property
    def F0_matrix(self):
        F0 = self.data["initial"]["F0"]
        return None if F0 is None else tc.as_mat(F0, self.dim)

    @property
    def quadrature(self):
        return self.data["solver"]["edi_quadrature"]

    @property
    def settings(self) -> StepSettings:
        tol = self.data["tolerances"]
        return StepSettings(
            gap_tol=tol["fenchel_gap"], comparison_tol=tol["comparison"], max_iter=self.data["solver"]["max_step_iter"]
        )

    @property
    def residual_scale(self):
        return float(self.data["tolerances"]["residual_scale"])

    def model(self, eta=None):
        eta = self.eta if eta is None else float(eta)
        m = self.data["mesh"]
        try:
            if self.mode == "point":
                return PointModel(self.material, self.load, m["volume"], bool(m["pinned"]), self.F0_matrix, eta)
            return FEModel(self.material, self.load, m["n"], tuple(m["size"]), m["dirichlet"], self.F0_matrix, eta)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def system(self, eta=None) -> ViscoplasticSystem:
        return ViscoplasticSystem(
            self.model(eta),
            self.dissipation,
            inner_tol=self.data["tolerances"]["inner_grad"],
            max_inner_iter=self.data["solver"]["max_inner_iter"],
        )

    def initial_field(self, model=None):
        model = model if model is not None else self.model()
        return model.constant_field(self.P0_matrix)


def _reference_path(name):
    return resources.files("vpmm") / "configs" / f"{name}.toml"


def load_config(source) -> RunConfig:
    """Load from a TOML path, or from a shipped reference config by name."""
    path = Path(str(source))
    if not path.exists() and str(source) in REFERENCE_CONFIGS:
        text = _reference_path(str(source)).read_text()
        name = str(source)
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        name = path.stem
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {source}: {exc}") from exc
    return RunConfig.from_dict(raw, name)
