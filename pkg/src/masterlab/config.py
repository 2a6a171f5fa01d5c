"""Strict JSON experiment configuration.

Frequencies are given as omega / 2 pi in GHz at this boundary and converted to
rad/ns by :meth:`ExperimentConfig.system_params` and friends. ``resolve``
fills every default and expands the default drive grid so that the echoed
config reproduces a run exactly.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema

from . import environment as env
from . import model as mdl
from .exceptions import ConfigError

EXPERIMENTS = ("purcell-sweep", "driven-sweep", "cavity-bench", "filter-gain", "rabi-vs-jc")

_pos = {"type": "number", "exclusiveMinimum": 0}
_grid = {"type": "array", "items": {"type": "number", "minimum": 0}}


def _obj(props: Dict[str, Any], required=()) -> Dict[str, Any]:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj(
    {
        "experiment": {"enum": list(EXPERIMENTS)},
        "tag": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "system": _obj(
            {
                "omega_q_ghz": _pos,
                "omega_r_ghz": _pos,
                "g_ghz": {"type": "number", "minimum": 0},
                "kappa_ghz": _pos,
                "omega_d_ghz": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "n_trunc": {"oneOf": [{"type": "integer", "minimum": 2}, {"const": "auto"}]},
                "hamiltonian": {"enum": ["rabi", "jc"]},
            }
        ),
        "spectrum": _obj(
            {
                "kind": {"enum": ["flat", "ohmic"]},
                "omega_c_ghz": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "filter": {
                    "oneOf": [
                        {"type": "null"},
                        _obj({"omega_f_ghz": _pos, "gamma_f_ghz": _pos}, required=("omega_f_ghz", "gamma_f_ghz")),
                    ]
                },
            }
        ),
        "dissipator": {"enum": ["lindblad", "redfield-static", "redfield-td"]},
        "drive": _obj({"kind": {"enum": ["none", "cosine", "rwa"]}, "amplitude_ghz": {"type": "number", "minimum": 0}}),
        "secular": {"type": ["number", "null"], "minimum": 0},
        "propagation": _obj(
            {
                "rel_tol": _pos,
                "abs_tol": _pos,
                "max_step_ns": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "steps_per_period": {"type": ["integer", "null"], "minimum": 4},
                "n_decays": _pos,
                "settle_kappa_times": {"type": "number", "minimum": 0},
                "kappa_t_final": _pos,
                "samples": {"type": "integer", "minimum": 20},
                "integrator": {"enum": ["RK45", "DOP853"]},
            }
        ),
        "sweep": _obj(
            {
                "kappa_ghz": _grid,
                "drive_ghz": _grid,
                "nbar_targets": _grid,
                "gamma_f_ghz": {"type": "array", "items": _pos},
                "driven": {"type": "boolean"},
            }
        ),
        "output_dir": {"type": ["string", "null"]},
        "seed": {"type": "integer"},
    },
    required=("experiment",),
)

DEFAULTS: Dict[str, Any] = {
    "tag": "default",
    "system": {
        "omega_q_ghz": mdl.REFERENCE_GHZ["omega_q"],
        "omega_r_ghz": mdl.REFERENCE_GHZ["omega_r"],
        "g_ghz": mdl.REFERENCE_GHZ["g"],
        "kappa_ghz": 0.1,
        "omega_d_ghz": None,
        "n_trunc": "auto",
        "hamiltonian": "rabi",
    },
    "spectrum": {"kind": "flat", "omega_c_ghz": None, "filter": None},
    "dissipator": "redfield-td",
    "drive": {"kind": "none", "amplitude_ghz": 0.0},
    "secular": None,
    "propagation": {
        "rel_tol": 1e-8,
        "abs_tol": 1e-10,
        "max_step_ns": None,
        "steps_per_period": None,
        "n_decays": 2.0,
        "settle_kappa_times": 3.0,
        "kappa_t_final": 15.0,
        "samples": 400,
        "integrator": "DOP853",
    },
    "sweep": {},
    "output_dir": None,
    "seed": 0,
}

# Default sweep grids. Drive amplitudes are derived from these photon-number
# targets with the linear-cavity estimate and echoed as explicit amplitudes.
DEFAULT_KAPPA_GRID_GHZ = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0]
DEFAULT_NBAR_TARGETS = [0, 1, 2, 4, 6, 9, 12, 15, 20]
DEFAULT_FILTER_WIDTHS_GHZ = [1.5, 1.0]


def nbar_to_amplitude(nbar: float, kappa: float, kind: str) -> float:
    """Drive amplitude giving ``nbar`` photons in a resonantly driven linear cavity.

    A cosine drive eta cos(wt) X has a co-rotating part of strength eta / 2,
    so n = eta^2 / kappa^2; an RWA drive eps gives n = 4 eps^2 / kappa^2.
    Works in any consistent unit.
    """
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    if kind == "cosine":
        return kappa * math.sqrt(nbar)
    if kind == "rwa":
        return 0.5 * kappa * math.sqrt(nbar)
    raise ConfigError(f"drive kind {kind!r} has no amplitude")


def amplitude_to_nbar(amp: float, kappa: float, kind: str) -> float:
    if kind == "cosine":
        return (amp / kappa) ** 2
    if kind == "rwa":
        return 4.0 * (amp / kappa) ** 2
    return 0.0


def _merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "filter":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: Dict[str, Any]) -> None:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def resolve(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Validate, apply defaults and expand experiment-specific grids."""
    validate(raw)
    cfg = _merge(DEFAULTS, raw)
    exp = cfg["experiment"]
    sweep = cfg["sweep"]
    kappa = cfg["system"]["kappa_ghz"]
    if "nbar_targets" in sweep and "drive_ghz" in sweep:
        raise ConfigError("give either sweep.drive_ghz or sweep.nbar_targets, not both")

    if exp == "purcell-sweep":
        sweep.setdefault("kappa_ghz", list(DEFAULT_KAPPA_GRID_GHZ))
        if not sweep["kappa_ghz"] or min(sweep["kappa_ghz"]) <= 0:
            raise ConfigError("purcell-sweep needs a non-empty grid of positive kappa values")
    if exp == "driven-sweep" or (exp == "filter-gain" and sweep.get("driven")):
        kind = cfg["drive"]["kind"]
        if kind == "none":
            raise ConfigError(f"{exp} needs drive.kind 'cosine' or 'rwa'")
        if "drive_ghz" not in sweep:
            targets = sweep.pop("nbar_targets", DEFAULT_NBAR_TARGETS)
            sweep["drive_ghz"] = [nbar_to_amplitude(n, kappa, kind) for n in targets]
        grid = sweep["drive_ghz"]
        if not grid:
            raise ConfigError("drive grid is empty")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ConfigError("drive grid must be monotone non-decreasing")
    if exp == "cavity-bench":
        if cfg["drive"]["kind"] == "none":
            cfg["drive"] = {"kind": "rwa", "amplitude_ghz": kappa}
    if exp == "filter-gain":
        if cfg["spectrum"]["filter"] is None:
            raise ConfigError("filter-gain needs spectrum.filter")
        sweep.setdefault("gamma_f_ghz", [cfg["spectrum"]["filter"]["gamma_f_ghz"]])
    if exp == "rabi-vs-jc" and cfg["spectrum"]["kind"] != "flat":
        raise ConfigError("rabi-vs-jc is defined for a flat spectrum")
    if cfg["drive"]["kind"] == "none" and cfg["drive"]["amplitude_ghz"] != 0:
        raise ConfigError("drive.kind 'none' requires amplitude_ghz = 0")
    return cfg


def load(path: str | Path) -> Dict[str, Any]:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return resolve(raw)


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a resolved config dictionary."""

    raw: Dict[str, Any]

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        return cls(resolve(d))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls(load(path))

    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def tag(self) -> str:
        return self.raw["tag"]

    @property
    def sweep(self) -> Dict[str, Any]:
        return self.raw["sweep"]

    @property
    def propagation(self) -> Dict[str, Any]:
        return self.raw["propagation"]

    @property
    def dissipator(self) -> str:
        return self.raw["dissipator"]

    @property
    def hamiltonian(self) -> str:
        return self.raw["system"]["hamiltonian"]

    @property
    def auto_truncation(self) -> bool:
        return self.raw["system"]["n_trunc"] == "auto"

    @property
    def omega_sec(self) -> Optional[float]:
        s = self.raw["secular"]
        return None if s is None else mdl.TWO_PI * s

    def system_params(self, kappa_ghz: Optional[float] = None, n_trunc: Optional[int] = None,
                      g_ghz: Optional[float] = None) -> mdl.SystemParams:
        s = self.raw["system"]
        N = n_trunc if n_trunc is not None else (10 if s["n_trunc"] == "auto" else s["n_trunc"])
        return mdl.SystemParams.from_ghz(
            omega_q=s["omega_q_ghz"],
            omega_r=s["omega_r_ghz"],
            g=s["g_ghz"] if g_ghz is None else g_ghz,
            kappa=s["kappa_ghz"] if kappa_ghz is None else kappa_ghz,
            omega_d=s["omega_d_ghz"],
            n_trunc=N,
        )

    def density(self, p: mdl.SystemParams, gamma_f_ghz: Optional[float] = None,
                filtered: bool = True) -> env.SpectralDensity:
        """Spectral density for the run with parameters ``p`` (kappa sets its level)."""
        sp = self.raw["spectrum"]
        if sp["kind"] == "flat":
            J = env.flat(p.kappa)
        else:
            wc = None if sp["omega_c_ghz"] is None else mdl.TWO_PI * sp["omega_c_ghz"]
            J = env.calibrated_ohmic(p.kappa, p.omega_r, wc)
        f = sp["filter"]
        if filtered and f is not None:
            width = f["gamma_f_ghz"] if gamma_f_ghz is None else gamma_f_ghz
            J = env.compose(J, env.FilterSpec(mdl.TWO_PI * f["omega_f_ghz"], mdl.TWO_PI * width))
        return J

    def drive_kind(self) -> str:
        return self.raw["drive"]["kind"]

    def drive_amplitude(self) -> float:
        return mdl.TWO_PI * self.raw["drive"]["amplitude_ghz"]

    def drive_grid(self) -> List[float]:
        return [mdl.TWO_PI * a for a in self.sweep["drive_ghz"]]
