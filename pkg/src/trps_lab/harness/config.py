"""Flat ``module.key = value`` experiment configuration.

File format: one ``key = value`` per line, ``#`` starts a comment.  Values are
Python literals (numbers, booleans, quoted strings, tuples); bare words and
comma lists are accepted too::

    scenario = decohere
    seed = 7
    qdynamics.sigma = 0.1
    relax.field = 0, 0, 1

Every key must appear in :data:`DEFAULTS`.
"""

from __future__ import annotations

import ast
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError, TrpsLabError
from ..geometry import CoherenceSpec
from ..qdynamics import IncrementLaw
from ..theta.particles import PhaseBox, SimConfig

SCENARIOS = ("decohere", "relax", "trps", "pipeline")

DEFAULTS = {
    "scenario": "decohere",
    "seed": None,
    "output.dir": "runs",
    "output.formats": ("csv", "json"),
    # theta-dynamics
    "theta.nu": 1024,
    "theta.g": "auto",
    "theta.g_c": 10.0,
    "theta.softening": "auto",
    "theta.dt": 0.02,
    "theta.box_half": 1.0,
    "theta.p_half": 0.7,
    "theta.cell_x": 1.0,
    "theta.cell_p": 1.0,
    # relax scenario
    "relax.dynamical_times": 100.0,
    "relax.initial_spin": (1.0, 0.0, 0.0),
    "relax.field": (0.0, 0.0, 1.0),
    "relax.spin_rate": 0.5,
    "relax.spin_steps": 40,
    "relax.record_every": 50,
    "relax.bins": 16,
    "relax.min_bin_count": 5,
    "relax.energy_tol": 1e-3,
    "relax.momentum_tol": 1e-9,
    # coherence domain
    "coherence.lengths": (1.0, 1.0, 1.0),
    "coherence.dx": (2.0, 2.0, 2.0),
    "coherence.direction": (0.0, 0.0, 1.0),
    "coherence.sigma": 1.0,
    "coherence.dt0": 1.0,
    "coherence.width": 1.0,
    # trps scenario
    "trps.grid_n": 16,
    "trps.half_width": 3.0,
    "trps.core_scale": 0.4,
    "trps.halo_scale": 1.2,
    "trps.core_fraction": 0.4,
    "trps.lapse_base": 1.0,
    "trps.lapse_depth": 0.3,
    "trps.lapse_width": 1.0,
    "trps.phi_shape": 0.3,
    "trps.samples": 100000,
    "trps.mc_samples": 100000,
    "trps.dt0": 1.0,
    "trps.reparam_amplitude": 0.1,
    "trps.t0_end": 10.0,
    "trps.t0_points": 101,
    "trps.tolerance": 1e-12,
    # qdynamics / decohere scenario
    "qdynamics.delta_e": 1.0,
    "qdynamics.hbar": 1.0,
    "qdynamics.sigma": 0.1,
    "qdynamics.mu": 1.0,
    "qdynamics.trajectories": 10000,
    "qdynamics.t_end": 60.0,
    "qdynamics.t_points": 61,
    "qdynamics.threshold": 1.0,
    "qdynamics.lifetime_tol": 1e-9,
}


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if "," in text:
        return tuple(parse_value(part) for part in text.split(","))
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise InvalidInputError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidInputError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = parse_value(value)
    return values


def _canonical(value) -> str:
    if isinstance(value, (list, tuple)):
        return "(" + ",".join(_canonical(v) for v in value) + ")"
    if isinstance(value, float):
        return repr(float(value))
    return repr(value)


@dataclass
class ExperimentConfig:
    """Effective configuration: defaults overlaid with file values and overrides."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        merged.update(self.values)
        self.values = merged

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        values = parse_config_text(text, str(path))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(values)

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        values = parse_config_text(text)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(values)

    def replace(self, **updates) -> "ExperimentConfig":
        values = dict(self.values)
        values.update(updates)
        return ExperimentConfig(values)

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    def canonical_text(self) -> str:
        return "".join(f"{k}={_canonical(self.values[k])}\n" for k in sorted(self.values)
                       if k != "output.dir")

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def vector(self, key) -> np.ndarray:
        v = np.asarray(self.values[key], dtype=float).ravel()
        if v.shape != (3,):
            raise InvalidInputError(f"{key} must be a 3-vector")
        return v

    # -- sub-configs ------------------------------------------------------------

    def sim_config(self) -> SimConfig:
        nu = int(self["theta.nu"])
        g = self["theta.g"]
        soft = self["theta.softening"]
        return SimConfig(
            g=1.0 / nu if g == "auto" and nu > 0 else float(g) if g != "auto" else float("nan"),
            g_c=float(self["theta.g_c"]),
            softening=0.05 * 2 * float(self["theta.box_half"]) if soft == "auto" else float(soft),
            dt=float(self["theta.dt"]),
            nu=nu,
            seed=int(self.seed) if self.seed is not None else 0,
            cell_x=float(self["theta.cell_x"]),
            cell_p=float(self["theta.cell_p"]),
        )

    def phase_box(self) -> PhaseBox:
        return PhaseBox.symmetric(float(self["theta.box_half"]), float(self["theta.p_half"]))

    def increment_law(self, sigma=None) -> IncrementLaw:
        return IncrementLaw(
            mu=float(self["qdynamics.mu"]),
            sigma=float(self["qdynamics.sigma"] if sigma is None else sigma),
            hbar=float(self["qdynamics.hbar"]),
        )

    def coherence_spec(self, grid_n=None) -> CoherenceSpec:
        width = float(self["coherence.width"])
        half = 5.0 * width
        n = int(grid_n or 2 * int(self["trps.grid_n"]) + 1)
        axis = np.linspace(-half, half, n)

        def density(x, y, z):
            return np.exp(-(x**2 + y**2 + z**2) / (2 * width**2))

        return CoherenceSpec.on_grid(
            (axis, axis, axis), density, self.vector("coherence.dx"),
            self.vector("coherence.lengths"), self.vector("coherence.direction"),
            float(self["coherence.sigma"]), float(self["coherence.dt0"]), normalize=True,
        )


def _positive(cfg, key, out, integer=False, minimum=None):
    value = cfg.values.get(key)
    try:
        num = float(value)
    except (TypeError, ValueError):
        out.append(f"{key} must be a number, got {value!r}")
        return
    if integer and num != int(num):
        out.append(f"{key} must be an integer, got {value!r}")
    lo = 0 if minimum is None else minimum
    if not (np.isfinite(num) and (num >= lo if minimum is not None else num > 0)):
        out.append(f"{key} must be {'>= ' + str(minimum) if minimum is not None else 'positive'}, got {value!r}")


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every invariant violation in ``cfg``; empty when valid.  Never raises."""
    out = []
    v = cfg.values
    if v.get("scenario") not in SCENARIOS:
        out.append(f"scenario must be one of {', '.join(SCENARIOS)}, got {v.get('scenario')!r}")
    seed = v.get("seed")
    if seed is None:
        out.append("seed is mandatory")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        out.append(f"seed must be a non-negative integer, got {seed!r}")
    formats = v.get("output.formats")
    formats = (formats,) if isinstance(formats, str) else formats
    if not formats or any(f not in ("csv", "json") for f in formats):
        out.append(f"output.formats must be drawn from csv, json; got {formats!r}")

    _positive(cfg, "theta.nu", out, integer=True, minimum=2)
    for key in ("theta.g_c", "theta.dt", "theta.box_half", "theta.p_half", "theta.cell_x",
                "theta.cell_p", "relax.dynamical_times", "relax.energy_tol",
                "relax.momentum_tol"):
        _positive(cfg, key, out)
    for key in ("theta.g", "theta.softening"):
        if v.get(key) != "auto":
            _positive(cfg, key, out)
    rate = v.get("relax.spin_rate")
    if not isinstance(rate, (int, float)) or not 0 < rate <= 1:
        out.append(f"relax.spin_rate must be in (0, 1], got {rate!r}")
    for key in ("relax.spin_steps", "relax.min_bin_count"):
        _positive(cfg, key, out, integer=True, minimum=0)
    for key in ("relax.bins", "relax.record_every"):
        _positive(cfg, key, out, integer=True, minimum=1)
    for key in ("relax.initial_spin", "relax.field", "coherence.lengths", "coherence.dx",
                "coherence.direction"):
        try:
            vec = cfg.vector(key)
            if not np.all(np.isfinite(vec)):
                out.append(f"{key} must be finite")
        except (InvalidInputError, ValueError, TypeError):
            out.append(f"{key} must be a 3-vector")
    try:
        if np.linalg.norm(cfg.vector("relax.initial_spin")) == 0:
            out.append("relax.initial_spin must be nonzero")
        if abs(np.linalg.norm(cfg.vector("coherence.direction")) - 1) > 1e-9:
            out.append("coherence.direction must be a unit vector")
    except (InvalidInputError, ValueError, TypeError):
        pass
    for key in ("coherence.sigma", "coherence.dt0", "coherence.width"):
        _positive(cfg, key, out)

    for key in ("trps.half_width", "trps.core_scale", "trps.halo_scale", "trps.lapse_base",
                "trps.lapse_width", "trps.dt0", "trps.t0_end", "trps.tolerance"):
        _positive(cfg, key, out)
    for key in ("trps.grid_n", "trps.samples", "trps.mc_samples"):
        _positive(cfg, key, out, integer=True, minimum=2)
    _positive(cfg, "trps.t0_points", out, integer=True, minimum=3)
    frac = v.get("trps.core_fraction")
    if not isinstance(frac, (int, float)) or not 0 <= frac <= 1:
        out.append(f"trps.core_fraction must be in [0, 1], got {frac!r}")
    depth = v.get("trps.lapse_depth")
    if not isinstance(depth, (int, float)) or not 0 <= depth < 1:
        out.append(f"trps.lapse_depth must be in [0, 1) to keep the lapse positive, got {depth!r}")
    _positive(cfg, "trps.phi_shape", out, minimum=0)
    amp = v.get("trps.reparam_amplitude")
    if not isinstance(amp, (int, float)) or not 0 <= amp < 1:
        out.append(f"trps.reparam_amplitude must be in [0, 1) for a monotone map, got {amp!r}")

    for key in ("qdynamics.hbar", "qdynamics.mu", "qdynamics.t_end", "qdynamics.threshold",
                "qdynamics.lifetime_tol"):
        _positive(cfg, key, out)
    _positive(cfg, "qdynamics.sigma", out, minimum=0)
    _positive(cfg, "qdynamics.trajectories", out, integer=True, minimum=1)
    _positive(cfg, "qdynamics.t_points", out, integer=True, minimum=2)
    de = v.get("qdynamics.delta_e")
    if not isinstance(de, (int, float)) or not np.isfinite(de):
        out.append(f"qdynamics.delta_e must be a finite number, got {de!r}")
    if not out:
        # field checks passed; let each sub-config apply its own invariants too
        for build in (cfg.sim_config, cfg.increment_law, cfg.coherence_spec):
            try:
                out.extend(build().violations())
            except (TrpsLabError, ValueError, TypeError) as exc:
                out.append(f"{build.__name__}: {exc}")
    return out
