"""Run records and their JSON serialisation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``
    so the output stays strict JSON.
    """
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(value, (complex, np.complexfloating)):
        return [jsonable(value.real), jsonable(value.imag)]
    return value


@dataclass
class RunRecord:
    """Outcome of one scenario invocation.

    ``metrics`` holds scalars, ``series`` holds per-step arrays keyed by name
    (each a dict of equal-length columns), ``verdicts`` holds booleans.  A
    failed verdict makes the run exit with the invariant-violation code.
    """

    scenario: str
    config_hash: str
    seed: int
    started: str = field(default_factory=_now)
    finished: str | None = None
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.verdicts.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2

    @property
    def empty(self) -> bool:
        return not self.metrics and not self.series

    def finish(self) -> "RunRecord":
        self.finished = _now()
        return self

    def as_dict(self, timestamps: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "metrics": self.metrics,
            "series": self.series,
            "verdicts": self.verdicts,
            "artifacts": sorted(self.artifacts),
            "warnings": self.warnings,
            "error": self.error,
            "passed": self.passed,
            "exit_code": self.exit_code,
        }
        if timestamps:
            out["started"] = self.started
            out["finished"] = self.finished
        return jsonable(out)

    def to_json(self, timestamps: bool = True) -> str:
        return json.dumps(self.as_dict(timestamps), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            scenario=data["scenario"], config_hash=data["config_hash"], seed=data["seed"],
            started=data.get("started"), finished=data.get("finished"),
            metrics=data.get("metrics", {}), series=data.get("series", {}),
            verdicts=data.get("verdicts", {}), artifacts=data.get("artifacts", []),
            warnings=data.get("warnings", []), error=data.get("error"),
        )

    @classmethod
    def read(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))
