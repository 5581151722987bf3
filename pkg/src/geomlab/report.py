"""Machine-readable reports with a byte-stable JSON form."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = "%.17g" % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj: Any) -> str:
    """JSON with sorted keys and floats at 17 significant digits."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        c = complex(obj)
        return dumps({"re": c.real, "im": c.imag})
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {dumps(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass
class Check:
    name: str
    value: float
    threshold: float | None
    passed: bool | None  # None: reported only

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "pass": self.passed}


@dataclass
class Report:
    command: str
    params: dict
    checks: list[Check] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float | None = None

    def check(self, name: str, value: float, threshold: float | None, passed: bool | None) -> Check:
        c = Check(name, float(value), threshold, None if passed is None else bool(passed))
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed is not False for c in self.checks)

    @property
    def input_hash(self) -> str:
        blob = dumps({"command": self.command, "params": self.params})
        return hashlib.sha256(blob.encode()).hexdigest()

    def as_dict(self) -> dict:
        out = {
            "command": self.command,
            "params": self.params,
            "input_sha256": self.input_hash,
            "checks": [c.as_dict() for c in self.checks],
            "results": self.results,
            "pass": self.passed,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def checks_csv(self) -> str:
        lines = ["name,value,threshold,pass"]
        for c in self.checks:
            thr = "" if c.threshold is None else _num(c.threshold)
            ok = "" if c.passed is None else str(c.passed).lower()
            lines.append(f"{c.name},{_num(c.value)},{thr},{ok}")
        return "\n".join(lines) + "\n"
