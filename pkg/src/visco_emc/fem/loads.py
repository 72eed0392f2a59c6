"""Time functions and load specifications."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeFunction:
    """Scalar time function: ``hat(peak_t, end_t)``, ``sin(amplitude, omega)`` or ``const(v)``.

    ``hat`` rises linearly as ``t`` up to ``peak_t`` and then falls linearly to
    zero at ``end_t``; it vanishes afterwards.
    """

    kind: str
    args: tuple

    _ARITY = {"hat": 2, "sin": 2, "const": 1}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown time function {self.kind!r}; use hat, sin or const")
        if len(self.args) != self._ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {self._ARITY[self.kind]} argument(s), got {len(self.args)}")
        object.__setattr__(self, "args", tuple(float(a) for a in self.args))
        if self.kind == "hat" and not (0 < self.args[0] < self.args[1]):
            raise ValueError(f"hat needs 0 < peak_t < end_t (got {self.args})")

    def __call__(self, t: float) -> float:
        if self.kind == "const":
            return self.args[0]
        if self.kind == "sin":
            return self.args[0] * math.sin(self.args[1] * t)
        peak, end = self.args
        if t <= 0:
            return 0.0
        if t <= peak:
            return t
        if t <= end:
            return peak * (end - t) / (end - peak)
        return 0.0

    def support_end(self) -> float:
        """Time after which the function is identically zero (``inf`` if never)."""
        if self.kind == "hat":
            return self.args[1]
        if self.kind == "const" and self.args[0] == 0.0:
            return 0.0
        return math.inf

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(repr(a) for a in self.args)})"

    @classmethod
    def parse(cls, text: str) -> "TimeFunction":
        m = re.fullmatch(r"\s*(\w+)\s*\((.*)\)\s*", text)
        if not m:
            raise ValueError(f"cannot parse time function {text!r}")
        args = [a for a in (s.strip() for s in m.group(2).split(",")) if a]
        try:
            return cls(m.group(1).lower(), tuple(float(a) for a in args))
        except ValueError as exc:
            raise ValueError(f"{text!r}: {exc}") from None


@dataclass(frozen=True)
class VectorLoad:
    """``f(t) * (vx, vy, vz)``."""

    func: TimeFunction
    vector: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.vector)
        if len(v) != 3:
            raise ValueError("load vectors need three components")
        object.__setattr__(self, "vector", v)

    def __call__(self, t: float) -> np.ndarray:
        return self.func(t) * np.asarray(self.vector)

    def __str__(self) -> str:
        return f"{self.func} * ({', '.join(repr(x) for x in self.vector)})"

    @classmethod
    def parse(cls, text: str) -> "VectorLoad":
        m = re.fullmatch(r"\s*(\w+\s*\([^)]*\))\s*\*\s*\(([^)]*)\)\s*", text)
        if not m:
            raise ValueError(f"cannot parse vector load {text!r}; expected 'func(args) * (x, y, z)'")
        try:
            vec = tuple(float(x) for x in m.group(2).split(","))
        except ValueError:
            raise ValueError(f"bad vector in {text!r}") from None
        return cls(TimeFunction.parse(m.group(1)), vec)


@dataclass(frozen=True)
class LoadSpec:
    """Body force, surface tractions and homogeneous Dirichlet constraints.

    ``dirichlet`` maps a surface-set name to the fixed displacement
    components, e.g. ``(True, True, True)`` for a clamp or
    ``(False, True, True)`` for a roller that leaves x free.
    """

    body: VectorLoad | None = None
    tractions: dict = field(default_factory=dict)
    dirichlet: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", {k: tuple(bool(c) for c in v) for k, v in self.dirichlet.items()})

    def load_free_after(self) -> float:
        """Time after which no external load acts."""
        ends = [l.func.support_end() for l in self.tractions.values()]
        if self.body is not None:
            ends.append(self.body.func.support_end())
        return max(ends, default=0.0)
