"""Model parameters, triangular index geometry, and field storage.

The planar autoregression

    X[i, j] = alpha * X[i-1, j] + beta * X[i, j-1] + eps[i, j]

is observed on triangles T(k, l) = {(i, j) : i + j >= 1, i <= k, j <= l}.
Everything downstream works layer by layer on anti-diagonals d = i + j:
within a window the layer-d cross-section is an interval in i, and the
d -> d + 1 recursion touches two adjacent slots of the previous layer,
so layered storage keeps the sweep contiguous.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonStationaryError

_BOUNDARY_ATOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """One (alpha, beta) pair; stationary iff |alpha| + |beta| < 1."""

    alpha: float
    beta: float

    @property
    def q(self) -> float:
        """Coefficient sum |alpha| + |beta|, the contraction factor."""
        return abs(self.alpha) + abs(self.beta)

    def is_stationary(self) -> bool:
        return self.q < 1.0

    def require_stationary(self) -> "ModelParams":
        if not self.is_stationary():
            raise NonStationaryError(
                f"|alpha| + |beta| = {self.q:.6g} >= 1 for ({self.alpha}, {self.beta})"
            )
        return self


class CaseTag(enum.Enum):
    """Which limit regime a boundary point belongs to."""

    INTERIOR = "interior"  # 0 < |alpha| < 1
    BOUNDARY = "boundary"  # |alpha| in {0, 1}


@dataclass(frozen=True)
class BoundaryPoint:
    """A point with |alpha| + |beta| = 1 exactly.

    Stored as alpha plus the sign of beta; |beta| = 1 - |alpha| is derived,
    so the constraint holds to the last bit.
    """

    alpha: float
    beta_sign: int = 1

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ConfigError(f"boundary alpha must lie in [-1, 1], got {self.alpha}")
        if self.beta_sign not in (-1, 0, 1):
            raise ConfigError("beta_sign must be -1, 0 or 1")
        if abs(self.alpha) == 1.0 and self.beta_sign != 0:
            object.__setattr__(self, "beta_sign", 0)
        if abs(self.alpha) < 1.0 and self.beta_sign == 0:
            raise ConfigError("beta_sign must be nonzero when |alpha| < 1")

    @property
    def beta(self) -> float:
        return self.beta_sign * (1.0 - abs(self.alpha))

    @property
    def case_tag(self) -> CaseTag:
        return CaseTag.INTERIOR if 0.0 < abs(self.alpha) < 1.0 else CaseTag.BOUNDARY

    @classmethod
    def from_pair(cls, alpha: float, beta: float) -> "BoundaryPoint":
        if abs(abs(alpha) + abs(beta) - 1.0) > _BOUNDARY_ATOL:
            raise ConfigError(
                f"({alpha}, {beta}) is not on the boundary |alpha| + |beta| = 1"
            )
        sign = 0 if beta == 0.0 else (1 if beta > 0 else -1)
        return cls(alpha=alpha, beta_sign=sign)


class ScheduleKind(enum.Enum):
    CONST = "const"
    LOG = "log"
    POWER = "power"


@dataclass(frozen=True)
class Schedule:
    """Named closed-form schedule m -> c, c*log(m), or c*m**p with p < 1."""

    kind: ScheduleKind = ScheduleKind.CONST
    c: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind is ScheduleKind.POWER and not self.p < 1.0:
            raise ConfigError(f"power schedule needs p < 1, got p = {self.p}")

    def __call__(self, m: int) -> float:
        if self.kind is ScheduleKind.CONST:
            return self.c
        if self.kind is ScheduleKind.LOG:
            return self.c * math.log(m)
        return self.c * m**self.p

    @classmethod
    def constant(cls, c: float) -> "Schedule":
        return cls(ScheduleKind.CONST, c)

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "c": self.c}
        if self.kind is ScheduleKind.POWER:
            out["p"] = self.p
        return out

    @classmethod
    def from_json(cls, obj) -> "Schedule":
        if isinstance(obj, (int, float)):
            return cls.constant(float(obj))
        kind = ScheduleKind(obj.get("kind", "const"))
        return cls(kind, float(obj.get("c", 1.0)), float(obj.get("p", 0.0)))


@dataclass(frozen=True)
class NearlyUnstableDesign:
    """A boundary point approached along alpha_m = alpha - gamma(m)/m, etc."""

    boundary: BoundaryPoint
    gamma: Schedule
    delta: Schedule

    @property
    def case_tag(self) -> CaseTag:
        return self.boundary.case_tag

    def params_at(self, m: int) -> ModelParams:
        """Model parameters at index m; raises if they leave the stable region."""
        if m < 1:
            raise ConfigError(f"design index must be >= 1, got {m}")
        p = ModelParams(
            self.boundary.alpha - self.gamma(m) / m,
            self.boundary.beta - self.delta(m) / m,
        )
        if not p.is_stationary():
            raise NonStationaryError(
                f"index m={m} leaves the stable region: |alpha_m| + |beta_m| = {p.q:.6g}"
            )
        return p

    def to_json(self) -> dict:
        return {
            "alpha": self.boundary.alpha,
            "beta": self.boundary.beta,
            "gamma": self.gamma.to_json(),
            "delta": self.delta.to_json(),
            "case": self.case_tag.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NearlyUnstableDesign":
        bp = BoundaryPoint.from_pair(float(obj["alpha"]), float(obj["beta"]))
        design = cls(
            boundary=bp,
            gamma=Schedule.from_json(obj["gamma"]),
            delta=Schedule.from_json(obj["delta"]),
        )
        declared = obj.get("case")
        if declared is not None and CaseTag(declared) is not design.case_tag:
            raise ConfigError(
                f"declared case '{declared}' does not match boundary alpha {bp.alpha}"
            )
        return design


@dataclass(frozen=True)
class TriangleWindow:
    """Observation window T(k, l); s = k + l is the window sum."""

    k: int
    l: int

    @property
    def s(self) -> int:
        return self.k + self.l

    @property
    def n_triangle(self) -> int:
        """Number of lattice points in the triangle: s(s+1)/2 (0 if s <= 0)."""
        s = self.s
        return s * (s + 1) // 2 if s >= 1 else 0

    @property
    def n_hull(self) -> int:
        s = self.s
        return (s + 1) * (s + 2) // 2 if s >= 1 else 0

    @classmethod
    def balanced(cls, s: int) -> "TriangleWindow":
        """The harness split k = floor(s/2), l = ceil(s/2)."""
        return cls(s // 2, (s + 1) // 2)

    def layer_start(self, d: int) -> int:
        """Smallest i on anti-diagonal d inside the hull staircase."""
        return d - self.l

    def layer_len(self, d: int) -> int:
        """Number of hull points on anti-diagonal d (valid for d <= s)."""
        return self.s - d + 1


def triangle_indices(w: TriangleWindow) -> list[tuple[int, int]]:
    """All (i, j) with i + j >= 1, i <= k, j <= l, ordered by (i + j, i).

    Empty when k + l <= 0.
    """
    out = []
    for d in range(1, w.s + 1):
        for i in range(w.layer_start(d), w.k + 1):
            out.append((i, d - i))
    return out


def hull_indices(w: TriangleWindow) -> list[tuple[int, int]]:
    """The triangle together with every regressor neighbour (i-1, j), (i, j-1).

    Equals {(i, j) : i + j >= 0, i <= k, j <= l}, ordered by (i + j, i);
    empty when the triangle is empty.
    """
    if w.s <= 0:
        return []
    out = []
    for d in range(0, w.s + 1):
        for i in range(w.layer_start(d), w.k + 1):
            out.append((i, d - i))
    return out


@dataclass
class Field:
    """Sample values on the hull of a window, stored by anti-diagonal layers.

    ``values[d]`` holds layer d (d = 0 .. s); entry p corresponds to
    i = d - l + p.  ``innovations[d - 1]`` (d = 1 .. s), when present, holds
    the eps draws for the triangle layers in the same position convention.
    """

    window: TriangleWindow
    values: list[np.ndarray]
    innovations: list[np.ndarray] | None = None
    params: ModelParams | None = None

    def __post_init__(self):
        s = self.window.s
        if len(self.values) != s + 1:
            raise ValueError(f"expected {s + 1} value layers, got {len(self.values)}")
        for d, layer in enumerate(self.values):
            if len(layer) != self.window.layer_len(d):
                raise ValueError(f"layer {d} has length {len(layer)}, "
                                 f"expected {self.window.layer_len(d)}")
        if self.innovations is not None and len(self.innovations) != s:
            raise ValueError(f"expected {s} innovation layers")

    def value(self, i: int, j: int) -> float:
        d = i + j
        return float(self.values[d][i - self.window.layer_start(d)])

    def innovation(self, i: int, j: int) -> float:
        if self.innovations is None:
            raise ValueError("field carries no innovations")
        d = i + j
        return float(self.innovations[d - 1][i - self.window.layer_start(d)])

    def has_innovations(self) -> bool:
        return self.innovations is not None

    def max_recursion_residual(self) -> float:
        """max over triangle points of |X - alpha*X_left - beta*X_down - eps|."""
        if self.params is None or self.innovations is None:
            raise ValueError("residuals need params and innovations")
        a, b = self.params.alpha, self.params.beta
        worst = 0.0
        for d in range(1, self.window.s + 1):
            prev = self.values[d - 1]
            res = self.values[d] - a * prev[:-1] - b * prev[1:] - self.innovations[d - 1]
            worst = max(worst, float(np.max(np.abs(res))) if len(res) else 0.0)
        return worst

    def iter_rows(self, with_innovations: bool = False):
        """Yield (i, j, value[, innovation]) rows in hull order."""
        for d in range(0, self.window.s + 1):
            i0 = self.window.layer_start(d)
            for p in range(self.window.layer_len(d)):
                i, j = i0 + p, d - (i0 + p)
                if with_innovations:
                    has = d >= 1 and self.innovations is not None
                    eps = self.innovations[d - 1][p] if has else float("nan")
                    yield i, j, float(self.values[d][p]), float(eps)
                else:
                    yield i, j, float(self.values[d][p])
