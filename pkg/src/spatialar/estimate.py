"""Least squares estimation of (alpha, beta) over a triangular window.

The estimator solves the 2x2 normal equations B theta = C with

    B = sum [[x1^2, x1 x2], [x1 x2, x2^2]],   C = sum (x1 y, x2 y),

x1 = X[i-1, j], x2 = X[i, j-1], y = X[i, j], summed over the triangle.
The solve goes through the adjugate, theta = adj(B) C / det(B), so that
det(B) and adj(B) C stay first-class observables for the limit experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingInnovationsError, MissingValuesError, SingularDesignError
from .model import Field, TriangleWindow

__all__ = [
    "Matrix2", "EstimateResult", "adjugate2", "det2",
    "normal_equations", "lse", "score_vector",
]

_SINGULAR_REL = 1e-12


@dataclass(frozen=True)
class Matrix2:
    """Plain 2x2 matrix of floats."""

    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def from_array(cls, m) -> "Matrix2":
        m = np.asarray(m, dtype=np.float64)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def symmetric(cls, diag: float, off: float) -> "Matrix2":
        return cls(diag, off, off, diag)

    @classmethod
    def identity(cls) -> "Matrix2":
        return cls(1.0, 0.0, 0.0, 1.0)

    def to_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def adjugate(self) -> "Matrix2":
        return Matrix2(self.a22, -self.a12, -self.a21, self.a11)

    def matvec(self, v) -> np.ndarray:
        return np.array([self.a11 * v[0] + self.a12 * v[1],
                         self.a21 * v[0] + self.a22 * v[1]])

    def matmul(self, other: "Matrix2") -> "Matrix2":
        return Matrix2.from_array(self.to_array() @ other.to_array())

    def scale(self, c: float) -> "Matrix2":
        return Matrix2(c * self.a11, c * self.a12, c * self.a21, c * self.a22)

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return abs(self.a12 - self.a21) <= atol

    def max_abs(self) -> float:
        return max(abs(self.a11), abs(self.a12), abs(self.a21), abs(self.a22))


def adjugate2(b: Matrix2) -> Matrix2:
    """adj([[a, b], [c, d]]) = [[d, -b], [-c, a]]; B adj(B) = det(B) I."""
    return b.adjugate()


def det2(b: Matrix2) -> float:
    return b.det()


@dataclass(frozen=True)
class EstimateResult:
    """LSE output with its normal-equation components.

    ``cross`` is the right-hand side C; ``score``, present when the field
    retains innovations, is A = sum (x1 eps, x2 eps) and satisfies
    A = C - B (alpha, beta)' for the generating parameters.
    """

    alpha_hat: float
    beta_hat: float
    B: Matrix2
    cross: np.ndarray
    detB: float
    score: np.ndarray | None = None


def _layer_products(field: Field, w: TriangleWindow):
    if field.window != w:
        raise MissingValuesError("field was built on a different window")
    for d in range(1, w.s + 1):
        prev = field.values[d - 1]
        yield field.values[d], prev[:-1], prev[1:], d


def normal_equations(field: Field, w: TriangleWindow) -> tuple[Matrix2, np.ndarray]:
    """Accumulate B and C over the triangle.

    Per-layer dot products are combined with exact (fsum) accumulation: at
    s >= 128 the sums mix ~1e4 squared terms whose magnitude grows like the
    near-boundary variance, and naive running sums lose digits.
    """
    b11, b12, b22, c1, c2 = [], [], [], [], []
    for y, x1, x2, _ in _layer_products(field, w):
        b11.append(float(x1 @ x1))
        b12.append(float(x1 @ x2))
        b22.append(float(x2 @ x2))
        c1.append(float(x1 @ y))
        c2.append(float(x2 @ y))
    bmat = Matrix2.symmetric(0.0, 0.0) if not b11 else Matrix2(
        math.fsum(b11), math.fsum(b12), math.fsum(b12), math.fsum(b22))
    cvec = np.array([math.fsum(c1), math.fsum(c2)])
    return bmat, cvec


def lse(field: Field, w: TriangleWindow) -> EstimateResult:
    """Least squares estimate via the adjugate solve.

    Raises SingularDesign when |det B| <= 1e-12 (B11 B22 + B12^2); the
    threshold is relative to B's own scale because field magnitudes blow up
    near the unstable boundary.
    """
    bmat, cvec = normal_equations(field, w)
    det = bmat.det()
    if abs(det) <= _SINGULAR_REL * (bmat.a11 * bmat.a22 + bmat.a12 ** 2):
        raise SingularDesignError(
            f"normal equations singular on window ({w.k}, {w.l}): det = {det:g}"
        )
    theta = bmat.adjugate().matvec(cvec) / det
    score = score_vector(field, w) if field.has_innovations() else None
    return EstimateResult(float(theta[0]), float(theta[1]), bmat, cvec, det, score)


def score_vector(field: Field, w: TriangleWindow) -> np.ndarray:
    """A = sum over the triangle of (x1 eps, x2 eps); needs retained innovations."""
    if not field.has_innovations():
        raise MissingInnovationsError("field does not carry innovations")
    a1, a2 = [], []
    for _, x1, x2, d in _layer_products(field, w):
        eps = field.innovations[d - 1]
        a1.append(float(x1 @ eps))
        a2.append(float(x2 @ eps))
    return np.array([math.fsum(a1), math.fsum(a2)])
