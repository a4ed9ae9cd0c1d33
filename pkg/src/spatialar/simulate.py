"""Exact and controllably-approximate sampling of the stationary field.

The default sampler exploits the geometry of the hull: the d = 0
anti-diagonal X[i, -i] depends only on innovations with u + v <= 0, while
the triangle recursion consumes innovations with u + v >= 1.  The two index
sets are disjoint, and the innovations are i.i.d., so the boundary vector is
independent of every triangle innovation.  The stationary law of the whole
hull therefore factorises into (law of the boundary) x (recursion given the
boundary), and it suffices to draw the (s+1)-point boundary exactly -- an
O(s^3) Cholesky factorisation of its Toeplitz covariance R(t, -t) -- and
sweep the recursion upward at O(s^2).  A joint factorisation of the full
hull would cost O(s^6); that path is kept only as a validation oracle.

For non-Gaussian innovations Cholesky colouring is no longer exact in law,
so the boundary is instead assembled from the truncated moving-average
series (tail variance certified by ``tail_variance_bound``), with the same
exact recursion above it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .covariance import CovKernel, oracle_margin
from .errors import MethodUnsupportedError, NotSPDError
from .model import Field, ModelParams, TriangleWindow

__all__ = [
    "InnovationDist", "MethodKind", "SimMethod", "RngStream", "chol_spd",
    "tail_variance_bound", "FieldSimulator", "simulate", "deterministic_field",
]

_JITTER_LADDER = (1e-12, 1e-10, 1e-8)


class InnovationDist(enum.Enum):
    """Zero-mean unit-variance innovation families (all have finite 8th moment)."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM_UNIT_VAR = "uniform"

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self is InnovationDist.GAUSSIAN:
            return gen.standard_normal(n)
        if self is InnovationDist.RADEMACHER:
            return 2.0 * gen.integers(0, 2, n).astype(np.float64) - 1.0
        r = math.sqrt(3.0)
        return gen.uniform(-r, r, n)


class MethodKind(enum.Enum):
    BOUNDARY_CHOLESKY = "boundary_cholesky"
    FULL_CHOLESKY = "full_cholesky"
    TRUNCATED_SERIES = "truncated_series"
    BOUNDARY_SERIES = "boundary_series"


@dataclass(frozen=True)
class SimMethod:
    """Sampling strategy; ``margin`` is the truncation depth of series variants."""

    kind: MethodKind = MethodKind.BOUNDARY_CHOLESKY
    margin: int | None = None

    @classmethod
    def boundary_cholesky(cls) -> "SimMethod":
        return cls(MethodKind.BOUNDARY_CHOLESKY)

    @classmethod
    def full_cholesky(cls) -> "SimMethod":
        return cls(MethodKind.FULL_CHOLESKY)

    @classmethod
    def truncated_series(cls, margin: int | None = None) -> "SimMethod":
        return cls(MethodKind.TRUNCATED_SERIES, margin)

    @classmethod
    def boundary_series(cls, margin: int | None = None) -> "SimMethod":
        return cls(MethodKind.BOUNDARY_SERIES, margin)

    @classmethod
    def parse(cls, text: str) -> "SimMethod":
        name, _, arg = text.partition(":")
        kind = MethodKind(name)
        margin = int(arg) if arg else None
        return cls(kind, margin)

    def describe(self) -> str:
        if self.margin is None:
            return self.kind.value
        return f"{self.kind.value}:{self.margin}"


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream: draw t of replication r is a pure function of
    (master_seed, r, t).

    Backed by a Philox generator keyed on (master_seed, replication_id), so
    distinct replications get statistically independent streams and the
    sequence a replication sees never depends on worker scheduling.
    """

    master_seed: int
    replication_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [int(self.master_seed) & 0xFFFFFFFFFFFFFFFF,
             int(self.replication_id) & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, replication_id: int) -> "RngStream":
        return RngStream(self.master_seed, replication_id)


def chol_spd(m: np.ndarray, jitter_scales: tuple = _JITTER_LADDER):
    """Lower Cholesky factor of a symmetric matrix, with jitter escalation.

    Returns (L, jitter) where jitter is the multiple of max|diag| added to
    the diagonal (0.0 on the clean path).  Raises NotSPD once the ladder of
    jitter scales is exhausted.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError("need a square matrix of dimension >= 1")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-8 * max(1.0, np.max(np.abs(m)))):
        raise NotSPDError("matrix is not symmetric")
    scale = float(np.max(np.abs(np.diag(m)))) or 1.0
    try:
        return np.linalg.cholesky(m), 0.0
    except np.linalg.LinAlgError:
        pass
    for jit in jitter_scales:
        try:
            bumped = m + jit * scale * np.eye(m.shape[0])
            return np.linalg.cholesky(bumped), jit * scale
        except np.linalg.LinAlgError:
            continue
    raise NotSPDError("matrix not SPD after jitter escalation "
                      f"{jitter_scales} * {scale:g}")


def tail_variance_bound(q: float, margin: int) -> float:
    """Variance omitted by truncating the moving-average series at ``margin``.

    The layer-d weights satisfy sum_j C(d,j)^2 a^(2j) b^(2(d-j)) <=
    (|a|+|b|)^(2d) by the binomial theorem, so the dropped variance is at
    most sum_{d > margin} q^(2d) = q^(2(margin+1)) / (1 - q^2).
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"need 0 <= q < 1, got {q}")
    return q ** (2 * (margin + 1)) / (1.0 - q * q)


def _binomial_kernel_rows(p: ModelParams, margin: int) -> list[np.ndarray]:
    # row t holds C(t, r) a^(t-r) b^r, r = 0..t: coefficients of (a + b z)^t
    rows = [np.array([1.0])]
    a, b = p.alpha, p.beta
    for _ in range(margin):
        prev = rows[-1]
        nxt = np.zeros(len(prev) + 1)
        nxt[:-1] += a * prev
        nxt[1:] += b * prev
        rows.append(nxt)
    return rows


class FieldSimulator:
    """Reusable sampler for one (params, window, method, dist) combination.

    Precomputes whatever is replication-invariant (boundary Cholesky factor,
    hull factor, or binomial kernel rows); ``sample`` is then a pure function
    of the stream, so replications may run concurrently in any order.

    Draw layout (fixed per method, part of the determinism contract):
    boundary_cholesky -- s+1 boundary normals, then the triangle block in
    (d, i) order; full_cholesky -- one hull block in (d, i) order;
    truncated_series / boundary_series -- extended innovation layers in
    ascending layer order (d = -margin first), each layer in i order, then
    (boundary_series only) the triangle block.
    """

    def __init__(self, params: ModelParams, window: TriangleWindow,
                 method: SimMethod = SimMethod(), dist: InnovationDist = InnovationDist.GAUSSIAN,
                 kernel: CovKernel | None = None):
        params.require_stationary()
        if window.s < 1:
            raise ValueError("window sum must be >= 1")
        self.params = params
        self.window = window
        self.method = method
        self.dist = dist
        self.kernel = kernel if kernel is not None else CovKernel(params)
        self.boundary_jitter = 0.0
        self._chol = None
        self._kernel_rows = None

        kind = method.kind
        if kind in (MethodKind.BOUNDARY_CHOLESKY, MethodKind.FULL_CHOLESKY):
            if dist is not InnovationDist.GAUSSIAN:
                raise MethodUnsupportedError(
                    f"{kind.value} is exact in law only for Gaussian innovations"
                )
        if kind is MethodKind.BOUNDARY_CHOLESKY:
            s = window.s
            lags = np.arange(s + 1)
            row = np.array([self.kernel.R(int(t), -int(t)) for t in lags])
            cov = row[np.abs(lags[:, None] - lags[None, :])]
            self._chol, self.boundary_jitter = chol_spd(cov)
        elif kind is MethodKind.FULL_CHOLESKY:
            from .model import hull_indices

            pts = hull_indices(window)
            n = len(pts)
            cov = np.empty((n, n))
            for ia, (i1, j1) in enumerate(pts):
                for ib, (i2, j2) in enumerate(pts):
                    cov[ia, ib] = self.kernel.R(i1 - i2, j1 - j2)
            self._chol, self.boundary_jitter = chol_spd(cov)
        else:
            margin = method.margin
            if margin is None:
                margin = oracle_margin(params.q, 1e-12)
                self.method = SimMethod(kind, margin)
            self._kernel_rows = _binomial_kernel_rows(params, margin)

    # -- method-specific samplers ------------------------------------------

    def _sweep(self, boundary: np.ndarray, eps_layers: list[np.ndarray]) -> list[np.ndarray]:
        a, b = self.params.alpha, self.params.beta
        values = [boundary]
        prev = boundary
        for d in range(1, self.window.s + 1):
            prev = a * prev[:-1] + b * prev[1:] + eps_layers[d - 1]
            values.append(prev)
        return values

    def _draw_triangle(self, gen: np.random.Generator) -> list[np.ndarray]:
        w = self.window
        block = self.dist.draw(gen, w.n_triangle)
        layers, pos = [], 0
        for d in range(1, w.s + 1):
            n = w.layer_len(d)
            layers.append(block[pos:pos + n])
            pos += n
        return layers

    def _sample_boundary_cholesky(self, gen: np.random.Generator) -> Field:
        w = self.window
        z = gen.standard_normal(w.s + 1)
        boundary = self._chol @ z
        eps = self._draw_triangle(gen)
        return Field(w, self._sweep(boundary, eps), eps, self.params)

    def _sample_full_cholesky(self, gen: np.random.Generator) -> Field:
        w = self.window
        z = gen.standard_normal(w.n_hull)
        flat = self._chol @ z
        values, pos = [], 0
        for d in range(0, w.s + 1):
            n = w.layer_len(d)
            values.append(flat[pos:pos + n])
            pos += n
        a, b = self.params.alpha, self.params.beta
        eps = [values[d] - a * values[d - 1][:-1] - b * values[d - 1][1:]
               for d in range(1, w.s + 1)]
        return Field(w, values, eps, self.params)

    def _draw_extended(self, gen: np.random.Generator, lowest: int) -> dict[int, np.ndarray]:
        # layers lowest..s of the staircase {u <= k, v <= l}, ascending order
        w = self.window
        return {d: self.dist.draw(gen, w.layer_len(d))
                for d in range(lowest, w.s + 1)}

    def _series_layer(self, eps: dict[int, np.ndarray], d: int) -> np.ndarray:
        # per-point truncation at relative depth `margin`
        rows = self._kernel_rows
        out = np.zeros(self.window.layer_len(d))
        for t in range(len(rows)):
            out += np.correlate(eps[d - t], rows[t], mode="valid")
        return out

    def _sample_truncated_series(self, gen: np.random.Generator) -> Field:
        w = self.window
        margin = self.method.margin
        eps = self._draw_extended(gen, -margin)
        values = [self._series_layer(eps, d) for d in range(0, w.s + 1)]
        innov = [eps[d] for d in range(1, w.s + 1)]
        return Field(w, values, innov, self.params)

    def _sample_boundary_series(self, gen: np.random.Generator) -> Field:
        w = self.window
        margin = self.method.margin
        eps_below = {d: self.dist.draw(gen, w.layer_len(d))
                     for d in range(-margin, 1)}
        boundary = self._series_layer(eps_below, 0)
        eps = self._draw_triangle(gen)
        return Field(w, self._sweep(boundary, eps), eps, self.params)

    def sample(self, stream: RngStream) -> Field:
        gen = stream.generator()
        kind = self.method.kind
        if kind is MethodKind.BOUNDARY_CHOLESKY:
            return self._sample_boundary_cholesky(gen)
        if kind is MethodKind.FULL_CHOLESKY:
            return self._sample_full_cholesky(gen)
        if kind is MethodKind.TRUNCATED_SERIES:
            return self._sample_truncated_series(gen)
        return self._sample_boundary_series(gen)


def simulate(params: ModelParams, window: TriangleWindow, method: SimMethod,
             dist: InnovationDist, stream: RngStream,
             kernel: CovKernel | None = None) -> Field:
    """Draw one field realisation; see FieldSimulator for the contracts."""
    return FieldSimulator(params, window, method, dist, kernel).sample(stream)


def deterministic_field(params: ModelParams, window: TriangleWindow,
                        boundary: np.ndarray,
                        innovations: list[np.ndarray] | None = None) -> Field:
    """Run the recursion from fixed boundary values (zero innovations unless given).

    Debug/oracle path: with eps = 0 the field is the deterministic recursion
    of its boundary, and the least-squares estimator recovers (alpha, beta)
    exactly whenever the normal equations are nonsingular.
    """
    w = window
    boundary = np.asarray(boundary, dtype=np.float64)
    if len(boundary) != w.s + 1:
        raise ValueError(f"boundary must have {w.s + 1} values")
    if innovations is None:
        innovations = [np.zeros(w.layer_len(d)) for d in range(1, w.s + 1)]
    a, b = params.alpha, params.beta
    values, prev = [boundary], boundary
    for d in range(1, w.s + 1):
        prev = a * prev[:-1] + b * prev[1:] + innovations[d - 1]
        values.append(prev)
    return Field(w, values, innovations, params)
