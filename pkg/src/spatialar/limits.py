"""Theoretical limit objects for the nearly-unstable designs.

Two regimes, split on the boundary point (|alpha| + |beta| = 1):

* interior (0 < |alpha| < 1): the scaled estimator error converges at rate
  s = k + l with singular limit covariance |alpha||beta| * adj(Psi), where
  Psi = [[1, sign(ab)], [sign(ab), 1]];
* boundary (|alpha| in {0, 1}): rate s * m^(1/2) |gamma^2 - delta^2|^(-1/4)
  with covariance Theta^(-1), Theta = (1/4)[[1, theta], [theta, 1]], theta
  determined by the schedule ratio limit omega.

Also here: the exact mean of the normal-equation matrix (closed form), the
divergence statistics the asymptotics condition on, and the 2x2 SPD
inverse / square-root helpers used to normalise boundary-case errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .covariance import d_factor, rho_corr, sigma_sq
from .errors import (
    IndeterminateOmegaError,
    NotSPDError,
    OutOfRangeError,
    RateUndefinedError,
    SingularMatrixError,
)
from .estimate import Matrix2
from .model import BoundaryPoint, CaseTag, ModelParams, NearlyUnstableDesign

__all__ = [
    "psi_matrix", "psi_adjugate", "sigma_alpha_sq", "FisherScaleConstants",
    "fisher_scale_constants", "omega_n", "omega_limit", "theta_scalar",
    "theta_matrix", "invert_spd2", "sqrt_spd2", "LimitLaw", "limit_law",
    "condition_statistic", "expected_B",
]

_OMEGA_SETTLE_RTOL = 1e-3


def _sign(x: float) -> int:
    return 0 if x == 0 else (1 if x > 0 else -1)


def psi_matrix(bp: BoundaryPoint) -> Matrix2:
    """Psi = [[1, sign(ab)], [sign(ab), 1]]; diagonal when alpha*beta = 0."""
    s = _sign(bp.alpha * bp.beta)
    return Matrix2.symmetric(1.0, float(s))


def psi_adjugate(bp: BoundaryPoint) -> Matrix2:
    return psi_matrix(bp).adjugate()


def sigma_alpha_sq(alpha: float) -> float:
    """2^(9/2) / (15 sqrt(pi |alpha| (1 - |alpha|))) for 0 < |alpha| < 1."""
    a = abs(alpha)
    if not 0.0 < a < 1.0:
        raise OutOfRangeError(f"need 0 < |alpha| < 1, got {alpha}")
    return 2.0**4.5 / (15.0 * math.sqrt(math.pi * a * (1.0 - a)))


@dataclass(frozen=True)
class FisherScaleConstants:
    """Informational scaling constants of the observed information matrix.

    info_exponent is the growth order of the information: 2 on the stable
    region, 5/2 on the boundary with 0 < |alpha| < 1, 3 at |alpha| in {0, 1}.
    No limit test is attached to these; they are exposed for reporting only.
    """

    sigma_sq_ab: float
    rho: float
    sigma_alpha_sq: float | None
    gamma_matrix: Matrix2
    info_exponent: float


def fisher_scale_constants(alpha: float, beta: float) -> FisherScaleConstants:
    q = abs(alpha) + abs(beta)
    if q < 1.0:
        p = ModelParams(alpha, beta)
        s2, rho = sigma_sq(p), rho_corr(p)
        exponent = 2.0
    elif q == 1.0:
        s2 = math.inf
        rho = float(_sign(alpha * beta))
        exponent = 2.5 if 0.0 < abs(alpha) < 1.0 else 3.0
    else:
        raise OutOfRangeError(f"|alpha| + |beta| = {q} > 1")
    saa = sigma_alpha_sq(alpha) if 0.0 < abs(alpha) < 1.0 else None
    return FisherScaleConstants(
        sigma_sq_ab=s2,
        rho=rho,
        sigma_alpha_sq=saa,
        gamma_matrix=Matrix2.symmetric(2.0, -2.0 * rho),
        info_exponent=exponent,
    )


def omega_n(bp: BoundaryPoint, gamma_m: float, delta_m: float) -> float:
    """alpha * gamma/delta + beta * delta/gamma at one index (boundary case).

    Exactly one term is active since |alpha| in {0, 1}; a vanishing
    denominator gives a signed infinity, and the value is indeterminate only
    when both schedules feeding the active term vanish.
    """
    if bp.case_tag is not CaseTag.BOUNDARY:
        raise OutOfRangeError("omega is defined for boundary designs only")
    if abs(bp.alpha) == 1.0:
        num, den, coef = gamma_m, delta_m, bp.alpha
    else:
        num, den, coef = delta_m, gamma_m, bp.beta
    if num == 0.0 and den == 0.0:
        raise IndeterminateOmegaError("both schedules of the active term vanish")
    if den == 0.0:
        return math.copysign(math.inf, coef * num)
    return coef * num / den


def omega_limit(design: NearlyUnstableDesign, m_probe: int) -> tuple[float, bool]:
    """Finite-probe estimate of omega = lim omega_m, with a settledness flag.

    Evaluated at m_probe and 4 * m_probe; the design is flagged unsettled
    (rather than the limit guessed) when the two disagree by more than 1e-3
    relative.
    """
    w1 = omega_n(design.boundary, design.gamma(m_probe), design.delta(m_probe))
    w2 = omega_n(design.boundary, design.gamma(4 * m_probe), design.delta(4 * m_probe))
    if math.isinf(w1) or math.isinf(w2):
        settled = w1 == w2
    else:
        settled = abs(w1 - w2) <= _OMEGA_SETTLE_RTOL * max(1.0, abs(w2))
    return w2, settled


def theta_scalar(bp: BoundaryPoint, omega: float) -> float:
    """theta = -(alpha + beta) sign(omega) / (|omega| + sqrt(omega^2 - 1)).

    Zero when |omega| is infinite; |omega| must be >= 1 (it always is for a
    valid nearly-unstable schedule).
    """
    if math.isinf(omega):
        return 0.0
    if abs(omega) < 1.0:
        raise OutOfRangeError(f"|omega| = {abs(omega)} < 1")
    s = bp.alpha + bp.beta
    return -s * math.copysign(1.0, omega) / (abs(omega) + math.sqrt(omega * omega - 1.0))


def theta_matrix(theta: float) -> Matrix2:
    """Theta = (1/4) [[1, theta], [theta, 1]]; singular exactly at |theta| = 1."""
    if abs(theta) > 1.0:
        raise OutOfRangeError(f"|theta| = {abs(theta)} > 1")
    return Matrix2.symmetric(0.25, 0.25 * theta)


def invert_spd2(m: Matrix2, rel_tol: float = 1e-14) -> Matrix2:
    det = m.det()
    if abs(det) <= rel_tol * max(m.max_abs() ** 2, 1e-300):
        raise SingularMatrixError(f"matrix with det {det:g} is not invertible")
    return m.adjugate().scale(1.0 / det)


def sqrt_spd2(m: Matrix2, atol: float = 1e-12) -> Matrix2:
    """Symmetric PSD square root: S = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det))."""
    if not m.is_symmetric(atol * max(1.0, m.max_abs())):
        raise NotSPDError("matrix is not symmetric")
    det, tr = m.det(), m.a11 + m.a22
    scale = max(1.0, m.max_abs())
    if det < -atol * scale**2 or tr < -atol * scale:
        raise NotSPDError(f"matrix with det {det:g}, trace {tr:g} is not PSD")
    root = math.sqrt(max(det, 0.0))
    denom = tr + 2.0 * root
    if denom <= 0.0:
        return Matrix2.symmetric(0.0, 0.0)
    return Matrix2(m.a11 + root, m.a12, m.a21, m.a22 + root).scale(1.0 / math.sqrt(denom))


@dataclass(frozen=True)
class LimitLaw:
    """Scaling rate and limit covariance for one design.

    ``covariance`` is None exactly when only the normalised (square-root
    standardised) form of the limit exists (boundary case with |omega| = 1).
    """

    case_tag: CaseTag
    rate: Callable[[int, int], float]
    covariance: Matrix2 | None
    singular: bool
    omega: float | None = None
    omega_settled: bool | None = None
    theta: float | None = None


def limit_law(design: NearlyUnstableDesign, m_probe: int = 4096) -> LimitLaw:
    """The limit law of the scaled LSE error for this design.

    Interior: rate (m, s) -> s, covariance |alpha||beta| adj(Psi) (rank 1).
    Boundary: rate (m, s) -> s sqrt(m) |gamma(m)^2 - delta(m)^2|^(-1/4),
    covariance Theta(theta)^(-1) when |omega| > 1, singular at |omega| = 1.
    """
    bp = design.boundary
    if design.case_tag is CaseTag.INTERIOR:
        cov = psi_adjugate(bp).scale(abs(bp.alpha) * abs(bp.beta))
        return LimitLaw(CaseTag.INTERIOR, lambda m, s: float(s), cov, singular=True)

    g, d = design.gamma(m_probe), design.delta(m_probe)
    if g * g == d * d:
        raise RateUndefinedError(
            "gamma(m)^2 = delta(m)^2: the boundary-case scaling statistic vanishes"
        )

    def rate(m: int, s: int) -> float:
        gm, dm = design.gamma(m), design.delta(m)
        return s * math.sqrt(m) * abs(gm * gm - dm * dm) ** -0.25

    omega, settled = omega_limit(design, m_probe)
    theta = theta_scalar(bp, omega)
    if abs(theta) < 1.0:
        cov = invert_spd2(theta_matrix(theta))
        return LimitLaw(CaseTag.BOUNDARY, rate, cov, singular=False,
                        omega=omega, omega_settled=settled, theta=theta)
    return LimitLaw(CaseTag.BOUNDARY, rate, None, singular=True,
                    omega=omega, omega_settled=settled, theta=theta)


def condition_statistic(design: NearlyUnstableDesign, m: int, s: int) -> float:
    """The computable statistic whose divergence the scaling limits require.

    Interior: s m^(-1/2) (|gamma(m)| + |delta(m)|)^(1/2);
    boundary: s m^(-1) |gamma(m)^2 - delta(m)^2|^(1/2).
    """
    g, d = design.gamma(m), design.delta(m)
    if design.case_tag is CaseTag.INTERIOR:
        return s * m**-0.5 * (abs(g) + abs(d)) ** 0.5
    return s * abs(g * g - d * d) ** 0.5 / m


def expected_B(p: ModelParams, s: int) -> Matrix2:
    """Exact mean of the normal-equation matrix on a window with sum s.

    Stationarity collapses the sum over the triangle:
    E[B] = (s(s+1)/2) sigma^2 [[1, D], [D, 1]] with D the product of the two
    geometric covariance bases (D = R[1, -1] / sigma^2).
    """
    if s < 1:
        raise OutOfRangeError(f"window sum must be >= 1, got {s}")
    p.require_stationary()
    n = s * (s + 1) / 2.0
    s2 = sigma_sq(p)
    return Matrix2.symmetric(n * s2, n * s2 * d_factor(p))
