"""Experiment orchestration: replication engine, verification suites, reports.

Replications are embarrassingly parallel: each one reads an independent
counter-based stream, so results depend only on (master_seed, replication
id) and aggregation is an ordered reduction over replication ids.  The
number of workers must not change a single output byte; wall-clock timings
are therefore kept out of the canonical report and written to a sidecar.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import (
    CovKernel,
    cov_binrep,
    cov_closed,
    cov_f4,
    cov_series_oracle,
    oracle_margin,
)
from .errors import ConfigError, ExperimentAbortedError, SingularDesignError
from .estimate import Matrix2, lse, score_vector
from .limits import (
    LimitLaw,
    condition_statistic,
    expected_B,
    limit_law,
    omega_n,
    psi_matrix,
    sqrt_spd2,
    theta_matrix,
    theta_scalar,
)
from .model import (
    CaseTag,
    ModelParams,
    NearlyUnstableDesign,
    TriangleWindow,
)
from .simulate import FieldSimulator, InnovationDist, RngStream, SimMethod

__all__ = [
    "Tolerances", "ExperimentConfig", "ExperimentReport", "run_clt",
    "verify_cov", "verify_prop1", "verify_covlim", "verify_detB",
    "verify_score", "dumps_canonical",
]

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Tolerances:
    """Acceptance tolerances for the CLT experiment.

    cov_rel_tol bounds the relative deviation of empirical (co)variances
    from their theoretical limits; zero_var_ceiling bounds the variance of
    projections whose limit is zero (the singular direction).
    """

    cov_rel_tol: float = 0.3
    zero_var_ceiling: float = 0.05

    def to_json(self) -> dict:
        return {"cov_rel_tol": self.cov_rel_tol,
                "zero_var_ceiling": self.zero_var_ceiling}

    @classmethod
    def from_json(cls, obj: dict | None) -> "Tolerances":
        if obj is None:
            return cls()
        return cls(float(obj.get("cov_rel_tol", 0.3)),
                   float(obj.get("zero_var_ceiling", 0.05)))


@dataclass
class ExperimentConfig:
    design: NearlyUnstableDesign
    ladder: list[tuple[int, int]]
    reps: int
    dist: InnovationDist = InnovationDist.GAUSSIAN
    method: SimMethod = SimMethod()
    master_seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str | None = None

    def validate(self) -> "ExperimentConfig":
        if not self.ladder:
            raise ConfigError("ladder must contain at least one (m, s) pair")
        if self.reps < 100:
            raise ConfigError(
                f"statistical acceptance needs reps >= 100, got {self.reps}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        stats = []
        for m, s in self.ladder:
            if m < 1 or s < 2:
                raise ConfigError(f"ladder entry ({m}, {s}) out of range")
            self.design.params_at(m)  # raises NonStationary when m is too small
            stats.append(condition_statistic(self.design, m, s))
        if any(b <= a for a, b in zip(stats, stats[1:])):
            raise ConfigError(
                "condition statistic must increase strictly along the ladder; "
                f"got {stats}")
        return self

    def to_json(self) -> dict:
        return {
            "design": self.design.to_json(),
            "ladder": [[m, s] for m, s in self.ladder],
            "reps": self.reps,
            "dist": self.dist.value,
            "method": self.method.describe(),
            "seed": self.master_seed,
            "tolerances": self.tolerances.to_json(),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        try:
            design = NearlyUnstableDesign.from_json(obj["design"])
            ladder = [(int(m), int(s)) for m, s in obj["ladder"]]
            cfg = cls(
                design=design,
                ladder=ladder,
                reps=int(obj["reps"]),
                dist=InnovationDist(obj.get("dist", "gaussian")),
                method=SimMethod.parse(obj.get("method", "boundary_cholesky")),
                master_seed=int(obj.get("seed", 0)),
                tolerances=Tolerances.from_json(obj.get("tolerances")),
                out_dir=obj.get("out_dir"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cfg


# ---------------------------------------------------------------------------
# canonical serialisation (17 significant digits, reproducible bytes)


def _canon(obj):
    if isinstance(obj, dict):
        items = ",".join(f"{_canon(str(k))}:{_canon(v)}" for k, v in sorted(obj.items()))
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    if isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, Matrix2):
        return _canon([[obj.a11, obj.a12], [obj.a21, obj.a22]])
    raise TypeError(f"cannot serialise {type(obj)!r}")


def dumps_canonical(obj) -> str:
    """Deterministic JSON with every float at 17 significant digits."""
    return _canon(obj)


# ---------------------------------------------------------------------------
# replication engine


def _simulate_chunk(payload) -> np.ndarray:
    """Worker body: rows (rep_id, alpha_hat, beta_hat, ok, detB, score1, score2)."""
    (alpha, beta, k, l, method_text, dist_value, master_seed, rep_ids) = payload
    params = ModelParams(alpha, beta)
    window = TriangleWindow(k, l)
    sim = FieldSimulator(params, window, SimMethod.parse(method_text),
                         InnovationDist(dist_value))
    rows = np.empty((len(rep_ids), 7))
    for pos, rep in enumerate(rep_ids):
        fld = sim.sample(RngStream(master_seed, rep))
        try:
            est = lse(fld, window)
            score = est.score if est.score is not None else (math.nan, math.nan)
            rows[pos] = (rep, est.alpha_hat, est.beta_hat, 1.0,
                         est.detB, score[0], score[1])
        except SingularDesignError:
            rows[pos] = (rep, math.nan, math.nan, 0.0, math.nan, math.nan, math.nan)
    return rows


def _run_reps(params: ModelParams, window: TriangleWindow, method: SimMethod,
              dist: InnovationDist, master_seed: int, rep_ids: list[int],
              workers: int = 1) -> np.ndarray:
    payload_base = (params.alpha, params.beta, window.k, window.l,
                    method.describe(), dist.value, master_seed)
    if workers <= 1 or len(rep_ids) < 2 * workers:
        rows = _simulate_chunk(payload_base + (rep_ids,))
    else:
        chunks = [[int(r) for r in c]
                  for c in np.array_split(rep_ids, workers) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk,
                                  [payload_base + (c,) for c in chunks]))
        rows = np.concatenate(parts, axis=0)
    # ordered reduction: aggregate strictly by replication id, not arrival
    return rows[np.argsort(rows[:, 0], kind="stable")]


def _ks_normal(x: np.ndarray) -> float:
    """Kolmogorov D of the standardised sample against the normal CDF."""
    n = len(x)
    z = np.sort((x - x.mean()) / x.std(ddof=1))
    cdf = 0.5 * (1.0 + np.array([math.erf(v / _SQRT2) for v in z]))
    hi = np.max(np.arange(1, n + 1) / n - cdf)
    lo = np.max(cdf - np.arange(0, n) / n)
    return float(max(hi, lo))


def _sample_cov(rows: np.ndarray) -> np.ndarray:
    mean = rows.mean(axis=0)
    centred = rows - mean
    return centred.T @ centred / (len(rows) - 1)


def _matrix_rel_dev(emp: np.ndarray, target: Matrix2) -> float:
    t = target.to_array()
    return float(np.max(np.abs(emp - t)) / np.max(np.abs(t)))


@dataclass
class ExperimentReport:
    """Aggregated CLT experiment output.

    ``per_size`` carries one record per ladder entry; ``raw`` the per-rep
    rows backing the CSV files; ``timing`` is non-canonical (sidecar only).
    """

    config: ExperimentConfig
    per_size: list[dict]
    raw: list[np.ndarray]
    pass_flag: bool
    timing: list[dict]

    def to_canonical_dict(self) -> dict:
        return {
            "schema": "spatialar-report-v1",
            "config": self.config.to_json(),
            "per_size": self.per_size,
            "pass": self.pass_flag,
        }

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.json"
        report_path.write_text(dumps_canonical(self.to_canonical_dict()) + "\n")
        (out / "timing.json").write_text(dumps_canonical(
            {"schema": "spatialar-timing-v1", "per_size": self.timing}) + "\n")
        for (m, s), rows in zip(self.config.ladder, self.raw):
            path = out / f"errors_m{m}_s{s}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["rep_id", "alpha_hat", "beta_hat", "scaled_err_a", "scaled_err_b"])
                for rep_id, ah, bh, ea, eb in rows:
                    writer.writerow([int(rep_id)] + [format(v, ".17g")
                                                     for v in (ah, bh, ea, eb)])
        return report_path


def run_clt(config: ExperimentConfig, workers: int = 1,
            use_true_theta: bool = False) -> ExperimentReport:
    """Run the CLT experiment over the configured size ladder.

    For each (m, s) and replication: simulate at params_at(m) on the
    balanced window with sum s, estimate, and scale the estimation error by
    the limit-law rate.  Boundary designs additionally record the
    square-root-normalised errors (whose limit covariance is the identity).
    Singular replications are dropped and counted; more than 1% of them
    aborts the run.  ``use_true_theta`` replaces the estimator by the true
    parameter (pipeline null test: every aggregate must vanish).
    """
    config.validate()
    design = config.design
    law = limit_law(design, m_probe=max(m for m, _ in config.ladder))
    per_size, raw_all, timing = [], [], []
    passed = True
    for idx, (m, s) in enumerate(config.ladder):
        t0 = time.perf_counter()
        params = design.params_at(m)
        window = TriangleWindow.balanced(s)
        rep_ids = [idx * config.reps + r for r in range(config.reps)]
        rows = _run_reps(params, window, config.method, config.dist,
                         config.master_seed, rep_ids, workers)
        ok = rows[:, 3] == 1.0
        n_singular = int(len(rows) - np.sum(ok))
        if n_singular > 0.01 * config.reps:
            raise ExperimentAbortedError(
                f"{n_singular}/{config.reps} singular replications at (m={m}, s={s})")
        hats = rows[ok, 1:3]
        if use_true_theta:
            hats = np.tile([params.alpha, params.beta], (int(np.sum(ok)), 1))
        rate = law.rate(m, s)
        errors = rate * (hats - [params.alpha, params.beta])
        cov = _sample_cov(errors)
        mean = errors.mean(axis=0)
        proj_sum = (errors[:, 0] + errors[:, 1]) / _SQRT2
        proj_diff = (errors[:, 0] - errors[:, 1]) / _SQRT2

        record = {
            "m": m,
            "s": s,
            "reps_used": int(np.sum(ok)),
            "singular_reps": n_singular,
            "rate": rate,
            "theta_true": [params.alpha, params.beta],
            "condition_statistic": condition_statistic(design, m, s),
            "scaled_mean": mean.tolist(),
            "scaled_cov": cov.tolist(),
            "proj_var": {"sum": float(proj_sum.var(ddof=1)),
                         "diff": float(proj_diff.var(ddof=1))},
        }
        if len(errors) >= 8 and errors.std(axis=0).min() > 0:
            d_sum, d_diff = _ks_normal(proj_sum), _ks_normal(proj_diff)
            thr = 1.63 / math.sqrt(len(errors))
            record["normality"] = {"d_sum": d_sum, "d_diff": d_diff,
                                   "threshold": thr,
                                   "flag": bool(max(d_sum, d_diff) > thr)}

        entry_pass = None
        if law.case_tag is CaseTag.INTERIOR:
            lim = law.covariance
            lim_diff = (lim.a11 + lim.a22 - 2 * lim.a12) / 2.0
            record["limit_cov"] = lim
            record["limit_proj"] = {"sum": (lim.a11 + lim.a22 + 2 * lim.a12) / 2.0,
                                    "diff": lim_diff}
            if not use_true_theta:
                tol = config.tolerances
                entry_pass = (abs(record["proj_var"]["diff"] - lim_diff)
                              <= tol.cov_rel_tol * lim_diff
                              and record["proj_var"]["sum"] <= tol.zero_var_ceiling)
        else:
            wm = omega_n(design.boundary, design.gamma(m), design.delta(m))
            theta_m = theta_scalar(design.boundary, wm)
            half = sqrt_spd2(theta_matrix(theta_m))
            norm_err = errors @ half.to_array().T
            record["omega_n"] = wm
            record["normalized_cov"] = _sample_cov(norm_err).tolist()
            if law.covariance is not None:
                record["limit_cov"] = law.covariance
                record["elementwise_dev"] = _matrix_rel_dev(cov, law.covariance)
                if not use_true_theta:
                    emp, tgt = cov, law.covariance.to_array()
                    entry_pass = bool(
                        np.all(np.abs(emp - tgt)
                               <= config.tolerances.cov_rel_tol * np.abs(tgt)))
        if entry_pass is not None:
            record["pass"] = entry_pass
            if idx == len(config.ladder) - 1:
                passed = entry_pass
        per_size.append(record)
        scaled_rows = np.column_stack([rows[:, 0], rows[:, 1], rows[:, 2],
                                       rate * (rows[:, 1] - params.alpha),
                                       rate * (rows[:, 2] - params.beta)])
        raw_all.append(scaled_rows)
        timing.append({"m": m, "s": s, "elapsed_s": time.perf_counter() - t0})
    if use_true_theta:
        passed = True
    report = ExperimentReport(config, per_size, raw_all, passed, timing)
    if config.out_dir:
        report.write(config.out_dir)
    return report


# ---------------------------------------------------------------------------
# exact verification suites


def verify_cov(values=(-0.45, -0.25, -0.1, 0.1, 0.25, 0.45), lag_max: int = 6,
               tol: float = 1e-8) -> dict:
    """Four-way cross-check of the covariance evaluators.

    Closed form, Appell F4, binomial representation (its quadrant) and the
    truncated-series oracle must agree within ``tol`` absolutely over the
    parameter grid (restricted to |alpha| + |beta| <= 0.9) and all lags
    |k|, |l| <= lag_max.
    """
    worst = 0.0
    worst_at = None
    n_points = 0
    for a in values:
        for b in values:
            if abs(a) + abs(b) > 0.9:
                continue
            p = ModelParams(a, b)
            margin = oracle_margin(p.q, tol * 1e-2)
            for k in range(-lag_max, lag_max + 1):
                for l in range(-lag_max, lag_max + 1):
                    n_points += 1
                    ref = cov_closed(p, k, l)
                    devs = [abs(cov_f4(p, k, l) - ref),
                            abs(cov_series_oracle(p, k, l, margin) - ref)]
                    if k * l >= 0:
                        devs.append(abs(cov_binrep(p, k, l) - ref))
                    d = max(devs)
                    if d > worst:
                        worst, worst_at = d, (a, b, k, l)
    return {"n_points": n_points, "worst_dev": worst, "worst_at": worst_at,
            "tol": tol, "pass": worst <= tol}


def _prop1_target(design: NearlyUnstableDesign, m_probe: int) -> Matrix2:
    bp = design.boundary
    if design.case_tag is CaseTag.INTERIOR:
        c = (32.0 * abs(bp.alpha) * abs(bp.beta)) ** -0.5
        return psi_matrix(bp).scale(c)
    omega = omega_n(bp, design.gamma(m_probe), design.delta(m_probe))
    return theta_matrix(theta_scalar(bp, omega))


def scaled_expected_B(design: NearlyUnstableDesign, m: int, s: int) -> Matrix2:
    """The Prop-1 scaling applied to the exact E[B] at (m, s)."""
    params = design.params_at(m)
    g, d = design.gamma(m), design.delta(m)
    if design.case_tag is CaseTag.INTERIOR:
        scale = s**-2.0 * m**-0.5 * (abs(g) + abs(d)) ** 0.5
    else:
        scale = s**-2.0 * abs(g * g - d * d) ** 0.5 / m
    return expected_B(params, s).scale(scale)


def verify_prop1(design: NearlyUnstableDesign, ladder: list[tuple[int, int]],
                 final_tol: float = 0.10, m_probe: int = 1 << 20) -> dict:
    """Exact (no Monte Carlo) information-mean check along a ladder.

    Deviation is max elementwise |scaled - target| over max |target|; the
    suite passes iff deviations strictly decrease and the final one is
    below ``final_tol``.
    """
    target = _prop1_target(design, m_probe)
    deviations = []
    for m, s in ladder:
        deviations.append(_matrix_rel_dev(scaled_expected_B(design, m, s).to_array(),
                                          target))
    decreasing = all(b < a for a, b in zip(deviations, deviations[1:]))
    return {
        "ladder": [[m, s] for m, s in ladder],
        "target": target,
        "deviations": deviations,
        "strictly_decreasing": decreasing,
        "final_deviation": deviations[-1],
        "final_tol": final_tol,
        "pass": decreasing and deviations[-1] < final_tol,
    }


_COVLIM_DEFAULT_POINTS = (
    # (s1, t1, s2, t2, on_diagonal)
    (0.3, 0.2, 0.3, 0.2, True),      # equal points: value -> the bound itself
    (0.5, 0.4, 0.3, 0.2, True),      # shifted along the diagonal, same quadrant
    (0.4, 0.2, 0.2, 0.4, False),     # mixed-quadrant lag, decays
    (0.5, 0.2, 0.2, 0.1, False),     # same-quadrant lag, decays
)


def verify_covlim(design: NearlyUnstableDesign, m: int, n_probe: int,
                  points=_COVLIM_DEFAULT_POINTS, headroom: float = 1e-6) -> dict:
    """Scaled-covariance bound and exponential-decay surrogate checks.

    On-diagonal probe pairs (s1 - s2 = t1 - t2) must respect the limit bound
    1/sqrt(8|a||b|) (interior) or 1/2 (boundary) with ``headroom``; the
    finite-m scaled variance approaches the bound from above at O(1/m), so
    the probe index must be large (the checks are closed-form and cheap).
    Off-diagonal pairs must at least halve when n_probe doubles.
    """
    params = design.params_at(m)
    kernel = CovKernel(params)
    g, d = design.gamma(m), design.delta(m)
    if design.case_tag is CaseTag.INTERIOR:
        scale = (abs(g) + abs(d)) ** 0.5 * m**-0.5
        bound = 1.0 / math.sqrt(8.0 * abs(design.boundary.alpha)
                                * abs(design.boundary.beta))
    else:
        scale = abs(g * g - d * d) ** 0.5 / m
        bound = 0.5

    def scaled_R(n: int, s1, t1, s2, t2) -> float:
        dk = math.floor(n * s1) - math.floor(n * s2)
        dl = math.floor(n * t1) - math.floor(n * t2)
        return scale * kernel.R(dk, dl)

    records, ok = [], True
    for s1, t1, s2, t2, on_diag in points:
        v1 = scaled_R(n_probe, s1, t1, s2, t2)
        v2 = scaled_R(2 * n_probe, s1, t1, s2, t2)
        rec = {"pair": [s1, t1, s2, t2], "on_diagonal": on_diag,
               "value_n": v1, "value_2n": v2}
        if on_diag:
            rec["bound"] = bound
            rec["pass"] = (abs(v1) <= bound * (1 + headroom)
                           and abs(v2) <= bound * (1 + headroom))
        else:
            rec["pass"] = abs(v2) <= 0.5 * abs(v1)
        ok = ok and rec["pass"]
        records.append(rec)
    at_zero = scale * kernel.R(0, 0)
    return {"m": m, "n_probe": n_probe, "bound": bound,
            "value_at_zero_lag": at_zero, "points": records, "pass": ok}


def verify_detB(design: NearlyUnstableDesign, m: int, s: int, reps: int,
                master_seed: int = 0, rel_tol: float = 0.2,
                workers: int = 1) -> dict:
    """Monte Carlo mean of the scaled determinant against 2 (8|a||b|)^(-3/2)."""
    if design.case_tag is not CaseTag.INTERIOR:
        raise ConfigError("the determinant limit is an interior-case statement")
    if reps < 1:
        raise ConfigError("reps must be positive")
    params = design.params_at(m)
    window = TriangleWindow.balanced(s)
    rows = _run_reps(params, window, SimMethod(), InnovationDist.GAUSSIAN,
                     master_seed, list(range(reps)), workers)
    ok = rows[:, 3] == 1.0
    g, d = design.gamma(m), design.delta(m)
    scaled = rows[ok, 4] * s**-4.0 * m**-0.5 * (abs(g) + abs(d)) ** 0.5
    bp = design.boundary
    target = 2.0 * (8.0 * abs(bp.alpha) * abs(bp.beta)) ** -1.5
    mean = float(scaled.mean())
    return {
        "m": m, "s": s, "reps": int(np.sum(ok)),
        "scaled_mean": mean,
        "std_error": float(scaled.std(ddof=1) / math.sqrt(len(scaled))),
        "target": target,
        "rel_dev": abs(mean - target) / target,
        "rel_tol": rel_tol,
        "pass": abs(mean - target) <= rel_tol * target,
    }


def verify_score(design: NearlyUnstableDesign, m: int, s: int, reps: int,
                 master_seed: int = 0, rel_tol: float = 0.2,
                 workers: int = 1) -> dict:
    """Monte Carlo covariance of the scaled score vector against its limit."""
    if reps < 1:
        raise ConfigError("reps must be positive")
    params = design.params_at(m)
    window = TriangleWindow.balanced(s)
    rows = _run_reps(params, window, SimMethod(), InnovationDist.GAUSSIAN,
                     master_seed, list(range(reps)), workers)
    ok = rows[:, 3] == 1.0
    g, d = design.gamma(m), design.delta(m)
    bp = design.boundary
    if design.case_tag is CaseTag.INTERIOR:
        scale = s**-1.0 * m**-0.25 * (abs(g) + abs(d)) ** 0.25
        target = psi_matrix(bp).scale((32.0 * abs(bp.alpha) * abs(bp.beta)) ** -0.5)
    else:
        scale = s**-1.0 * m**-0.5 * abs(g * g - d * d) ** 0.25
        target = theta_matrix(theta_scalar(bp, omega_n(bp, g, d)))
    scores = rows[ok, 5:7] * scale
    cov = _sample_cov(scores)
    mean = scores.mean(axis=0)
    se = scores.std(axis=0, ddof=1) / math.sqrt(len(scores))
    dev = float(np.max(np.abs(cov - target.to_array())) / target.max_abs())
    return {
        "m": m, "s": s, "reps": int(np.sum(ok)),
        "scaled_cov": cov.tolist(),
        "target": target,
        "mean": mean.tolist(),
        "mean_within_4se": bool(np.all(np.abs(mean) <= 4 * se)),
        "elementwise_dev": dev,
        "rel_tol": rel_tol,
        "pass": dev <= rel_tol,
    }
