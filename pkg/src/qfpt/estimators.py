"""Multinomial statistics for measured first-passage distributions.

A run of n trials with k-1 measurements per trial is a single draw from a
k-outcome multinomial (the last outcome being "did not terminate"). This
module provides the MLE probability estimates with their full covariance,
covariance-aware escape-probability error bars, and calibrated comparison
of two distributions on a common grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .engine import FptdResult
from .errors import ConfigError, NumericalError

ROW_SUM_TOL = 1e-12
COLLAPSE_TOL = 1e-12


@dataclass(frozen=True)
class TrialCounts:
    """Outcome counts (X_1..X_{k-1}, X_censored); the censored bin is last."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        if c.ndim != 1 or c.size < 2:
            raise ConfigError("counts must be a vector with at least 2 outcomes")
        if np.any(c < 0):
            raise ConfigError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return self.counts.size

    @classmethod
    def from_first_bright_steps(cls, steps, max_steps: int) -> "TrialCounts":
        """Histogram trial outcomes; step 0 encodes a censored trial."""
        steps = np.asarray(steps, dtype=np.int64)
        if np.any(steps < 0) or np.any(steps > max_steps):
            raise ConfigError(f"steps must lie in 0..{max_steps}")
        counts = np.bincount(steps, minlength=max_steps + 1)
        return cls(np.concatenate([counts[1:], counts[:1]]))


@dataclass(frozen=True)
class EstimatedDistribution:
    """MLE probabilities with the full multinomial covariance."""

    p_hat: np.ndarray
    cov: np.ndarray
    n: int


def multinomial_estimate(c: TrialCounts, smoothing: str = "none") -> EstimatedDistribution:
    """p_hat_i = X_i / n with Cov = (diag(p) - p p^T)/n.

    Off-diagonal covariances are negative: the normalization constraint
    anti-correlates the estimators. `smoothing="add-half"` adds half a count
    per bin before normalizing (useful for tail fits on sparse bins; biased,
    so off by default).
    """
    n = c.n
    if n < 1:
        raise ConfigError("need at least one trial")
    if smoothing == "none":
        p = c.counts / n
    elif smoothing == "add-half":
        p = (c.counts + 0.5) / (n + 0.5 * c.k)
    else:
        raise ConfigError(f"unknown smoothing {smoothing!r}")
    cov = (np.diag(p) - np.outer(p, p)) / n
    return EstimatedDistribution(p, cov, n)


@dataclass(frozen=True)
class EscapeCurve:
    escape: np.ndarray
    sigma: np.ndarray


def escape_with_errors(d: EstimatedDistribution) -> EscapeCurve:
    """Escape estimates E(i*theta) = prefix sums (censored bin excluded) with error bars.

    The variance is the quadratic form a_i Cov a_i^T over the prefix
    indicator a_i; for a normalized p it collapses to E(1-E)/n, and the two
    routes are required to agree to 1e-12 as an internal consistency check.
    """
    k = d.p_hat.size
    escape = np.cumsum(d.p_hat[: k - 1])
    var_quad = np.empty(k - 1)
    for i in range(1, k):
        a = np.zeros(k)
        a[:i] = 1.0
        var_quad[i - 1] = a @ d.cov @ a
    var_collapse = escape * (1.0 - escape) / d.n
    if np.max(np.abs(var_quad - var_collapse)) > COLLAPSE_TOL:
        raise NumericalError("escape variance: quadratic form and binomial collapse disagree")
    return EscapeCurve(escape, np.sqrt(np.maximum(var_quad, 0.0)))


def bootstrap_covariance(
    c: TrialCounts, resamples: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariance of p_hat over multinomial resamples, with its own stderr.

    Returns (cov_boot, se_boot) where se_boot[i, j] estimates the sampling
    error of cov_boot[i, j]. Serves as an independent check of the analytic
    covariance.
    """
    n = c.n
    p = c.counts / n
    draws = rng.multinomial(n, p, size=resamples) / n
    delta = draws - draws.mean(axis=0)
    prods = np.einsum("ri,rj->rij", delta, delta)
    cov = prods.sum(axis=0) / (resamples - 1)
    se = prods.std(axis=0, ddof=1) / np.sqrt(resamples)
    return cov, se


# --- distribution comparison ---------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """Total-variation distance and standardized per-bin residuals.

    tv_z studentizes the observed TV against its sampling null (folded-normal
    moments of the per-bin fluctuations), so |tv_z| < 4 means the two
    distributions are indistinguishable at the 4-sigma level given the trial
    counts.
    """

    tv_distance: float
    tv_z: float
    tv_null_mean: float
    tv_null_sd: float
    z_scores: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))


def _full_outcome_vector(obj) -> tuple[np.ndarray, int]:
    """(probabilities incl. censored bin, trials); trials = 0 when deterministic."""
    if isinstance(obj, FptdResult):
        p = np.concatenate([obj.probs, [obj.survivor_remainder]])
        return p, int(obj.trials)
    if isinstance(obj, EstimatedDistribution):
        return np.asarray(obj.p_hat, dtype=float), int(obj.n)
    raise ConfigError(f"cannot compare object of type {type(obj).__name__}")


def compare_distributions(a, b) -> Comparison:
    """Compare two first-passage distributions on a common outcome grid.

    Accepts FptdResult or EstimatedDistribution on either side. The null
    hypothesis takes both as draws from the pooled distribution; a
    deterministic side (trials = 0) contributes no sampling variance.
    """
    pa, na = _full_outcome_vector(a)
    pb, nb = _full_outcome_vector(b)
    if pa.size != pb.size:
        raise ConfigError(f"grid mismatch: {pa.size} vs {pb.size} outcomes")
    if isinstance(a, FptdResult) and isinstance(b, FptdResult) and a.theta != b.theta:
        raise ConfigError(f"grid mismatch: theta {a.theta} vs {b.theta}")

    if na == 0 and nb == 0:
        pooled = 0.5 * (pa + pb)
    elif na == 0:
        pooled = pa
    elif nb == 0:
        pooled = pb
    else:
        pooled = (na * pa + nb * pb) / (na + nb)

    var = pooled * (1.0 - pooled) * ((1.0 / na if na else 0.0) + (1.0 / nb if nb else 0.0))
    sigma = np.sqrt(var)
    diff = pa - pb
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, diff / np.where(sigma > 0, sigma, 1.0), np.where(diff == 0, 0.0, np.inf))

    tv = 0.5 * float(np.sum(np.abs(diff)))
    # folded-normal null: E|d_i| = sigma_i sqrt(2/pi), Var|d_i| = sigma_i^2 (1 - 2/pi)
    null_mean = 0.5 * np.sqrt(2.0 / np.pi) * float(sigma.sum())
    null_sd = 0.5 * float(np.sqrt((1.0 - 2.0 / np.pi) * np.sum(var)))
    if null_sd > 0:
        tv_z = (tv - null_mean) / null_sd
    else:
        tv_z = 0.0 if tv == 0 else float("inf")
    return Comparison(tv, tv_z, null_mean, null_sd, z)


# --- trial-record ingestion -----------------------------------------------------


def read_trials_csv(path, max_steps: int | None = None) -> TrialCounts:
    """Read `trial_id,first_bright_step` records; step 0 marks a censored trial."""
    steps = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["trial_id", "first_bright_step"]:
            raise ConfigError(
                "trials CSV must start with header 'trial_id,first_bright_step'"
            )
        for row in reader:
            if not row:
                continue
            steps.append(int(row[1]))
    if not steps:
        raise ConfigError("trials CSV contains no records")
    if max_steps is None:
        max_steps = max(max(steps), 1)
    return TrialCounts.from_first_bright_steps(steps, max_steps)


def estimate_to_result(d: EstimatedDistribution, theta: float) -> FptdResult:
    """Package an estimated distribution in the engine's result type."""
    k = d.p_hat.size
    stderr = np.sqrt(np.diag(d.cov)[: k - 1])
    return FptdResult(
        theta=theta,
        probs=d.p_hat[: k - 1],
        survivor_remainder=float(d.p_hat[-1]),
        mode="estimated",
        trials=d.n,
        stderr=stderr,
        meta={"estimator": "multinomial-mle"},
    )
