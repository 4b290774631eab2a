"""Output analysis: batch means, scaled-law fits, independence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import TooFewSamples

CONFIDENCE = 0.95
MIN_LAW_SAMPLES = 1000
MIN_STATE_SAMPLES = 500


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a two-sided 95% half-width (arrays allowed)."""

    mean: np.ndarray
    half_width: np.ndarray

    def covers(self, value, k: float = 3.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.mean) - value) <= k * np.asarray(self.half_width)))


def batch_means(batches) -> Estimate:
    """Mean over axis 0 with a Student-t half-width."""
    x = np.asarray(batches, dtype=float)
    B = x.shape[0]
    if B < 2:
        raise TooFewSamples("batch means need at least two batches")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    t = stats.t.ppf(0.5 + CONFIDENCE / 2, B - 1)
    return Estimate(mean, t * sd / np.sqrt(B))


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 3:
        return float("nan")
    xc = x - x.mean()
    denom = xc @ xc
    if denom == 0:
        return 0.0
    return float(xc[:-1] @ xc[1:] / denom)


def decorrelation_lag(x, target: float = 0.1, max_lag: int | None = None) -> int:
    """Smallest thinning step ``k`` with lag-1 autocorrelation of ``x[::k]`` below ``target``."""
    x = np.asarray(x, dtype=float)
    max_lag = max_lag or max(1, len(x) // 50)
    k = 1
    while k <= max_lag:
        if lag1_autocorrelation(x[::k]) < target:
            return k
        k *= 2
    return max_lag


@dataclass(frozen=True)
class ScaledLaw:
    mean: float
    variance: float
    ks: float
    ks_reference_mean: float
    ks_critical_1pct: float
    n: int
    lag1: float

    @property
    def rejects_at_1pct(self) -> bool:
        return self.ks > self.ks_critical_1pct


def ks_to_exponential(samples, mean: float) -> float:
    return float(stats.kstest(np.asarray(samples, dtype=float), "expon", args=(0.0, mean)).statistic)


def estimate_scaled_law(samples, scale: float = 1.0, reference_mean: float | None = None) -> ScaledLaw:
    """Summarise ``scale * samples`` and its KS distance to an exponential.

    The exponential reference has the sample mean unless ``reference_mean``
    is given. The 1% critical value ``1.63/sqrt(n)`` is only meaningful for
    independent samples; ``lag1`` reports how far the input is from that.
    """
    x = scale * np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < MIN_LAW_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_LAW_SAMPLES} samples, got {n}")
    mean = float(x.mean())
    ref = mean if reference_mean is None else float(reference_mean)
    return ScaledLaw(
        mean=mean,
        variance=float(x.var(ddof=1)),
        ks=ks_to_exponential(x, ref),
        ks_reference_mean=ref,
        ks_critical_1pct=1.63 / np.sqrt(n),
        n=n,
        lag1=lag1_autocorrelation(x),
    )


@dataclass(frozen=True)
class IndependenceDiagnostic:
    """Per class: ``max_d |E[X | Z=d] - E[X]| / E[X]`` with its half-width."""

    value: np.ndarray
    half_width: np.ndarray
    per_state: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.max(self.value))


def independence_diagnostic(values, states, n_states: int, n_batches: int = 30) -> IndependenceDiagnostic:
    """Distance between state-conditional and marginal means of scaled queue sizes.

    ``values`` is ``(n,)`` or ``(n, K)``; ``states`` the environment state
    at each snapshot. Half-widths come from splitting the sample sequence
    into ``n_batches`` contiguous batches.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.asarray(states, dtype=np.intp)
    counts = np.bincount(z, minlength=n_states)
    if np.any(counts < MIN_STATE_SAMPLES):
        raise TooFewSamples(f"per-state sample counts {counts.tolist()} below {MIN_STATE_SAMPLES}")

    def rel_dev(xs, zs):
        overall = xs.mean(axis=0)
        out = np.full((n_states, xs.shape[1]), np.nan)
        for d in range(n_states):
            sel = zs == d
            if sel.any() and np.all(overall > 0):
                out[d] = xs[sel].mean(axis=0) / overall - 1.0
        return out

    point = rel_dev(x, z)
    chunks = np.array_split(np.arange(len(z)), n_batches)
    per_batch = np.array([rel_dev(x[idx], z[idx]) for idx in chunks])
    ok = ~np.isnan(per_batch).any(axis=(1, 2))
    est = batch_means(per_batch[ok])
    worst_state = np.argmax(np.abs(point), axis=0)
    cols = np.arange(x.shape[1])
    return IndependenceDiagnostic(
        value=np.abs(point[worst_state, cols]),
        half_width=est.half_width[worst_state, cols],
        per_state=point,
    )
