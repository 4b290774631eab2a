"""Service-requirement distributions attached to environment states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import WeightsNotNormalized

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Exponential:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"exponential rate must be positive, got {self.mu}")


@dataclass(frozen=True)
class HyperExponential:
    alpha: tuple
    mu: tuple

    def __post_init__(self):
        alpha = tuple(float(x) for x in self.alpha)
        mu = tuple(float(x) for x in self.mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu", mu)
        if len(alpha) != len(mu) or not alpha:
            raise ValueError("alpha and mu must be non-empty and of equal length")
        if any(m <= 0 for m in mu):
            raise ValueError("hyperexponential rates must be positive")
        if any(a < 0 for a in alpha) or abs(sum(alpha) - 1.0) > WEIGHT_TOL:
            raise WeightsNotNormalized(f"phase weights {alpha} are not a probability vector")


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"deterministic requirement must be positive, got {self.value}")


ServiceDistribution = Union[Exponential, HyperExponential, Deterministic]


def _phases(dist: ServiceDistribution) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dist, Exponential):
        return np.array([1.0]), np.array([dist.mu])
    return np.asarray(dist.alpha), np.asarray(dist.mu)


def moments(dist: ServiceDistribution) -> tuple[float, float]:
    """First and second moment ``(h1, h2)``."""
    if isinstance(dist, Deterministic):
        return dist.value, dist.value**2
    alpha, mu = _phases(dist)
    return float(np.sum(alpha / mu)), float(2.0 * np.sum(alpha / mu**2))


def lst(dist: ServiceDistribution, s: float) -> float:
    """Laplace-Stieltjes transform ``E exp(-s B)`` for ``s >= 0``."""
    if s < 0:
        raise ValueError("LST argument must be non-negative")
    if isinstance(dist, Deterministic):
        return float(np.exp(-s * dist.value))
    alpha, mu = _phases(dist)
    return float(np.sum(alpha * mu / (mu + s)))


def cdf(dist: ServiceDistribution, x):
    x = np.asarray(x, dtype=float)
    if isinstance(dist, Deterministic):
        return (x >= dist.value).astype(float)
    alpha, mu = _phases(dist)
    xs = np.maximum(x, 0.0)[..., None]
    return np.sum(alpha * (1.0 - np.exp(-mu * xs)), axis=-1)


def sample(dist: ServiceDistribution, rng: np.random.Generator, size=None):
    if isinstance(dist, Deterministic):
        return dist.value if size is None else np.full(size, dist.value)
    alpha, mu = _phases(dist)
    if len(mu) == 1:
        return rng.exponential(1.0 / mu[0], size)
    phase = rng.choice(len(mu), p=alpha, size=size)
    return rng.exponential(1.0 / mu[phase])


def mixture_from_classes(alpha, mus) -> ServiceDistribution:
    """Requirement of an arbitrary arrival when class ``k`` has weight ``alpha[k]``.

    A single class, or equal rates across all classes with positive
    weight, collapses to a plain :class:`Exponential`.
    """
    alpha = np.asarray(alpha, dtype=float)
    mus = np.asarray(mus, dtype=float)
    if alpha.shape != mus.shape or alpha.ndim != 1:
        raise ValueError("alpha and mus must be 1-d of equal length")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > WEIGHT_TOL:
        raise WeightsNotNormalized(f"class weights {alpha} do not sum to one")
    live = alpha > 0
    if np.all(mus[live] == mus[live][0]):
        return Exponential(float(mus[live][0]))
    return HyperExponential(tuple(alpha), tuple(mus))


def from_json(obj: dict) -> ServiceDistribution:
    kind = obj.get("kind")
    if kind == "exp":
        return Exponential(float(obj["mu"]))
    if kind == "hyperexp":
        return HyperExponential(tuple(obj["alpha"]), tuple(obj["mu"]))
    if kind == "det":
        return Deterministic(float(obj["value"]))
    raise ValueError(f"unknown service kind {kind!r}")


def to_json(dist: ServiceDistribution) -> dict:
    if isinstance(dist, Exponential):
        return {"kind": "exp", "mu": dist.mu}
    if isinstance(dist, HyperExponential):
        return {"kind": "hyperexp", "alpha": list(dist.alpha), "mu": list(dist.mu)}
    return {"kind": "det", "value": dist.value}
