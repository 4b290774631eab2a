"""Closed-form workload quantities for the modulated single-server queue.

The workload ``W`` is measured in requirement units and drains at rate
``c[d]`` while the environment sits in state ``d``. All results here hold
for any work-conserving discipline that ignores the environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import service as svc
from .environment import (
    GeneratorMatrix,
    solve_offset_vector,
    stationary_distribution,
    validate_generator,
)
from .errors import EmptyProbInconsistent, ModelError, NotCritical, Unstable

EMPTY_PROB_TOL = 1e-3


@dataclass(frozen=True)
class ModelSpec:
    Q: GeneratorMatrix
    pi: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    service: tuple

    @property
    def dim(self) -> int:
        return self.Q.dim

    @property
    def h1(self) -> np.ndarray:
        return np.array([svc.moments(s)[0] for s in self.service])

    @property
    def h2(self) -> np.ndarray:
        return np.array([svc.moments(s)[1] for s in self.service])

    @property
    def c_inf(self) -> float:
        return float(self.pi @ self.c)

    def with_rates(self, lam) -> "ModelSpec":
        lam = np.array(lam, dtype=float)
        lam.setflags(write=False)
        return replace(self, lam=lam)


@dataclass(frozen=True)
class HtModelSpec:
    """Critically loaded model: arrival rates divided by the base load."""

    base: ModelSpec
    rho_hat: float = 1.0

    def __post_init__(self):
        rho = traffic_intensity(self.base)
        if abs(rho - 1.0) > 1e-12:
            raise NotCritical(f"heavy-traffic model has load {rho:.15g}")


@dataclass(frozen=True)
class ExponentialLaw:
    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ModelError(f"exponential law needs a positive mean, got {self.mean}")

    @property
    def variance(self) -> float:
        return self.mean**2

    def cdf(self, x):
        return 1.0 - np.exp(-np.maximum(np.asarray(x, dtype=float), 0.0) / self.mean)


def make_model(Q, lam, c, service) -> ModelSpec:
    """Validate inputs and build a :class:`ModelSpec`.

    ``Q`` may be a raw matrix or an already validated generator. An
    all-zero arrival vector is admitted (empty system).
    """
    if not isinstance(Q, GeneratorMatrix):
        Q = validate_generator(Q)
    D = Q.dim
    lam = np.array(lam, dtype=float).reshape(-1)
    c = np.array(c, dtype=float).reshape(-1)
    service = tuple(service)
    if lam.shape != (D,) or c.shape != (D,) or len(service) != D:
        raise ModelError(f"lambda, c and service must all have length {D}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ModelError("arrival rates must be finite and non-negative")
    if np.any(c <= 0):
        raise ModelError("capacities must be positive")
    for arr in (lam, c):
        arr.setflags(write=False)
    return ModelSpec(Q, stationary_distribution(Q), lam, c, service)


def traffic_intensity(m: ModelSpec) -> float:
    return float(np.sum(m.pi * m.lam * m.h1) / m.c_inf)


def ht_parametrize(m: ModelSpec, N: float) -> ModelSpec:
    """Scale arrivals so the load becomes ``1 - 1/N`` (``N = inf`` gives 1)."""
    if not N >= 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rho = traffic_intensity(m)
    if rho <= 0:
        raise ModelError("cannot parametrize a model without arrivals")
    factor = 1.0 if math.isinf(N) else 1.0 - 1.0 / N
    return m.with_rates(m.lam / rho * factor)


def ht_model(m: ModelSpec) -> HtModelSpec:
    return HtModelSpec(ht_parametrize(m, math.inf))


def qa_rhs(m: ModelSpec) -> np.ndarray:
    rho = traffic_intensity(m)
    return m.c - m.lam * m.h1 - m.c_inf * (1.0 - rho)


def offset_vector(m: ModelSpec) -> np.ndarray:
    return solve_offset_vector(m.Q, m.pi, qa_rhs(m))


def empty_prob_gap(m: ModelSpec, p0) -> float:
    """``sum_d p0_d c_d / c_inf - (1 - rho)``; zero for exact empty probabilities."""
    p0 = np.asarray(p0, dtype=float)
    return float(p0 @ m.c / m.c_inf - (1.0 - traffic_intensity(m)))


def mean_workload(m: ModelSpec, p0, tol: float = EMPTY_PROB_TOL, a=None) -> float:
    """Stationary mean workload given per-state empty probabilities ``p0``.

    ``p0[d] = P(W = 0, Z = d)`` is an input (usually a simulation
    estimate); it must satisfy the aggregate identity within ``tol``.
    ``a`` overrides the offset vector, any solution of ``Q a = qa_rhs(m)``
    gives the same answer when ``p0`` is exact.
    """
    rho = traffic_intensity(m)
    if rho >= 1:
        raise Unstable(f"traffic intensity {rho:.6g} >= 1")
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (m.dim,):
        raise ModelError(f"p0 must have length {m.dim}")
    if np.any(p0 < 0) or np.any(p0 > m.pi + 1e-12):
        raise EmptyProbInconsistent("p0 entries must lie in [0, pi_d]")
    gap = empty_prob_gap(m, p0)
    if abs(gap) > tol:
        raise EmptyProbInconsistent(f"sum p0 c / c_inf misses 1 - rho by {gap:.3e}")
    if a is None:
        a = offset_vector(m)
    h1, h2 = m.h1, m.h2
    num = np.sum(
        m.pi * m.lam * h2 / 2.0
        + a * m.pi * (m.lam * h1 - m.c)
        + p0 * m.c * a
    )
    return float(num / (m.c_inf * (1.0 - rho)))


def ht_offset_vector(hm: HtModelSpec) -> np.ndarray:
    m = hm.base
    return solve_offset_vector(m.Q, m.pi, m.c - m.lam * m.h1)


def ht_mean_workload(hm: HtModelSpec, a=None) -> float:
    """Limit of ``E W^(N) / N`` as the load approaches one."""
    m = hm.base
    if a is None:
        a = ht_offset_vector(hm)
    h1 = m.h1
    total = np.sum(m.pi * (m.lam * m.h2 / 2.0 + a * (m.lam * h1 - m.c)))
    return float(total / m.c_inf)


def ht_workload_law(hm: HtModelSpec) -> ExponentialLaw:
    return ExponentialLaw(ht_mean_workload(hm))
