"""Multi-class discriminatory processor sharing (DPS) in a random environment.

Class ``k`` customers bring Exp(``mu[k]``) requirements and are served at
rate ``mu[k] * c[d]`` times their DPS share ``g[k] / sum_j g[j] m[j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .environment import GeneratorMatrix, solve_offset_vector, validate_generator
from .errors import MissingEstimate, ModelError, NotCritical, WeightsNotNormalized
from .estimators import Estimate, batch_means
from .service import WEIGHT_TOL, mixture_from_classes
from .workload import ExponentialLaw, ModelSpec, ht_parametrize, make_model

CRITICAL_TOL = 1e-9


@dataclass(frozen=True)
class DpsSpec:
    model: ModelSpec
    alpha: np.ndarray  # (K, D)
    mu: np.ndarray
    g: np.ndarray

    @property
    def K(self) -> int:
        return len(self.mu)

    @property
    def lam_kd(self) -> np.ndarray:
        return self.alpha * self.model.lam[None, :]

    @property
    def mu_kd(self) -> np.ndarray:
        return self.mu[:, None] * self.model.c[None, :]


def make_dps(Q, lam, c, alpha, mu, g) -> DpsSpec:
    """Build a DPS spec; per-state service is the class mixture."""
    if not isinstance(Q, GeneratorMatrix):
        Q = validate_generator(Q)
    alpha = np.array(alpha, dtype=float)
    mu = np.array(mu, dtype=float).reshape(-1)
    g = np.array(g, dtype=float).reshape(-1)
    K = len(mu)
    if alpha.ndim == 1:
        alpha = alpha[:, None]
    if alpha.shape != (K, Q.dim) or g.shape != (K,):
        raise ModelError(f"alpha must be {K}x{Q.dim} and g of length {K}")
    if np.any(mu <= 0) or np.any(g <= 0):
        raise ModelError("class rates and weights must be positive")
    if np.any(alpha < 0) or np.any(np.abs(alpha.sum(axis=0) - 1.0) > WEIGHT_TOL):
        raise WeightsNotNormalized("each column of alpha must be a probability vector")
    services = [mixture_from_classes(alpha[:, d], mu) for d in range(Q.dim)]
    model = make_model(Q, lam, c, services)
    lam_kd = alpha * model.lam[None, :]
    dead = np.flatnonzero(~np.any(lam_kd > 0, axis=1))
    if dead.size:
        raise ModelError(f"classes {dead.tolist()} never receive arrivals")
    for arr in (alpha, mu, g):
        arr.setflags(write=False)
    return DpsSpec(model, alpha, mu, g)


def ht_parametrize_dps(spec: DpsSpec, N: float) -> DpsSpec:
    return replace(spec, model=ht_parametrize(spec.model, N))


def ht_dps(spec: DpsSpec) -> DpsSpec:
    return ht_parametrize_dps(spec, math.inf)


@dataclass(frozen=True)
class ClassLoads:
    lambda_k_inf: np.ndarray
    rho_k_inf: np.ndarray
    rho_d_hat: np.ndarray


def class_loads(spec: DpsSpec, ht: bool = False) -> ClassLoads:
    """Per-class average arrival rates and loads, plus per-state loads.

    With ``ht=True`` the arrival rates are first divided by the aggregate
    load, so the class loads sum to one.
    """
    m = spec.model
    lam_kd = spec.lam_kd
    if ht:
        lam_kd = lam_kd / np.sum(lam_kd @ m.pi / (spec.mu * m.c_inf))
    lam_k = lam_kd @ m.pi
    rho_k = lam_k / (spec.mu * m.c_inf)
    rho_d = (lam_kd / spec.mu[:, None]).sum(axis=0) / m.c
    return ClassLoads(lam_k, rho_k, rho_d)


@dataclass(frozen=True)
class CollapsePrediction:
    direction: np.ndarray
    x_law: ExponentialLaw
    per_state_weights: np.ndarray
    a: np.ndarray

    @property
    def ex_mean(self) -> float:
        return self.x_law.mean

    def scaled_means(self) -> np.ndarray:
        """Limits of ``E[M_k] / N``."""
        return self.direction * self.x_law.mean

    def per_state_means(self) -> np.ndarray:
        """Limits of ``E[M_k 1{Z=d}] / N`` as a ``(K, D)`` array."""
        return np.outer(self.scaled_means(), self.per_state_weights)


def collapse_prediction(spec: DpsSpec) -> CollapsePrediction:
    """Collapse direction and the law of the common exponential factor.

    ``spec`` must already be critical (use :func:`ht_dps`).
    """
    loads = class_loads(spec)
    total = loads.rho_k_inf.sum()
    if abs(total - 1.0) > CRITICAL_TOL:
        raise NotCritical(f"class loads sum to {total:.12g}, expected 1")
    m = spec.model
    rho_k, rho_d = loads.rho_k_inf, loads.rho_d_hat
    a = solve_offset_vector(m.Q, m.pi, m.c * (1.0 - rho_d))
    ew = np.sum(rho_k / spec.mu) - np.sum(m.c * m.pi * a * (1.0 - rho_d)) / m.c_inf
    ex = ew / np.sum(rho_k / (spec.g * spec.mu))
    return CollapsePrediction(
        direction=rho_k / spec.g,
        x_law=ExponentialLaw(float(ex)),
        per_state_weights=np.asarray(m.pi).copy(),
        a=a,
    )


def ht_workload_from_collapse(pred: CollapsePrediction, spec: DpsSpec) -> ExponentialLaw:
    """Workload limit implied by the collapse: ``X * sum_k direction_k / mu_k``."""
    return ExponentialLaw(float(pred.ex_mean * np.sum(pred.direction / spec.mu)))


@dataclass(frozen=True)
class Residual:
    value: np.ndarray
    half_width: np.ndarray

    def within(self, k: float = 3.0, floor: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.value) <= k * self.half_width + floor))


def _expectation(est, name: str, shape) -> tuple[np.ndarray, bool]:
    """Return ``(array, batched)`` for estimate ``name`` of ``est``."""
    batched = getattr(est, f"{name}_batches", None)
    if batched is not None:
        arr, is_batched = np.asarray(batched, dtype=float), True
    else:
        raw = est.get(name) if isinstance(est, dict) else getattr(est, name, None)
        if raw is None:
            raise MissingEstimate(f"estimate {name!r} not available")
        arr, is_batched = np.asarray(raw, dtype=float), False
    if arr.shape[-2:] != shape or np.isnan(arr).any():
        raise MissingEstimate(f"estimate {name!r} has shape {arr.shape}, need (..., {shape})")
    return arr, is_batched


def _summarise(per_batch: np.ndarray, batched: bool) -> Residual:
    if batched:
        est: Estimate = batch_means(per_batch)
        return Residual(np.asarray(est.mean), np.asarray(est.half_width))
    return Residual(per_batch, np.zeros_like(per_batch))


def rate_conservation_residual(spec: DpsSpec, est, mu=None) -> Residual:
    """``lambda_k_inf - sum_d mu_kd E[share_k 1{Z=d}]`` for every class.

    ``est`` provides ``share_kd`` (``(K, D)``) or ``share_kd_batches``
    (``(B, K, D)``), e.g. a :class:`~mmqueue.simulator.SimEstimates`.
    ``mu`` overrides the class rates used on the analytic side.
    """
    mu = spec.mu if mu is None else np.asarray(mu, dtype=float)
    share, batched = _expectation(est, "share_kd", (spec.K, spec.model.dim))
    lam_k = spec.lam_kd @ spec.model.pi
    mu_kd = mu[:, None] * spec.model.c[None, :]
    resid = lam_k - np.sum(mu_kd * share, axis=-1)
    return _summarise(resid, batched)


def weighted_moment_residual(spec: DpsSpec, est, mu=None) -> Residual:
    """Capacity-weighted first-moment identity of the DPS queue, per class.

    ``sum_d c_d E[M_k 1{Z=d}] - lambda_k_inf / mu_k - sum_{d,j} g_j (lambda_kd
    E[M_j 1{Z=d}] + lambda_jd E[M_k 1{Z=d}]) / (mu_k g_k + mu_j g_j)``.
    """
    mu = spec.mu if mu is None else np.asarray(mu, dtype=float)
    M, batched = _expectation(est, "m_kd", (spec.K, spec.model.dim))
    lam_kd = spec.lam_kd
    g = spec.g
    c = spec.model.c
    lam_k = lam_kd @ spec.model.pi
    coef = g[None, :] / (mu[:, None] * g[:, None] + mu[None, :] * g[None, :])  # [k, j]
    cross_a = np.einsum("kd,...jd->...kj", lam_kd, M)  # sum_d lam_kd M_jd
    cross_b = np.einsum("jd,...kd->...kj", lam_kd, M)  # sum_d lam_jd M_kd
    resid = (
        np.sum(M * c, axis=-1)
        - lam_k / mu
        - np.sum(coef * (cross_a + cross_b), axis=-1)
    )
    return _summarise(resid, batched)


@dataclass(frozen=True)
class StateDependentDps:
    """DPS input whose class requirement rate depends on the arrival state.

    ``mu_kd[k, d]`` is the requirement rate of a class ``k`` customer that
    arrived while the environment was in state ``d``.
    """

    Q: object
    lam: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    mu_kd: np.ndarray
    g: np.ndarray


def split_to_classes(sd: StateDependentDps) -> DpsSpec:
    """Rewrite as ``K * D`` classes with state-independent requirement rates.

    Class ``(k, d)`` sits at index ``k * D + d``: it receives arrivals at
    rate ``alpha[k, d] * lam[d]`` only in state ``d``, has rate
    ``mu_kd[k, d]`` and weight ``g[k]``.
    """
    alpha = np.asarray(sd.alpha, dtype=float)
    mu_kd = np.asarray(sd.mu_kd, dtype=float)
    K, D = alpha.shape
    if mu_kd.shape != (K, D):
        raise ModelError("mu_kd must match alpha's shape")
    split_alpha = np.zeros((K * D, D))
    for k in range(K):
        for d in range(D):
            split_alpha[k * D + d, d] = alpha[k, d]
    return make_dps(
        sd.Q,
        sd.lam,
        sd.c,
        split_alpha,
        mu_kd.reshape(K * D),
        np.repeat(np.asarray(sd.g, dtype=float), D),
    )
