"""Exact event-driven simulation of the modulated workload and DPS queues.

Between events the workload falls linearly at the current capacity, so
every integral (time-average workload, empty-time per state) and the
hit-zero epoch are computed in closed form; nothing is time-stepped.

The post-warmup window is cut into equal batches and each kernel returns
per-batch time averages. Replications are merged by stacking batches.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dps import DpsSpec, class_loads
from .errors import ModelError, Unstable
from .estimators import Estimate, batch_means
from .service import Deterministic, Exponential
from .workload import ModelSpec, traffic_intensity

DEFAULT_BATCHES = 30
MIN_BATCHES = 10
WARMUP_FRACTION = 0.1


# --------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _pick(rng, cum, row):
    # index i with cum[row, i-1] <= u < cum[row, i]; zero-probability
    # entries are never returned because u < cum[row, -1] strictly
    n = cum.shape[1]
    u = rng.random() * cum[row, n - 1]
    i = 0
    while i < n - 1 and u >= cum[row, i]:
        i += 1
    return i


@njit(cache=True, nogil=True)
def _draw_service(rng, d, kind, cumw, rates, value):
    if kind[d] == 1:
        return value[d]
    i = _pick(rng, cumw, d)
    return rng.exponential(1.0 / rates[d, i])


@njit(cache=True, nogil=True)
def _workload_kernel(rng, lam, c, nu, cum_jump, kind, cumw, rates, value,
                     d0, w0, edges, snap_times):
    D = lam.shape[0]
    B = edges.shape[0] - 1
    horizon = edges[B]
    w_int = np.zeros(B)
    idle = np.zeros((B, D))
    occ = np.zeros((B, D))
    S = snap_times.shape[0]
    snap_w = np.empty(S)
    snap_d = np.empty(S, dtype=np.int64)
    si = 0
    t = 0.0
    w = w0
    d = d0
    b = -1
    n_events = 0
    while t < horizon:
        r = lam[d] + nu[d]
        if r > 0.0:
            t_next = t + rng.exponential(1.0 / r)
        else:
            t_next = np.inf
        t_stop = min(t_next, horizon)
        while t < t_stop:
            while b < B and t >= edges[b + 1]:
                b += 1
            seg_end = min(t_stop, edges[b + 1])
            cd = c[d]
            while si < S and snap_times[si] < seg_end:
                s = snap_times[si]
                snap_w[si] = max(w - cd * (s - t), 0.0)
                snap_d[si] = d
                si += 1
            tau = seg_end - t
            if w >= cd * tau:
                area = (w - 0.5 * cd * tau) * tau
                idle_t = 0.0
                w = w - cd * tau
            else:
                area = 0.5 * w * w / cd
                idle_t = tau - w / cd
                w = 0.0
            if b >= 0:
                w_int[b] += area
                idle[b, d] += idle_t
                occ[b, d] += tau
            t = seg_end
        if t_next >= horizon:
            break
        n_events += 1
        if rng.random() * r < lam[d]:
            w += _draw_service(rng, d, kind, cumw, rates, value)
        else:
            d = _pick(rng, cum_jump, d)
    return w_int, idle, occ, snap_w, snap_d, n_events


@njit(cache=True, nogil=True)
def _dps_kernel(rng, lam, c, nu, cum_jump, cum_alpha, mu, g, d0, edges, snap_times):
    D = lam.shape[0]
    K = mu.shape[0]
    B = edges.shape[0] - 1
    horizon = edges[B]
    work = np.zeros(B)
    empty = np.zeros((B, D))
    occ = np.zeros((B, D))
    m_int = np.zeros((B, K, D))
    share_int = np.zeros((B, K, D))
    S = snap_times.shape[0]
    snap_m = np.empty((S, K), dtype=np.int64)
    snap_d = np.empty(S, dtype=np.int64)
    m = np.zeros(K, dtype=np.int64)
    dep = np.zeros(K)
    si = 0
    t = 0.0
    d = d0
    b = -1
    n_events = 0
    while t < horizon:
        G = 0.0
        for k in range(K):
            G += g[k] * m[k]
        dep_total = 0.0
        if G > 0.0:
            for k in range(K):
                dep[k] = c[d] * mu[k] * g[k] * m[k] / G
                dep_total += dep[k]
        r = lam[d] + dep_total + nu[d]
        if r > 0.0:
            t_next = t + rng.exponential(1.0 / r)
        else:
            t_next = np.inf
        t_stop = min(t_next, horizon)
        wl = 0.0
        for k in range(K):
            wl += m[k] / mu[k]
        while t < t_stop:
            while b < B and t >= edges[b + 1]:
                b += 1
            seg_end = min(t_stop, edges[b + 1])
            while si < S and snap_times[si] < seg_end:
                for k in range(K):
                    snap_m[si, k] = m[k]
                snap_d[si] = d
                si += 1
            tau = seg_end - t
            if b >= 0:
                occ[b, d] += tau
                if G > 0.0:
                    work[b] += wl * tau
                    for k in range(K):
                        m_int[b, k, d] += m[k] * tau
                        share_int[b, k, d] += g[k] * m[k] / G * tau
                else:
                    empty[b, d] += tau
            t = seg_end
        if t_next >= horizon:
            break
        n_events += 1
        # fixed category order: arrival, departure, environment jump
        u = rng.random() * r
        if u < lam[d]:
            k = _pick(rng, cum_alpha, d)
            m[k] += 1
        elif u < lam[d] + dep_total:
            u -= lam[d]
            k = 0
            acc = dep[0]
            while k < K - 1 and (u >= acc or m[k] == 0):
                k += 1
                acc += dep[k]
            while m[k] == 0:
                k -= 1
            m[k] -= 1
        else:
            d = _pick(rng, cum_jump, d)
    return work, empty, occ, m_int, share_int, snap_m, snap_d, n_events


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class SimEstimates:
    """Per-batch time averages from one or more merged runs.

    ``ew_batches`` holds the time-average workload; for DPS runs it is the
    functional ``sum_k M_k / mu_k``, whose time average is the mean
    workload. ``snap_values`` holds workload (``(S,)``) or queue-length
    (``(S, K)``) snapshots and ``snap_states`` the environment state at
    each snapshot.
    """

    kind: str
    horizon: float
    warmup: float
    n_events: int
    ew_batches: np.ndarray
    p0_batches: np.ndarray
    occ_batches: np.ndarray
    m_kd_batches: np.ndarray | None = None
    share_kd_batches: np.ndarray | None = None
    snap_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    snap_states: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    replications: int = 1

    @property
    def n_batches(self) -> int:
        return len(self.ew_batches)

    @property
    def ew(self) -> Estimate:
        return batch_means(self.ew_batches)

    @property
    def p0(self) -> Estimate:
        return batch_means(self.p0_batches)

    @property
    def occupancy(self) -> Estimate:
        return batch_means(self.occ_batches)

    @property
    def m_kd(self) -> Estimate:
        return batch_means(self._need(self.m_kd_batches))

    @property
    def share_kd(self) -> Estimate:
        return batch_means(self._need(self.share_kd_batches))

    @property
    def mean_queue(self) -> Estimate:
        """Per-class ``E[M_k]``."""
        return batch_means(self._need(self.m_kd_batches).sum(axis=-1))

    def empty_identity_gap(self, m: ModelSpec) -> Estimate:
        """Batch estimate of ``sum_d p0_d c_d / c_inf - (1 - rho)``."""
        gap = self.p0_batches @ m.c / m.c_inf - (1.0 - traffic_intensity(m))
        return batch_means(gap)

    def _need(self, arr):
        if arr is None:
            raise AttributeError(f"{self.kind} simulation does not record queue lengths")
        return arr


def merge_estimates(parts) -> SimEstimates:
    """Stack batches of runs with identical settings, in the given order."""
    parts = list(parts)
    first = parts[0]
    for p in parts[1:]:
        if (p.kind, p.horizon, p.warmup, p.n_batches) != (first.kind, first.horizon, first.warmup, first.n_batches):
            raise ValueError("can only merge runs with identical horizon, warmup and batching")

    def cat(name):
        arrs = [getattr(p, name) for p in parts]
        return None if arrs[0] is None else np.concatenate(arrs)

    return SimEstimates(
        kind=first.kind,
        horizon=first.horizon,
        warmup=first.warmup,
        n_events=sum(p.n_events for p in parts),
        ew_batches=cat("ew_batches"),
        p0_batches=cat("p0_batches"),
        occ_batches=cat("occ_batches"),
        m_kd_batches=cat("m_kd_batches"),
        share_kd_batches=cat("share_kd_batches"),
        snap_values=cat("snap_values"),
        snap_states=cat("snap_states"),
        replications=sum(p.replications for p in parts),
    )


# --------------------------------------------------------------------------
# drivers


def _streams(rng_seed, replications: int):
    """Independent generators for each replicate, derived from one seed."""
    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(replications)]


def _window(horizon, warmup, batches, snapshots):
    if warmup is None:
        warmup = WARMUP_FRACTION * horizon
    if not horizon > warmup >= 0:
        raise ValueError(f"need horizon > warmup >= 0, got {horizon}, {warmup}")
    if batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} batches, got {batches}")
    edges = np.linspace(warmup, horizon, batches + 1)
    edges[-1] = horizon
    n = int(snapshots)
    snaps = warmup + (np.arange(n) + 0.5) * (horizon - warmup) / max(n, 1)
    return float(warmup), edges, snaps


def _env_arrays(Q):
    nu = np.ascontiguousarray(Q.exit_rates, dtype=float)
    cum = np.cumsum(Q.jump_matrix(), axis=1)
    # frozen states never jump; give them a harmless non-zero row
    cum[nu <= 0] = 1.0
    return nu, np.ascontiguousarray(cum)


def _service_arrays(services):
    D = len(services)
    P = max(1 if isinstance(s, (Exponential, Deterministic)) else len(s.mu) for s in services)
    kind = np.zeros(D, dtype=np.int64)
    cumw = np.ones((D, P))
    rates = np.ones((D, P))
    value = np.zeros(D)
    for d, s in enumerate(services):
        if isinstance(s, Deterministic):
            kind[d] = 1
            value[d] = s.value
        elif isinstance(s, Exponential):
            rates[d, 0] = s.mu
        else:
            n = len(s.mu)
            cumw[d, :n] = np.cumsum(s.alpha)
            cumw[d, n:] = cumw[d, n - 1]
            rates[d, :n] = s.mu
    return kind, cumw, rates, value


def _run_all(fn, streams, workers):
    if workers and workers > 1 and len(streams) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, streams))
    return [fn(s) for s in streams]


def simulate_workload(m: ModelSpec, horizon: float, warmup: float | None = None,
                      batches: int = DEFAULT_BATCHES, rng_seed=0, snapshots: int = 0,
                      replications: int = 1, workers: int = 1) -> SimEstimates:
    """Simulate the workload process ``(W, Z)`` from an empty system.

    Arrivals in state ``d`` are Poisson(``lam[d]``) with requirements drawn
    from ``service[d]``; the workload drains at ``c[d]``. ``snapshots``
    equally spaced post-warmup samples of ``(W, Z)`` are kept.
    """
    rho = traffic_intensity(m)
    if rho >= 1:
        raise Unstable(f"traffic intensity {rho:.6g} >= 1")
    warmup, edges, snaps = _window(horizon, warmup, batches, snapshots)
    nu, cum_jump = _env_arrays(m.Q)
    kind, cumw, rates, value = _service_arrays(m.service)
    lam = np.ascontiguousarray(m.lam, dtype=float)
    c = np.ascontiguousarray(m.c, dtype=float)
    pi = np.asarray(m.pi)
    L = np.diff(edges)

    def one(rng):
        d0 = int(rng.choice(m.dim, p=pi))
        w_int, idle, occ, sw, sd, n_ev = _workload_kernel(
            rng, lam, c, nu, cum_jump, kind, cumw, rates, value, d0, 0.0, edges, snaps)
        return SimEstimates(
            kind="workload", horizon=float(horizon), warmup=warmup, n_events=int(n_ev),
            ew_batches=w_int / L, p0_batches=idle / L[:, None], occ_batches=occ / L[:, None],
            snap_values=sw, snap_states=sd,
        )

    return merge_estimates(_run_all(one, _streams(rng_seed, replications), workers))


def simulate_dps(spec: DpsSpec, horizon: float, warmup: float | None = None,
                 batches: int = DEFAULT_BATCHES, rng_seed=0, snapshots: int = 0,
                 replications: int = 1, workers: int = 1) -> SimEstimates:
    """Simulate the multi-class DPS queue as a CTMC from an empty system."""
    rho = float(class_loads(spec).rho_k_inf.sum())
    if rho >= 1:
        raise Unstable(f"traffic intensity {rho:.6g} >= 1")
    if spec.K < 1:
        raise ModelError("need at least one class")
    m = spec.model
    warmup, edges, snaps = _window(horizon, warmup, batches, snapshots)
    nu, cum_jump = _env_arrays(m.Q)
    cum_alpha = np.ascontiguousarray(np.cumsum(spec.alpha, axis=0).T)  # (D, K)
    lam = np.ascontiguousarray(m.lam, dtype=float)
    c = np.ascontiguousarray(m.c, dtype=float)
    mu = np.ascontiguousarray(spec.mu, dtype=float)
    g = np.ascontiguousarray(spec.g, dtype=float)
    pi = np.asarray(m.pi)
    L = np.diff(edges)

    def one(rng):
        d0 = int(rng.choice(m.dim, p=pi))
        work, empty, occ, m_int, share_int, sm, sd, n_ev = _dps_kernel(
            rng, lam, c, nu, cum_jump, cum_alpha, mu, g, d0, edges, snaps)
        return SimEstimates(
            kind="dps", horizon=float(horizon), warmup=warmup, n_events=int(n_ev),
            ew_batches=work / L, p0_batches=empty / L[:, None], occ_batches=occ / L[:, None],
            m_kd_batches=m_int / L[:, None, None], share_kd_batches=share_int / L[:, None, None],
            snap_values=sm, snap_states=sd,
        )

    return merge_estimates(_run_all(one, _streams(rng_seed, replications), workers))
