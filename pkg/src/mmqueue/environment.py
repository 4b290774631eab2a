"""Finite CTMC environment: generator validation, stationary law, offset solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    NegativeOffDiagonal,
    Reducible,
    RhsNotOrthogonal,
    RowSumNonzero,
    SingularBeyondNullspace,
    SolveFailed,
)

ROW_SUM_TOL = 1e-12
ORTHOGONALITY_TOL = 1e-9
RESIDUAL_TOL = 1e-9


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated infinitesimal generator of an irreducible finite CTMC.

    Build it with :func:`validate_generator`; the constructor does no checks.
    """

    rates: np.ndarray

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    def jump_matrix(self) -> np.ndarray:
        """Embedded jump-chain transition matrix (zero rows for frozen states)."""
        nu = self.exit_rates
        P = np.zeros_like(self.rates)
        moving = nu > 0
        P[moving] = self.rates[moving] / nu[moving, None]
        np.fill_diagonal(P, 0.0)
        return P


def validate_generator(rates) -> GeneratorMatrix:
    """Check that ``rates`` is the generator of an irreducible CTMC.

    Entries are never repaired: off-diagonal negatives, nonzero row sums
    (beyond 1e-12 relative to the row scale) and reducible supports all
    raise.
    """
    Q = np.array(rates, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
        raise ValueError(f"generator must be a non-empty square matrix, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("generator has non-finite entries")
    D = Q.shape[0]
    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NegativeOffDiagonal(f"q[{i},{j}] = {Q[i, j]} < 0")
    row_sums = Q.sum(axis=1)
    scale = np.maximum(1.0, np.abs(Q).max(axis=1))
    bad = np.abs(row_sums) > ROW_SUM_TOL * scale
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumNonzero(f"row {i} sums to {row_sums[i]:.3e}")
    if D > 1:
        n_comp, _ = connected_components(off > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise Reducible(f"generator has {n_comp} strongly connected components")
    return GeneratorMatrix(_frozen(Q))


def stationary_distribution(Q: GeneratorMatrix) -> np.ndarray:
    """Probability vector ``pi`` with ``pi @ Q = 0``."""
    R = Q.rates
    D = Q.dim
    if D == 1:
        return _frozen([1.0])
    if np.linalg.matrix_rank(R) < D - 1:
        raise SingularBeyondNullspace("generator rank below D-1; chain is not irreducible")
    A = np.vstack([R.T, np.ones(D)])
    rhs = np.zeros(D + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise SingularBeyondNullspace(f"stationary vector has non-positive entries: {pi}")
    return _frozen(pi)


def solve_offset_vector(Q: GeneratorMatrix, pi, b) -> np.ndarray:
    """Solve ``Q @ a = b`` anchored at ``a[0] = 0``.

    ``b`` must be orthogonal to ``pi``; the solution is then unique up to
    adding a constant vector, and the anchor picks one representative.
    The system ``[Q; e_1^T] a = [b; 0]`` is solved by least squares and
    the residual is checked afterwards.
    """
    b = np.asarray(b, dtype=float)
    pi = np.asarray(pi, dtype=float)
    D = Q.dim
    if b.shape != (D,):
        raise ValueError(f"rhs must have length {D}")
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if abs(pi @ b) > ORTHOGONALITY_TOL * bscale:
        raise RhsNotOrthogonal(f"pi . b = {pi @ b:.3e}")
    A = np.vstack([Q.rates, np.eye(1, D)])
    rhs = np.append(b, 0.0)
    a, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    a = a - a[0]
    resid = np.abs(Q.rates @ a - b).max()
    if not np.isfinite(resid) or resid > RESIDUAL_TOL * bscale:
        raise SolveFailed(f"offset solve residual {resid:.3e}")
    return a


@dataclass(frozen=True)
class EnvPath:
    """Piecewise-constant environment trajectory on ``[0, horizon]``.

    ``states[i]`` holds on ``[epochs[i], epochs[i+1])``; ``epochs[0] = 0``.
    States are 0-based.
    """

    epochs: np.ndarray
    states: np.ndarray
    horizon: float

    @property
    def n_jumps(self) -> int:
        return len(self.states) - 1

    def occupancy(self, dim: int) -> np.ndarray:
        durations = np.diff(np.append(self.epochs, self.horizon))
        return np.bincount(self.states, weights=durations, minlength=dim) / self.horizon


def sample_environment_path(Q: GeneratorMatrix, d0: int, horizon: float, rng_seed) -> EnvPath:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not 0 <= d0 < Q.dim:
        raise ValueError(f"initial state {d0} out of range")
    rng = np.random.default_rng(rng_seed)
    nu = Q.exit_rates
    cum = np.cumsum(Q.jump_matrix(), axis=1)
    epochs = [0.0]
    states = [d0]
    t, d = 0.0, d0
    while True:
        if nu[d] <= 0:
            break
        t += rng.exponential(1.0 / nu[d])
        if t >= horizon:
            break
        u = rng.random() * cum[d, -1]
        d = min(int(np.searchsorted(cum[d], u, side="right")), Q.dim - 1)
        epochs.append(t)
        states.append(d)
    return EnvPath(np.array(epochs), np.array(states, dtype=np.intp), float(horizon))
