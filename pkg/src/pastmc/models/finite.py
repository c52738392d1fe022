"""Finite-state chains with exactly known marginals.

States are stored as one-coordinate real vectors holding the state index.
Besides the scalar kernel, the module has replica-vectorized versions of both
acceleration schemes, used to estimate marginal laws over many independent
chains at once.
"""
from __future__ import annotations

import math

import numpy as np

from ..core import LogDensity, RngStream
from ..resampling import ResampleSchedule


class FiniteStateModel:
    """Row-stochastic kernel ``P`` on ``{0, ..., n-1}`` and its stationary law."""

    def __init__(self, P):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("P must be row-stochastic")
        self.P = P
        self.n_states = P.shape[0]
        self._cum = np.cumsum(P, axis=1)
        self._cum[:, -1] = 1.0
        self.pi = stationary_distribution(P)

    def step(self, x: np.ndarray, rng: RngStream) -> tuple[np.ndarray, bool]:
        s = int(x[0])
        nxt = int(np.searchsorted(self._cum[s], rng.uniform(), side="right"))
        return np.array([float(nxt)]), nxt != s

    def log_density(self, temper: float = 1.0) -> LogDensity:
        """``log pi(s) / T`` at integer states, ``-inf`` elsewhere."""
        logpi = np.log(self.pi)
        n = self.n_states

        def fn(x):
            v = float(x[0])
            if v != round(v) or not 0 <= v < n:
                return -math.inf
            return logpi[int(v)] / temper

        return LogDensity(1, fn, name=f"finite(T={temper:g})")


def stationary_distribution(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def metropolis_matrix(target, proposal) -> np.ndarray:
    """Metropolis-Hastings kernel for ``target`` from a proposal matrix."""
    p = np.asarray(target, dtype=float)
    Q = np.asarray(proposal, dtype=float)
    n = p.shape[0]
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and Q[i, j] > 0:
                P[i, j] = Q[i, j] * min(1.0, p[j] * Q[j, i] / (p[i] * Q[i, j]))
        P[i, i] = 1.0 - P[i].sum()
    return P


def ring_proposal(n: int, lazy: float = 0.0) -> np.ndarray:
    """Nearest-neighbour proposal on a ring, staying put with probability ``lazy``."""
    Q = np.zeros((n, n))
    for i in range(n):
        Q[i, (i - 1) % n] += (1 - lazy) / 2
        Q[i, (i + 1) % n] += (1 - lazy) / 2
        Q[i, i] += lazy
    return Q


def finite_state_exact_marginal(model: FiniteStateModel, n: int, x0: int = 0) -> np.ndarray:
    """Law of ``X_n`` given ``X_0 = x0``: row ``x0`` of ``P^n``."""
    v = np.zeros(model.n_states)
    v[int(x0)] = 1.0
    for _ in range(n):
        v = v @ model.P
    return v


def _draw_rows(cum: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    return (u[:, None] >= cum[states]).sum(axis=1)


def replicate_past_resampling(
    model: FiniteStateModel,
    s: ResampleSchedule,
    n_steps: int,
    n_replicas: int,
    x0: int,
    rng: RngStream,
) -> np.ndarray:
    """Final states of ``n_replicas`` independent resampled-from-the-past chains."""
    hist = np.empty((n_replicas, n_steps + 1), dtype=np.int16)
    hist[:, 0] = x0
    fire = set(s.times_until(n_steps))
    B = s.burn_in
    cum = model._cum
    rows = np.arange(n_replicas)
    for n in range(1, n_steps + 1):
        if n in fire:
            j = rng.integers(B, n, size=n_replicas)
            hist[:, n] = hist[rows, j]
        else:
            hist[:, n] = _draw_rows(cum, hist[:, n - 1], rng.uniform(n_replicas))
    return hist[:, n_steps].astype(int)


def replicate_importance_resampling(
    model: FiniteStateModel,
    aux_model: FiniteStateModel,
    log_weights,
    theta: float,
    n_steps: int,
    n_replicas: int,
    x0: int,
    x0_aux: int,
    rng: RngStream,
) -> np.ndarray:
    """Final main-chain states of independent importance-resampling runs.

    On a finite space a weighted draw from the auxiliary history is a draw of
    state ``s`` with probability proportional to ``count(s) * w(s)``, which is
    what this tracks per replica.
    """
    w = np.exp(np.asarray(log_weights, dtype=float) - np.max(log_weights))
    k = model.n_states
    counts = np.zeros((n_replicas, k))
    x = np.full(n_replicas, x0)
    xa = np.full(n_replicas, x0_aux)
    rows = np.arange(n_replicas)
    counts[rows, xa] += 1
    for _ in range(n_steps):
        coin = rng.uniform(n_replicas) < theta
        moved = _draw_rows(model._cum, x, rng.uniform(n_replicas))
        mass = np.cumsum(counts * w[None, :], axis=1)
        u = rng.uniform(n_replicas) * mass[:, -1]
        jumped = np.minimum((u[:, None] >= mass).sum(axis=1), k - 1)
        x = np.where(coin, moved, jumped)
        xa = _draw_rows(aux_model._cum, xa, rng.uniform(n_replicas))
        counts[rows, xa] += 1
    return x
