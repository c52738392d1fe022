"""Metropolis-type transition kernels and a systematic-scan Gibbs composition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import LogDensity, RngStream, accept_probability


class ConfigurationError(ValueError):
    pass


def _require_support(logh_x: float) -> None:
    if logh_x == -math.inf:
        raise ValueError("chain left support: current state has zero target density")


def rwm_accept_prob(target: LogDensity, x: np.ndarray, y: np.ndarray) -> float:
    """Acceptance probability of a symmetric random-walk move ``x -> y``."""
    lx = target.eval(x)
    _require_support(lx)
    return accept_probability(target.eval(y) - lx)


def imh_accept_prob(
    target: LogDensity,
    proposal_logpdf: Callable[[np.ndarray], float],
    x: np.ndarray,
    y: np.ndarray,
) -> float:
    """``min(1, h(y) q(x) / (h(x) q(y)))`` computed in the log domain."""
    lx = target.eval(x)
    _require_support(lx)
    ly = target.eval(y)
    if ly == -math.inf:
        return 0.0
    return accept_probability(ly - lx + proposal_logpdf(x) - proposal_logpdf(y))


@dataclass
class RwmKernel:
    """Random-walk Metropolis with Gaussian increments.

    ``sigma`` is a scalar or a per-coordinate vector of proposal standard
    deviations.
    """

    target: LogDensity
    sigma: float | np.ndarray = 1.0

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ConfigurationError(f"RWM sigma must be positive, got {self.sigma}")
        if s.ndim > 0 and s.shape != (self.target.dim,):
            raise ConfigurationError("per-coordinate sigma must match target dimension")

    def step(self, x: np.ndarray, rng: RngStream) -> tuple[np.ndarray, bool]:
        return rwm_step(x, self, rng)


def rwm_step(x: np.ndarray, k: RwmKernel, rng: RngStream) -> tuple[np.ndarray, bool]:
    lx = k.target.eval(x)
    _require_support(lx)
    y = x + k.sigma * rng.normal(x.shape[0])
    u = rng.uniform()
    if u < accept_probability(k.target.eval(y) - lx):
        return y, True
    return x, False


@dataclass
class ImhKernel:
    """Independence Metropolis: proposals ignore the current state."""

    target: LogDensity
    proposal_sampler: Callable[[RngStream], np.ndarray]
    proposal_logpdf: Callable[[np.ndarray], float]

    def step(self, x: np.ndarray, rng: RngStream) -> tuple[np.ndarray, bool]:
        return imh_step(x, self, rng)


def imh_step(x: np.ndarray, k: ImhKernel, rng: RngStream) -> tuple[np.ndarray, bool]:
    lx = k.target.eval(x)
    _require_support(lx)
    y = np.asarray(k.proposal_sampler(rng), dtype=float)
    u = rng.uniform()
    ly = k.target.eval(y)
    if ly == -math.inf:
        return x, False
    log_ratio = ly - lx + k.proposal_logpdf(x) - k.proposal_logpdf(y)
    if u < accept_probability(log_ratio):
        return y, True
    return x, False


@dataclass
class GibbsBlock:
    """One conditional update touching ``indices`` of the state.

    ``update(x, rng)`` sees the full current state and returns new values for
    ``indices`` only. Updates may bump ``accepted``/``proposed`` to report
    Metropolis-within-Gibbs acceptance.
    """

    indices: np.ndarray
    update: Callable[[np.ndarray, RngStream], np.ndarray]
    name: str = ""
    accepted: int = field(default=0, repr=False)
    proposed: int = field(default=0, repr=False)

    def __post_init__(self):
        self.indices = np.atleast_1d(np.asarray(self.indices, dtype=int))

    @classmethod
    def from_kernel(cls, indices, kernel, name: str = "") -> GibbsBlock:
        """Wrap a full-state kernel; only ``indices`` of its output are kept."""
        block = cls(indices, lambda x, rng: None, name)

        def update(x, rng):
            y, acc = kernel.step(x, rng)
            block.proposed += 1
            block.accepted += int(acc)
            return y[block.indices]

        block.update = update
        return block

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


class GibbsKernel:
    """Systematic-scan composition of :class:`GibbsBlock` updates."""

    def __init__(self, blocks: Sequence[GibbsBlock], dim: int):
        if not blocks:
            raise ConfigurationError("Gibbs kernel needs at least one block")
        seen: set[int] = set()
        for b in blocks:
            idx = set(int(i) for i in b.indices)
            if len(idx) != len(b.indices):
                raise ConfigurationError(f"block {b.name!r} repeats an index")
            if any(not 0 <= i < dim for i in idx):
                raise ConfigurationError(f"block {b.name!r} touches indices outside 0..{dim - 1}")
            if seen & idx:
                raise ConfigurationError(f"block {b.name!r} overlaps an earlier block")
            seen |= idx
        self.blocks = list(blocks)
        self.dim = dim

    def step(self, x: np.ndarray, rng: RngStream) -> tuple[np.ndarray, bool]:
        return gibbs_step(x, self, rng), True


def gibbs_step(x: np.ndarray, k: GibbsKernel, rng: RngStream) -> np.ndarray:
    if x.shape[0] != k.dim:
        raise ConfigurationError(f"state has length {x.shape[0]}, Gibbs kernel expects {k.dim}")
    x = x.copy()
    for b in k.blocks:
        x[b.indices] = b.update(x, rng)
    return x
