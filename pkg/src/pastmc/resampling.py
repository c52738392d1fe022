"""Markov chains that periodically resample from their own past.

At the scheduled times ``a_1 < a_2 < ...`` the kernel step is replaced by a
uniform draw from the post-burn-in history ``{X_B, ..., X_{n-1}}``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DECIDE, MAIN, RNG_ALGORITHM, RngStream, SamplerError, TraceRecorder, TransitionKernel, as_state

log = logging.getLogger(__name__)

_MAX_TIME = 2**62


@dataclass(frozen=True)
class ResampleSchedule:
    """Deterministic resampling times ``B + ceil(b2 * k**alpha)``, ``k >= 1``."""

    burn_in: int = 0
    b2: float = 1.0
    alpha: float = 1.3

    def __post_init__(self):
        if self.burn_in < 0 or int(self.burn_in) != self.burn_in:
            raise ValueError(f"burn_in must be a non-negative integer, got {self.burn_in}")
        if not self.b2 > 0:
            raise ValueError(f"b2 must be positive, got {self.b2}")
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")

    def time(self, k: int) -> int:
        return schedule_time(self, k)

    def times_until(self, n: int) -> list[int]:
        """Distinct scheduled times in ``(B, n]``, ascending."""
        out: list[int] = []
        k = 1
        while True:
            t = schedule_time(self, k)
            if t > n:
                return out
            if not out or t != out[-1]:
                out.append(t)
            k += 1

    def as_dict(self) -> dict:
        return {"burn_in": self.burn_in, "b2": self.b2, "alpha": self.alpha}


def schedule_time(s: ResampleSchedule, k: int) -> int:
    if k < 1:
        raise ValueError(f"schedule index must be >= 1, got {k}")
    try:
        offset = s.b2 * float(k) ** s.alpha
    except OverflowError:
        offset = math.inf
    if not offset < _MAX_TIME - s.burn_in:
        raise OverflowError(f"schedule time for k={k} exceeds the time index range")
    return s.burn_in + math.ceil(offset)


def divergence_delta(s: ResampleSchedule, rho: float, n: int) -> float:
    """Schedule divergence ``delta_n`` for a kernel with geometric rate ``rho``.

    ``delta_n = -a_1 log(rho) + sum_{k=2}^{n} [log a_k - log(c + a_{k-1})]``
    with ``c = 1 / (1 - rho)``. If it diverges to infinity the resampled chain
    keeps the kernel's limit distribution.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if n < 1:
        raise ValueError("n must be >= 1")
    c = 1.0 / (1.0 - rho)
    prev = schedule_time(s, 1)
    delta = -prev * math.log(rho)
    for k in range(2, n + 1):
        a = schedule_time(s, k)
        delta += math.log(a) - math.log(c + prev)
        prev = a
    return delta


def check_divergence(s: ResampleSchedule, rho: float, n_events: int) -> bool:
    """Warn if ``delta`` is not increasing over the events of a run.

    Returns True when the schedule looks divergent for this ``rho``.
    """
    if n_events < 2:
        return True
    half = divergence_delta(s, rho, max(1, n_events // 2))
    full = divergence_delta(s, rho, n_events)
    if full <= half:
        warnings.warn(
            f"resampling schedule {s} fails the divergence check for rho={rho}: "
            f"delta_{n_events}={full:.4g} <= delta_{n_events // 2}={half:.4g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True


def buffer_memory_bytes(n_steps: int, burn_in: int, dim: int) -> int:
    """Size of the past-state buffer held by :func:`run_with_resampling`."""
    return max(0, n_steps - burn_in) * dim * 8


class PastBuffer:
    """All states ``X_B, X_{B+1}, ...`` seen so far, in chain order."""

    def __init__(self, capacity: int, dim: int):
        self._data = np.empty((max(capacity, 0), dim))
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def append(self, x: np.ndarray) -> None:
        self._data[self._n] = x
        self._n += 1

    def __getitem__(self, i: int) -> np.ndarray:
        if not 0 <= i < self._n:
            raise IndexError(i)
        return self._data[i]

    def draw(self, rng: RngStream) -> np.ndarray:
        if self._n == 0:
            raise SamplerError("resampling from an empty past buffer")
        return self._data[int(rng.integers(0, self._n))].copy()


def run_with_resampling(
    kernel: TransitionKernel,
    s: ResampleSchedule,
    n_steps: int,
    x0,
    rng: RngStream,
    monitor: Sequence[int] | None = None,
    rho: float | None = None,
):
    """Run ``kernel`` for ``n_steps`` steps, resampling from the past on ``s``.

    Kernel moves use the ``MAIN`` substream and resampling draws the
    ``DECIDE`` substream, so a schedule that never fires gives exactly the
    trace of :func:`pastmc.core.run_chain`. Resample steps are recorded with
    ``resampled=1``; they always count as accepted.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = as_state(x0)
    d = x.shape[0]
    B = s.burn_in
    times = s.times_until(n_steps)
    if rho is not None:
        check_divergence(s, rho, len(times))
    if times:
        log.info(
            "past buffer for %d steps after burn-in %d, dim %d: %.1f MB",
            n_steps - B, B, d, buffer_memory_bytes(n_steps, B, d) / 2**20,
        )
    fire = set(times)

    main = rng.substream(MAIN)
    decide = rng.substream(DECIDE)
    buf = PastBuffer(n_steps - B if times else 0, d)
    rec = TraceRecorder(n_steps, d, monitor)
    if B == 0 and times:
        buf.append(x)
    for n in range(1, n_steps + 1):
        if n in fire:
            if n <= B:
                raise SamplerError(f"schedule fired at {n} inside burn-in {B}")
            x = buf.draw(decide)
            rec.record(n, x, True, True)
        else:
            x, acc = kernel.step(x, main)
            rec.record(n, x, acc)
        if times and B <= n < n_steps:
            buf.append(x)
    echo = {"sampler": "past", "schedule": s.as_dict(), "rng": RNG_ALGORITHM}
    return rec.finish(rng.seed, x0, echo)
