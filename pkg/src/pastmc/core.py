"""State, density, kernel, trace, and RNG contracts shared by every sampler."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import numpy as np

RNG_ALGORITHM = f"numpy-PCG64-SeedSequence/{np.__version__.split('.')[0]}"

# Substream labels. Every runner draws kernel moves from MAIN so that a
# degenerate schedule or theta=1 reproduces the plain chain bit-for-bit.
MAIN = 0
AUX = 1
DECIDE = 2
PRERUN = 3


class SamplerError(RuntimeError):
    """Raised when a chain reaches an impossible configuration at run time."""


class RngStream:
    """Seeded stream of pseudo-random draws.

    A stream is identified by ``(seed, key)``; the key is the tuple of labels
    used to derive it through :meth:`substream`. Two streams with the same
    identity produce identical sequences.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"

    def substream(self, label: int) -> RngStream:
        return make_substream(self, label)

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Integers in the half-open range ``[low, high)``."""
        return self.generator.integers(low, high, size=size)


def make_substream(parent: RngStream, label: int) -> RngStream:
    """Derive an independent stream from ``parent``'s identity and ``label``.

    The result depends only on the parent's seed and key, never on how many
    draws the parent has already produced.
    """
    return RngStream(parent.seed, parent.key + (int(label),))


class LogDensity:
    """Unnormalized log target ``log h(x)`` on ``R^dim``.

    ``fn`` must return ``-inf`` outside the support. A NaN result is treated
    as a bug in the model and raises.
    """

    def __init__(self, dim: int, fn: Callable[[np.ndarray], float], name: str = ""):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self._fn = fn
        self.name = name

    def eval(self, x: np.ndarray) -> float:
        value = float(self._fn(x))
        if math.isnan(value):
            raise ValueError(f"log density {self.name!r} returned NaN at {x!r}")
        if value == math.inf:
            raise ValueError(f"log density {self.name!r} returned +inf at {x!r}")
        return value

    __call__ = eval


class TransitionKernel(Protocol):
    def step(self, x: np.ndarray, rng: RngStream) -> tuple[np.ndarray, bool]:
        ...


def accept_probability(log_ratio: float) -> float:
    """``min(1, exp(log_ratio))`` without overflow; ``-inf`` maps to 0."""
    if log_ratio >= 0.0:
        return 1.0
    return math.exp(log_ratio)


def as_state(x, dim: int | None = None) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"state has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state entries must be finite")
    return arr


@dataclass
class ChainTrace:
    """Recorded output of one chain.

    ``states[i]`` is the chain value after step ``i + 1``; the start value is
    kept separately in ``x0``. ``columns`` gives the state coordinate stored in
    each column (all coordinates unless the run monitored a subset).
    """

    states: np.ndarray
    accepted: np.ndarray
    resampled: np.ndarray
    seed: int
    x0: np.ndarray
    columns: tuple[int, ...]
    config_echo: dict[str, Any] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def accept_count(self) -> int:
        return int(self.accepted.sum())

    @property
    def resample_events(self) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(self.resampled)]

    def column(self, coord: int) -> np.ndarray:
        return self.states[:, self.columns.index(coord)]

    def to_csv(self, path: str | Path) -> None:
        write_trace_csv(self, path)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(trace: ChainTrace, path: str | Path) -> None:
    """Write ``step,resampled,accepted,x_<i>...`` with one row per step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["step", "resampled", "accepted"] + [f"x_{c}" for c in trace.columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(trace.n_steps):
            w.writerow(
                [i + 1, int(trace.resampled[i]), int(trace.accepted[i])]
                + [_fmt(v) for v in trace.states[i]]
            )


def read_trace_csv(path: str | Path) -> ChainTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["step", "resampled", "accepted"]:
            raise ValueError(f"{path}: not a trace file (header {header[:3]})")
        columns = tuple(int(h.split("_", 1)[1]) for h in header[3:])
        rows = [r for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return ChainTrace(
        states=data[:, 3:],
        accepted=data[:, 2].astype(bool),
        resampled=data[:, 1].astype(bool),
        seed=-1,
        x0=np.full(len(columns), np.nan),
        columns=columns,
    )


class TraceRecorder:
    """Preallocated storage for a run of known length."""

    def __init__(self, n_steps: int, dim: int, monitor: Sequence[int] | None = None):
        self.columns = tuple(range(dim)) if monitor is None else tuple(int(c) for c in monitor)
        if any(not 0 <= c < dim for c in self.columns):
            raise ValueError(f"monitor indices {self.columns} out of range for dim {dim}")
        self._idx = np.array(self.columns, dtype=int)
        self.states = np.empty((n_steps, len(self.columns)))
        self.accepted = np.zeros(n_steps, dtype=bool)
        self.resampled = np.zeros(n_steps, dtype=bool)

    def record(self, n: int, x: np.ndarray, accepted: bool, resampled: bool = False) -> None:
        self.states[n - 1] = x[self._idx]
        self.accepted[n - 1] = accepted
        self.resampled[n - 1] = resampled

    def finish(self, seed: int, x0: np.ndarray, echo: dict | None = None) -> ChainTrace:
        return ChainTrace(
            states=self.states,
            accepted=self.accepted,
            resampled=self.resampled,
            seed=seed,
            x0=np.array(x0, dtype=float),
            columns=self.columns,
            config_echo=dict(echo or {}),
        )


def run_chain(
    kernel: TransitionKernel,
    n_steps: int,
    x0,
    rng: RngStream,
    monitor: Sequence[int] | None = None,
) -> ChainTrace:
    """Run a plain Markov chain for ``n_steps`` steps.

    Kernel moves use the ``MAIN`` substream of ``rng`` so that runs with the
    acceleration schemes switched off match this one exactly.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = as_state(x0)
    stream = rng.substream(MAIN)
    rec = TraceRecorder(n_steps, x.shape[0], monitor)
    for n in range(1, n_steps + 1):
        x, acc = kernel.step(x, stream)
        rec.record(n, x, acc)
    return rec.finish(rng.seed, x0, {"sampler": "plain", "rng": RNG_ALGORITHM})
