"""Importance-resampling from an interleaved auxiliary chain.

The main chain targets ``h``. An auxiliary chain targets an easier density
``h0`` and every auxiliary state enters a weighted reservoir with weight
``h / h0``. With probability ``theta`` the main chain takes an ordinary
kernel step; otherwise it jumps to a reservoir point, drawn by weight
(importance variant, always accepted) or uniformly within its own energy
ring and accepted with ``min(1, w(y) / w(x))`` (equi-energy variant).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    AUX,
    DECIDE,
    MAIN,
    PRERUN,
    RNG_ALGORITHM,
    LogDensity,
    RngStream,
    SamplerError,
    TraceRecorder,
    TransitionKernel,
    accept_probability,
    as_state,
)

log = logging.getLogger(__name__)

# Gap between largest and median log weight above which the weights are
# treated as effectively unbounded.
WEIGHT_GAP_LIMIT = math.log(1e6)

_RESCALE_AT = 300.0


def importance_log_weight(x: np.ndarray, h: LogDensity, h0: LogDensity) -> float:
    """``log h(x) - log h0(x)``; ``-inf`` where ``h`` vanishes."""
    l0 = h0.eval(x)
    if l0 == -math.inf:
        raise SamplerError("auxiliary state outside auxiliary support")
    return h.eval(x) - l0


class EnergyPartition:
    """Rings of the main log density cut at increasing ``boundaries``.

    Cell ``i`` holds points with ``boundaries[i-1] <= log h(x) < boundaries[i]``.
    """

    def __init__(self, boundaries: Sequence[float]):
        b = np.asarray(boundaries, dtype=float).reshape(-1)
        if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
            raise ValueError("partition boundaries must be finite and strictly increasing")
        self.boundaries = b

    @property
    def n_cells(self) -> int:
        return self.boundaries.shape[0] + 1

    def cell(self, logh: float) -> int:
        return int(np.searchsorted(self.boundaries, logh, side="right"))

    @classmethod
    def from_samples(cls, logh_values, n_rings: int = 5) -> EnergyPartition:
        """Equal-probability rings from sampled log density values."""
        v = np.asarray(logh_values, dtype=float)
        v = v[np.isfinite(v)]
        if v.size == 0:
            raise ValueError("no finite log density values to build a partition from")
        qs = np.quantile(v, np.arange(1, n_rings) / n_rings)
        return cls(np.unique(qs))


class WeightedReservoir:
    """Growing store of auxiliary states with importance weights.

    Linear weights are kept as a running prefix sum relative to a shifting
    log offset, so a weighted draw is a binary search. Points with log
    weight ``-inf`` are stored but can never be drawn by weight.
    """

    def __init__(self, dim: int, capacity: int = 1024, partition: EnergyPartition | None = None):
        self.dim = dim
        self._points = np.empty((capacity, dim))
        self._logw = np.empty(capacity)
        self._prefix = np.empty(capacity)
        self._cells = np.empty(capacity, dtype=int)
        self._n = 0
        self._offset: float | None = None
        self.partition = partition
        self._by_cell: dict[int, list[int]] = {}

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._points[: self._n]

    @property
    def log_weights(self) -> np.ndarray:
        return self._logw[: self._n]

    @property
    def total(self) -> float:
        """Sum of linear weights, scaled by ``exp(-offset)``."""
        return float(self._prefix[self._n - 1]) if self._n else 0.0

    def _grow(self) -> None:
        cap = 2 * self._points.shape[0]
        for name in ("_points", "_logw", "_prefix", "_cells"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def push(self, x: np.ndarray, logw: float, logh: float | None = None) -> None:
        if math.isnan(logw) or logw == math.inf:
            raise ValueError(f"reservoir log weight must be finite or -inf, got {logw}")
        if self._n == self._points.shape[0]:
            self._grow()
        n = self._n
        if logw > -math.inf:
            if self._offset is None:
                self._offset = logw
            elif logw - self._offset > _RESCALE_AT:
                self._prefix[:n] *= math.exp(self._offset - logw)
                self._offset = logw
            w = math.exp(logw - self._offset)
        else:
            w = 0.0
        self._points[n] = x
        self._logw[n] = logw
        self._prefix[n] = (self._prefix[n - 1] if n else 0.0) + w
        if self.partition is not None:
            if logh is None:
                raise ValueError("partitioned reservoir needs log h of each point")
            c = self.partition.cell(logh)
            self._cells[n] = c
            self._by_cell.setdefault(c, []).append(n)
        self._n = n + 1

    def draw_index(self, rng: RngStream) -> int:
        if self._n == 0:
            raise SamplerError("draw from an empty reservoir")
        total = self.total
        if not total > 0:
            raise SamplerError("reservoir holds no point with positive weight")
        u = rng.uniform() * total
        i = int(np.searchsorted(self._prefix[: self._n], u, side="right"))
        return min(i, self._n - 1)

    def draw(self, rng: RngStream) -> np.ndarray:
        return self._points[self.draw_index(rng)].copy()

    def cell_size(self, cell: int) -> int:
        return len(self._by_cell.get(cell, ()))

    def draw_in_cell(self, cell: int, rng: RngStream) -> int | None:
        """Uniform index among stored points of ``cell``; None if the cell is empty."""
        members = self._by_cell.get(cell)
        if not members:
            return None
        return members[int(rng.integers(0, len(members)))]


def reservoir_push(r: WeightedReservoir, x: np.ndarray, logw: float, logh: float | None = None) -> None:
    r.push(x, logw, logh)


def reservoir_draw(r: WeightedReservoir, rng: RngStream) -> np.ndarray:
    return r.draw(rng)


@dataclass
class AuxConfig:
    theta: float
    main_kernel: TransitionKernel
    aux_kernel: TransitionKernel
    target: LogDensity
    aux_target: LogDensity
    variant: str = "importance"
    partition: EnergyPartition | None = None
    aux_burn_in: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.target.dim != self.aux_target.dim:
            raise ValueError("main and auxiliary targets must share dimension")
        if self.variant not in ("importance", "equi_energy"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "equi_energy" and self.partition is None:
            raise ValueError("equi_energy variant needs an EnergyPartition")
        if self.aux_burn_in < 0:
            raise ValueError("aux_burn_in must be >= 0")


class AuxStreams(NamedTuple):
    main: RngStream
    aux: RngStream
    decide: RngStream

    @classmethod
    def from_parent(cls, rng: RngStream) -> AuxStreams:
        return cls(rng.substream(MAIN), rng.substream(AUX), rng.substream(DECIDE))


class AuxMove(NamedTuple):
    state: np.ndarray
    aux_state: np.ndarray
    accepted: bool
    resampled: bool
    aux_accepted: bool


@dataclass
class _Counters:
    empty_cell: int = 0
    jump_proposed: int = 0
    jump_accepted: int = 0
    extra: dict = field(default_factory=dict)


def _push_aux(aux_state: np.ndarray, r: WeightedReservoir, cfg: AuxConfig) -> None:
    l0 = cfg.aux_target.eval(aux_state)
    if l0 == -math.inf:
        raise SamplerError("auxiliary state outside auxiliary support")
    lh = cfg.target.eval(aux_state)
    r.push(aux_state, lh - l0, lh)


def _advance_aux(aux_state, r, cfg, streams, push=True):
    aux_new, aux_acc = cfg.aux_kernel.step(aux_state, streams.aux)
    if push:
        _push_aux(aux_new, r, cfg)
    return aux_new, aux_acc


def aux_step(state, aux_state, r: WeightedReservoir, cfg: AuxConfig, streams: AuxStreams, *, push: bool = True) -> AuxMove:
    """One step of the importance variant, then one auxiliary step.

    The main move uses the reservoir as it stands (auxiliary states up to the
    current time). While the reservoir is empty (only possible with an
    auxiliary burn-in) the main chain takes a kernel step.
    """
    if streams.decide.uniform() < cfg.theta or len(r) == 0:
        x, acc = cfg.main_kernel.step(state, streams.main)
        resampled = False
    else:
        x, acc, resampled = r.draw(streams.decide), True, True
    aux_new, aux_acc = _advance_aux(aux_state, r, cfg, streams, push)
    return AuxMove(x, aux_new, acc, resampled, aux_acc)


def equi_energy_step(state, aux_state, r: WeightedReservoir, cfg: AuxConfig, streams: AuxStreams,
                     *, push: bool = True, counters: _Counters | None = None) -> AuxMove:
    """One step of the equi-energy variant, then one auxiliary step.

    An empty ring counts as a rejected jump.
    """
    if streams.decide.uniform() < cfg.theta:
        x, acc = cfg.main_kernel.step(state, streams.main)
        resampled = False
    else:
        resampled = True
        lh = cfg.target.eval(state)
        cell = cfg.partition.cell(lh)
        j = r.draw_in_cell(cell, streams.decide)
        u = streams.decide.uniform()
        if counters is not None:
            counters.jump_proposed += 1
        if j is None:
            if counters is not None:
                counters.empty_cell += 1
                if counters.empty_cell == 1:
                    log.warning("equi-energy jump found empty ring %d; counted as rejected", cell)
            x, acc = state, False
        else:
            l0 = cfg.aux_target.eval(state)
            # w(x) infinite where the auxiliary density vanishes: never leave
            ratio = -math.inf if l0 == -math.inf else float(r.log_weights[j]) - (lh - l0)
            if u < accept_probability(ratio):
                x, acc = r.points[j].copy(), True
                if counters is not None:
                    counters.jump_accepted += 1
            else:
                x, acc = state, False
    aux_new, aux_acc = _advance_aux(aux_state, r, cfg, streams, push)
    return AuxMove(x, aux_new, acc, resampled, aux_acc)


def run_importance_resampling(
    cfg: AuxConfig,
    n_steps: int,
    x0,
    x0_aux,
    rng: RngStream,
    monitor: Sequence[int] | None = None,
    reservoir_capacity: int | None = None,
):
    """Run the main and auxiliary chains interleaved; return both traces.

    Substreams: ``MAIN`` drives the main kernel, ``AUX`` the auxiliary kernel
    and ``DECIDE`` the coin flips and reservoir draws, so ``theta = 1`` gives a
    main trace identical to :func:`pastmc.core.run_chain`.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = as_state(x0, cfg.target.dim)
    xa = as_state(x0_aux, cfg.target.dim)
    d = x.shape[0]
    streams = AuxStreams.from_parent(rng)
    r = WeightedReservoir(d, reservoir_capacity or min(n_steps + 1, 1 << 16), cfg.partition)
    if cfg.aux_burn_in == 0:
        _push_aux(xa, r, cfg)
    rec = TraceRecorder(n_steps, d, monitor)
    rec_aux = TraceRecorder(n_steps, d, monitor)
    counters = _Counters()
    step = aux_step if cfg.variant == "importance" else equi_energy_step
    for n in range(1, n_steps + 1):
        kw = {"push": n >= cfg.aux_burn_in}
        if cfg.variant == "equi_energy":
            kw["counters"] = counters
        mv = step(x, xa, r, cfg, streams, **kw)
        x, xa = mv.state, mv.aux_state
        rec.record(n, x, mv.accepted, mv.resampled)
        rec_aux.record(n, xa, mv.aux_accepted)
    echo = {"sampler": cfg.variant, "theta": cfg.theta, "rng": RNG_ALGORITHM}
    if cfg.variant == "equi_energy":
        echo.update(
            jumps_proposed=counters.jump_proposed,
            jumps_accepted=counters.jump_accepted,
            empty_cell_rejections=counters.empty_cell,
        )
    main_trace = rec.finish(rng.seed, x0, echo)
    aux_trace = rec_aux.finish(rng.seed, x0_aux, {"sampler": "aux_chain", "rng": RNG_ALGORITHM})
    return main_trace, aux_trace


def check_weights(
    aux_kernel: TransitionKernel,
    h: LogDensity,
    h0: LogDensity,
    x0_aux,
    rng: RngStream,
    n: int = 10_000,
) -> dict:
    """Probe the importance weights on an auxiliary pre-run.

    Warns when the largest log weight exceeds the median by more than
    ``log(1e6)``, a sign that the weights are unbounded and the auxiliary
    scheme may not keep the main chain's limit distribution.
    """
    stream = rng.substream(PRERUN)
    x = as_state(x0_aux, h.dim)
    logw = np.empty(n)
    for i in range(n):
        x, _ = aux_kernel.step(x, stream)
        logw[i] = importance_log_weight(x, h, h0)
    finite = logw[np.isfinite(logw)]
    if finite.size == 0:
        raise SamplerError("auxiliary pre-run produced no point with positive weight")
    gap = float(finite.max() - np.median(finite))
    report = {
        "n": n,
        "n_zero_weight": int(n - finite.size),
        "max_log_weight": float(finite.max()),
        "median_log_weight": float(np.median(finite)),
        "gap": gap,
        "limit": WEIGHT_GAP_LIMIT,
        "bounded": gap <= WEIGHT_GAP_LIMIT,
    }
    if not report["bounded"]:
        warnings.warn(
            f"importance weights look unbounded: max - median log weight = {gap:.3g} "
            f"> log(1e6); auxiliary resampling may not target the right distribution",
            RuntimeWarning,
            stacklevel=2,
        )
    return report


def prerun_partition(aux_kernel, h: LogDensity, x0_aux, rng: RngStream, n: int = 10_000, n_rings: int = 5):
    """Default equi-energy partition: equal-probability rings of ``log h`` on an auxiliary pre-run."""
    stream = rng.substream(PRERUN)
    x = as_state(x0_aux, h.dim)
    vals = np.empty(n)
    for i in range(n):
        x, _ = aux_kernel.step(x, stream)
        vals[i] = h.eval(x)
    return EnergyPartition.from_samples(vals, n_rings)
