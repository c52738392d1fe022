"""One-dimensional Gaussian mixture with an optional tempering exponent."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..core import LogDensity

_LOG_2PI = math.log(2.0 * math.pi)


class GaussianMixture(LogDensity):
    """``log h(x) = (1/T) log sum_j w_j N(x; m_j, s_j^2)``.

    ``temper=1`` is the mixture itself; ``temper=T > 1`` flattens it to
    ``h^(1/T)`` with the same modes.
    """

    def __init__(self, weights: Sequence[float], means: Sequence[float], sds: Sequence[float], temper: float = 1.0):
        w = np.asarray(weights, dtype=float)
        m = np.asarray(means, dtype=float)
        s = np.asarray(sds, dtype=float)
        if not (w.shape == m.shape == s.shape) or w.ndim != 1:
            raise ValueError("weights, means and sds must be equal-length vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(s <= 0):
            raise ValueError("component sds must be positive")
        if not temper >= 1:
            raise ValueError("temper must be >= 1")
        self.weights, self.means, self.sds, self.temper = w, m, s, float(temper)
        self._logc = np.log(w) - np.log(s) - 0.5 * _LOG_2PI
        self._terms = [(float(c), float(mm), float(ss)) for c, mm, ss in zip(self._logc, m, s)]
        super().__init__(1, self._logh, name=f"mixture(T={temper:g})")

    def raw_logpdf(self, x: float) -> float:
        a = [c - 0.5 * ((x - mm) / ss) ** 2 for c, mm, ss in self._terms]
        top = max(a)
        return top + math.log(sum(math.exp(v - top) for v in a))

    def _logh(self, x) -> float:
        return self.raw_logpdf(float(x[0])) / self.temper

    def tempered(self, temper: float) -> GaussianMixture:
        return GaussianMixture(self.weights, self.means, self.sds, temper)

    def component_of(self, xs) -> np.ndarray:
        """Index of the nearest component mean for each value."""
        xs = np.asarray(xs, dtype=float).reshape(-1, 1)
        return np.abs(xs - self.means[None, :]).argmin(axis=1)

    def occupancy(self, xs) -> np.ndarray:
        return np.bincount(self.component_of(xs), minlength=self.weights.shape[0]) / np.size(xs)

    variables = {"x": 0}
