"""Autocorrelation, Parzen-window inefficiency, ESS and TV distance."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_BANDWIDTH = 5000


class DegenerateSeriesError(ValueError):
    pass


@dataclass
class AcfResult:
    lags: np.ndarray
    rho_hat: np.ndarray


@dataclass
class InefficiencyReport:
    i_hat: float
    bandwidth: int
    n_used: int

    @property
    def ess(self) -> float:
        return self.n_used / self.i_hat


def acf(series, max_lag: int) -> AcfResult:
    """Biased sample autocorrelation for lags ``0..max_lag``.

    ``rho_i = sum_t (f_t - m)(f_{t+i} - m) / sum_t (f_t - m)^2`` with the
    full-series mean ``m``. Computed by FFT.
    """
    f = np.asarray(series, dtype=float).reshape(-1)
    n = f.shape[0]
    if max_lag < 1 or n <= max_lag:
        raise ValueError(f"need len(series) > max_lag >= 1, got n={n}, max_lag={max_lag}")
    m = f.mean()
    c = f - m
    denom = float(np.dot(c, c))
    if not denom > n * (1e-14 * max(1.0, abs(m))) ** 2:
        raise DegenerateSeriesError("degenerate series: zero variance")
    size = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spectrum = np.fft.rfft(c, size)
    cov = np.fft.irfft(spectrum * np.conj(spectrum), size)[: max_lag + 1]
    rho = np.clip(cov / denom, -1.0, 1.0)
    rho[0] = 1.0
    return AcfResult(np.arange(max_lag + 1), rho)


def parzen(u):
    """Parzen lag window.

    ``1 - 6u^2 + 6|u|^3`` on ``|u| <= 1/2``, ``2(1 - |u|)^3`` on
    ``1/2 < |u| <= 1`` and zero beyond.
    """
    a = np.abs(np.asarray(u, dtype=float))
    out = np.where(a <= 0.5, 1.0 - 6.0 * a**2 + 6.0 * a**3, 2.0 * (1.0 - a) ** 3)
    out = np.where(a > 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def inefficiency(series, bandwidth: int = DEFAULT_BANDWIDTH) -> InefficiencyReport:
    """Lag-window estimate of ``1 + 2 sum_k rho_k``.

    ``I = 1 + 2L/(L-1) * sum_{i=1}^{L} K(i/L) rho_i`` with the Parzen window
    ``K`` and bandwidth ``L``.
    """
    L = int(bandwidth)
    if L < 2:
        raise ValueError("bandwidth must be >= 2")
    f = np.asarray(series, dtype=float).reshape(-1)
    r = acf(f, L).rho_hat
    i = np.arange(1, L + 1)
    value = 1.0 + (2.0 * L / (L - 1)) * float(np.dot(parzen(i / L), r[1:]))
    return InefficiencyReport(value, L, f.shape[0])


def ess(series, bandwidth: int = DEFAULT_BANDWIDTH) -> float:
    return inefficiency(series, bandwidth).ess


def tv_distance(p, q, tol: float = 1e-9) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("probability vectors must have equal length")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < -tol) or abs(v.sum() - 1.0) > tol:
            raise ValueError(f"{name} is not a probability vector (sum={v.sum()!r})")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(values, n_states: int) -> np.ndarray:
    counts = np.bincount(np.asarray(values, dtype=int), minlength=n_states)
    return counts / counts.sum()


def summary(series, variable: str, bandwidth: int = DEFAULT_BANDWIDTH, n_acf: int = 50) -> dict:
    """Key/value diagnostics record for one variable."""
    f = np.asarray(series, dtype=float)
    rep = inefficiency(f, bandwidth)
    return {
        "variable": variable,
        "n": rep.n_used,
        "bandwidth": rep.bandwidth,
        "lag_window": "parzen",
        "i_hat": rep.i_hat,
        "ess": rep.ess,
        "mean": float(f.mean()),
        "sd": float(f.std()),
        "acf": acf(f, min(n_acf, f.shape[0] - 1)).rho_hat.tolist(),
    }


def write_summary(record: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2) + "\n")
