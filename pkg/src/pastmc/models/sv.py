"""Basic stochastic volatility model and its Gibbs sampler.

    y_t     = exp(h_t / 2) eps_t,                 t = 0..T-1
    h_{t+1} = mu + phi (h_t - mu) + sigma u_t,    h_0 ~ N(mu, sigma^2 / (1 - phi^2))

The sampler state is ``[sigma, phi, mu, h_0, ..., h_{T-1}]``. Reported
variables are ``sigma``, ``phi`` and ``beta = exp(mu / 2)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import LogDensity, RngStream
from ..kernels import GibbsBlock, GibbsKernel

SIGMA, PHI, MU = 0, 1, 2
H0 = 3


@dataclass(frozen=True)
class SvPriors:
    """sigma^2 ~ IG(a, b); (phi + 1)/2 ~ Beta(phi_a, phi_b); mu ~ N(mu_mean, mu_var)."""

    sigma2_shape: float = 2.5
    sigma2_scale: float = 0.025
    phi_a: float = 20.0
    phi_b: float = 1.5
    mu_mean: float = 0.0
    mu_var: float = 10.0

    def as_dict(self) -> dict:
        return asdict(self)

    def sample(self, rng: RngStream) -> tuple[float, float, float]:
        """Draw ``(sigma, phi, mu)`` from the prior."""
        g = rng.generator
        sigma2 = self.sigma2_scale / g.gamma(self.sigma2_shape)
        phi = 2.0 * g.beta(self.phi_a, self.phi_b) - 1.0
        mu = self.mu_mean + math.sqrt(self.mu_var) * g.standard_normal()
        return math.sqrt(sigma2), phi, mu


def _check_params(phi: float, sigma: float, allow_zero_sigma: bool = False) -> None:
    if not abs(phi) < 1:
        raise ValueError(f"|phi| must be < 1 for a stationary volatility process, got {phi}")
    if sigma < 0 or (sigma == 0 and not allow_zero_sigma) or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive, got {sigma}")


def sv_simulate(T_len: int, mu: float, phi: float, sigma: float, rng: RngStream):
    """Simulate ``(y, h)`` of length ``T_len`` with ``h_0`` from the stationary law."""
    _check_params(phi, sigma, allow_zero_sigma=True)
    if T_len < 1:
        raise ValueError("T_len must be >= 1")
    u = rng.normal(T_len)
    eps = rng.normal(T_len)
    h = np.empty(T_len)
    h[0] = mu + sigma / math.sqrt(1.0 - phi * phi) * u[0]
    for t in range(1, T_len):
        h[t] = mu + phi * (h[t - 1] - mu) + sigma * u[t]
    y = np.exp(h / 2.0) * eps
    return y, h


def center_returns(r) -> np.ndarray:
    """Percentage log returns with their mean removed."""
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or r.shape[0] < 2:
        raise ValueError("need at least two prices")
    if np.any(~(r > 0)):
        raise ValueError("prices must be strictly positive")
    d = np.diff(np.log(r))
    return 100.0 * (d - d.mean())


def load_returns_csv(path: str | Path) -> np.ndarray:
    """Read a ``date,rate`` file and return the centred return series."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["date", "rate"]:
            raise ValueError(f"{path}: expected header 'date,rate'")
        rates = []
        for i, row in enumerate(reader, start=2):
            try:
                v = float(row["rate"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{i}: rate {row['rate']!r} is not a number") from None
            if not v > 0:
                raise ValueError(f"{path}:{i}: rate must be positive")
            rates.append(v)
    return center_returns(rates)


def latent_conditional(h, y, t: int, sigma: float, phi: float, mu: float) -> tuple[float, float]:
    """Mean and variance of the Gaussian (AR(1) neighbour) part of ``p(h_t | rest)``."""
    T = h.shape[0]
    s2 = sigma * sigma
    if T == 1:
        return mu, s2 / (1.0 - phi * phi)
    if t == 0:
        return mu + phi * (h[1] - mu), s2
    if t == T - 1:
        return mu + phi * (h[T - 2] - mu), s2
    return mu + phi * ((h[t - 1] - mu) + (h[t + 1] - mu)) / (1.0 + phi * phi), s2 / (1.0 + phi * phi)


def _neighbour_moments(h, idx, sigma, phi, mu):
    T = h.shape[0]
    s2 = sigma * sigma
    if T == 1:
        return np.full(idx.shape, mu), np.full(idx.shape, s2 / (1.0 - phi * phi))
    dev = h - mu
    left = np.where(idx > 0, dev[np.maximum(idx - 1, 0)], 0.0)
    right = np.where(idx < T - 1, dev[np.minimum(idx + 1, T - 1)], 0.0)
    interior = (idx > 0) & (idx < T - 1)
    denom = np.where(interior, 1.0 + phi * phi, 1.0)
    mean = mu + phi * (left + right) / denom
    var = s2 / denom
    return mean, var


def proposal_moments(y_t, m, v):
    """Gaussian independence proposal for ``h_t``.

    ``exp(-h)`` in the observation term is replaced by its tangent at the
    neighbour mean ``m``, which bounds the true conditional from above.
    """
    return m + 0.5 * v * (y_t * y_t * np.exp(-m) - 1.0), v


def _log_excess(h, y2, m):
    # log(target / proposal) up to a constant; always <= 0
    return -0.5 * y2 * (np.exp(-h) - np.exp(-m) * (1.0 + m - h))


def latent_log_conditional(h_t, y_t, m, v):
    """Unnormalized ``log p(h_t | rest)``."""
    return -0.5 * h_t - 0.5 * y_t * y_t * np.exp(-h_t) - 0.5 * (h_t - m) ** 2 / v


@dataclass
class SvModel:
    y: np.ndarray
    priors: SvPriors = field(default_factory=SvPriors)
    phi_step: float = 2.4

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.shape[0] < 1:
            raise ValueError("SV data must be a non-empty vector")

    @property
    def T_len(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return H0 + self.T_len

    variables = {"sigma": SIGMA, "phi": PHI, "mu": MU}

    @staticmethod
    def derived(name: str, column: np.ndarray) -> np.ndarray:
        return np.exp(column / 2.0) if name == "beta" else column

    def initial_state(self, sigma: float = 0.15, phi: float = 0.95, mu: float | None = None) -> np.ndarray:
        """Start at the given parameters with ``h_t = log(y_t^2 + c)``-style values."""
        y2 = self.y ** 2
        c = max(float(y2.mean()), 1e-8) * 0.1
        h = np.log(y2 + c)
        if mu is None:
            mu = float(h.mean())
        return np.concatenate([[sigma, phi, mu], h])

    # -- joint density ---------------------------------------------------------

    def log_prior(self, sigma, phi, mu) -> float:
        p = self.priors
        if not (sigma > 0 and abs(phi) < 1):
            return -math.inf
        s2 = sigma * sigma
        if s2 == 0.0:
            # the inverse-gamma factor exp(-scale / s2) has already vanished
            return -math.inf
        # density of sigma (not sigma^2): includes the Jacobian 2 sigma
        log_sigma = math.log(sigma)
        lp = -(p.sigma2_shape + 1.0) * 2.0 * log_sigma - p.sigma2_scale / s2 + math.log(2.0) + log_sigma
        lp += (p.phi_a - 1.0) * math.log((1.0 + phi) / 2.0) + (p.phi_b - 1.0) * math.log((1.0 - phi) / 2.0)
        lp += -0.5 * (mu - p.mu_mean) ** 2 / p.mu_var
        return lp

    def log_latent(self, h, sigma, phi, mu) -> float:
        s2 = sigma * sigma
        lp = 0.5 * math.log(1.0 - phi * phi) - 0.5 * (1.0 - phi * phi) * (h[0] - mu) ** 2 / s2
        e = h[1:] - mu - phi * (h[:-1] - mu)
        lp += -0.5 * float(np.dot(e, e)) / s2 - self.T_len * math.log(sigma)
        return lp

    def log_likelihood(self, h) -> float:
        return float(np.sum(-0.5 * h - 0.5 * self.y ** 2 * np.exp(-h)))

    def log_posterior(self, x) -> float:
        sigma, phi, mu = float(x[SIGMA]), float(x[PHI]), float(x[MU])
        lp = self.log_prior(sigma, phi, mu)
        if lp == -math.inf:
            return lp
        h = np.asarray(x[H0:])
        return lp + self.log_latent(h, sigma, phi, mu) + self.log_likelihood(h)

    def target(self) -> LogDensity:
        return LogDensity(self.dim, self.log_posterior, name="sv_posterior")

    # -- conditional updates ----------------------------------------------------

    def _update_sigma(self, x, rng):
        phi, mu = x[PHI], x[MU]
        h = x[H0:]
        e = h[1:] - mu - phi * (h[:-1] - mu)
        ss = (1.0 - phi * phi) * (h[0] - mu) ** 2 + float(np.dot(e, e))
        shape = self.priors.sigma2_shape + 0.5 * self.T_len
        rate = self.priors.sigma2_scale + 0.5 * ss
        sigma2 = rate / rng.generator.gamma(shape)
        return np.array([math.sqrt(sigma2)])

    def phi_log_conditional(self, phi, x) -> float:
        if not abs(phi) < 1:
            return -math.inf
        p = self.priors
        sigma, mu = x[SIGMA], x[MU]
        dev = x[H0:] - mu
        s2 = sigma * sigma
        e = dev[1:] - phi * dev[:-1]
        return (
            (p.phi_a - 1.0) * math.log((1.0 + phi) / 2.0)
            + (p.phi_b - 1.0) * math.log((1.0 - phi) / 2.0)
            + 0.5 * math.log(1.0 - phi * phi)
            - 0.5 * (1.0 - phi * phi) * dev[0] ** 2 / s2
            - 0.5 * float(np.dot(e, e)) / s2
        )

    def _phi_scale(self, x) -> float:
        dev = x[H0:-1] - x[MU] if self.T_len > 1 else np.zeros(0)
        ss = float(np.dot(dev, dev))
        return self.phi_step * x[SIGMA] / math.sqrt(ss + x[SIGMA] ** 2)

    def _mu_moments(self, x):
        sigma, phi = x[SIGMA], x[PHI]
        h = x[H0:]
        s2 = sigma * sigma
        p = self.priors
        prec = 1.0 / p.mu_var + (1.0 - phi * phi) / s2 + (self.T_len - 1) * (1.0 - phi) ** 2 / s2
        lin = p.mu_mean / p.mu_var + (1.0 - phi * phi) * h[0] / s2
        lin += (1.0 - phi) * float(np.sum(h[1:] - phi * h[:-1])) / s2
        return lin / prec, 1.0 / prec

    def _update_mu(self, x, rng):
        m, v = self._mu_moments(x)
        return np.array([m + math.sqrt(v) * rng.normal()])

    def _latent_imh(self, x, idx, rng):
        sigma, phi, mu = x[SIGMA], x[PHI], x[MU]
        h = x[H0:]
        y2 = self.y[idx] ** 2
        m, v = _neighbour_moments(h, idx, sigma, phi, mu)
        pm, pv = proposal_moments(self.y[idx], m, v)
        prop = pm + np.sqrt(pv) * rng.normal(idx.shape[0])
        u = rng.uniform(idx.shape[0])
        cur = h[idx]
        log_ratio = _log_excess(prop, y2, m) - _log_excess(cur, y2, m)
        accept = np.log(u) < log_ratio
        return np.where(accept, prop, cur), int(accept.sum())


def sv_gibbs_kernel(model: SvModel) -> GibbsKernel:
    """Systematic scan: sigma, phi, mu, then the even and the odd latent states.

    Given its two neighbours each ``h_t`` is conditionally independent of the
    other same-parity latents, so each parity class is updated in one
    vectorized independence-Metropolis pass.
    """
    T = model.T_len
    blocks = [GibbsBlock([SIGMA], model._update_sigma, "sigma")]

    phi_block = GibbsBlock([PHI], lambda x, rng: None, "phi")

    def update_phi(x, rng):
        cur = x[PHI]
        prop = cur + model._phi_scale(x) * rng.normal()
        u = rng.uniform()
        phi_block.proposed += 1
        lp = model.phi_log_conditional(prop, x)
        if lp > -math.inf and math.log(u) < lp - model.phi_log_conditional(cur, x):
            phi_block.accepted += 1
            return np.array([prop])
        return np.array([cur])

    phi_block.update = update_phi
    blocks.append(phi_block)
    blocks.append(GibbsBlock([MU], model._update_mu, "mu"))

    for parity in (0, 1):
        idx = np.arange(parity, T, 2)
        if idx.size == 0:
            continue
        block = GibbsBlock(H0 + idx, lambda x, rng: None, f"h_{'even' if parity == 0 else 'odd'}")

        def update(x, rng, idx=idx, block=block):
            new, n_acc = model._latent_imh(x, idx, rng)
            block.proposed += idx.size
            block.accepted += n_acc
            return new

        block.update = update
        blocks.append(block)
    return GibbsKernel(blocks, model.dim)


def latent_acceptance(kernel: GibbsKernel) -> float:
    acc = sum(b.accepted for b in kernel.blocks if b.name.startswith("h_"))
    tot = sum(b.proposed for b in kernel.blocks if b.name.startswith("h_"))
    return acc / tot if tot else float("nan")
