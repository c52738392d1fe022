import math

import numpy as np
import pytest
from scipy import stats

from oracles import one_sweep_from_prior, prior_means
from pastmc.core import RngStream
from pastmc.diagnostics import inefficiency, tv_distance
from pastmc.models import (
    FiniteStateModel,
    GaussianMixture,
    SvModel,
    SvPriors,
    center_returns,
    finite_state_exact_marginal,
    load_returns_csv,
    metropolis_matrix,
    ring_proposal,
    stationary_distribution,
    sv_gibbs_kernel,
    sv_simulate,
)
from pastmc.models.sv import (
    H0,
    MU,
    PHI,
    SIGMA,
    _neighbour_moments,
    latent_acceptance,
    latent_conditional,
    latent_log_conditional,
    proposal_moments,
)

# -- simulation and data ------------------------------------------------------

def test_simulate_zero_sigma_is_constant():
    y, h = sv_simulate(50, -0.7, 0.9, 0.0, RngStream(0))
    assert np.all(h == -0.7)
    assert y.shape == (50,)


def test_simulate_white_noise_variance():
    _, h = sv_simulate(100_000, 0.0, 0.0, 1.0, RngStream(1))
    assert abs(h.var() - 1.0) < 0.05


def test_simulate_stationary_variance():
    _, h = sv_simulate(100_000, 0.3, 0.9, 0.2, RngStream(2))
    target = 0.04 / 0.19
    assert target == pytest.approx(0.2105, abs=1e-4)
    assert abs(h.var() / target - 1.0) < 0.1


def test_simulate_rejects_explosive_phi():
    with pytest.raises(ValueError):
        sv_simulate(10, 0.0, 1.0, 0.1, RngStream(0))


def test_center_returns_example():
    np.testing.assert_allclose(center_returns([1.0, math.e, 1.0]), [100.0, -100.0])


def test_center_returns_mean_zero():
    prices = np.exp(np.cumsum(RngStream(3).normal(300) * 0.01)) * 1.3
    assert abs(center_returns(prices).mean()) < 1e-12


def test_center_returns_errors():
    with pytest.raises(ValueError):
        center_returns([1.0])
    with pytest.raises(ValueError):
        center_returns([1.0, 0.0, 2.0])


def test_load_returns_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("date,rate\n2001-01-01,1.0\n2001-01-02,2.0\n2001-01-03,1.0\n")
    r = load_returns_csv(p)
    np.testing.assert_allclose(r, [100 * math.log(2), -100 * math.log(2)])
    bad = tmp_path / "bad.csv"
    bad.write_text("day,value\n1,1\n")
    with pytest.raises(ValueError, match="header"):
        load_returns_csv(bad)
    bad.write_text("date,rate\n1,1.0\n2,oops\n")
    with pytest.raises(ValueError, match="not a number"):
        load_returns_csv(bad)


# -- conditionals against the joint density ------------------------------------

y_small = sv_simulate(8, -0.5, 0.9, 0.3, RngStream(20))[0]
model = SvModel(y_small)
x_ref = model.initial_state(0.3, 0.9, -0.5)


def _constant_difference(values, reference):
    d = np.asarray(values) - np.asarray(reference)
    return np.ptp(d)


def _vary(coord, grid):
    out = []
    for v in grid:
        x = x_ref.copy()
        x[coord] = v
        out.append(model.log_posterior(x))
    return np.array(out)


def test_sigma_conditional_is_inverse_gamma_in_sigma_squared():
    grid = np.linspace(0.1, 1.0, 30)
    phi, mu, h = x_ref[PHI], x_ref[MU], x_ref[H0:]
    e = h[1:] - mu - phi * (h[:-1] - mu)
    ss = (1 - phi * phi) * (h[0] - mu) ** 2 + e @ e
    a = model.priors.sigma2_shape + model.T_len / 2
    b = model.priors.sigma2_scale + ss / 2
    ref = stats.invgamma.logpdf(grid**2, a, scale=b) + np.log(2 * grid)
    assert _constant_difference(_vary(SIGMA, grid), ref) < 1e-9


def test_mu_conditional_is_normal():
    grid = np.linspace(-3, 2, 30)
    m, v = model._mu_moments(x_ref)
    ref = stats.norm.logpdf(grid, m, math.sqrt(v))
    assert _constant_difference(_vary(MU, grid), ref) < 1e-9


def test_phi_conditional_matches_joint():
    grid = np.linspace(-0.95, 0.99, 40)
    ref = [model.phi_log_conditional(p, np.where(np.arange(model.dim) == PHI, p, x_ref)) for p in grid]
    assert _constant_difference(_vary(PHI, grid), ref) < 1e-9
    assert model.phi_log_conditional(1.0, x_ref) == -math.inf


@pytest.mark.parametrize("t", [0, 1, 4, 7])
def test_latent_conditional_matches_joint(t):
    grid = np.linspace(-4, 3, 40)
    sigma, phi, mu = x_ref[SIGMA], x_ref[PHI], x_ref[MU]
    m, v = latent_conditional(x_ref[H0:], y_small, t, sigma, phi, mu)
    ref = latent_log_conditional(grid, y_small[t], m, v)
    assert _constant_difference(_vary(H0 + t, grid), ref) < 1e-9


def test_vectorized_neighbour_moments_match_scalar():
    h = x_ref[H0:]
    idx = np.arange(model.T_len)
    m, v = _neighbour_moments(h, idx, *x_ref[:3])
    for t in idx:
        assert (m[t], v[t]) == pytest.approx(latent_conditional(h, y_small, t, *x_ref[:3]))


def test_single_observation_uses_stationary_law():
    m, v = latent_conditional(np.array([0.3]), np.array([1.0]), 0, 0.2, 0.5, -1.0)
    assert (m, v) == pytest.approx((-1.0, 0.04 / 0.75))


def test_proposal_close_to_conditional():
    grid = np.linspace(-6, 4, 4001)
    for y_t, m in [(0.3, -0.7), (1.5, -0.7), (0.05, 0.2)]:
        v = 0.15**2 / (1 + 0.97**2)
        pm, pv = proposal_moments(y_t, m, v)
        p = np.exp(latent_log_conditional(grid, y_t, m, v) - latent_log_conditional(pm, y_t, m, v))
        q = stats.norm.pdf(grid, pm, math.sqrt(pv))
        assert tv_distance(p / p.sum(), q / q.sum()) < 0.05


def test_latent_sampler_matches_conditional():
    # repeated even-site updates with every other coordinate held fixed
    sv = SvModel(np.array([0.1, 2.0, 0.8, 1.1, 0.4]))
    x = sv.initial_state(0.4, 0.8, -0.3)
    idx = np.array([0, 2, 4])
    rng = RngStream(21)
    draws = []
    for _ in range(20_000):
        new, _ = sv._latent_imh(x, idx, rng)
        x[H0 + idx] = new
        draws.append(new.copy())
    draws = np.array(draws)
    grid = np.linspace(-8, 6, 20_001)
    for j, t in enumerate(idx):
        m, v = latent_conditional(x[H0:], sv.y, t, 0.4, 0.8, -0.3)
        dens = np.exp(latent_log_conditional(grid, sv.y[t], m, v) - latent_log_conditional(m, sv.y[t], m, v))
        mean = np.sum(grid * dens) / dens.sum()
        sd = math.sqrt(np.sum((grid - mean) ** 2 * dens) / dens.sum())
        i_hat = inefficiency(draws[:, j], 200).i_hat
        assert abs(draws[:, j].mean() - mean) < 4 * sd * math.sqrt(i_hat / draws.shape[0])


def test_latent_acceptance_high():
    y = sv_simulate(200, -0.7, 0.97, 0.15, RngStream(22))[0]
    sv = SvModel(y)
    k = sv_gibbs_kernel(sv)
    x = sv.initial_state()
    rng = RngStream(23)
    for _ in range(300):
        x, _ = k.step(x, rng)
    assert 0.85 < latent_acceptance(k) < 1.0


def test_gibbs_keeps_support():
    sv = SvModel(y_small)
    k = sv_gibbs_kernel(sv)
    x = sv.initial_state()
    rng = RngStream(24)
    for _ in range(500):
        x, _ = k.step(x, rng)
        assert x[SIGMA] > 0 and abs(x[PHI]) < 1
        assert math.isfinite(sv.log_posterior(x))


def test_prior_means_closed_form():
    np.testing.assert_allclose(prior_means(SvPriors()), [0.11894, 0.86047, 0.0], atol=1e-4)


def test_one_sweep_keeps_prior_marginals():
    out = one_sweep_from_prior(20, 20_000, 25)
    ref = prior_means(SvPriors())
    se = out.std(axis=0) / math.sqrt(out.shape[0])
    assert np.all(np.abs(out.mean(axis=0) - ref) < 3 * se)
    # second moment of mu: prior variance 10
    assert abs((out[:, 2] ** 2).mean() - 10.0) < 3 * (out[:, 2] ** 2).std() / math.sqrt(out.shape[0])


def test_three_point_posterior_against_importance_reference():
    y = np.array([0.8, -1.6, 0.3])
    priors = SvPriors()
    # reference: prior draws reweighted by the likelihood
    g = RngStream(26).generator
    M = 400_000
    s2 = priors.sigma2_scale / g.gamma(priors.sigma2_shape, size=M)
    sig = np.sqrt(s2)
    phi = 2 * g.beta(priors.phi_a, priors.phi_b, size=M) - 1
    mu = math.sqrt(priors.mu_var) * g.standard_normal(M)
    h = np.empty((M, 3))
    h[:, 0] = mu + sig / np.sqrt(1 - phi**2) * g.standard_normal(M)
    for t in (1, 2):
        h[:, t] = mu + phi * (h[:, t - 1] - mu) + sig * g.standard_normal(M)
    logw = np.sum(-0.5 * h - 0.5 * y**2 * np.exp(-h), axis=1)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    ref = np.array([w @ sig, w @ phi, w @ mu])
    ref_se = np.sqrt([w**2 @ (v - r) ** 2 for v, r in zip((sig, phi, mu), ref)])

    sv = SvModel(y, priors)
    k = sv_gibbs_kernel(sv)
    x = sv.initial_state()
    rng = RngStream(27)
    n = 60_000
    out = np.empty((n, 3))
    for i in range(n):
        x, _ = k.step(x, rng)
        out[i] = x[:3]
    out = out[5000:]
    for j in range(3):
        s = out[:, j]
        se = s.std() * math.sqrt(inefficiency(s, 2000).i_hat / s.size)
        assert abs(s.mean() - ref[j]) < 3 * math.hypot(se, ref_se[j]) + 1e-3, j


def test_posterior_covers_simulation_truth():
    truth = {SIGMA: 0.15, PHI: 0.97, MU: -0.7}
    y = sv_simulate(500, truth[MU], truth[PHI], truth[SIGMA], RngStream(0).substream(99))[0]
    sv = SvModel(y)
    k = sv_gibbs_kernel(sv)
    x = sv.initial_state()
    rng = RngStream(28)
    out = []
    for i in range(15_000):
        x, _ = k.step(x, rng)
        if i >= 3000:
            out.append(x[:3].copy())
    out = np.array(out)
    for j, v in truth.items():
        lo, hi = np.quantile(out[:, j], [0.005, 0.995])
        assert lo <= v <= hi, (j, lo, hi)


def test_derived_beta():
    np.testing.assert_allclose(SvModel.derived("beta", np.array([0.0, 2.0])), [1.0, math.e])


# -- finite chains ------------------------------------------------------------

def test_two_state_flip_marginal():
    m = FiniteStateModel([[0.7, 0.3], [0.3, 0.7]])
    np.testing.assert_allclose(finite_state_exact_marginal(m, 1, 0), [0.7, 0.3])
    assert tv_distance(finite_state_exact_marginal(m, 50, 0), [0.5, 0.5]) < 1e-6


def test_identity_kernel_marginal():
    m = FiniteStateModel(np.eye(3))
    np.testing.assert_array_equal(finite_state_exact_marginal(m, 20, 2), [0, 0, 1])


def test_metropolis_matrix_has_target_as_stationary_law():
    pi = np.arange(1, 7) / 21.0
    P = metropolis_matrix(pi, ring_proposal(6, lazy=0.2))
    np.testing.assert_allclose(stationary_distribution(P), pi, atol=1e-12)
    np.testing.assert_allclose(pi[:, None] * P, (pi[:, None] * P).T, atol=1e-15)


def test_finite_step_frequencies():
    m = FiniteStateModel([[0.2, 0.5, 0.3], [1, 0, 0], [0, 0, 1]])
    rng = RngStream(29)
    nxt = [int(m.step(np.array([0.0]), rng)[0][0]) for _ in range(20_000)]
    counts = np.bincount(nxt, minlength=3)
    assert stats.chisquare(counts, 20_000 * np.array([0.2, 0.5, 0.3])).pvalue > 0.001


def test_finite_model_validation():
    with pytest.raises(ValueError):
        FiniteStateModel([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ValueError):
        FiniteStateModel([[1.0, 0.0]])


def test_tempered_densities_halve_log_density():
    mix = GaussianMixture([0.3, 0.7], [-4.0, 4.0], [0.5, 0.5])
    hot = mix.tempered(2.0)
    for v in np.linspace(-8, 8, 33):
        x = np.array([v])
        assert hot.eval(x) == pytest.approx(0.5 * mix.eval(x), rel=1e-12)
    fm = FiniteStateModel(metropolis_matrix(np.arange(1, 7) / 21.0, ring_proposal(6)))
    for s in range(6):
        x = np.array([float(s)])
        assert fm.log_density(2.0).eval(x) == pytest.approx(0.5 * fm.log_density().eval(x))
    assert fm.log_density().eval(np.array([2.5])) == -math.inf


def test_mixture_density_normalised():
    mix = GaussianMixture([0.3, 0.7], [-4.0, 4.0], [0.5, 0.5])
    grid = np.linspace(-10, 10, 20_001)
    dens = np.exp([mix.eval(np.array([v])) for v in grid])
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(mix.occupancy([-4.1, 3.9, 4.2, 0.5]), [0.25, 0.75])
