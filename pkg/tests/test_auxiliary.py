import math

import numpy as np
import pytest
from scipy import stats

from pastmc.auxiliary import (
    AuxConfig,
    AuxStreams,
    EnergyPartition,
    WeightedReservoir,
    check_weights,
    equi_energy_step,
    importance_log_weight,
    reservoir_draw,
    reservoir_push,
    run_importance_resampling,
)
from pastmc.core import LogDensity, RngStream, SamplerError, run_chain
from pastmc.diagnostics import tv_distance
from pastmc.kernels import RwmKernel
from pastmc.models import GaussianMixture, NormalToy
from pastmc.models.finite import (
    FiniteStateModel,
    metropolis_matrix,
    replicate_importance_resampling,
    ring_proposal,
)

normal = NormalToy()
half_normal = LogDensity(1, lambda x: -0.25 * float(x[0]) ** 2, name="N(0,2)")


class Stay:
    def step(self, x, rng):
        return x, True


def _draw_counts(r, n_draws, seed, k):
    rng = RngStream(seed)
    idx = np.array([r.draw_index(rng) for _ in range(n_draws)])
    return np.bincount(idx, minlength=k)


# -- weights ------------------------------------------------------------------

def test_weight_is_zero_for_identical_densities():
    assert importance_log_weight(np.array([1.7]), normal, normal) == 0.0


def test_weight_arithmetic():
    h = LogDensity(1, lambda x: -2.0)
    h0 = LogDensity(1, lambda x: -0.5)
    assert importance_log_weight(np.zeros(1), h, h0) == pytest.approx(-1.5)


def test_weight_against_tempered_density_is_half_log_h():
    for v in (-3.0, 0.0, 0.4, 2.5):
        x = np.array([v])
        assert importance_log_weight(x, normal, half_normal) == pytest.approx(0.5 * normal.eval(x))


def test_weight_outside_aux_support_raises():
    h0 = LogDensity(1, lambda x: -math.inf)
    with pytest.raises(SamplerError, match="auxiliary support"):
        importance_log_weight(np.zeros(1), normal, h0)


# -- reservoir ----------------------------------------------------------------

def test_singleton_reservoir_returns_its_point():
    r = WeightedReservoir(1)
    reservoir_push(r, np.array([2.5]), -3.0)
    rng = RngStream(0)
    assert all(reservoir_draw(r, rng)[0] == 2.5 for _ in range(20))


def test_reservoir_draws_by_weight():
    r = WeightedReservoir(1)
    r.push(np.array([0.0]), math.log(1.0))
    r.push(np.array([1.0]), math.log(3.0))
    counts = _draw_counts(r, 40_000, 5, 2)
    assert stats.chisquare(counts, 40_000 * np.array([0.25, 0.75])).pvalue > 0.001


def test_reservoir_equal_weights_is_uniform():
    r = WeightedReservoir(1, capacity=8)  # forces growth
    for i in range(1000):
        r.push(np.array([float(i)]), 0.7)
    counts = _draw_counts(r, 50_000, 6, 1000)
    assert stats.chisquare(counts).pvalue > 0.001


def test_reservoir_survives_large_weight_range():
    r = WeightedReservoir(1, capacity=2)
    r.push(np.array([0.0]), -500.0)
    r.push(np.array([1.0]), 500.0)
    r.push(np.array([2.0]), 500.0)
    counts = _draw_counts(r, 4000, 7, 3)
    assert counts[0] == 0
    assert abs(counts[1] - counts[2]) < 300


def test_reservoir_rejects_nan_and_inf_weights():
    r = WeightedReservoir(1)
    for bad in (math.nan, math.inf):
        with pytest.raises(ValueError):
            r.push(np.zeros(1), bad)


def test_zero_weight_point_never_drawn():
    r = WeightedReservoir(1)
    r.push(np.array([9.0]), -math.inf)
    r.push(np.array([1.0]), 0.0)
    counts = _draw_counts(r, 2000, 1, 2)
    assert counts[0] == 0


def test_empty_reservoir_raises():
    with pytest.raises(SamplerError):
        WeightedReservoir(1).draw(RngStream(0))
    r = WeightedReservoir(1)
    r.push(np.zeros(1), -math.inf)
    with pytest.raises(SamplerError):
        r.draw(RngStream(0))


def test_energy_partition_cells():
    p = EnergyPartition([-2.0, -1.0])
    assert p.n_cells == 3
    assert [p.cell(v) for v in (-5.0, -2.0, -1.5, -1.0, 3.0)] == [0, 1, 1, 2, 2]
    with pytest.raises(ValueError):
        EnergyPartition([1.0, 1.0])


def test_partition_from_samples_is_equal_probability():
    v = RngStream(3).normal(10_000)
    p = EnergyPartition.from_samples(v, 4)
    cells = np.array([p.cell(x) for x in v])
    np.testing.assert_allclose(np.bincount(cells) / v.size, 0.25, atol=0.01)


# -- runners ------------------------------------------------------------------

def _toy_cfg(theta, variant="importance", partition=None, aux_kernel=None):
    return AuxConfig(
        theta=theta,
        main_kernel=RwmKernel(normal, 0.5),
        aux_kernel=aux_kernel or RwmKernel(half_normal, 1.4),
        target=normal,
        aux_target=half_normal,
        variant=variant,
        partition=partition,
    )


def test_theta_one_reproduces_plain_chain_exactly():
    cfg = _toy_cfg(1.0)
    main, _ = run_importance_resampling(cfg, 2000, [0.3], [0.0], RngStream(17))
    plain = run_chain(cfg.main_kernel, 2000, [0.3], RngStream(17))
    np.testing.assert_array_equal(main.states, plain.states)
    np.testing.assert_array_equal(main.accepted, plain.accepted)
    assert main.resample_events == []


def test_first_jump_uses_initial_aux_state():
    main, _ = run_importance_resampling(_toy_cfg(0.0), 5, [0.0], [1.25], RngStream(2))
    assert main.states[0, 0] == 1.25
    assert main.resample_events == [1, 2, 3, 4, 5]


def test_frozen_single_point_reservoir():
    cfg = _toy_cfg(0.0, aux_kernel=Stay())
    main, aux = run_importance_resampling(cfg, 200, [0.0], [-0.8], RngStream(4))
    assert np.all(main.states == -0.8)
    assert np.all(aux.states == -0.8)


def test_same_seed_same_trace_and_different_seed_differs():
    cfg = _toy_cfg(0.7)
    a, _ = run_importance_resampling(cfg, 500, [0.0], [0.0], RngStream(8))
    b, _ = run_importance_resampling(cfg, 500, [0.0], [0.0], RngStream(8))
    c, _ = run_importance_resampling(cfg, 500, [0.0], [0.0], RngStream(9))
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_aux_config_validation():
    with pytest.raises(ValueError):
        _toy_cfg(1.5)
    with pytest.raises(ValueError):
        _toy_cfg(0.5, variant="equi_energy")
    with pytest.raises(ValueError):
        _toy_cfg(0.5, variant="other")


def _finite_pair():
    target = np.arange(1, 7) / 21.0
    model = FiniteStateModel(metropolis_matrix(target, ring_proposal(6, lazy=0.2)))
    return model


def _theta_zero_oracle(model, n, x0_aux):
    # at step n the main chain is a uniform pick among aux states 0..n-1
    v = np.zeros(model.n_states)
    v[x0_aux] = 1.0
    acc = np.zeros_like(v)
    for _ in range(n):
        acc += v
        v = v @ model.P
    return acc / n


def test_theta_zero_equal_densities_matches_history_average():
    model = _finite_pair()
    n = 150
    final = replicate_importance_resampling(model, model, np.zeros(6), 0.0, n, 20_000, 0, 0, RngStream(50))
    emp = np.bincount(final, minlength=6) / final.size
    assert tv_distance(emp, _theta_zero_oracle(model, n, 0)) < 0.05


def test_vectorized_importance_replicas_agree_with_scalar_runner():
    model = _finite_pair()
    aux_model = FiniteStateModel(np.full((6, 6), 1 / 6))
    h, h0 = model.log_density(), aux_model.log_density()
    logw = np.log(model.pi) - np.log(aux_model.pi)
    cfg = AuxConfig(0.6, model, aux_model, h, h0)
    n, R = 40, 2000
    fast = replicate_importance_resampling(model, aux_model, logw, 0.6, n, R, 0, 0, RngStream(60))
    slow = np.array([
        int(run_importance_resampling(cfg, n, [0.0], [0.0], RngStream(61).substream(r))[0].states[-1, 0])
        for r in range(R)
    ])
    table = np.array([np.bincount(fast, minlength=6), np.bincount(slow, minlength=6)])
    assert stats.chi2_contingency(table).pvalue > 0.001


def test_importance_variant_ergodic_average():
    main, _ = run_importance_resampling(_toy_cfg(0.5), 500_000, [0.0], [0.0], RngStream(70))
    x = main.states[:, 0]
    assert abs(x.mean()) < 0.02
    assert abs((x**2).mean() - 1.0) < 0.03


# -- equi-energy --------------------------------------------------------------

def _ee_setup(h, h0, points, boundaries=(-10.0,)):
    part = EnergyPartition(boundaries)
    r = WeightedReservoir(1, partition=part)
    for p in points:
        x = np.array([p])
        r.push(x, h.eval(x) - h0.eval(x), h.eval(x))
    cfg = AuxConfig(0.0, RwmKernel(h, 0.5), Stay(), h, h0, variant="equi_energy", partition=part)
    return r, cfg


def test_equi_energy_accepts_always_when_densities_match():
    r, cfg = _ee_setup(normal, normal, [0.5, -1.0, 2.0])
    streams = AuxStreams.from_parent(RngStream(1))
    x = np.array([0.0])
    for _ in range(200):
        mv = equi_energy_step(x, np.zeros(1), r, cfg, streams, push=False)
        assert mv.accepted and mv.resampled
        x = mv.state


def test_equi_energy_acceptance_rate_matches_weight_ratio():
    h0 = LogDensity(1, lambda x: 0.2 * float(x[0]))  # log w(0) = 0, log w(1) = -0.7
    r, cfg = _ee_setup(normal, h0, [1.0])
    streams = AuxStreams.from_parent(RngStream(2))
    n = 20_000
    acc = sum(equi_energy_step(np.zeros(1), np.zeros(1), r, cfg, streams, push=False).accepted for _ in range(n))
    p = math.exp(-0.7)
    assert p == pytest.approx(0.4966, abs=1e-4)
    assert abs(acc / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_equi_energy_never_crosses_rings():
    part_bounds = (-2.0, -0.5)
    points = np.linspace(-3, 3, 25)
    r, cfg = _ee_setup(normal, half_normal, points, part_bounds)
    part = cfg.partition
    streams = AuxStreams.from_parent(RngStream(3))
    for start in (0.1, 1.2, 2.6):
        x = np.array([start])
        c = part.cell(normal.eval(x))
        for _ in range(100):
            mv = equi_energy_step(x, np.zeros(1), r, cfg, streams, push=False)
            assert part.cell(normal.eval(mv.state)) == c


def test_equi_energy_empty_ring_counts_as_rejection():
    r, cfg = _ee_setup(normal, half_normal, [0.0], (-1.0,))
    main, _ = run_importance_resampling(
        AuxConfig(0.0, cfg.main_kernel, Stay(), normal, half_normal, "equi_energy", cfg.partition),
        50, [3.0], [0.0], RngStream(5))
    assert np.all(main.states == 3.0)
    assert main.config_echo["empty_cell_rejections"] == 50


# -- weight check -------------------------------------------------------------

def test_check_weights_warns_for_narrow_target():
    narrow = LogDensity(1, lambda x: -0.5 * float(x[0]) ** 2 / 1e-4)
    with pytest.warns(RuntimeWarning, match="unbounded"):
        rep = check_weights(RwmKernel(normal, 1.0), narrow, normal, [0.0], RngStream(0), n=2000)
    assert not rep["bounded"]


def test_check_weights_bounded_for_tempered_mixture():
    mix = GaussianMixture([0.3, 0.7], [-4.0, 4.0], [0.5, 0.5])
    hot = mix.tempered(2.0)
    rep = check_weights(RwmKernel(hot, 4.0), mix, hot, [4.0], RngStream(0), n=5000)
    assert rep["bounded"]
    assert rep["gap"] <= rep["limit"]
