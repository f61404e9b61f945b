import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_qrc.dynamics import (
    EvolutionConfig,
    LindbladModel,
    ReservoirParams,
    evolve_interval,
    expectation,
    ground_state,
    maximally_mixed,
    steady_state,
)
from cavity_qrc.operators import dag
from cavity_qrc.stochastic import (
    TrajectoryState,
    WienerIncrements,
    channel_names,
    channel_operators,
    ensemble_average,
    measurement_record,
    run_trajectory,
    sme_step,
    stochastic_superop_H,
)

GENTLE = ReservoirParams(1.0, (0.5,), (1.0,), 1.0, 10.0)


@pytest.fixture(scope="module")
def gentle():
    return LindbladModel.build(GENTLE, n_fock=3)


def random_density(d, rng):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = A @ dag(A)
    return rho / np.trace(rho).real


def deterministic_readouts(model, f, dt_sample, rho0):
    cfg = EvolutionConfig(dt_sample=dt_sample, fock_tail_threshold=1.0)
    rho, out = rho0, []
    for fk in f:
        rho = evolve_interval(rho, fk, cfg, model)
        out.append([expectation(rho, O) for O in model.ops.observables])
    return np.array(out)


def test_channels(gentle):
    assert channel_names(2) == ("Q", "P", "x1", "y1", "x2", "y2")
    ops = channel_operators(gentle)
    k = GENTLE.kappa_c
    np.testing.assert_allclose(ops[0] + dag(ops[0]), math.sqrt(k) * gentle.ops.Q, atol=1e-15)
    np.testing.assert_allclose(ops[1] + dag(ops[1]), math.sqrt(k) * gentle.ops.P, atol=1e-15)


def test_innovation_superoperator_on_vacuum(gentle):
    rho = ground_state(gentle.space)
    a = math.sqrt(GENTLE.kappa_c) * gentle.ops.c
    assert np.abs(stochastic_superop_H(rho, a)).max() == 0


def test_innovation_on_quadrature_eigenstate():
    model = LindbladModel.build(ReservoirParams(1.0, (), (), 1.0, 1.0), n_fock=4)
    a = model.ops.c
    w, v = np.linalg.eigh(a + dag(a))
    psi = v[:, 2]
    rho = np.outer(psi, psi.conj())
    out = stochastic_superop_H(rho, a)
    assert abs(np.trace(out)) < 1e-14


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_innovation_is_traceless(seed):
    model = LindbladModel.build(ReservoirParams(40.0, (20.0, 0.0), (30.0, 10.0)), n_fock=3)
    rho = random_density(model.space.dim, np.random.default_rng(seed))
    for a in channel_operators(model):
        out = stochastic_superop_H(rho, a)
        assert abs(np.trace(out)) < 1e-12
        assert np.abs(out - dag(out)).max() < 1e-12


def test_noise_free_step_is_euler_step(gentle):
    rho = random_density(gentle.space.dim, np.random.default_rng(0))
    dt = 1e-3
    new = sme_step(TrajectoryState(rho), 0.4, dt, gentle, WienerIncrements.zeros(1))
    np.testing.assert_allclose(new.rho, rho + dt * gentle.rhs(rho, 0.4), atol=1e-15)
    assert new.t == dt
    means = [expectation(rho, O) for O in gentle.ops.observables]
    np.testing.assert_allclose(new.records[0], means, atol=1e-15)


def test_step_renormalizes_trace(gentle):
    rng = np.random.default_rng(1)
    state = TrajectoryState(maximally_mixed(gentle.space))
    for _ in range(50):
        state = sme_step(state, 0.7, 1e-3, gentle, WienerIncrements.draw(rng, 1, 1e-3))
        assert np.trace(state.rho).real == pytest.approx(1.0, abs=1e-15)
        assert np.abs(state.rho - dag(state.rho)).max() < 1e-15


def test_record_examples(gentle):
    rho = random_density(gentle.space.dim, np.random.default_rng(2))
    assert measurement_record(rho, "Q", 0.0, 1e-3, gentle) == expectation(rho, gentle.ops.Q)
    r = measurement_record(TrajectoryState(rho), "y1", 2e-3, 1e-3, gentle)
    assert r == pytest.approx(expectation(rho, gentle.ops.sigma_y[0]) + 2.0)
    with pytest.raises(ValueError):
        measurement_record(rho, "z1", 0.0, 1e-3, gentle)


def test_increment_variance_scales_with_dt(gentle):
    rho = maximally_mixed(gentle.space)
    variances = []
    for dt in (1e-3, 4e-3):
        rng = np.random.default_rng(3)
        rec = np.array([measurement_record(rho, "P", WienerIncrements.draw(rng, 1, dt).dW_P, dt, gentle)
                        for _ in range(20000)])
        variances.append(np.var(rec * dt))
    assert variances[0] == pytest.approx(1e-3, rel=0.05)
    assert variances[1] / variances[0] == pytest.approx(4.0, rel=0.05)


def test_batched_path_matches_single_steps(gentle):
    f = np.array([0.3, 0.9])
    seq = np.random.SeedSequence(7)
    rho0 = maximally_mixed(gentle.space)
    readouts, _ = run_trajectory(gentle, f, 0.01, seq, dt=1e-3, rho0=rho0)
    noise = np.random.default_rng(seq).standard_normal((20, 4)) * math.sqrt(1e-3)
    state = TrajectoryState(rho0)
    for k, fk in enumerate(f):
        for s in range(10):
            state = sme_step(state, fk, 1e-3, gentle, WienerIncrements.from_vector(noise[10 * k + s]))
        vals = [expectation(state.rho, O) for O in gentle.ops.observables]
        np.testing.assert_allclose(readouts[k], vals, atol=1e-13)


def test_single_trajectory_ensemble(gentle):
    f = np.array([0.2, 0.5, 0.8])
    e = ensemble_average(gentle, f, 0.01, M=1, seed=4, rho0=maximally_mixed(gentle.space))
    r, rec = run_trajectory(gentle, f, 0.01, np.random.SeedSequence(4).spawn(1)[0],
                            rho0=maximally_mixed(gentle.space))
    np.testing.assert_array_equal(e.mean, r)
    np.testing.assert_array_equal(e.mean_records, rec)
    assert np.all(np.isnan(e.stderr))


def test_ensemble_is_deterministic_and_batch_independent(gentle):
    f = np.array([0.2, 0.5])
    kw = dict(rho0=maximally_mixed(gentle.space), seed=9)
    a = ensemble_average(gentle, f, 0.01, 30, **kw)
    b = ensemble_average(gentle, f, 0.01, 30, **kw)
    c = ensemble_average(gentle, f, 0.01, 30, batch=7, **kw)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.mean, c.mean)
    np.testing.assert_array_equal(a.stderr, c.stderr)


def test_trajectory_dump(gentle, tmp_path):
    ensemble_average(gentle, [0.5], 0.005, 2, seed=1, rho0=maximally_mixed(gentle.space), dump_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["trajectory_000000.csv", "trajectory_000001.csv"]
    data = np.loadtxt(tmp_path / files[0], delimiter=",", skiprows=1)
    assert data.shape == (5, 5)


def test_bare_cavity_ensemble_mean_matches_master_equation():
    model = LindbladModel.build(ReservoirParams(1.0, (), (), 1.0, 4.0), n_fock=4)
    rho0 = maximally_mixed(model.space)
    f = np.linspace(0.2, 1.0, 10)
    e = ensemble_average(model, f, 0.05, 1000, seed=2, rho0=rho0)
    ref = deterministic_readouts(model, f, 0.05, rho0)
    z = np.abs(e.mean[:, 0] - ref[:, 0]) / e.stderr[:, 0]
    assert z.max() < 5


def test_time_averaged_record_tracks_steady_expectation(gentle):
    f = 0.6
    rho_ss = steady_state(gentle, f)
    T = 5.0
    e = ensemble_average(gentle, [f], T, 40, seed=5, rho0=rho_ss, keep_trajectories=True)
    ref = [expectation(rho_ss, O) for O in gentle.ops.observables]
    # one interval of length T: the record average has standard deviation ~1/sqrt(T) per trajectory
    se = 1.0 / math.sqrt(T * 40)
    assert np.all(np.abs(e.mean_records[0] - ref) < 5 * se)
