"""Units: RNG streams, metrics, constants, environments, simulation."""

import math

import numpy as np
import pytest

from mcre_lab import (
    ChainSpec,
    ContractionParams,
    CouplingConstants,
    EnvironmentSpec,
    Metric,
    NoiseSpec,
    RngStream,
    derive_constants,
    normalize_assumption,
    simulate_backward,
    simulate_forward,
    simulate_forward_batch,
)


def test_rng_stream_deterministic():
    a = RngStream(123).generator().standard_normal(5)
    b = RngStream(123).generator().standard_normal(5)
    assert np.array_equal(a, b)


def test_rng_substreams_distinct():
    s = RngStream(7)
    a = s.substream(0).generator().standard_normal(100)
    b = s.substream(1).generator().standard_normal(100)
    assert not np.array_equal(a, b)
    # substream derivation is itself deterministic
    c = RngStream(7).substream(1).generator().standard_normal(100)
    assert np.array_equal(b, c)


def test_metric_orders():
    m2 = Metric()
    assert m2.distance([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0)
    minf = Metric(order=np.inf)
    assert minf.distance([3.0, 4.0], [0.0, 0.0]) == pytest.approx(4.0)
    mt = Metric(transform=np.array([[2.0, 0.0], [0.0, 1.0]]))
    assert mt.distance([1.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)


def test_derive_constants_formulas():
    c = derive_constants(ContractionParams(rho=0.5, R=1.0), K=2.5)
    assert c.rho_prime == pytest.approx(0.75)
    assert c.R_prime == pytest.approx(4.0)
    assert c.N == 8
    assert c.k_star(100) == 50 // c.N


def test_derive_constants_minimality_random():
    gen = RngStream(2024).generator()
    for _ in range(200):
        rho = gen.uniform(0.05, 0.95)
        R = gen.uniform(0.01, 5.0)
        K = gen.uniform(0.01, 5.0)
        c = derive_constants(ContractionParams(rho=rho, R=R), K)
        bound = c.R_prime / (4.0 * c.R_prime + 4.0 * K)
        assert c.rho_prime ** (c.N - 1) <= bound
        if c.N >= 2:
            assert c.rho_prime ** (c.N - 2) > bound


def test_derive_constants_rejects_degenerate():
    with pytest.raises(ValueError):
        derive_constants(ContractionParams(rho=0.5, R=1.0), K=0.0)
    with pytest.raises(ValueError):
        derive_constants(ContractionParams(rho=0.5, R=0.0), K=1.0)


def test_k_star_schedule():
    c = CouplingConstants(rho_prime=0.75, R_prime=4.0, K=2.5, N=8)
    assert c.k_star(16) == 1
    assert c.k_star(15) == 1
    assert c.k_star(14) == 0


def test_normalize_assumption_forms():
    u = normalize_assumption("unilip", 0.5, 1.0)
    assert (u.rho, u.R) == (0.5, 1.0)
    d = normalize_assumption("drift", 0.5, 1.0)
    assert d.rho == pytest.approx(0.75)
    assert d.R == pytest.approx(4.0)
    cl = normalize_assumption("con+lip", 0.5, 1.0, L=2.0)
    assert cl.R == pytest.approx(4.0)
    with pytest.raises(ValueError):
        normalize_assumption("unilip", 1.5, 1.0)
    with pytest.raises(ValueError):
        normalize_assumption("con+lip", 0.5, 1.0)


def test_environment_shapes_and_kinds():
    gen = RngStream(1).generator()
    iid = EnvironmentSpec(kind="iid")
    assert iid.sample_windows(gen, 3, 5).shape == (3, 5, 1)
    ar1 = EnvironmentSpec(kind="gaussian_ar1", phi=0.5)
    assert ar1.sample_windows(gen, 3, 5).shape == (3, 5, 1)
    lp = EnvironmentSpec(kind="linear_process", b=np.array([1.0, 0.5]))
    assert lp.sample_windows(gen, 3, 5).shape == (3, 5, 1)
    sv = EnvironmentSpec(kind="stochvol", b=np.array([1.0, 0.5]))
    assert sv.sample_windows(gen, 3, 5).shape == (3, 5, 2)
    emp = EnvironmentSpec(kind="empirical", data=np.arange(4.0))
    assert emp.sample_windows(gen, 3, 5).shape == (3, 5, 1)


def test_environment_validation():
    with pytest.raises(ValueError):
        EnvironmentSpec(kind="gaussian_ar1", phi=1.0)
    with pytest.raises(ValueError):
        EnvironmentSpec(kind="linear_process")
    with pytest.raises(ValueError):
        EnvironmentSpec(kind="empirical")
    gen = RngStream(1).generator()
    with pytest.raises(ValueError):
        EnvironmentSpec(kind="iid").__class__(kind="nope").sample_windows(gen, 1, 1)


def test_ar1_stationary_moments():
    gen = RngStream(9).generator()
    phi = 0.8
    w = EnvironmentSpec(kind="gaussian_ar1", phi=phi).sample_windows(gen, 20_000, 4)
    var = w[:, :, 0].var(axis=0)
    assert np.allclose(var, 1.0 / (1.0 - phi**2), rtol=0.05)
    corr = np.corrcoef(w[:, 0, 0], w[:, 1, 0])[0, 1]
    assert corr == pytest.approx(phi, abs=0.02)


def _toy_spec(rho=0.5):
    def update(y, x, e):
        return rho * np.asarray(y, dtype=float) + e

    return ChainSpec(
        dim_state=1,
        update=update,
        noise=NoiseSpec(dim=1, kind="gauss"),
        contraction=ContractionParams(rho=rho, R=0.1),
    )


def test_simulate_forward_shapes():
    spec = _toy_spec()
    env = EnvironmentSpec(kind="iid")
    traj = simulate_forward(spec, env, [1.0], 10, RngStream(3))
    assert traj.states.shape == (11, 1)
    assert traj.states[0, 0] == 1.0


def test_simulate_backward_matches_forward_law():
    spec = _toy_spec()
    env = EnvironmentSpec(kind="iid")
    f = simulate_forward(spec, env, [1.0], 10, RngStream(3))
    b = simulate_backward(spec, env, [1.0], 10, RngStream(3))
    # identical seed, time-homogeneous iid environment: same realization
    assert np.allclose(f.states, b.states)


def test_simulate_forward_batch_keep_modes():
    spec = _toy_spec()
    env = EnvironmentSpec(kind="iid")
    fin = simulate_forward_batch(spec, env, [0.0], 6, 40, RngStream(5))
    assert fin.shape == (40, 1)
    allst = simulate_forward_batch(spec, env, [0.0], 6, 40, RngStream(5), keep="all")
    assert allst.shape == (40, 7, 1)
    assert np.allclose(allst[:, -1, :], fin)


def test_noise_spec_kinds():
    gen = RngStream(0).generator()
    g = NoiseSpec(dim=2, kind="gauss")
    assert g.sample(gen, 7).shape == (7, 2)
    assert g.density(np.zeros((1, 2)))[0] == pytest.approx(1.0 / (2.0 * math.pi))
    z = NoiseSpec(dim=1, kind="zero")
    assert np.all(z.sample(gen, 4) == 0.0)
