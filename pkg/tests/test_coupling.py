"""Units: decomposition, single coupled steps, schedules, and campaigns."""

import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from mcre_lab import (
    CouplingConstants,
    InconsistentSpecError,
    RngStream,
    analytic_bound,
    couple_step,
    couple_step_samples,
    decompose,
    derive_constants,
    run_coupling,
    run_coupling_batch,
)
from mcre_lab.coupling import _build_decomposition, _far_prob_exact, attempt_steps
from mcre_lab.core import ContractionParams, NoiseSpec
from mcre_lab.models import AdditiveARModel, make_additive
from mcre_lab.verify import InvalidPairError

from conftest import random_pair_configs


def _zoo_config(zoo, name):
    entry = zoo[name]
    x, y1, y2 = entry.check_pair
    return entry, np.asarray(x, float), np.asarray(y1, float), np.asarray(y2, float)


# ---------------------------------------------------------------------------
# decomposition


def test_decompose_components_consistent(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    dec = decompose(entry.model, entry.minor, x, y1, y2)
    assert 0.0 < dec.eta_x <= 1.0
    assert 0.0 <= dec.c_bar < 1.0
    assert dec.eta_x + dec.c_bar <= 1.0
    assert 0.0 <= dec.nu_G <= 1.0


def test_decompose_far_probability_matches_closed_form():
    # mu = 0.5 y, sigma = 1, ell = 0, q = 0, q' = 1, K = 2.5:
    # far set = {e: |e| > 2.5 and |e - 0.5| > 2.5}
    def mu(y, x):
        return 0.5 * np.asarray(y, dtype=float)

    def sigma(x):
        return np.ones(np.asarray(x, dtype=float).shape[:-1])

    def ell(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (1,))

    model, _ = make_additive(mu, sigma, ell, rho=0.5, R=1.0, dim=1, nu_radius=1.0)
    x = np.array([[0.0]])
    got = float(_far_prob_exact(model, x, np.array([[0.0]]), np.array([[1.0]]), 2.5)[0])
    # exact by inclusion-exclusion on the union of two intervals
    phi = stats.norm.cdf
    inside = (phi(2.5) - phi(-2.5)) + (phi(3.0) - phi(-2.0)) - (phi(2.5) - phi(-2.0))
    assert got == pytest.approx(1.0 - inside, abs=1e-12)
    # Monte Carlo agreement
    gen = RngStream(8).generator()
    e = gen.standard_normal(1_000_000)
    mc = np.mean((np.abs(e) > 2.5) & (np.abs(e - 0.5) > 2.5))
    assert abs(got - mc) < 3.0 * math.sqrt(mc * (1 - mc) / 1e6)


def test_decompose_far_set_empties_as_K_grows(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    wide = dataclasses.replace(entry.minor, K=40.0)
    dec = decompose(entry.model, wide, x, y1, y2)
    assert dec.c_bar == pytest.approx(0.0, abs=1e-12)


def test_decompose_rejects_equal_pair(zoo):
    entry, x, y1, _ = _zoo_config(zoo, "additive_gaussian")
    with pytest.raises(InvalidPairError):
        decompose(entry.model, entry.minor, x, y1, y1)


def test_decompose_inconsistent_spec_raises(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    inflated = dataclasses.replace(
        entry.minor, eta=lambda x: np.full(np.asarray(x).shape[:-1], 0.95)
    )
    with pytest.raises(InconsistentSpecError):
        decompose(entry.model, inflated, x, y1, y2)


def test_residual_density_nonnegative_on_grid(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    dec = _build_decomposition(entry.model, entry.minor, x, y1, y2)
    grid = np.linspace(-4.0, 4.0, 401)[:, None]
    for q in (y1, y2):
        mu_d = entry.model.kernel_density(x, q, grid)
        nu_d = entry.minor.nu_density(x, y1, y2, grid) * dec.in_G(grid)
        resid = mu_d - dec.eta_x * nu_d
        assert np.all(resid >= -1e-12)


# ---------------------------------------------------------------------------
# single steps


def test_couple_step_equal_start_synchronous(zoo):
    entry, x, y1, _ = _zoo_config(zoo, "additive_gaussian")
    out = couple_step(entry.model, entry.minor, x, y1, y1, RngStream(1))
    assert out.case_taken == "identical-start"
    assert out.coupled
    assert np.array_equal(out.next_pair[0], out.next_pair[1])


def test_couple_step_far_start_synchronous(zoo):
    entry, x, y1, _ = _zoo_config(zoo, "additive_gaussian")
    far = y1 + 10.0 * entry.minor.pair_radius
    out = couple_step(entry.model, entry.minor, x, y1, far, RngStream(1))
    assert out.case_taken == "far-start-synchronous"


def test_nu_coupled_outputs_in_both_balls(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    out1, out2, cases = couple_step_samples(
        entry.model, entry.minor, x, y1, y2, 20_000, RngStream(2)
    )
    m = cases == "nu-coupled"
    assert np.any(m)
    assert np.array_equal(out1[m], out2[m])
    d1 = entry.minor.metric.distance(out1[m], y1)
    d2 = entry.minor.metric.distance(out1[m], y2)
    assert np.all(np.maximum(d1, d2) <= entry.minor.K + 1e-9)


def test_case_frequencies_match_decomposition(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    dec = _build_decomposition(entry.model, entry.minor, x, y1, y2)
    n = 50_000
    _, _, cases = couple_step_samples(entry.model, entry.minor, x, y1, y2, n, RngStream(3))
    p_nu = dec.eta_x * dec.nu_G
    for tag, p in (("nu-coupled", p_nu), ("far-excursion-synchronous", dec.c_bar)):
        freq = float(np.mean(cases == tag))
        assert abs(freq - p) < 5.0 * math.sqrt(p * (1 - p) / n)


def test_couple_step_marginals_match_kernel(zoo):
    entry, x, y1, y2 = _zoo_config(zoo, "additive_gaussian")
    out1, out2, _ = couple_step_samples(entry.model, entry.minor, x, y1, y2, 100_000, RngStream(4))
    gen = RngStream(5).generator()
    for q, out in ((y1, out1), (y2, out2)):
        direct = entry.model.update(q, x, entry.model.noise.sample(gen, 100_000))
        p = stats.ks_2samp(out[:, 0], np.ravel(direct)).pvalue
        assert p > 0.01


# ---------------------------------------------------------------------------
# schedule and analytic bound


def test_attempt_steps_schedule():
    c = CouplingConstants(rho_prime=0.75, R_prime=4.0, K=2.5, N=8)
    assert attempt_steps(c, 32) == [16 + 8 - 1, 16 + 16 - 1]
    assert attempt_steps(c, 14) == []


def test_analytic_bound_values():
    c = CouplingConstants(rho_prime=0.75, R_prime=4.0, K=2.5, N=8)
    n = 96  # k* = 6
    assert c.k_star(n) == 6
    eta_path = np.full(n, 0.2)
    got = analytic_bound(c, eta_path, d0=1e-6, n=n)
    assert got == pytest.approx(0.8**6)
    # indicator fires and the bound clamps to 1
    big = c.R_prime / c.rho_prime ** (n // 2) + 1.0
    assert analytic_bound(c, eta_path, d0=big, n=n) == 1.0
    # k* = 1 gives exactly (1 - eta)
    assert analytic_bound(c, np.full(16, 0.2), d0=1e-6, n=16) == pytest.approx(0.8)


def test_analytic_bound_missing_attempt_index():
    c = CouplingConstants(rho_prime=0.75, R_prime=4.0, K=2.5, N=8)
    with pytest.raises(ValueError):
        analytic_bound(c, np.full(10, 0.2), d0=0.1, n=32)


# ---------------------------------------------------------------------------
# trajectories


def test_noise_free_contraction_rate():
    # zero noise: the pair gap contracts by exactly rho each step
    def mu(y, x):
        return 0.5 * np.asarray(y, dtype=float)

    def sigma(x):
        return np.ones(np.asarray(x, dtype=float).shape[:-1])

    def ell(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (1,))

    model, minor = make_additive(mu, sigma, ell, rho=0.5, R=0.01, dim=1, nu_radius=1.0)
    model = dataclasses.replace(model, noise=NoiseSpec(dim=1, kind="zero"))
    from mcre_lab.core import EnvironmentSpec

    constants = CouplingConstants(rho_prime=0.75, R_prime=4.0, K=minor.K, N=10**6)
    run = run_coupling(model, minor, EnvironmentSpec(kind="iid"), [0.0], [1.0], 10,
                       RngStream(6), constants=constants)
    gaps = run.states_prime[:, 0] - run.states[:, 0]
    assert np.allclose(gaps, 0.5 ** np.arange(11), rtol=0, atol=0)


def test_run_coupling_absorption(zoo):
    entry = zoo["additive_gaussian"]
    c = derive_constants(entry.model.contraction, entry.minor.K)
    n = 4 * c.N
    met = 0
    for i in range(40):
        run = run_coupling(entry.model, entry.minor, entry.env, [-2.0], [2.0], n,
                           RngStream(100, (i,)))
        if run.meeting_time is not None:
            met += 1
            tail = slice(run.meeting_time, None)
            assert np.array_equal(run.states[tail], run.states_prime[tail])
    assert met > 0


def test_phase_one_containment(zoo):
    # d0 <= R'/rho'^{n/2} implies distance R' at the phase boundary
    entry = zoo["additive_gaussian"]
    c = derive_constants(entry.model.contraction, entry.minor.K)
    n = 2 * c.N
    for i in range(20):
        run = run_coupling(entry.model, entry.minor, entry.env, [-1.0], [1.0], n,
                           RngStream(200, (i,)))
        d0 = 2.0
        assert d0 <= c.R_prime / c.rho_prime ** (n // 2)
        gap = abs(run.states_prime[n // 2, 0] - run.states[n // 2, 0])
        assert gap <= c.R_prime + 1e-9


def test_batch_engine_matches_analytic_bound_shape(zoo):
    entry = zoo["additive_gaussian"]
    c = derive_constants(entry.model.contraction, entry.minor.K)
    n = 4 * c.N
    res = run_coupling_batch(entry.model, entry.minor, entry.env, [-1.0], [1.0], n,
                             2000, RngStream(7))
    assert res.replications == 2000
    assert res.failures == int(np.sum(res.failure_indicator))
    assert np.all((res.bounds >= 0.0) & (res.bounds <= 1.0))
    # eta is environment-independent for this model: bound is deterministic
    eta = float(entry.minor.eta(np.zeros((1, 1)))[0])
    assert np.allclose(res.bounds, (1.0 - eta) ** c.k_star(n))
    # domination with slack
    se = math.sqrt(res.failure_rate * (1 - res.failure_rate) / res.replications)
    assert res.failure_rate <= res.mean_bound + 4.0 * se


def test_batch_meeting_times_follow_schedule(zoo):
    entry = zoo["sgld_var"]
    c = derive_constants(entry.model.contraction, entry.minor.K)
    n = 6 * c.N
    res = run_coupling_batch(entry.model, entry.minor, entry.env, [0.3], [-0.3], n,
                             4000, RngStream(8))
    met = res.meeting_times[res.meeting_times > 0]
    valid = {n // 2 + k * c.N for k in range(1, c.k_star(n) + 1)}
    assert set(met.tolist()) <= valid


def test_batch_rejects_unsupported_models(zoo):
    entry = zoo["multivar_ar"]
    with pytest.raises(ValueError):
        run_coupling_batch(entry.model, entry.minor, entry.env, [0.0, 0.0], [0.1, 0.1],
                           10, 10, RngStream(9))


def test_scalar_and_batch_engines_agree_statistically(zoo):
    entry = zoo["additive_gaussian"]
    c = derive_constants(entry.model.contraction, entry.minor.K)
    n = 4 * c.N
    batch = run_coupling_batch(entry.model, entry.minor, entry.env, [-1.0], [1.0], n,
                               3000, RngStream(10))
    met_scalar = 0
    reps = 150
    for i in range(reps):
        run = run_coupling(entry.model, entry.minor, entry.env, [-1.0], [1.0], n,
                           RngStream(11, (i,)))
        met_scalar += run.meeting_time is not None
    p_b = 1.0 - batch.failure_rate
    p_s = met_scalar / reps
    se = math.sqrt(p_b * (1 - p_b) * (1 / 3000 + 1 / reps))
    assert abs(p_b - p_s) < 5.0 * se


def test_pathwise_bound_all_models(zoo):
    for entry in zoo.values():
        c = derive_constants(entry.model.contraction, entry.minor.K)
        cap = 4.0 * c.R_prime + 4.0 * entry.minor.K
        gen = RngStream(12).generator()
        for j, (x, q, qp) in enumerate(random_pair_configs(entry, 5, gen)):
            out1, out2, _ = couple_step_samples(
                entry.model, entry.minor, x, q, qp, 2000, RngStream(13, (j,))
            )
            d = entry.minor.metric.distance(out1, out2)
            assert float(np.max(d)) <= cap + 1e-9, entry.name
