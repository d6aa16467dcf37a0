"""Pairwise coupling construction for additive-noise kernels and the
two-phase schedule (contract first, then periodic coupling attempts).

``couple_step`` realizes the three-component kernel decomposition
(eta nu + c_bar chi + residual); ``run_coupling`` drives the schedule and
records the analytic failure bound along the realized environment path.
``run_coupling_batch`` is the vectorized engine used by the campaigns.

The coupled component is the part of nu supported off the far-excursion
images of both start points (the set G below).  Wherever nu's support
lies within distance K of both starts -- the construction's containment
premise, valid near the reference point -- G covers all of nu and the
split is exactly the three-component one; elsewhere the coupled mass
degrades gracefully to eta * nu(G) while one-step marginals stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.stats import norm

from .core import CouplingConstants, RngStream, derive_constants
from .verify import MinorizationSpec

REJECTION_CAP = 1_000_000
_MC_CBAR_DRAWS = 250_000
_MC_NUG_DRAWS = 100_000
_cbar_cache: dict = {}


class InconsistentSpecError(ValueError):
    """eta(x) + c_bar > 1: the declared eta or K cannot be correct."""


class DegenerateDecompositionError(RuntimeError):
    """A rejection sampler exceeded its proposal cap."""


# ---------------------------------------------------------------------------
# far-set probability


def _exact_1d_supported(model) -> bool:
    return (
        model.dim == 1
        and model.sigma_scalar is not None
        and model.noise.kind == "gauss"
        and model.metric.transform is None
    )


def _far_prob_exact(model, x, q, qp, K):
    """P(e in N(x,q,q')) for 1-D Gaussian noise with scalar sigma, via
    normal-CDF arithmetic over the complement of two intervals.

    All arguments are batched: x is (batch, env_dim), q and qp (batch, 1).
    """
    s = np.asarray(model.sigma_scalar(x), dtype=float)
    cq = np.asarray(model.drift(q, x), dtype=float)[..., 0]
    cqp = np.asarray(model.drift(qp, x), dtype=float)[..., 0]
    q0 = np.asarray(q, dtype=float)[..., 0]
    qp0 = np.asarray(qp, dtype=float)[..., 0]
    # e keeps the q-copy within K iff e in [lo1, hi1]; likewise for q'
    lo1, hi1 = (q0 - cq - K) / s, (q0 - cq + K) / s
    lo2, hi2 = (qp0 - cqp - K) / s, (qp0 - cqp + K) / s
    p1 = norm.cdf(hi1) - norm.cdf(lo1)
    p2 = norm.cdf(hi2) - norm.cdf(lo2)
    ilo = np.maximum(lo1, lo2)
    ihi = np.minimum(hi1, hi2)
    pint = np.clip(norm.cdf(ihi) - norm.cdf(ilo), 0.0, None) * (ihi > ilo)
    return np.clip(1.0 - (p1 + p2 - pint), 0.0, 1.0)


def _far_indicator(model, minor, x, q, qp):
    """Membership map for N(x,q,q') = {e: d(f(q,x,e),q) > K and
    d(f(q',x,e),q') > K}; e is batched (size, dim)."""

    def indicator(e):
        z1 = np.atleast_2d(np.asarray(model.update(q, x, e), dtype=float))
        z2 = np.atleast_2d(np.asarray(model.update(qp, x, e), dtype=float))
        far1 = minor.metric.distance(z1, np.asarray(q, dtype=float)) > minor.K
        far2 = minor.metric.distance(z2, np.asarray(qp, dtype=float)) > minor.K
        return far1 & far2

    return indicator


def _far_prob_mc(model, minor, x, q, qp):
    key = (
        model.name,
        tuple(np.round(np.asarray(x, dtype=float).ravel(), 6)),
        tuple(np.round(np.asarray(q, dtype=float).ravel(), 6)),
        tuple(np.round(np.asarray(qp, dtype=float).ravel(), 6)),
        round(minor.K, 6),
    )
    if key in _cbar_cache:
        return _cbar_cache[key]
    gen = np.random.default_rng(np.random.SeedSequence(entropy=abs(hash(key))))
    e = model.noise.sample(gen, _MC_CBAR_DRAWS)
    val = float(np.mean(_far_indicator(model, minor, x, q, qp)(e)))
    _cbar_cache[key] = val
    return val


# ---------------------------------------------------------------------------
# the good set G (nu support off both far images)


def _in_G_map(model, minor, x, q, qp):
    """Membership map z -> bool for G = complement of both far-excursion
    images; z batched (size, dim).  Uses the noise pullback, valid because
    the supported kernels are additive with invertible sigma."""
    far = _far_indicator(model, minor, x, q, qp)

    def in_G(z):
        e1 = model.noise_pullback(x, q, z)
        e2 = model.noise_pullback(x, qp, z)
        return ~far(e1) & ~far(e2)

    return in_G


def _nu_G_mass_exact(model, minor, x, q, qp):
    """nu(G) for 1-D scalar-sigma models by interval arithmetic; all
    arguments batched as in _far_prob_exact.  Returns (batch,)."""
    K = minor.K
    r = minor.nu_radius
    q0 = np.asarray(q, dtype=float)[..., 0]
    qp0 = np.asarray(qp, dtype=float)[..., 0]
    cq = np.asarray(model.drift(q, x), dtype=float)[..., 0]
    cqp = np.asarray(model.drift(qp, x), dtype=float)[..., 0]
    delta = cqp - cq
    c = np.asarray(minor.nu_center(x, q, qp), dtype=float)[..., 0]
    # z avoids image_q(N) iff |z - q| <= K or |z - (qp - delta)| <= K;
    # z avoids image_q'(N) iff |z - (q + delta)| <= K or |z - qp| <= K
    a_centers = np.stack([q0, qp0 - delta], axis=-1)
    b_centers = np.stack([q0 + delta, qp0], axis=-1)
    los = np.maximum(a_centers[..., :, None] - K, b_centers[..., None, :] - K)
    his = np.minimum(a_centers[..., :, None] + K, b_centers[..., None, :] + K)
    los = np.maximum(los, (c - r)[..., None, None]).reshape(*q0.shape, 4)
    his = np.minimum(his, (c + r)[..., None, None]).reshape(*q0.shape, 4)
    order = np.argsort(los, axis=-1)
    los = np.take_along_axis(los, order, axis=-1)
    his = np.take_along_axis(his, order, axis=-1)
    covered = np.zeros_like(q0)
    cur_end = np.full_like(q0, -np.inf)
    for j in range(4):
        lo, hi = los[..., j], his[..., j]
        covered += np.clip(hi - np.maximum(lo, cur_end), 0.0, None) * (hi > lo)
        cur_end = np.maximum(cur_end, np.where(hi > lo, hi, cur_end))
    return np.clip(covered / (2.0 * r), 0.0, 1.0)


def _nu_G_mass_mc(minor, in_G, x, q, qp):
    gen = np.random.default_rng(
        np.random.SeedSequence(
            entropy=abs(hash(tuple(np.round(np.concatenate(
                [np.ravel(x), np.ravel(q), np.ravel(qp)]), 6))))
        )
    )
    z = minor.nu_sampler(x, q, qp, gen, _MC_NUG_DRAWS)
    return float(np.mean(in_G(z)))


# ---------------------------------------------------------------------------
# decomposition


@dataclass
class CouplingDecomposition:
    """One-step kernel split eta nu + c_bar chi + (1 - eta - c_bar) residual.

    chi is the law of the synchronous pair on the far-excursion noise set;
    residual_samplers draw the leftover component for each start point.
    ``nu_G`` is the nu mass off both far images (1 under containment);
    the realized coupled mass is eta_x * nu_G.
    """

    eta_x: float
    c_bar: float
    far_set_indicator: Callable[[np.ndarray], np.ndarray]
    nu_sampler: Callable[[np.random.Generator, int], np.ndarray]
    nu_density: Callable[[np.ndarray], np.ndarray]
    residual_samplers: tuple  # (sampler_q, sampler_qp), each (gen, size) -> draws
    nu_G: float = 1.0
    in_G: Optional[Callable] = None


def _build_decomposition(model, minor, x, q, qp) -> CouplingDecomposition:
    eta = float(np.asarray(minor.eta(x[None, :]))[0])
    if _exact_1d_supported(model):
        c_bar = float(_far_prob_exact(model, x[None, :], q[None, :], qp[None, :], minor.K)[0])
        nu_G = float(_nu_G_mass_exact(model, minor, x[None, :], q[None, :], qp[None, :])[0])
    else:
        c_bar = _far_prob_mc(model, minor, x, q, qp)
        nu_G = None
    far = _far_indicator(model, minor, x, q, qp)
    in_G = _in_G_map(model, minor, x, q, qp)
    if nu_G is None:
        nu_G = _nu_G_mass_mc(minor, in_G, x, q, qp)

    def nu_sampler(gen, size):
        return _rejection_fill(
            lambda g, m: minor.nu_sampler(x, q, qp, g, m),
            lambda z: in_G(z),
            gen,
            size,
            "coupled nu component",
        )

    def nu_density(z):
        return minor.nu_density(x, q, qp, z)

    def make_residual(y):
        def sampler(gen, size):
            return _residual_draws(model, minor, x, q, qp, y, eta, far, in_G, gen, size)

        return sampler

    return CouplingDecomposition(
        eta_x=eta,
        c_bar=c_bar,
        far_set_indicator=far,
        nu_sampler=nu_sampler,
        nu_density=nu_density,
        residual_samplers=(make_residual(q), make_residual(qp)),
        nu_G=nu_G,
        in_G=in_G,
    )


def decompose(model, minor: MinorizationSpec, x, q, qp) -> CouplingDecomposition:
    """Three-component decomposition at one (x, q, q') configuration.

    c_bar is exact (normal-CDF arithmetic) for 1-D Gaussian scalar-sigma
    models, Monte Carlo with cached value (SE <= 1e-3) otherwise.  Raises
    when eta + c_bar > 1, which signals a wrong eta or K (the containment
    premise fails at this configuration).
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    minor.require_pair(q, qp)
    dec = _build_decomposition(model, minor, x, q, qp)
    if dec.eta_x + dec.c_bar > 1.0 + 1e-9:
        raise InconsistentSpecError(
            f"eta + c_bar = {dec.eta_x} + {dec.c_bar} > 1; declared eta or K is wrong"
        )
    return dec


def _rejection_fill(propose, accept, gen, size, what):
    out = None
    filled = 0
    proposals = 0
    while filled < size:
        m = max(4 * (size - filled), 64)
        proposals += m
        if proposals > REJECTION_CAP:
            raise DegenerateDecompositionError(f"{what}: rejection cap exceeded")
        z = np.atleast_2d(propose(gen, m))
        if out is None:
            out = np.empty((size, z.shape[1]))
        keep = z[np.asarray(accept(z), dtype=bool)]
        take = min(len(keep), size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def _residual_draws(model, minor, x, q, qp, y, eta, far, in_G, gen, size):
    """Rejection sampler for (kernel - eta nu|G - c_bar chi)/(1 - eta nu(G)
    - c_bar) started from y: propose e outside the far set, accept the image
    z with probability 1 - eta nu(z) 1_G(z) / p(z)."""
    out = np.empty((size, model.dim))
    filled = 0
    proposals = 0
    while filled < size:
        m = max(4 * (size - filled), 64)
        proposals += m
        if proposals > REJECTION_CAP:
            raise DegenerateDecompositionError(
                "residual rejection sampler exceeded its proposal cap"
            )
        e = model.noise.sample(gen, m)
        keep = ~far(e)
        if not np.any(keep):
            continue
        e = e[keep]
        z = np.atleast_2d(np.asarray(model.update(y, x, e), dtype=float))
        p = np.asarray(model.kernel_density(x, y, z), dtype=float)
        nud = np.asarray(minor.nu_density(x, q, qp, z), dtype=float) * in_G(z)
        acc = gen.random(len(z)) < np.clip(1.0 - eta * nud / np.maximum(p, 1e-300), 0.0, 1.0)
        z = z[acc]
        take = min(len(z), size - filled)
        out[filled : filled + take] = z[:take]
        filled += take
    return out


# ---------------------------------------------------------------------------
# one coupling step


@dataclass
class CouplingOutcome:
    case_taken: str  # identical-start | far-start-synchronous | nu-coupled
    #                 | far-excursion-synchronous | residual
    next_pair: tuple
    coupled: bool


def _shared_noise_pair(model, x, q, qp, gen):
    e = model.noise.sample(gen, 1)[0]
    z1 = np.asarray(model.update(q, x, e), dtype=float)
    z2 = np.asarray(model.update(qp, x, e), dtype=float)
    return z1, z2


def _conditioned_far_draw(model, far, gen, size=1):
    return _rejection_fill(
        lambda g, m: model.noise.sample(g, m), far, gen, size, "far-excursion component"
    )


def _couple_step_gen(model, minor, x, q, qp, gen, d=None) -> CouplingOutcome:
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    if d is None:
        d = float(minor.metric.distance(q, qp))
    if d == 0.0:
        z1, _ = _shared_noise_pair(model, x, q, q, gen)
        return CouplingOutcome("identical-start", (z1, z1.copy()), True)
    if d > minor.pair_radius:
        z1, z2 = _shared_noise_pair(model, x, q, qp, gen)
        return CouplingOutcome("far-start-synchronous", (z1, z2), bool(np.all(z1 == z2)))
    dec = _build_decomposition(model, minor, x, q, qp)
    u = gen.random()
    if u <= dec.eta_x * dec.nu_G:
        z = dec.nu_sampler(gen, 1)[0]
        return CouplingOutcome("nu-coupled", (z, z.copy()), True)
    if u <= dec.eta_x * dec.nu_G + dec.c_bar:
        e = _conditioned_far_draw(model, dec.far_set_indicator, gen, 1)[0]
        z1 = np.asarray(model.update(q, x, e), dtype=float)
        z2 = np.asarray(model.update(qp, x, e), dtype=float)
        return CouplingOutcome("far-excursion-synchronous", (z1, z2), bool(np.all(z1 == z2)))
    z1 = dec.residual_samplers[0](gen, 1)[0]
    z2 = dec.residual_samplers[1](gen, 1)[0]
    return CouplingOutcome("residual", (z1, z2), bool(np.all(z1 == z2)))


def couple_step(model, minor, x, q, qp, stream: RngStream) -> CouplingOutcome:
    """One coupled transition with exact one-step marginals on both sides."""
    return _couple_step_gen(model, minor, x, q, qp, stream.generator())


def couple_step_samples(model, minor, x, q, qp, size: int, stream: RngStream):
    """``size`` independent couple_step outcomes at one fixed (x, q, q')
    configuration, vectorized.  Returns (out1, out2, cases)."""
    gen = stream.generator()
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    d = float(minor.metric.distance(q, qp))
    out1 = np.empty((size, model.dim))
    out2 = np.empty((size, model.dim))
    cases = np.empty(size, dtype=object)
    if d == 0.0 or d > minor.pair_radius:
        tag = "identical-start" if d == 0.0 else "far-start-synchronous"
        e = model.noise.sample(gen, size)
        out1[:] = np.atleast_2d(model.update(q, x, e))
        out2[:] = np.atleast_2d(model.update(qp, x, e))
        if d == 0.0:
            out2[:] = out1
        cases[:] = tag
        return out1, out2, cases
    dec = _build_decomposition(model, minor, x, q, qp)
    u = gen.random(size)
    m_nu = u <= dec.eta_x * dec.nu_G
    m_far = (~m_nu) & (u <= dec.eta_x * dec.nu_G + dec.c_bar)
    m_res = ~(m_nu | m_far)
    if np.any(m_nu):
        z = dec.nu_sampler(gen, int(np.sum(m_nu)))
        out1[m_nu] = z
        out2[m_nu] = z
        cases[m_nu] = "nu-coupled"
    if np.any(m_far):
        k = int(np.sum(m_far))
        e = _conditioned_far_draw(model, dec.far_set_indicator, gen, k)
        out1[m_far] = np.atleast_2d(model.update(q, x, e))
        out2[m_far] = np.atleast_2d(model.update(qp, x, e))
        cases[m_far] = "far-excursion-synchronous"
    if np.any(m_res):
        k = int(np.sum(m_res))
        out1[m_res] = dec.residual_samplers[0](gen, k)
        out2[m_res] = dec.residual_samplers[1](gen, k)
        cases[m_res] = "residual"
    return out1, out2, cases


# ---------------------------------------------------------------------------
# the two-phase schedule


def attempt_steps(constants: CouplingConstants, n: int) -> List[int]:
    """Step indices t whose transition (t -> t+1) is a coupling attempt:
    t = floor(n/2) + k N - 1 for k = 1..k*(n)."""
    half = n // 2
    return [half + k * constants.N - 1 for k in range(1, constants.k_star(n) + 1)]


def analytic_bound(constants: CouplingConstants, eta_path, d0: float, n: int) -> float:
    """Quenched failure bound: 1{d0 >= R'/rho'^floor(n/2)} +
    prod_k (1 - eta(X at attempt index)), clamped to [0, 1].

    ``eta_path`` is indexed by environment time and must cover every
    attempt index.
    """
    eta_path = np.asarray(eta_path, dtype=float)
    steps = attempt_steps(constants, n)
    if steps and steps[-1] >= len(eta_path):
        raise ValueError(
            f"eta_path of length {len(eta_path)} misses attempt index {steps[-1]}"
        )
    half = n // 2
    indicator = 1.0 if d0 >= constants.R_prime / constants.rho_prime**half else 0.0
    prod = float(np.prod(1.0 - eta_path[steps])) if steps else 1.0
    return float(np.clip(indicator + prod, 0.0, 1.0))


@dataclass
class CouplingRun:
    schedule: CouplingConstants
    meeting_time: Optional[int]
    per_attempt: List[CouplingOutcome]
    analytic_bound: float
    env_path: np.ndarray
    states: np.ndarray  # (n+1, dim)
    states_prime: np.ndarray
    env_start: int = 0


def run_coupling(
    model,
    minor: MinorizationSpec,
    env,
    y,
    yp,
    n: int,
    stream: RngStream,
    constants: Optional[CouplingConstants] = None,
    backward: bool = False,
) -> CouplingRun:
    """Drive one coupled pair for n steps: synchronous shared-noise steps
    everywhere except the scheduled attempt times.

    The pair difference is propagated exactly (shared noise cancels in it
    by construction), so the pair meets only through a genuinely coupled
    transition, never through floating-point absorption of a tiny gap.
    """
    if n < 2:
        raise ValueError("run_coupling needs n >= 2")
    if constants is None:
        constants = derive_constants(model.contraction, minor.K)
    gen = stream.generator()
    window = env.sample_window(gen, n)
    steps = set(attempt_steps(constants, n))
    states = np.empty((n + 1, model.dim))
    states_p = np.empty((n + 1, model.dim))
    states[0] = np.asarray(y, dtype=float)
    states_p[0] = np.asarray(yp, dtype=float)
    diff = states_p[0] - states[0]
    per_attempt = []
    meeting = None
    for t in range(n):
        x = window[t]
        if t in steps:
            qp = states[t] + diff
            outcome = _couple_step_gen(
                model, minor, x, states[t], qp, gen, d=float(minor.metric.norm(diff))
            )
            z1, z2 = outcome.next_pair
            states[t + 1] = z1
            if outcome.case_taken in ("identical-start", "nu-coupled"):
                diff = np.zeros(model.dim)
            elif outcome.case_taken == "residual":
                diff = np.asarray(z2, dtype=float) - np.asarray(z1, dtype=float)
            else:  # synchronous noise: difference follows the drift exactly
                diff = np.ravel(model.drift_difference(states[t], diff, x))
            per_attempt.append(outcome)
        else:
            e = model.noise.sample(gen, 1)[0]
            new_diff = np.ravel(model.drift_difference(states[t], diff, x))
            states[t + 1] = np.asarray(model.update(states[t], x, e), dtype=float)
            diff = new_diff
        states_p[t + 1] = states[t + 1] + diff
        if meeting is None and np.all(diff == 0.0):
            meeting = t + 1
    eta_path = np.asarray(minor.eta(window), dtype=float)
    d0 = float(minor.metric.distance(states[0], states_p[0]))
    bound = analytic_bound(constants, eta_path, d0, n)
    return CouplingRun(
        schedule=constants,
        meeting_time=meeting,
        per_attempt=per_attempt,
        analytic_bound=bound,
        env_path=window,
        states=states,
        states_prime=states_p,
        env_start=-n if backward else 0,
    )


# ---------------------------------------------------------------------------
# vectorized campaign engine (1-D scalar-sigma models)


@dataclass
class BatchCouplingResult:
    n: int
    replications: int
    failures: int
    failure_indicator: np.ndarray  # (reps,) bool
    bounds: np.ndarray  # (reps,)
    meeting_times: np.ndarray  # (reps,), -1 when never met
    final: np.ndarray  # (reps, 2)

    @property
    def failure_rate(self) -> float:
        return self.failures / self.replications

    @property
    def mean_bound(self) -> float:
        return float(np.mean(self.bounds))

    @property
    def bound_se(self) -> float:
        return float(np.std(self.bounds, ddof=1) / math.sqrt(self.replications))


def _vector_far_flags(model, minor, x, q, qp, e):
    zq = model.update(q, x, e)
    zqp = model.update(qp, x, e)
    far1 = minor.metric.distance(zq, q) > minor.K
    far2 = minor.metric.distance(zqp, qp) > minor.K
    return far1 & far2


def _vector_in_G(model, minor, x, q, qp, z):
    """1-D membership of z in G, per row."""
    K = minor.K
    cq = np.asarray(model.drift(q, x), dtype=float)
    cqp = np.asarray(model.drift(qp, x), dtype=float)
    delta = cqp - cq
    near_q = np.abs(z - q) <= K
    near_qp_shift = np.abs(z - (qp - delta)) <= K
    near_q_shift = np.abs(z - (q + delta)) <= K
    near_qp = np.abs(z - qp) <= K
    return ((near_q | near_qp_shift) & (near_q_shift | near_qp))[:, 0]


def _vector_attempt(model, minor, x, Y, D, gen):
    """Coupling attempt applied componentwise to (reps, 1) pairs (Y, Y+D),
    each replication with its own environment row.

    The pair difference D is tracked exactly: synchronous branches update
    it through ``drift_difference`` (shared noise cancels identically) and
    the nu-coupled branch zeroes it, so the pair never merges through
    floating-point rounding alone.  Returns (Y_next, D_next).
    """
    out = np.empty_like(Y)
    outD = np.empty_like(D)
    d = np.abs(D[:, 0])
    sync = (d == 0.0) | (d > minor.pair_radius)
    if np.any(sync):
        e = model.noise.sample(gen, int(np.sum(sync)))
        outD[sync] = model.drift_difference(Y[sync], D[sync], x[sync])
        out[sync] = model.update(Y[sync], x[sync], e)
        zero = sync.copy()
        zero[sync] = d[sync] == 0.0
        outD[zero] = 0.0
    act = ~sync
    if not np.any(act):
        return out, outD
    xa, qa = x[act], Y[act]
    qpa = qa + D[act]
    eta = np.asarray(minor.eta(xa), dtype=float)
    c_bar = _far_prob_exact(model, xa, qa, qpa, minor.K)
    nu_G = _nu_G_mass_exact(model, minor, xa, qa, qpa)
    u = gen.random(len(eta))
    z1 = np.empty_like(qa)
    dz = np.empty_like(qa)

    m_nu = u <= eta * nu_G
    if np.any(m_nu):
        _vector_nu_branch(model, minor, xa, qa, qpa, m_nu, z1, z1, gen)
        dz[m_nu] = 0.0

    m_far = (~m_nu) & (u <= eta * nu_G + c_bar)
    if np.any(m_far):
        z2 = np.empty_like(qa)
        _vector_far_branch(model, minor, xa, qa, qpa, m_far, z1, z2, gen)
        dz[m_far] = model.drift_difference(qa, D[act], xa)[m_far]

    m_res = ~(m_nu | m_far)
    if np.any(m_res):
        z2 = np.empty_like(qa)
        _vector_residual_branch(model, minor, xa, qa, qpa, qa, m_res, eta, z1, gen)
        _vector_residual_branch(model, minor, xa, qa, qpa, qpa, m_res, eta, z2, gen)
        dz[m_res] = z2[m_res] - z1[m_res]
    out[act] = z1
    outD[act] = dz
    return out, outD


def _vector_nu_branch(model, minor, xa, qa, qpa, mask, z1, z2, gen):
    idx = np.flatnonzero(mask)
    pending = idx.copy()
    rounds = 0
    while len(pending):
        rounds += 1
        if rounds > REJECTION_CAP // max(len(idx), 1):
            raise DegenerateDecompositionError("batch nu sampler stalled")
        center = np.asarray(
            minor.nu_center(xa[pending], qa[pending], qpa[pending]), dtype=float
        )
        z = center + gen.uniform(-minor.nu_radius, minor.nu_radius, center.shape)
        ok = _vector_in_G(model, minor, xa[pending], qa[pending], qpa[pending], z)
        hit = pending[ok]
        z1[hit] = z[ok]
        z2[hit] = z[ok]
        pending = pending[~ok]


def _vector_far_branch(model, minor, xa, qa, qpa, mask, z1, z2, gen):
    idx = np.flatnonzero(mask)
    pending = idx.copy()
    rounds = 0
    while len(pending):
        rounds += 1
        if rounds > REJECTION_CAP // max(len(idx), 1):
            raise DegenerateDecompositionError("batch far-excursion sampler stalled")
        e = model.noise.sample(gen, len(pending))
        ok = _vector_far_flags(model, minor, xa[pending], qa[pending], qpa[pending], e)
        hit = pending[ok]
        z1[hit] = model.update(qa[hit], xa[hit], e[ok])
        z2[hit] = model.update(qpa[hit], xa[hit], e[ok])
        pending = pending[~ok]


def _vector_residual_branch(model, minor, xa, qa, qpa, start, mask, eta, zout, gen):
    """Residual draw for one side (``start`` = qa or qpa), in place."""
    idx = np.flatnonzero(mask)
    pending = idx.copy()
    rounds = 0
    while len(pending):
        rounds += 1
        if rounds > REJECTION_CAP // max(len(idx), 1):
            raise DegenerateDecompositionError("batch residual sampler stalled")
        e = model.noise.sample(gen, len(pending))
        far = _vector_far_flags(model, minor, xa[pending], qa[pending], qpa[pending], e)
        z = np.asarray(model.update(start[pending], xa[pending], e), dtype=float)
        s = np.asarray(model.sigma_scalar(xa[pending]), dtype=float)
        drift = np.asarray(model.drift(start[pending], xa[pending]), dtype=float)
        p = np.exp(-0.5 * ((z - drift)[:, 0] / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        center = np.asarray(minor.nu_center(xa[pending], qa[pending], qpa[pending]), dtype=float)
        inside = np.abs((z - center)[:, 0]) <= minor.nu_radius + 1e-12
        in_g = _vector_in_G(model, minor, xa[pending], qa[pending], qpa[pending], z)
        nud = (inside & in_g) / (2.0 * minor.nu_radius)
        acc_p = np.clip(1.0 - eta[pending] * nud / np.maximum(p, 1e-300), 0.0, 1.0)
        ok = (~far) & (gen.random(len(pending)) < acc_p)
        zout[pending[ok]] = z[ok]
        pending = pending[~ok]


def run_coupling_batch(
    model,
    minor: MinorizationSpec,
    env,
    y,
    yp,
    n: int,
    reps: int,
    stream: RngStream,
    constants: Optional[CouplingConstants] = None,
    backward: bool = False,
) -> BatchCouplingResult:
    """Vectorized coupling campaign: ``reps`` independent environment paths
    and coupled pairs, n steps each.  Requires a 1-D scalar-sigma Gaussian
    model (the exact c_bar route)."""
    if n < 2:
        raise ValueError("run_coupling_batch needs n >= 2")
    if not _exact_1d_supported(model):
        raise ValueError("batch engine supports 1-D scalar-sigma Gaussian models only")
    if constants is None:
        constants = derive_constants(model.contraction, minor.K)
    gen = stream.generator()
    windows = env.sample_windows(gen, reps, n)
    steps = set(attempt_steps(constants, n))
    y0 = float(np.asarray(y).ravel()[0])
    yp0 = float(np.asarray(yp).ravel()[0])
    Y = np.full((reps, 1), y0)
    D = np.full((reps, 1), yp0 - y0)
    d0 = abs(yp0 - y0)
    meeting = np.full(reps, -1, dtype=np.int64)
    for t in range(n):
        x = windows[:, t, :]
        if t in steps:
            Y, D = _vector_attempt(model, minor, x, Y, D, gen)
        else:
            e = model.noise.sample(gen, reps)
            D = np.asarray(model.drift_difference(Y, D, x), dtype=float)
            Y = np.asarray(model.update(Y, x, e), dtype=float)
        new_meet = (meeting < 0) & (D[:, 0] == 0.0)
        meeting[new_meet] = t + 1
    half = n // 2
    indicator = 1.0 if d0 >= constants.R_prime / constants.rho_prime**half else 0.0
    step_list = sorted(steps)
    if step_list:
        etas = np.stack(
            [np.asarray(minor.eta(windows[:, t, :]), dtype=float) for t in step_list],
            axis=1,
        )
        prod = np.prod(1.0 - etas, axis=1)
    else:
        prod = np.ones(reps)
    bounds = np.clip(indicator + prod, 0.0, 1.0)
    fail = D[:, 0] != 0.0
    return BatchCouplingResult(
        n=n,
        replications=reps,
        failures=int(np.sum(fail)),
        failure_indicator=fail,
        bounds=bounds,
        meeting_times=meeting,
        final=np.stack([Y[:, 0], Y[:, 0] + D[:, 0]], axis=1),
    )
