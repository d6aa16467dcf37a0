"""Numerical certification of the contraction and minorization hypotheses.

These checks are sound but incomplete: they sample inputs (or partition the
state space into finitely many cells) and report violations as data, never
as exceptions.  Repeated invocation with the same stream yields identical
reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ChainSpec, EnvironmentSpec, Metric, RngStream

INEQ_TOL = 1e-9


class InvalidPairError(ValueError):
    """The pair (y1, y2) violates 0 < d(y1,y2) <= pair_radius."""


@dataclass(frozen=True)
class MinorizationSpec:
    """Analytic minorization data for one model.

    The kernel of the chain started from either of two nearby points
    dominates ``eta(x) * nu(x, y1, y2, .)``, and nu puts all its mass within
    distance K of both points.  ``pair_radius`` is the admissible range of
    d(y1, y2) (equal to 2R/(1-rho) of the declared contraction), ``R_tilde``
    the drift-gap bound used by the additive construction.
    """

    eta: Callable[[np.ndarray], np.ndarray]
    nu_sampler: Callable[..., np.ndarray]  # (x, y1, y2, gen, size) -> (size, dim)
    nu_density: Callable[..., np.ndarray]  # (x, y1, y2, z) -> (...,)
    K: float
    pair_radius: float
    R_tilde: float
    nu_center: Callable[..., np.ndarray] = None  # (x, y1, y2) -> (dim,)
    nu_radius: float = 1.0
    metric: Metric = field(default_factory=Metric)
    eta_constant: bool = False

    def require_pair(self, y1, y2):
        d = float(self.metric.distance(y1, y2))
        if not 0.0 < d <= self.pair_radius + INEQ_TOL:
            raise InvalidPairError(
                f"need 0 < d(y1,y2) <= {self.pair_radius}, got d = {d}"
            )
        return d


@dataclass
class CheckReport:
    assumption_id: str
    trials: int
    violations: int
    worst_margin: float
    witness: Optional[tuple] = None

    def __post_init__(self):
        if (self.violations == 0) != (self.witness is None):
            raise ValueError("witness must be present iff violations > 0")


# ---------------------------------------------------------------------------
# contraction check


def _default_pair_sampler(dim: int):
    """Mixture sampler: uniform box [-50,50]^dim (90%) plus radius-1e3
    shell draws (10%) to exercise contractivity at infinity."""

    def sample(gen: np.random.Generator, size: int):
        y1 = gen.uniform(-50.0, 50.0, (size, dim))
        y2 = gen.uniform(-50.0, 50.0, (size, dim))
        far = gen.random(size) < 0.1
        nfar = int(np.sum(far))
        if nfar:
            direc = gen.standard_normal((nfar, dim))
            direc /= np.linalg.norm(direc, axis=1, keepdims=True)
            y2[far] = y1[far] + 1e3 * direc
        return y1, y2

    return sample


def check_contractivity(
    spec: ChainSpec,
    trials: int,
    stream: RngStream,
    env: Optional[EnvironmentSpec] = None,
    pair_sampler=None,
    chunk: int = 100_000,
) -> CheckReport:
    """Sampled test of d(f(y1,x,e), f(y2,x,e)) <= rho d(y1,y2) + R."""
    if trials < 1:
        raise ValueError("trials >= 1 required")
    gen = stream.generator()
    sampler = pair_sampler or _default_pair_sampler(spec.dim_state)
    rho, R = spec.contraction.rho, spec.contraction.R
    violations = 0
    worst = -np.inf
    worst_bad = -np.inf
    witness = None
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        y1, y2 = sampler(gen, size)
        if env is not None:
            x = env.sample_marginal(gen, size)
        else:
            x = gen.standard_normal((size, 1))
        e = spec.noise.sample(gen, size)
        lhs = spec.distance(spec.update(y1, x, e), spec.update(y2, x, e))
        rhs = rho * spec.distance(y1, y2) + R
        margin = lhs - rhs
        worst = max(worst, float(np.max(margin)))
        bad = margin > INEQ_TOL
        nbad = int(np.sum(bad))
        if nbad:
            ibad = int(np.argmax(np.where(bad, margin, -np.inf)))
            if margin[ibad] > worst_bad:
                worst_bad = float(margin[ibad])
                witness = (y1[ibad].copy(), y2[ibad].copy(), x[ibad].copy(), e[ibad].copy())
        violations += nbad
        done += size
    return CheckReport("contractivity", trials, violations, worst, witness)


# ---------------------------------------------------------------------------
# minorization dominance check


def _grid_cells(lo: np.ndarray, hi: np.ndarray, bins: int):
    edges = [np.linspace(lo[i], hi[i], bins + 1) for i in range(len(lo))]
    return edges


def check_minorization(
    spec: ChainSpec,
    minor: MinorizationSpec,
    x,
    y1,
    y2,
    samples: int,
    stream: RngStream,
    bins: int = 32,
    sigma_tol: float = 5.0,
) -> CheckReport:
    """Cell-wise dominance test of the kernel against eta(x) nu(...).

    Partitions a box covering B_K(y1) u B_K(y2) into a regular grid
    (dim <= 2) or random half-spaces (dim >= 3), then compares empirical
    kernel frequencies against eta * nu cell masses with a one-sided
    ``sigma_tol`` binomial tolerance.
    """
    minor.require_pair(y1, y2)
    x = np.asarray(x, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    gen = stream.generator()
    dim = spec.dim_state
    eta = float(np.asarray(minor.eta(x[None, :]))[0])

    draws = {}
    for tag, y in (("y1", y1), ("y2", y2)):
        e = spec.noise.sample(gen, samples)
        draws[tag] = np.atleast_2d(np.asarray(spec.update(y, x, e), dtype=float))
    nu_draws = np.atleast_2d(minor.nu_sampler(x, y1, y2, gen, samples))

    if dim <= 2:
        lo = np.minimum(y1, y2) - minor.K - 1e-9
        hi = np.maximum(y1, y2) + minor.K + 1e-9
        edges = _grid_cells(lo, hi, bins)

        def cell_counts(pts):
            h, _ = np.histogramdd(pts, bins=edges)
            return h.ravel()

    else:
        # random half-space cells
        normals = gen.standard_normal((bins, dim))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        offsets = (normals @ ((y1 + y2) / 2.0)) + gen.uniform(-minor.K, minor.K, bins)

        def cell_counts(pts):
            proj = pts @ normals.T  # (n, bins)
            return np.sum(proj <= offsets[None, :], axis=0).astype(float)

    nu_counts = cell_counts(nu_draws)
    nu_hat = nu_counts / samples
    se_nu = np.sqrt(nu_hat * (1.0 - nu_hat) / samples)
    violations = 0
    worst = np.inf
    witness = None
    for tag in ("y1", "y2"):
        counts = cell_counts(draws[tag])
        p_hat = counts / samples
        se_p = np.sqrt(p_hat * (1.0 - p_hat) / samples)
        tol = sigma_tol * np.sqrt(se_p**2 + (eta * se_nu) ** 2)
        slack = p_hat - eta * nu_hat + tol
        worst = min(worst, float(np.min(slack)))
        bad = slack < 0.0
        nbad = int(np.sum(bad))
        if nbad and witness is None:
            witness = (tag, int(np.argmin(slack)))
        violations += nbad
    return CheckReport("minorization", 2 * samples, violations, worst, witness)


def check_support(
    minor: MinorizationSpec, x, y1, y2, samples: int, stream: RngStream
) -> CheckReport:
    """Asserts every nu draw lies in B_K(y1) intersect B_K(y2)."""
    minor.require_pair(y1, y2)
    x = np.asarray(x, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    gen = stream.generator()
    z = np.atleast_2d(minor.nu_sampler(x, y1, y2, gen, samples))
    d1 = minor.metric.distance(z, y1)
    d2 = minor.metric.distance(z, y2)
    excess = np.maximum(d1, d2) - minor.K
    bad = excess > INEQ_TOL
    violations = int(np.sum(bad))
    worst = float(np.max(excess))
    witness = None
    if violations:
        i = int(np.argmax(excess))
        witness = (z[i].copy(),)
    return CheckReport("support", samples, violations, worst, witness)


def check_bounded_perturbation(
    g_lipschitz: Callable,
    h_bounded: Callable,
    rho: float,
    J: float,
    trials: int,
    stream: RngStream,
    dim: int = 1,
    chunk: int = 100_000,
) -> CheckReport:
    """Checks that f = g + h satisfies the contraction-modulo-constant
    inequality with R = 2J (bounded perturbation of a contraction)."""
    if rho >= 1.0 or J < 0.0:
        raise ValueError("need rho < 1 and J >= 0")
    gen = stream.generator()
    sampler = _default_pair_sampler(dim)
    R = 2.0 * J
    violations = 0
    worst = -np.inf
    witness = None
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        y1, y2 = sampler(gen, size)
        f1 = np.asarray(g_lipschitz(y1)) + np.asarray(h_bounded(y1))
        f2 = np.asarray(g_lipschitz(y2)) + np.asarray(h_bounded(y2))
        lhs = np.linalg.norm(np.atleast_2d(f1 - f2), axis=-1)
        rhs = rho * np.linalg.norm(y1 - y2, axis=-1) + R
        margin = lhs - rhs
        bad = margin > INEQ_TOL
        nbad = int(np.sum(bad))
        imax = int(np.argmax(margin))
        if margin[imax] > worst:
            worst = float(margin[imax])
        if nbad and witness is None:
            ibad = int(np.argmax(np.where(bad, margin, -np.inf)))
            witness = (y1[ibad].copy(), y2[ibad].copy())
        violations += nbad
        done += size
    if violations == 0:
        witness = None
    return CheckReport("bounded_perturbation", trials, violations, worst, witness)
