"""Model zoo: additive autoregressions with exogenous covariates, the SGLD
risk-measure recursion, stochastic volatility, threshold AR and a
multivariate AR with similarity-scaled norm.

Every constructor returns the chain spec together with its analytic
minorization data, so the verification and coupling machinery can consume
any zoo member uniformly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .core import (
    EUCLIDEAN,
    ChainSpec,
    ContractionParams,
    EnvironmentSpec,
    Metric,
    NoiseSpec,
)
from .verify import MinorizationSpec

_GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)


class SpecError(ValueError):
    """Model construction rejected (bad slope, step size, matrix, ...)."""


# ---------------------------------------------------------------------------
# metric-ball geometry helpers


def _ball_volume(metric: Metric, radius: float, dim: int) -> float:
    det = 1.0
    if metric.transform is not None:
        det = abs(np.linalg.det(metric.transform))
    if metric.order == 2.0:
        unit = math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)
        return radius**dim * unit / det
    return (2.0 * radius) ** dim / det


def _ball_max_euclid(metric: Metric, radius: float, dim: int) -> float:
    """Largest Euclidean norm attained on the metric ball of given radius."""
    if metric.transform is None:
        return radius
    T = np.asarray(metric.transform, dtype=float)
    if metric.order == 2.0:
        smin = np.linalg.svd(T, compute_uv=False)[-1]
        return radius / smin
    # sup-norm ball is the parallelotope with vertices radius * T^-1 s
    Tinv = np.linalg.inv(T)
    best = 0.0
    for bits in range(2**dim):
        s = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(dim)])
        best = max(best, float(np.linalg.norm(Tinv @ (radius * s))))
    return best


def _ball_sampler(metric: Metric, dim: int):
    Tinv = None
    if metric.transform is not None:
        Tinv = np.linalg.inv(np.asarray(metric.transform, dtype=float))

    def sample(gen: np.random.Generator, center: np.ndarray, radius: float, size: int):
        if metric.order == 2.0:
            u = gen.standard_normal((size, dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            u *= gen.random((size, 1)) ** (1.0 / dim)
        else:
            u = gen.uniform(-1.0, 1.0, (size, dim))
        u *= radius
        if Tinv is not None:
            u = u @ Tinv.T
        return center + u

    return sample


# ---------------------------------------------------------------------------
# additive model


@dataclass(frozen=True)
class AdditiveARModel:
    """Y_{n+1} = mu(Y_n, X_n) + sigma(X_n) eps_{n+1} + ell(X_n).

    ``sigma_scalar`` (batched, isotropic) and ``sigma_matrix`` (single env
    row -> (dim, dim)) are mutually exclusive; the scalar form is what the
    vectorized coupling engine consumes.
    """

    name: str
    dim: int
    mu: Callable  # (y, x) -> state, batched
    ell: Callable  # (x) -> state, batched
    noise: NoiseSpec
    contraction: ContractionParams
    sigma_scalar: Optional[Callable] = None  # (x) -> (...,)
    sigma_matrix: Optional[Callable] = None  # (x,) -> (dim, dim)
    metric: Metric = EUCLIDEAN
    theta: float = 1.0
    env_dim: int = 1
    # optional exact map (y, d, x) -> mu(y+d, x) - mu(y, x); lets the
    # coupling engine track pair differences at full relative precision
    # instead of losing them to absolute rounding when |d| << |y|
    mu_difference: Optional[Callable] = None

    def __post_init__(self):
        if (self.sigma_scalar is None) == (self.sigma_matrix is None):
            raise SpecError("exactly one of sigma_scalar / sigma_matrix required")

    def drift_difference(self, y, d, x):
        """mu(y+d, x) - mu(y, x), exact when the model supplies the hook
        (the shared noise and ell terms cancel in the pair difference)."""
        if self.mu_difference is not None:
            return np.asarray(self.mu_difference(y, d, x), dtype=float)
        y = np.asarray(y, dtype=float)
        return np.asarray(self.mu(y + d, x), dtype=float) - np.asarray(self.mu(y, x), dtype=float)

    def drift(self, y, x):
        """mu(y, x) + ell(x): the noiseless part of the update."""
        return np.asarray(self.mu(y, x), dtype=float) + np.asarray(self.ell(x), dtype=float)

    def update(self, y, x, e):
        if self.sigma_scalar is not None:
            s = np.asarray(self.sigma_scalar(x), dtype=float)
            noise_term = s[..., None] * e if s.ndim == e.ndim - 1 else s * e
        else:
            noise_term = e @ np.asarray(self.sigma_matrix(x), dtype=float).T
        return self.drift(y, x) + noise_term

    def kernel_density(self, x, q, z):
        """Density of f(q, x, eps) at z (Gaussian noise only)."""
        if self.noise.kind != "gauss":
            raise SpecError("kernel density available for Gaussian noise only")
        z = np.atleast_2d(np.asarray(z, dtype=float))
        center = self.drift(np.asarray(q, dtype=float), np.asarray(x, dtype=float))
        diff = z - center
        if self.sigma_scalar is not None:
            s = float(np.asarray(self.sigma_scalar(x)))
            q2 = np.sum(diff * diff, axis=-1) / s**2
            return (2.0 * math.pi * s**2) ** (-self.dim / 2.0) * np.exp(-0.5 * q2)
        S = np.asarray(self.sigma_matrix(x), dtype=float)
        cov = S @ S.T
        sol = diff @ np.linalg.inv(cov).T
        q2 = np.sum(diff * sol, axis=-1)
        det = abs(np.linalg.det(cov))
        return (2.0 * math.pi) ** (-self.dim / 2.0) * det**-0.5 * np.exp(-0.5 * q2)

    def noise_pullback(self, x, q, z):
        """Inverse of e -> f(q, x, e): recovers the noise that maps q to z."""
        diff = np.atleast_2d(np.asarray(z, dtype=float)) - self.drift(
            np.asarray(q, dtype=float), np.asarray(x, dtype=float)
        )
        if self.sigma_scalar is not None:
            s = np.asarray(self.sigma_scalar(x), dtype=float)
            return diff / (s[..., None] if s.ndim == diff.ndim - 1 else s)
        S = np.asarray(self.sigma_matrix(x), dtype=float)
        return diff @ np.linalg.inv(S).T

    def chain_spec(self) -> ChainSpec:
        return ChainSpec(
            dim_state=self.dim,
            update=self.update,
            noise=self.noise,
            contraction=self.contraction,
            metric=self.metric,
            theta=self.theta,
        )


def _gauss_inf_density(model: AdditiveARModel, x, max_euclid: float) -> np.ndarray:
    """Infimum of the density of sigma(x) eps over the metric ball whose
    farthest Euclidean point is at ``max_euclid`` (Gaussian noise)."""
    if model.sigma_scalar is not None:
        s = np.asarray(model.sigma_scalar(x), dtype=float)
        d = model.dim
        return (2.0 * math.pi * s**2) ** (-d / 2.0) * np.exp(-0.5 * (max_euclid / s) ** 2)
    S = np.asarray(model.sigma_matrix(x), dtype=float)
    cov = S @ S.T
    prec = np.linalg.inv(cov)
    # worst quadratic form over the Euclidean ball of radius max_euclid
    qmax = max_euclid**2 * np.linalg.eigvalsh(prec)[-1]
    det = abs(np.linalg.det(cov))
    val = (2.0 * math.pi) ** (-model.dim / 2.0) * det**-0.5 * math.exp(-0.5 * qmax)
    return np.full(np.asarray(x, dtype=float).shape[:-1], val)


def make_additive(
    mu: Callable,
    sigma,
    ell: Callable,
    rho: float,
    R: float,
    dim: int = 1,
    nu_radius: float = 1.0,
    metric: Metric = EUCLIDEAN,
    env_dim: int = 1,
    theta: float = 1.0,
    name: str = "additive",
    sigma_is_matrix: bool = False,
    mu_difference: Optional[Callable] = None,
):
    """Additive model plus its analytic minorization.

    nu is uniform on the metric ball of radius ``nu_radius`` centered at
    (mu(y1,x) + mu(y2,x))/2 + ell(x); K = R_tilde/2 + nu_radius with
    R_tilde = (1+rho)R/(1-rho); eta(x) = Vol(B_r) * inf of the noise
    density over the ball of radius nu_radius + R_tilde/2.
    """
    contraction = ContractionParams(rho=rho, R=R)
    model = AdditiveARModel(
        name=name,
        dim=dim,
        mu=mu,
        ell=ell,
        noise=NoiseSpec(dim=dim, kind="gauss"),
        contraction=contraction,
        sigma_scalar=None if sigma_is_matrix else sigma,
        sigma_matrix=sigma if sigma_is_matrix else None,
        metric=metric,
        theta=theta,
        env_dim=env_dim,
        mu_difference=mu_difference,
    )
    minor = _additive_minorization(model, nu_radius=nu_radius)
    return model, minor


def _additive_minorization(
    model: AdditiveARModel,
    nu_radius: float,
    eta_override: Optional[Callable] = None,
    eta_constant: bool = False,
    K_override: Optional[float] = None,
    center_fn: Optional[Callable] = None,
) -> MinorizationSpec:
    rho, R = model.contraction.rho, model.contraction.R
    R_tilde = (1.0 + rho) * R / (1.0 - rho) if R > 0 else 0.0
    K = K_override if K_override is not None else R_tilde / 2.0 + nu_radius
    pair_radius = 2.0 * R / (1.0 - rho)
    vol = _ball_volume(model.metric, nu_radius, model.dim)
    reach = _ball_max_euclid(model.metric, nu_radius + R_tilde / 2.0, model.dim)
    sampler = _ball_sampler(model.metric, model.dim)

    if center_fn is None:

        def center_fn(x, y1, y2):
            half = 0.5 * (np.asarray(model.mu(y1, x)) + np.asarray(model.mu(y2, x)))
            return half + np.asarray(model.ell(x), dtype=float)

    if eta_override is not None:
        eta = eta_override
    else:

        def eta(x):
            val = vol * _gauss_inf_density(model, x, reach)
            return np.clip(np.asarray(val, dtype=float), 0.0, 1.0)

    def nu_sampler(x, y1, y2, gen, size):
        c = np.asarray(center_fn(x, y1, y2), dtype=float).reshape(model.dim)
        return sampler(gen, c, nu_radius, size)

    def nu_density(x, y1, y2, z):
        c = np.asarray(center_fn(x, y1, y2), dtype=float).reshape(model.dim)
        inside = model.metric.distance(np.atleast_2d(z), c) <= nu_radius + 1e-12
        return np.where(inside, 1.0 / vol, 0.0)

    return MinorizationSpec(
        eta=eta,
        nu_sampler=nu_sampler,
        nu_density=nu_density,
        K=float(K),
        pair_radius=float(pair_radius),
        R_tilde=float(R_tilde),
        nu_center=center_fn,
        nu_radius=float(nu_radius),
        metric=model.metric,
        eta_constant=eta_constant,
    )


# ---------------------------------------------------------------------------
# SGLD for VaR/CVaR


@dataclass(frozen=True)
class SgldVarModel:
    a: float
    h: float
    alpha_level: float
    J: float
    loss_env: EnvironmentSpec
    model: AdditiveARModel
    minor: MinorizationSpec
    eta_value: float

    @property
    def rho(self) -> float:
        return 1.0 - 2.0 * self.a * self.h

    @property
    def R(self) -> float:
        return 2.0 * self.h * self.J


def make_sgld(
    a: float,
    h: float,
    alpha_level: float,
    loss_env: Optional[EnvironmentSpec] = None,
) -> SgldVarModel:
    """SGLD recursion for the regularized quantile objective.

    Update: y - 2 a h y - h H(y, x) + sqrt(2h) eps with
    H(y, x) = 1 - 1{x >= y}/(1 - alpha).  Contraction rho = 1 - 2ah,
    R = 2hJ with J = max(alpha/(1-alpha), 1); the minorization uses a
    constant eta and K = J/a + sqrt(2h).
    """
    if not 0.0 < h < 1.0 / (2.0 * a):
        raise SpecError(f"step size must satisfy 0 < h < 1/(2a) = {1/(2*a)}")
    if not 0.0 < alpha_level < 1.0:
        raise SpecError("alpha_level must lie in (0,1)")
    if loss_env is None:
        loss_env = EnvironmentSpec(kind="iid")
    J = max(alpha_level / (1.0 - alpha_level), 1.0)
    rho = 1.0 - 2.0 * a * h
    R = 2.0 * h * J
    s = math.sqrt(2.0 * h)

    def H(y, x):
        return 1.0 - (x >= y).astype(float) / (1.0 - alpha_level)

    def mu(y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        return y - 2.0 * a * h * y - h * H(y, x)

    def sigma(x):
        return np.broadcast_to(s, np.asarray(x, dtype=float).shape[:-1]).copy()

    def ell(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (1,))

    def mu_difference(y, d, x):
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        x = np.asarray(x, dtype=float)
        return rho * d - h * (H(y + d, x) - H(y, x))

    model = AdditiveARModel(
        name="sgld_var",
        dim=1,
        mu=mu,
        ell=ell,
        noise=NoiseSpec(dim=1, kind="gauss"),
        contraction=ContractionParams(rho=rho, R=R),
        sigma_scalar=sigma,
        mu_difference=mu_difference,
    )
    # constant eta from the sharper bound: Vol(B_1) (2 pi)^{-m/2}
    # exp(-(1 + J/(sqrt(2h) a))^2 / 2), m = 1
    eta_val = 2.0 * _GAUSS_NORM * math.exp(-0.5 * (1.0 + J / (s * a)) ** 2)
    K = J / a + s

    def center_fn(x, y1, y2):
        return 0.5 * (np.asarray(mu(y1, x)) + np.asarray(mu(y2, x)))

    minor = _additive_minorization(
        model,
        nu_radius=s,
        eta_override=lambda x: np.full(np.asarray(x).shape[:-1], eta_val),
        eta_constant=True,
        K_override=K,
        center_fn=center_fn,
    )
    return SgldVarModel(
        a=a,
        h=h,
        alpha_level=alpha_level,
        J=J,
        loss_env=loss_env,
        model=model,
        minor=minor,
        eta_value=eta_val,
    )


@dataclass
class VarCvarEstimate:
    var: float
    cvar: float
    regularization: float
    degenerate: bool = False


def extract_var_cvar(
    losses: np.ndarray,
    a: float,
    alpha_level: float,
    grid_points: int = 10_000,
    grid_range: Optional[tuple] = None,
) -> VarCvarEstimate:
    """Grid argmin of the empirical regularized objective a y^2 + b(y),
    b(y) = y + E[(X - y)+]/(1 - alpha); CVaR is b at the minimizer.

    The a y^2 regularization term is a documented source of bias that
    vanishes as a -> 0.
    """
    losses = np.asarray(losses, dtype=float).ravel()
    if losses.size == 0:
        raise ValueError("empty loss sample")
    degenerate = bool(np.ptp(losses) == 0.0)
    lo, hi = grid_range if grid_range is not None else (losses.min(), losses.max())
    if lo == hi:
        hi = lo + 1.0
    grid = np.linspace(lo, hi, grid_points)
    srt = np.sort(losses)
    tail_sum = np.concatenate([np.cumsum(srt[::-1])[::-1], [0.0]])
    idx = np.searchsorted(srt, grid, side="left")
    n = losses.size
    mean_excess = (tail_sum[idx] - grid * (n - idx)) / n
    b_hat = grid + mean_excess / (1.0 - alpha_level)
    objective = a * grid**2 + b_hat
    i = int(np.argmin(objective))
    return VarCvarEstimate(
        var=float(grid[i]), cvar=float(b_hat[i]), regularization=a, degenerate=degenerate
    )


# ---------------------------------------------------------------------------
# threshold AR


@dataclass(frozen=True)
class ThresholdARModel:
    thresholds: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    model: AdditiveARModel
    minor: MinorizationSpec


def make_threshold(
    thresholds,
    slopes,
    intercepts,
    sigma: float = 1.0,
    nu_radius: float = 1.0,
    name: str = "threshold_ar",
) -> ThresholdARModel:
    """Piecewise-linear AR(1): mu(y) = a_i y + b_i on regime i.

    Requires max(|a_first|, |a_last|) < 1; the declared contraction is
    rho = max(|a_first|, |a_last|), R = 2 a r + 2 b with a = max |a_i|,
    b = max |b_i|, r = max |r_i|.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    intercepts = np.asarray(intercepts, dtype=float)
    if len(slopes) != len(thresholds) + 1 or len(intercepts) != len(slopes):
        raise SpecError("need len(slopes) = len(intercepts) = len(thresholds) + 1")
    if np.any(np.diff(thresholds) <= 0):
        raise SpecError("thresholds must be strictly increasing")
    rho = max(abs(slopes[0]), abs(slopes[-1]))
    if rho >= 1.0:
        bad = slopes[0] if abs(slopes[0]) >= 1 else slopes[-1]
        raise SpecError(f"outer slope {bad} violates max(|a_1|,|a_m|) < 1")
    a = float(np.max(np.abs(slopes)))
    b = float(np.max(np.abs(intercepts))) if len(intercepts) else 0.0
    r = float(np.max(np.abs(thresholds))) if len(thresholds) else 0.0
    R = 2.0 * a * r + 2.0 * b

    def mu(y, x):
        y = np.asarray(y, dtype=float)
        regime = np.searchsorted(thresholds, y[..., 0], side="left")
        return (slopes[regime] * y[..., 0] + intercepts[regime])[..., None]

    def sig(x):
        return np.broadcast_to(sigma, np.asarray(x, dtype=float).shape[:-1]).copy()

    def ell(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (1,))

    model, minor = make_additive(
        mu, sig, ell, rho=rho, R=R, dim=1, nu_radius=nu_radius, name=name
    )
    return ThresholdARModel(thresholds, slopes, intercepts, model, minor)


# ---------------------------------------------------------------------------
# stochastic volatility


@dataclass(frozen=True)
class StochVolModel:
    b_coeffs: np.ndarray
    corr: float
    env: EnvironmentSpec
    model: AdditiveARModel
    minor: MinorizationSpec


def make_stochvol(
    b_coeffs,
    corr: float,
    drift_mu: Callable,
    rho: float,
    R: float,
    nu_radius: float = 1.0,
) -> StochVolModel:
    """Log-price with exogenous log-volatility Z (truncated linear process).

    Environment rows are (zeta_{n+1}, Z_n); the additive pieces are
    sigma(x) = sqrt(1-corr^2) e^{x2} and ell(x) = corr e^{x2} x1.  The
    drift must satisfy the contraction inequality with the declared
    (rho, R); volatility and leverage do not enter the pairwise distance.
    """
    if not abs(corr) < 1.0:
        raise SpecError("need |corr| < 1")
    b = np.asarray(b_coeffs, dtype=float)
    env = EnvironmentSpec(kind="stochvol", b=b)

    def mu(y, x):
        return np.asarray(drift_mu(np.asarray(y, dtype=float)), dtype=float)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return math.sqrt(1.0 - corr**2) * np.exp(x[..., 1])

    def ell(x):
        x = np.asarray(x, dtype=float)
        return (corr * np.exp(x[..., 1]) * x[..., 0])[..., None]

    model, minor = make_additive(
        mu, sigma, ell, rho=rho, R=R, dim=1, nu_radius=nu_radius,
        env_dim=2, name="stochvol",
    )
    return StochVolModel(b, corr, env, model, minor)


# ---------------------------------------------------------------------------
# subordinate norm construction for multivariate AR


@dataclass(frozen=True)
class NormTransform:
    """Invertible S and norm order with ||S A S^-1|| <= theta < 1."""

    S: np.ndarray
    order: float
    theta: float
    value: float
    method: str

    def metric(self) -> Metric:
        return Metric(transform=self.S, order=self.order)


def subordinate_norm(A, target: Optional[float] = None) -> NormTransform:
    """Builds a vector norm whose subordinate matrix norm of A is < 1.

    Primary route: Schur triangularization plus diagonal scaling of the
    super-diagonal entries by the largest power of 2 reaching the target
    (max-row-sum norm).  When complex eigenvalue blocks make that
    infeasible, falls back to the ellipsoidal norm from a discrete
    Lyapunov equation, certified in the spectral norm.
    """
    A = np.asarray(A, dtype=float)
    spec_rad = float(np.max(np.abs(np.linalg.eigvals(A))))
    if spec_rad >= 1.0 - 1e-8:
        raise SpecError(f"spectral radius {spec_rad} not safely below 1")
    theta = target if target is not None else (1.0 + spec_rad) / 2.0
    m = A.shape[0]

    T, Z = scipy.linalg.schur(A, output="real")
    if np.allclose(np.tril(T, -1), 0.0, atol=1e-12):
        delta = 1.0
        for _ in range(200):
            D = delta ** np.arange(m)
            M = T * (D[None, :] / D[:, None])
            value = float(np.max(np.sum(np.abs(M), axis=1)))
            if value <= theta:
                S = Z.T / D[:, None]
                return NormTransform(S=S, order=np.inf, theta=theta, value=value,
                                     method="schur_scaling")
            delta /= 2.0

    # Lyapunov fallback: P with (A/theta)^T P (A/theta) = P - I
    P = scipy.linalg.solve_discrete_lyapunov((A / theta).T, np.eye(m))
    L = scipy.linalg.cholesky(P, lower=False)  # P = L^T L
    value = float(np.linalg.norm(L @ A @ np.linalg.inv(L), 2))
    return NormTransform(S=L, order=2.0, theta=theta, value=value, method="lyapunov")


@dataclass(frozen=True)
class MultivarARModel:
    A: np.ndarray
    norm: NormTransform
    model: AdditiveARModel
    minor: MinorizationSpec


def make_multivar_ar(
    A,
    perturbation: Callable,
    perturbation_bound: float,
    nu_radius: float = 1.0,
    target: Optional[float] = None,
) -> MultivarARModel:
    """mu(y) = A y + r(y) with bounded r, in the constructed norm.

    ``perturbation_bound`` bounds |r(y)| in the Euclidean norm; the
    declared R is twice its value measured through the norm transform.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    nt = subordinate_norm(A, target=target)
    metric = nt.metric()
    S = np.asarray(nt.S, dtype=float)
    if nt.order == 2.0:
        amp = float(np.linalg.norm(S, 2))
    else:
        amp = float(np.max(np.linalg.norm(S, axis=1)))  # ||.||_{2->inf}
    R = 2.0 * amp * perturbation_bound

    def mu(y, x):
        y = np.asarray(y, dtype=float)
        return y @ A.T + np.asarray(perturbation(y), dtype=float)

    def sigma_matrix(x):
        return np.eye(m)

    def ell(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (m,))

    model, minor = make_additive(
        mu, sigma_matrix, ell, rho=nt.value, R=R, dim=m, nu_radius=nu_radius,
        metric=metric, name="multivar_ar", sigma_is_matrix=True,
    )
    return MultivarARModel(A=A, norm=nt, model=model, minor=minor)


# ---------------------------------------------------------------------------
# loss-data ingestion


def load_loss_csv(path) -> np.ndarray:
    """Reads the single-column `loss` CSV; malformed rows abort with the
    offending line number."""
    values = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["loss"]:
            raise SpecError(f"expected header ['loss'], got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 1:
                raise SpecError(f"line {lineno}: expected one column, got {len(row)}")
            try:
                values.append(float(row[0]))
            except ValueError as exc:
                raise SpecError(f"line {lineno}: not a number: {row[0]!r}") from exc
    return np.asarray(values, dtype=float)


# ---------------------------------------------------------------------------
# the zoo


@dataclass(frozen=True)
class ZooEntry:
    name: str
    model: AdditiveARModel
    minor: MinorizationSpec
    env: EnvironmentSpec
    check_pair: tuple  # representative (x, y1, y2) for minorization checks


def _additive_gaussian_entry() -> ZooEntry:
    # slow linear contraction: keeps the drift close to the identity over
    # the stationary bulk, so the minorization's K-containment holds along
    # essentially every realized coupling attempt
    def mu(y, x):
        return 0.92 * np.asarray(y, dtype=float)

    def sigma(x):
        return np.ones(np.asarray(x, dtype=float).shape[:-1])

    def ell(x):
        x = np.asarray(x, dtype=float)
        return 0.1 * x[..., :1]

    model, minor = make_additive(
        mu, sigma, ell, rho=0.92, R=0.0625, dim=1, nu_radius=0.65,
        name="additive_gaussian", mu_difference=lambda y, d, x: 0.92 * np.asarray(d),
    )
    env = EnvironmentSpec(kind="gaussian_ar1", phi=0.5,
                          mixing_profile={"family": "geometric", "rate": 0.5})
    return ZooEntry("additive_gaussian", model, minor, env,
                    (np.array([0.3]), np.array([0.1]), np.array([0.3])))


def _sgld_entry() -> ZooEntry:
    sgld = make_sgld(a=1.0, h=0.1, alpha_level=0.5)
    return ZooEntry("sgld_var", sgld.model, sgld.minor, sgld.loss_env,
                    (np.array([0.2]), np.array([-0.4]), np.array([0.6])))


def _stochvol_entry() -> ZooEntry:
    sv = make_stochvol(
        b_coeffs=(1.0, 0.5, 0.25), corr=-0.3,
        drift_mu=lambda y: 0.5 * y, rho=0.5, R=0.1,
    )
    # reference pair symmetric about the drift's fixed point so the
    # nu-ball stays within K of both states
    return ZooEntry("stochvol", sv.model, sv.minor, sv.env,
                    (np.array([0.05, -0.02]), np.array([-0.1]), np.array([0.1])))


def _threshold_entry() -> ZooEntry:
    tar = make_threshold(thresholds=[0.0], slopes=[0.5, -0.5], intercepts=[1.0, -1.0])
    return ZooEntry("threshold_ar", tar.model, tar.minor, EnvironmentSpec(kind="iid"),
                    (np.array([0.0]), np.array([-1.0]), np.array([1.5])))


def _multivar_entry() -> ZooEntry:
    A = np.array([[0.6, 0.3], [-0.3, 0.6]])
    mv = make_multivar_ar(
        A, perturbation=lambda y: 0.05 * np.tanh(y),
        perturbation_bound=0.05 * math.sqrt(2.0),
    )
    return ZooEntry("multivar_ar", mv.model, mv.minor, EnvironmentSpec(kind="iid"),
                    (np.array([0.0]), np.array([0.1, -0.05]), np.array([-0.1, 0.1])))


def model_zoo() -> dict:
    entries = [
        _additive_gaussian_entry(),
        _sgld_entry(),
        _stochvol_entry(),
        _threshold_entry(),
        _multivar_entry(),
    ]
    return {e.name: e for e in entries}
