"""State, environment and noise abstractions plus the chain recursion.

The central object is :class:`ChainSpec`: a deterministic update map
``f(y, x, e)`` driven by a stationary environment process ``x`` and i.i.d.
noise ``e``.  Everything downstream (verification, coupling, estimation)
consumes these specs, so all update maps are required to broadcast over a
leading batch axis: states have shape ``(dim,)`` or ``(batch, dim)``,
environment rows ``(env_dim,)`` or ``(batch, env_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class NumericOverflowError(RuntimeError):
    """Raised when an update produces a non-finite state."""


# ---------------------------------------------------------------------------
# seeded streams


@dataclass(frozen=True)
class RngStream:
    """Deterministic, independent random stream.

    Identical ``(master_seed, stream_index)`` reproduce bit-identical
    sequences; distinct stream indices give statistically independent
    streams (numpy SeedSequence spawn keys).
    """

    master_seed: int
    stream_index: int = 0
    _subkey: tuple = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_index,) + self._subkey,
        )
        return np.random.default_rng(seq)

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, self._subkey + (index,))


# ---------------------------------------------------------------------------
# metric


@dataclass(frozen=True)
class Metric:
    """Norm-induced metric ``d(y1, y2) = || T (y1 - y2) ||_order``.

    ``transform=None`` means the identity.  ``order`` is 2 (Euclidean) or
    ``np.inf`` (max norm); the latter appears with the similarity transforms
    built for multivariate autoregressions.
    """

    transform: Optional[np.ndarray] = None
    order: float = 2.0

    def distance(self, y1, y2):
        diff = np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
        if self.transform is not None:
            diff = diff @ np.asarray(self.transform).T
        if self.order == 2.0:
            return np.linalg.norm(diff, axis=-1)
        return np.max(np.abs(diff), axis=-1)

    def norm(self, v):
        return self.distance(v, np.zeros_like(np.asarray(v, dtype=float)))


EUCLIDEAN = Metric()


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law on R^dim.  ``gauss`` is i.i.d. standard normal; ``zero``
    pins the noise for deterministic tests."""

    dim: int = 1
    kind: str = "gauss"

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gauss":
            return gen.standard_normal((size, self.dim))
        if self.kind == "zero":
            return np.zeros((size, self.dim))
        raise ValueError(f"unknown noise kind {self.kind!r}")

    def density(self, e) -> np.ndarray:
        e = np.atleast_2d(np.asarray(e, dtype=float))
        if self.kind == "gauss":
            q = np.sum(e * e, axis=-1)
            return (2.0 * np.pi) ** (-self.dim / 2.0) * np.exp(-0.5 * q)
        raise ValueError(f"no density for noise kind {self.kind!r}")


# ---------------------------------------------------------------------------
# contraction parameters and derived coupling constants


@dataclass(frozen=True)
class ContractionParams:
    rho: float
    R: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0,1), got {self.rho}")
        if self.R < 0.0:
            raise ValueError(f"R must be nonnegative, got {self.R}")


@dataclass(frozen=True)
class CouplingConstants:
    """Primed constants and schedule parameters of the two-phase coupling.

    rho_prime = (1+rho)/2, R_prime = 2R/(1-rho); N is the smallest positive
    integer with rho_prime**(N-1) <= R_prime / (4 R_prime + 4 K).
    """

    rho_prime: float
    R_prime: float
    K: float
    N: int

    def k_star(self, n: int) -> int:
        return int(math.ceil(n / 2) // self.N)


def derive_constants(contraction: ContractionParams, K: float) -> CouplingConstants:
    if K <= 0.0:
        raise ValueError("K must be positive")
    if contraction.R == 0.0:
        # no finite N satisfies the schedule inequality when R' = 0
        raise ValueError("derive_constants requires R > 0")
    rho_p = (1.0 + contraction.rho) / 2.0
    R_p = 2.0 * contraction.R / (1.0 - contraction.rho)
    bound = R_p / (4.0 * R_p + 4.0 * K)
    N = 1
    while rho_p ** (N - 1) > bound:
        N += 1
        if N > 10_000_000:
            raise RuntimeError("schedule constant N did not converge")
    return CouplingConstants(rho_prime=rho_p, R_prime=R_p, K=float(K), N=N)


def normalize_assumption(
    form: str, rho: float, R: float, L: Optional[float] = None
) -> ContractionParams:
    """Convert between the equivalent contraction hypotheses.

    ``drift``   : d(f(y1),f(y2)) <= rho d + R, converted to the uniform-
                  Lipschitz form with rho' = (1+rho)/2 and R' = R/(rho'-rho).
    ``unilip``  : sup d(f(y1),f(y2)) / max(R, d) = rho; already in target
                  form (it implies the drift form with the same constants).
    ``con+lip`` : contraction at infinity plus global Lipschitz bound L;
                  converted with R' = R L / rho.
    """
    if rho >= 1.0 or rho <= 0.0:
        raise ValueError(f"rho must lie in (0,1), got {rho}")
    if form == "unilip":
        return ContractionParams(rho=rho, R=R)
    if form == "drift":
        rho_p = (1.0 + rho) / 2.0
        return ContractionParams(rho=rho_p, R=R / (rho_p - rho))
    if form == "con+lip":
        if L is None or L < 1.0:
            raise ValueError("con+lip form needs a Lipschitz constant L >= 1")
        return ContractionParams(rho=rho, R=R * L / rho)
    raise ValueError(f"unknown assumption form {form!r}")


# ---------------------------------------------------------------------------
# environments


@dataclass(frozen=True)
class EnvironmentSpec:
    """Stationary environment generator.

    kinds:
      ``iid``            -- i.i.d. standard normal rows (env_dim 1)
      ``gaussian_ar1``   -- X_t = phi X_{t-1} + zeta_t started stationary
      ``linear_process`` -- Z_t = sum_k b_k zeta_{t-k}, truncated at len(b)-1
      ``stochvol``       -- rows (zeta_{t+1}, Z_t) with Z the linear process
      ``empirical``      -- rows resampled (iid) or cyclically sliced from data

    ``mixing_profile`` is declared metadata (decay family of alpha_X), it is
    not enforced.
    """

    kind: str = "iid"
    phi: float = 0.0
    b: Optional[np.ndarray] = None
    data: Optional[np.ndarray] = None
    iid_resample: bool = True
    mixing_profile: Optional[dict] = None

    @property
    def env_dim(self) -> int:
        return 2 if self.kind == "stochvol" else 1

    def __post_init__(self):
        if self.kind == "gaussian_ar1" and not abs(self.phi) < 1.0:
            raise ValueError("AR(1) coefficient must satisfy |phi| < 1")
        if self.kind in ("linear_process", "stochvol") and self.b is None:
            raise ValueError(f"{self.kind} environment needs coefficients b")
        if self.kind == "empirical" and self.data is None:
            raise ValueError("empirical environment needs data")

    def sample_windows(self, gen: np.random.Generator, reps: int, length: int) -> np.ndarray:
        """Draw ``reps`` independent stationary windows of ``length`` rows.

        The window is time-homogeneous, so the same array serves forward
        windows X_0..X_{n-1} and backward windows X_{-n}..X_{-1}.
        """
        if self.kind == "iid":
            return gen.standard_normal((reps, length, 1))
        if self.kind == "gaussian_ar1":
            out = np.empty((reps, length))
            sd0 = 1.0 / math.sqrt(1.0 - self.phi**2)
            innov = gen.standard_normal((reps, length))
            out[:, 0] = sd0 * innov[:, 0]
            for t in range(1, length):
                out[:, t] = self.phi * out[:, t - 1] + innov[:, t]
            return out[:, :, None]
        if self.kind in ("linear_process", "stochvol"):
            b = np.asarray(self.b, dtype=float)
            L = len(b) - 1
            zeta = gen.standard_normal((reps, length + L + 1))
            # zeta[:, j] is innovation at time j - L; Z_t needs lags t-L..t
            win = np.lib.stride_tricks.sliding_window_view(zeta[:, : length + L], L + 1, axis=1)
            Z = win @ b[::-1]
            if self.kind == "linear_process":
                return Z[:, :, None]
            zeta_next = zeta[:, L + 1 : length + L + 1]
            return np.stack([zeta_next, Z], axis=-1)
        if self.kind == "empirical":
            data = np.asarray(self.data, dtype=float)
            if self.iid_resample:
                idx = gen.integers(0, len(data), size=(reps, length))
            else:
                start = gen.integers(0, len(data), size=reps)
                idx = (start[:, None] + np.arange(length)[None, :]) % len(data)
            return data[idx][:, :, None]
        raise ValueError(f"unknown environment kind {self.kind!r}")

    def sample_window(self, gen: np.random.Generator, length: int) -> np.ndarray:
        return self.sample_windows(gen, 1, length)[0]

    def sample_marginal(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return self.sample_windows(gen, size, 1)[:, 0, :]


# ---------------------------------------------------------------------------
# chain specification and simulation


@dataclass(frozen=True)
class ChainSpec:
    """A Markov chain in random environment: Y_{n+1} = f(Y_n, X_n, eps_{n+1}).

    ``update`` must be deterministic and broadcast over a leading batch axis.
    ``theta`` is the moment exponent used by the stability diagnostics,
    ``reference_point`` its anchor state.
    """

    dim_state: int
    update: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    noise: NoiseSpec
    contraction: ContractionParams
    metric: Metric = EUCLIDEAN
    theta: float = 1.0
    reference_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.reference_point is None:
            object.__setattr__(self, "reference_point", np.zeros(self.dim_state))

    def distance(self, y1, y2):
        return self.metric.distance(y1, y2)


@dataclass
class Trajectory:
    """States Y_0..Y_n with the environment rows that produced them.

    ``env_start`` is the time index of ``env_window[0]``; backward windows
    use negative start indices.  Access beyond the window is an error by
    construction (nothing is generated lazily).
    """

    states: np.ndarray  # (n+1, dim)
    env_window: np.ndarray  # (n, env_dim)
    env_start: int = 0

    def __len__(self) -> int:
        return self.states.shape[0]


def _check_finite(y: np.ndarray, context: str):
    if not np.all(np.isfinite(y)):
        raise NumericOverflowError(f"non-finite state produced by {context}")


def step(spec: ChainSpec, y, x, stream: RngStream) -> np.ndarray:
    """One application of the chain update with noise drawn from ``stream``."""
    gen = stream.generator()
    e = spec.noise.sample(gen, 1)[0]
    out = np.asarray(spec.update(np.asarray(y, dtype=float), np.asarray(x, dtype=float), e), dtype=float)
    _check_finite(out, f"step(y={y!r}, x={x!r})")
    return out


def simulate_forward(
    spec: ChainSpec, env: EnvironmentSpec, y0, n: int, stream: RngStream
) -> Trajectory:
    """Iterate the chain n steps along one freshly drawn environment window."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    gen = stream.generator()
    window = env.sample_window(gen, n) if n > 0 else np.zeros((0, env.env_dim))
    noise = spec.noise.sample(gen, n)
    states = np.empty((n + 1, spec.dim_state))
    states[0] = np.asarray(y0, dtype=float)
    for t in range(n):
        states[t + 1] = spec.update(states[t], window[t], noise[t])
    _check_finite(states, "simulate_forward")
    return Trajectory(states=states, env_window=window, env_start=0)


def simulate_backward(
    spec: ChainSpec, env: EnvironmentSpec, y0, n: int, stream: RngStream
) -> Trajectory:
    """Iterate the chain from y0 along the backward window X_{-n}..X_{-1}.

    By stationarity the window law equals that of X_0..X_{n-1}; only the
    index bookkeeping differs, which is what the quenched-limit tests need.
    """
    if n < 1:
        raise ValueError("backward simulation needs n >= 1")
    traj = simulate_forward(spec, env, y0, n, stream)
    traj.env_start = -n
    return traj


def simulate_forward_batch(
    spec: ChainSpec,
    env: EnvironmentSpec,
    y0,
    n: int,
    reps: int,
    stream: RngStream,
    keep: str = "final",
):
    """Vectorized forward simulation of independent replications.

    Returns the final states (reps, dim) with keep="final", or the full
    state array (reps, n+1, dim) with keep="all".
    """
    gen = stream.generator()
    windows = env.sample_windows(gen, reps, n)
    y = np.broadcast_to(np.asarray(y0, dtype=float), (reps, spec.dim_state)).copy()
    if keep == "all":
        out = np.empty((reps, n + 1, spec.dim_state))
        out[:, 0] = y
    for t in range(n):
        e = spec.noise.sample(gen, reps)
        y = np.asarray(spec.update(y, windows[:, t], e), dtype=float)
        if keep == "all":
            out[:, t + 1] = y
    _check_finite(y, "simulate_forward_batch")
    return out if keep == "all" else y
