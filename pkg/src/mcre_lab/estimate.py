"""Empirical estimators: total-variation decay between sample clouds,
alpha-mixing lower bounds over a finite event class, theta-moment
stability curves, and decay-rate template fitting.

All logarithms in the rate templates are base 2, and template fits use
indices n >= 8 so that loglog(n) is defined and positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import RngStream

N_BOOTSTRAP = 200
MIN_FIT_INDEX = 8
TEMPLATES = ("geometric", "bernstein", "stretched", "polynomial")


class DegenerateFitError(ValueError):
    """Curve has no usable (positive-estimate) points to fit."""


@dataclass
class DecayCurve:
    """A decay curve: estimates with standard errors on an increasing index
    grid, optionally annotated with a fitted rate template."""

    ns: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    kind: str = "tv"  # tv | mixing | moment
    template: Optional[str] = None
    fitted_params: Optional[dict] = None
    fit_quality: Optional[float] = None

    def __post_init__(self):
        self.ns = np.asarray(self.ns)
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if np.any(np.diff(self.ns) <= 0):
            raise ValueError("curve indices must be strictly increasing")
        hi = {"tv": 1.0, "mixing": 0.25}.get(self.kind)
        if hi is not None and (
            np.any(self.estimates < -1e-12) or np.any(self.estimates > hi + 1e-12)
        ):
            raise ValueError(f"{self.kind} estimates must lie in [0, {hi}]")


# ---------------------------------------------------------------------------
# total variation


def tv_estimate(
    samples_a,
    samples_b,
    bins: int = 64,
    stream: Optional[RngStream] = None,
    coords: Optional[Sequence[int]] = None,
):
    """Histogram half-L1 distance between two sample clouds (dim <= 2).

    A consistent lower-bound estimator of total variation for the fixed
    partition; the standard error comes from 200 multinomial bootstrap
    resamples of the bin counts.  Returns (estimate, std_error).
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(samples_b, dtype=float).T).T
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    if coords is not None:
        a, b = a[:, list(coords)], b[:, list(coords)]
    dim = a.shape[1]
    if dim > 2:
        raise ValueError("TV estimation supports dim <= 2; pass coords to project")
    pooled = np.concatenate([a, b], axis=0)
    lo, hi = pooled.min(axis=0), pooled.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    edges = [np.linspace(lo[i] - 1e-9 * span[i], hi[i] + 1e-9 * span[i], bins + 1)
             for i in range(dim)]
    ca, _ = np.histogramdd(a, bins=edges)
    cb, _ = np.histogramdd(b, bins=edges)
    ca, cb = ca.ravel(), cb.ravel()
    na, nb = len(a), len(b)
    est = 0.5 * float(np.sum(np.abs(ca / na - cb / nb)))
    gen = (stream or RngStream(0)).generator()
    ra = gen.multinomial(na, ca / na, size=N_BOOTSTRAP) / na
    rb = gen.multinomial(nb, cb / nb, size=N_BOOTSTRAP) / nb
    boots = 0.5 * np.sum(np.abs(ra - rb), axis=1)
    return est, float(np.std(boots, ddof=1))


# ---------------------------------------------------------------------------
# alpha-mixing lower bound


@dataclass
class MixingEstimate:
    """Finite-class lower bound on the alpha-mixing coefficient at one lag.

    ``alpha_hat`` maximizes |P(A and B) - P(A)P(B)| over products of
    decile half-lines, so it underestimates the full sigma-field supremum.
    ``std_error`` is the root-mean-square of the same max statistic under
    random repairings of the two sides (a null-calibrated scale: i.i.d.
    data give alpha_hat of the same order as std_error).
    """

    lag: int
    alpha_hat: float
    std_error: float
    event_class: str


def _decile_indicators(values: np.ndarray) -> np.ndarray:
    """Boolean event matrix (n_events, reps) of half-lines {v <= decile}
    for each column of ``values`` (reps, n_times) plus their pairwise
    intersections across columns."""
    reps, ntimes = values.shape
    singles = []
    for t in range(ntimes):
        qs = np.quantile(values[:, t], np.arange(1, 10) / 10.0)
        singles.append(values[:, t][None, :] <= qs[:, None])
    events = list(np.concatenate(singles, axis=0))
    if ntimes >= 2:
        inter = singles[0][:, None, :] & singles[1][None, :, :]
        events.extend(inter.reshape(-1, reps))
    return np.asarray(events)


def _max_dependence(ind_a: np.ndarray, ind_b: np.ndarray) -> float:
    reps = ind_a.shape[1]
    pa = ind_a.mean(axis=1)
    pb = ind_b.mean(axis=1)
    joint = (ind_a.astype(float) @ ind_b.astype(float).T) / reps
    return float(np.max(np.abs(joint - np.outer(pa, pb))))


def alpha_mixing_estimate(
    ensemble: np.ndarray,
    lag: int,
    stream: Optional[RngStream] = None,
    n_null: int = 20,
) -> MixingEstimate:
    """Lower-bound alpha-mixing estimate from an ensemble of stationary
    trajectories (reps, length) or (reps, length, dim); dim > 1 uses the
    first coordinate.
    """
    arr = np.asarray(ensemble, dtype=float)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    reps, length = arr.shape
    if lag < 1:
        raise ValueError("lag must be >= 1")
    past_times = [0, 1] if length > 1 + lag + 1 else [0]
    t_last = past_times[-1]
    future_times = [t_last + lag]
    if t_last + lag + 1 < length:
        future_times.append(t_last + lag + 1)
    if future_times[-1] >= length:
        raise ValueError(f"lag {lag} exceeds trajectory length {length}")
    ind_a = _decile_indicators(arr[:, past_times])
    ind_b = _decile_indicators(arr[:, future_times])
    alpha_hat = _max_dependence(ind_a, ind_b)
    gen = (stream or RngStream(0)).generator()
    null_vals = np.empty(n_null)
    for i in range(n_null):
        perm = gen.permutation(reps)
        null_vals[i] = _max_dependence(ind_a, ind_b[:, perm])
    se = float(np.sqrt(np.mean(null_vals**2)))
    desc = (
        f"decile half-lines at times {past_times} x {future_times}, "
        "singletons and pairwise intersections"
    )
    return MixingEstimate(lag=lag, alpha_hat=min(alpha_hat, 0.25),
                          std_error=se, event_class=desc)


def mixing_curve(
    ensemble: np.ndarray, lags: Sequence[int], stream: Optional[RngStream] = None
) -> DecayCurve:
    ests, ses = [], []
    for lag in lags:
        m = alpha_mixing_estimate(ensemble, lag, stream=stream)
        ests.append(m.alpha_hat)
        ses.append(m.std_error)
    return DecayCurve(np.asarray(lags), np.asarray(ests), np.asarray(ses), kind="mixing")


# ---------------------------------------------------------------------------
# theta-moment stability


def theta_moment(states: np.ndarray, y_tilde, theta: float, metric=None) -> DecayCurve:
    """Running moment curve E[d^theta(y_tilde, Y_t)] from an ensemble of
    trajectories (reps, n+1, dim)."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    states = np.asarray(states, dtype=float)
    y_tilde = np.asarray(y_tilde, dtype=float)
    if metric is None:
        d = np.linalg.norm(states - y_tilde, axis=-1)
    else:
        d = metric.distance(states, y_tilde)
    m = d**theta
    reps = m.shape[0]
    est = m.mean(axis=0)
    se = m.std(axis=0, ddof=1) / math.sqrt(reps)
    return DecayCurve(np.arange(m.shape[1]), est, se, kind="moment")


# ---------------------------------------------------------------------------
# rate-template fitting


def _template_shape(name: str, n: np.ndarray, gamma: float = None) -> np.ndarray:
    log2n = np.log2(n)
    if name == "geometric":
        return n.astype(float)
    if name == "bernstein":
        return -n / (log2n * np.log2(log2n))
    if name == "stretched":
        return -(n.astype(float) ** gamma)
    if name == "polynomial":
        return np.log2(log2n / n)
    raise ValueError(f"unknown template {name!r}")


def _linear_fit(y: np.ndarray, s: np.ndarray):
    X = np.stack([np.ones_like(s), s], axis=1)
    coef, res, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.linalg.norm(y - X @ coef))
    return coef, resid


def rate_fit(ns, estimates, template: str):
    """Least-squares fit of log2(estimate) against one decay template.

    Templates: geometric lambda^n; bernstein exp(-c n/(log n loglog n));
    stretched exp(-c n^gamma) with gamma on a grid in [0.05, 0.95];
    polynomial log^gamma(n)/n^gamma.  Returns (params dict, residual norm).
    Only points with n >= 8 and estimate > 0 participate; fewer than 5
    such points is an error.
    """
    ns = np.asarray(ns, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    keep = (ns >= MIN_FIT_INDEX) & (estimates > 0.0)
    if np.all(estimates[ns >= MIN_FIT_INDEX] <= 0.0):
        raise DegenerateFitError("all estimates are zero on the fit range")
    if int(np.sum(keep)) < 5:
        raise ValueError("need at least 5 positive curve points with n >= 8")
    n, y = ns[keep], np.log2(estimates[keep])
    if template == "stretched":
        best = None
        for gamma in np.arange(0.05, 0.951, 0.05):
            coef, resid = _linear_fit(y, _template_shape("stretched", n, gamma))
            if best is None or resid < best[2]:
                best = (gamma, coef, resid)
        gamma, coef, resid = best
        params = {"gamma": float(gamma), "c": float(coef[1] * math.log(2.0)),
                  "log2_amplitude": float(coef[0])}
        return params, resid
    coef, resid = _linear_fit(y, _template_shape(template, n))
    if template == "geometric":
        params = {"lam": float(2.0 ** coef[1]), "log2_amplitude": float(coef[0])}
    elif template == "bernstein":
        params = {"c": float(coef[1] * math.log(2.0)), "log2_amplitude": float(coef[0])}
    elif template == "polynomial":
        params = {"gamma": float(coef[1]), "log2_amplitude": float(coef[0])}
    else:
        raise ValueError(f"unknown template {template!r}")
    return params, resid


def compare_templates(ns, estimates) -> List[tuple]:
    """Fits all four templates and returns (template, params, residual)
    triples sorted by residual, best first."""
    out = []
    for name in TEMPLATES:
        params, resid = rate_fit(ns, estimates, name)
        out.append((name, params, resid))
    out.sort(key=lambda t: t[2])
    return out


def fit_curve(curve: DecayCurve, template: Optional[str] = None) -> DecayCurve:
    """Returns a copy of the curve annotated with the requested (or
    best-residual) template fit."""
    if template is None:
        name, params, resid = compare_templates(curve.ns, curve.estimates)[0]
    else:
        name = template
        params, resid = rate_fit(curve.ns, curve.estimates, template)
    return DecayCurve(curve.ns, curve.estimates, curve.std_errors, kind=curve.kind,
                      template=name, fitted_params=params, fit_quality=resid)
