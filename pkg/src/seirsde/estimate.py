"""Closed-form estimators and the likelihood-ratio evaluator.

Every time integral is a left-point rectangle sum and every integral
against increments of a martingale (Wiener or log-coordinate) is a
left-point Ito sum; trapezoids would bias the stochastic integrals. The
noise intensity comes first from quadratic variation, then the two
transmission rates solve a 2x2 normal-equations system and the symptomatic
proportion has its own closed form; all three accept a known sigma instead.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (DegenerateDenominatorError, DomainError, EmptyInputError,
                     LengthMismatchError, MissingIncrementsError,
                     ReplicateError, SingularSystemError)
from .model import (HypothesisWindow, ModelParams, Path, hypothesis_window,
                    window_end_index)
from .reconstruct import ReconstructConfig, reconstruct_replicate_arrays
from .simulate import WienerIncrements

DENOMINATOR_GUARD = 1e-30
SINGULARITY_GUARD = 1e-12


def left_riemann(values: Sequence[float], dt: float) -> float:
    """Left-point rectangle sum: every supplied value times dt.

    Callers integrating over a path grid pass the integrand without its
    terminal point.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptyInputError("nothing to integrate")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(vals.sum() * dt)


def ito_log_integral(f: Sequence[float], x: Sequence[float]) -> float:
    """Left-point Ito sum of f against the increments of log x."""
    f_arr = np.asarray(f, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if f_arr.shape != x_arr.shape:
        raise LengthMismatchError("f and x must have equal length")
    if f_arr.size < 2:
        raise LengthMismatchError("need at least two points")
    if np.any(x_arr <= 0.0):
        idx = int(np.argmax(x_arr <= 0.0))
        raise DomainError(f"x must be strictly positive, got {x_arr[idx]!r}",
                          index=idx)
    return float(np.sum(f_arr[:-1] * np.diff(np.log(x_arr))))


def quadratic_variation(x: Sequence[float]) -> float:
    """Sum of squared increments of x."""
    arr = np.asarray(x, dtype=float)
    if arr.size < 2:
        raise LengthMismatchError("need at least two points")
    return float(np.sum(np.diff(arr) ** 2))


class SigmaEstimate(NamedTuple):
    sigma: float
    components: np.ndarray  # the five per-equation variance estimates


@dataclass(frozen=True)
class JFunctionals:
    """Path functionals that build the normal-equations system."""

    j_s: float
    j_a: float
    j_sa: float
    j_2: float

    def __post_init__(self):
        for name in ("j_s", "j_a", "j_sa", "j_2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        # Cauchy-Schwarz on the discretised sums, with rounding headroom
        if self.j_sa**2 > self.j_s * self.j_a * (1.0 + 1e-9) + 1e-300:
            raise ValueError("j_sa^2 exceeds j_s * j_a")


class BetaEstimate(NamedTuple):
    beta_s: float
    beta_a: float
    condition_number: float


class PEstimate(NamedTuple):
    value: float
    clamped: float
    out_of_range: bool


def _columns(path: Path):
    return path.s, path.e, path.i_a, path.i_s, path.r


def _require_positive(name, arr):
    bad = arr <= 0.0
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DomainError(f"{name} must stay positive for this estimator, "
                          f"got {arr[idx]!r}", index=idx)


def estimate_sigma(path: Path) -> SigmaEstimate:
    """Noise intensity from the quadratic variation of all five coordinates.

    Component i is the quadratic variation of X_i over the time integral of
    X_i squared (with 1 - S in place of S); the point estimate is the root
    of the component mean.
    """
    if len(path) < 2:
        raise LengthMismatchError("need at least two grid points")
    s, e, ia, is_, r = _columns(path)
    comps = np.empty(5)
    for i, series in enumerate((1.0 - s, e, ia, is_, r)):
        denom = float(np.sum(series[:-1] ** 2) * path.dt)
        if denom < DENOMINATOR_GUARD:
            raise DegenerateDenominatorError(
                f"component {i} denominator {denom!r} below guard")
        comps[i] = np.sum(np.diff(series) ** 2) / denom
    return SigmaEstimate(float(np.sqrt(comps.mean())), comps)


def j_functionals(path: Path, kappa: float) -> JFunctionals:
    """J_s, J_a, J_sa and J_2 by left-point rectangles."""
    if len(path) < 2:
        raise LengthMismatchError("need at least two grid points")
    s, e, ia, is_, r = _columns(path)
    one_minus_s = 1.0 - s
    _require_positive("1-S", one_minus_s)
    _require_positive("E", e)
    _require_positive("I_a", ia)
    _require_positive("I_s", is_)
    dt = path.dt
    u = s / one_minus_s
    v = s / e
    j_s = float(np.sum(((u * is_) ** 2 + (v * is_) ** 2)[:-1]) * dt)
    j_a = float(np.sum(((u * ia) ** 2 + (v * ia) ** 2)[:-1]) * dt)
    j_sa = float(np.sum((ia * is_ * (u**2 + v**2))[:-1]) * dt)
    j_2 = float(np.sum((kappa**2 * e**2 / is_**2
                        + kappa**2 * e**2 / ia**2)[:-1]) * dt)
    return JFunctionals(j_s, j_a, j_sa, j_2)


def _sigma_or_estimate(path: Path, sigma: Optional[float]) -> float:
    if sigma is None:
        return estimate_sigma(path).sigma
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return float(sigma)


def _a_functional(path: Path, istar: np.ndarray, params: ModelParams,
                  sigma: float) -> float:
    """Right-hand side of the normal equations for one infectious branch."""
    s, e, _, _, r = _columns(path)
    one_minus_s = 1.0 - s
    dt = path.dt
    u = s * istar / one_minus_s
    v = s * istar / e
    half_var = 0.5 * sigma * sigma
    t1 = float(np.sum(u[:-1] * np.diff(np.log(one_minus_s))))
    t2 = float(np.sum((u * (params.mu + params.gamma * r / one_minus_s
                            + half_var))[:-1]) * dt)
    t3 = float(np.sum(v[:-1] * np.diff(np.log(e))))
    t4 = float(np.sum((v * (params.mu + half_var))[:-1]) * dt)
    t5 = params.kappa * float(np.sum(v[:-1]) * dt)
    return t1 + t2 + t3 + t4 + t5


def estimate_betas(path: Path, params: ModelParams,
                   sigma: Optional[float] = None,
                   restrict_to_window: bool = False) -> BetaEstimate:
    """Transmission rates from the 2x2 normal-equations solve.

    mu, gamma, kappa are taken as known from ``params``; sigma defaults to
    the quadratic-variation estimate on the same path.
    """
    path = _maybe_truncate(path, restrict_to_window)
    sig = _sigma_or_estimate(path, sigma)
    j = j_functionals(path, params.kappa)
    det = j.j_s * j.j_a - j.j_sa**2
    if det <= SINGULARITY_GUARD * j.j_s * j.j_a:
        raise SingularSystemError(
            f"normal equations singular: det = {det!r} with "
            f"j_s j_a = {j.j_s * j.j_a!r}")
    a_s = _a_functional(path, path.i_s, params, sig)
    a_a = _a_functional(path, path.i_a, params, sig)
    beta_s = (j.j_a * a_s - j.j_sa * a_a) / det
    beta_a = (j.j_s * a_a - j.j_sa * a_s) / det
    half_gap = np.hypot(j.j_s - j.j_a, 2.0 * j.j_sa)
    lam_max = 0.5 * (j.j_s + j.j_a + half_gap)
    lam_min = 0.5 * (j.j_s + j.j_a - half_gap)
    cond = float("inf") if lam_min <= 0 else lam_max / lam_min
    return BetaEstimate(float(beta_s), float(beta_a), float(cond))


def closed_form_betas(path: Path, params: ModelParams,
                      sigma: float) -> tuple:
    """The fully expanded closed forms, accumulated term by term.

    Algebraically identical to ``estimate_betas`` but grouped the way the
    expansion distributes the J factors into each integral; the two
    evaluations agree to rounding, which the tests assert.
    """
    sig = float(sigma)
    j = j_functionals(path, params.kappa)
    det = j.j_s * j.j_a - j.j_sa**2
    if det <= SINGULARITY_GUARD * j.j_s * j.j_a:
        raise SingularSystemError("normal equations singular")
    s, e, _, _, r = _columns(path)
    one_minus_s = 1.0 - s
    dt = path.dt
    half_var = 0.5 * sig * sig

    def pieces(istar):
        u = s * istar / one_minus_s
        v = s * istar / e
        return (
            float(np.sum(u[:-1] * np.diff(np.log(one_minus_s)))),
            float(np.sum((u * (params.mu + params.gamma * r / one_minus_s
                               + half_var))[:-1]) * dt),
            float(np.sum(v[:-1] * np.diff(np.log(e)))),
            float(np.sum((v * (params.mu + half_var))[:-1]) * dt),
            float(np.sum(v[:-1]) * dt),
        )

    t1s, t2s, t3s, t4s, t5s = pieces(path.i_s)
    t1a, t2a, t3a, t4a, t5a = pieces(path.i_a)
    beta_s = (j.j_a * t1s + j.j_a * t2s + j.j_a * t3s + j.j_a * t4s
              + params.kappa * j.j_a * t5s
              - j.j_sa * t1a - j.j_sa * t2a - j.j_sa * t3a - j.j_sa * t4a
              - params.kappa * j.j_sa * t5a) / det
    beta_a = (-j.j_sa * t1s - j.j_sa * t2s - j.j_sa * t3s - j.j_sa * t4s
              - params.kappa * j.j_sa * t5s
              + j.j_s * t1a + j.j_s * t2a + j.j_s * t3a + j.j_s * t4a
              + params.kappa * j.j_s * t5a) / det
    return beta_s, beta_a


def estimate_p(path: Path, params: ModelParams,
               sigma: Optional[float] = None,
               restrict_to_window: bool = False) -> PEstimate:
    """Closed form for the asymptomatic proportion.

    Out-of-range values are returned raw with a flagged clamped copy; no
    silent truncation, since an excursion outside [0, 1] usually signals a
    growth-window violation.
    """
    path = _maybe_truncate(path, restrict_to_window)
    sig = _sigma_or_estimate(path, sigma)
    j = j_functionals(path, params.kappa)
    if j.j_2 <= DENOMINATOR_GUARD:
        raise DegenerateDenominatorError(f"J_2 = {j.j_2!r} below guard")
    _, e, ia, is_, _ = _columns(path)
    dt = path.dt
    k = params.kappa
    half_var = 0.5 * sig * sig
    value = (k**2 * float(np.sum((e**2 / is_**2)[:-1]) * dt)
             - k * float(np.sum((e / is_)[:-1] * np.diff(np.log(is_))))
             + k * float(np.sum((e / ia)[:-1] * np.diff(np.log(ia))))
             - k * (params.alpha_s + params.mu + half_var)
             * float(np.sum((e / is_)[:-1]) * dt)
             + k * (params.alpha_a + params.mu + half_var)
             * float(np.sum((e / ia)[:-1]) * dt)) / j.j_2
    clamped = min(max(value, 0.0), 1.0)
    return PEstimate(float(value), float(clamped), not 0.0 <= value <= 1.0)


def girsanov_loglik(path: Path, theta: Sequence[float],
                    theta0: Sequence[float], kappa: float, sigma: float,
                    increments=None) -> float:
    """Log likelihood ratio of theta against theta0 along the path.

    theta and theta0 are (beta_s, beta_a, p) triples. The stochastic
    integral uses the path's own Wiener increments unless ``increments``
    supplies recovered ones (e.g. from the residual diagnostics); the
    recovered-compartment row of the drift difference is identically zero,
    so only four rows contribute.
    """
    if increments is None:
        increments = path.wiener
    elif isinstance(increments, WienerIncrements):
        increments = increments.values
    if increments is None:
        raise MissingIncrementsError(
            "path has no Wiener increments and none were supplied")
    dw = np.asarray(increments, dtype=float)
    if dw.shape != (len(path) - 1,):
        raise LengthMismatchError("increments must hold one value per step")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    beta_s, beta_a, p = (float(t) for t in theta)
    beta_s0, beta_a0, p0 = (float(t) for t in theta0)
    s, e, ia, is_, _ = _columns(path)
    one_minus_s = 1.0 - s
    _require_positive("1-S", one_minus_s)
    _require_positive("E", e)
    _require_positive("I_a", ia)
    _require_positive("I_s", is_)
    dfb = (beta_s - beta_s0) * is_ + (beta_a - beta_a0) * ia
    dp = p - p0
    g1 = -dfb * s / (sigma * one_minus_s)
    g2 = -dfb * s / (sigma * e)
    g3 = -dp * kappa * e / (sigma * ia)
    g4 = dp * kappa * e / (sigma * is_)
    stochastic = float(np.sum((g1 + g2 + g3 + g4)[:-1] * dw))
    quad = float(np.sum((g1**2 + g2**2 + g3**2 + g4**2)[:-1]) * path.dt)
    return stochastic - 0.5 * quad


def estimate_path(path: Path, params: ModelParams,
                  sigma: Optional[float] = None,
                  restrict_to_window: bool = False) -> "EstimateReport":
    """Full single-path report: sigma, both betas, p, J's and the window."""
    window = hypothesis_window(path)
    work = _maybe_truncate(path, restrict_to_window, window)
    sig_est = estimate_sigma(work) if sigma is None else None
    sig = sig_est.sigma if sigma is None else float(sigma)
    comps = sig_est.components if sig_est is not None else None
    betas = estimate_betas(work, params, sigma=sig)
    p_est = estimate_p(work, params, sigma=sig)
    j = j_functionals(work, params.kappa)
    return EstimateReport(
        beta_s=betas.beta_s, beta_a=betas.beta_a, p=p_est.value,
        p_clamped=p_est.clamped, p_out_of_range=p_est.out_of_range,
        sigma=sig, sigma_components=comps, j=j,
        condition_number=betas.condition_number, window=window,
        ci=None, n_replicates=None)


def _maybe_truncate(path: Path, restrict: bool,
                    window: Optional[HypothesisWindow] = None) -> Path:
    if not restrict:
        return path
    if window is None:
        window = hypothesis_window(path)
    end = window_end_index(path, window)
    if end + 1 < len(path):
        warnings.warn(
            f"growth window ends at grid index {end}; estimating on the "
            f"first {end + 1} of {len(path)} points", stacklevel=3)
    if end < 1:
        raise DomainError("growth window is empty; nothing to estimate on")
    return path.truncated(end + 1)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimates plus everything needed to judge them."""

    beta_s: float
    beta_a: float
    p: float
    p_clamped: float
    p_out_of_range: bool
    sigma: float
    sigma_components: Optional[np.ndarray]
    j: JFunctionals
    condition_number: float
    window: HypothesisWindow
    ci: Optional[dict]
    n_replicates: Optional[int]

    def to_json_dict(self) -> dict:
        return {
            "beta_s": self.beta_s,
            "beta_a": self.beta_a,
            "p": self.p,
            "sigma": self.sigma,
            "ci": self.ci,
            "j_functionals": {"j_s": self.j.j_s, "j_a": self.j.j_a,
                              "j_sa": self.j.j_sa, "j_2": self.j.j_2},
            "condition_number": self.condition_number,
            "window": {"t_start": self.window.t_start,
                       "t_end": self.window.t_end,
                       "satisfied": self.window.satisfied},
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)


def replicate_estimates(obs_is, cfg: ReconstructConfig, n_rep: int,
                        sigma: Optional[float] = None) -> EstimateReport:
    """Reconstruct n_rep latent paths and estimate each one.

    Reports replicate means as point values with 2.5/97.5 percentile
    confidence intervals; fails when more than 10% of replicates error.
    """
    if n_rep < 2:
        raise ValueError("n_rep must be at least 2")
    x, dw, failures = reconstruct_replicate_arrays(obs_is, cfg, n_rep)
    batch = _batch_estimates(x, cfg.dt, cfg.params, sigma=sigma,
                             skip=set(failures))
    failures.update(batch.failures)
    if len(failures) > 0.10 * n_rep:
        raise ReplicateError(failures)
    ok = np.array([i for i in range(n_rep) if i not in failures])
    if ok.size < 2:
        raise ReplicateError(failures)

    def summary(vals):
        v = vals[ok]
        return float(np.mean(v)), {"lo": float(np.percentile(v, 2.5)),
                                   "hi": float(np.percentile(v, 97.5))}

    bs_mean, bs_ci = summary(batch.beta_s)
    ba_mean, ba_ci = summary(batch.beta_a)
    p_mean, p_ci = summary(batch.p)
    sg_mean, sg_ci = summary(batch.sigma)
    first = int(ok[0])
    first_path = Path(0.0, cfg.dt, x[first, :, 0], x[first, :, 1],
                      x[first, :, 2], x[first, :, 3], x[first, :, 4],
                      wiener=dw[first], require_simplex=False)
    window = hypothesis_window(first_path)
    j_mean = JFunctionals(*(float(np.mean(getattr(batch, name)[ok]))
                            for name in ("j_s", "j_a", "j_sa", "j_2")))
    return EstimateReport(
        beta_s=bs_mean, beta_a=ba_mean, p=p_mean,
        p_clamped=min(max(p_mean, 0.0), 1.0),
        p_out_of_range=not 0.0 <= p_mean <= 1.0,
        sigma=sg_mean,
        sigma_components=np.mean(batch.sigma_components[ok], axis=0),
        j=j_mean,
        condition_number=float(np.mean(batch.condition_number[ok])),
        window=window,
        ci={"beta_s": bs_ci, "beta_a": ba_ci, "p": p_ci, "sigma": sg_ci},
        n_replicates=int(ok.size))


class _BatchEstimates(NamedTuple):
    beta_s: np.ndarray
    beta_a: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    sigma_components: np.ndarray
    j_s: np.ndarray
    j_a: np.ndarray
    j_sa: np.ndarray
    j_2: np.ndarray
    condition_number: np.ndarray
    failures: dict


def _batch_estimates(x: np.ndarray, dt: float, params: ModelParams,
                     sigma: Optional[float] = None,
                     skip: Optional[set] = None) -> _BatchEstimates:
    """Vectorised sigma/beta/p estimation over (n_rep, n, 5) state arrays.

    Rows listed in ``skip`` and rows violating a domain or singularity
    guard are reported in ``failures``; their outputs are NaN.
    """
    n_rep = x.shape[0]
    skip = skip or set()
    s, e, ia, is_, r = (x[:, :, i] for i in range(5))
    one_minus_s = 1.0 - s
    failures = {}
    valid = np.ones(n_rep, dtype=bool)
    for i in list(skip):
        valid[i] = False
    for name, arr in (("1-S", one_minus_s), ("E", e), ("I_a", ia),
                      ("I_s", is_)):
        bad = valid & np.any(arr <= 0.0, axis=1)
        for i in np.flatnonzero(bad):
            failures[int(i)] = DomainError(
                f"{name} not positive", index=int(np.argmax(arr[i] <= 0.0)))
        valid &= ~bad

    with np.errstate(all="ignore"):
        comps = np.stack([
            np.sum(np.diff(series, axis=1) ** 2, axis=1)
            / (np.sum(series[:, :-1] ** 2, axis=1) * dt)
            for series in (one_minus_s, e, ia, is_, r)
        ], axis=-1)
        sig = np.sqrt(comps.mean(axis=-1)) if sigma is None \
            else np.full(n_rep, float(sigma))

        u = s / one_minus_s
        v = s / e
        j_s = np.sum(((u * is_) ** 2 + (v * is_) ** 2)[:, :-1], axis=1) * dt
        j_a = np.sum(((u * ia) ** 2 + (v * ia) ** 2)[:, :-1], axis=1) * dt
        j_sa = np.sum((ia * is_ * (u**2 + v**2))[:, :-1], axis=1) * dt
        k = params.kappa
        j_2 = np.sum((k**2 * e**2 / is_**2 + k**2 * e**2 / ia**2)[:, :-1],
                     axis=1) * dt
        det = j_s * j_a - j_sa**2
        singular = valid & (det <= SINGULARITY_GUARD * j_s * j_a)
        for i in np.flatnonzero(singular):
            failures[int(i)] = SingularSystemError(
                f"det = {det[i]!r} with j_s j_a = {(j_s * j_a)[i]!r}")
        valid &= ~singular

        half_var = (0.5 * sig * sig)[:, None]
        dlog_oms = np.diff(np.log(one_minus_s), axis=1)
        dlog_e = np.diff(np.log(e), axis=1)

        def a_star(istar):
            uu = s * istar / one_minus_s
            vv = s * istar / e
            return (np.sum(uu[:, :-1] * dlog_oms, axis=1)
                    + np.sum((uu * (params.mu
                                    + params.gamma * r / one_minus_s
                                    + half_var))[:, :-1], axis=1) * dt
                    + np.sum(vv[:, :-1] * dlog_e, axis=1)
                    + np.sum((vv * (params.mu + half_var))[:, :-1],
                             axis=1) * dt
                    + k * np.sum(vv[:, :-1], axis=1) * dt)

        a_s = a_star(is_)
        a_a = a_star(ia)
        beta_s = (j_a * a_s - j_sa * a_a) / det
        beta_a = (j_s * a_a - j_sa * a_s) / det

        hv = half_var[:, 0]
        p_num = (k**2 * np.sum((e**2 / is_**2)[:, :-1], axis=1) * dt
                 - k * np.sum((e / is_)[:, :-1]
                              * np.diff(np.log(is_), axis=1), axis=1)
                 + k * np.sum((e / ia)[:, :-1]
                              * np.diff(np.log(ia), axis=1), axis=1)
                 - k * (params.alpha_s + params.mu + hv)
                 * np.sum((e / is_)[:, :-1], axis=1) * dt
                 + k * (params.alpha_a + params.mu + hv)
                 * np.sum((e / ia)[:, :-1], axis=1) * dt)
        p_hat = p_num / j_2

        half_gap = np.hypot(j_s - j_a, 2.0 * j_sa)
        lam_max = 0.5 * (j_s + j_a + half_gap)
        lam_min = 0.5 * (j_s + j_a - half_gap)
        cond = np.where(lam_min > 0, lam_max / np.where(lam_min > 0, lam_min, 1.0),
                        np.inf)

    for arr in (beta_s, beta_a, p_hat, sig, cond):
        arr[~valid] = np.nan
    comps[~valid] = np.nan
    return _BatchEstimates(beta_s, beta_a, p_hat, sig, comps,
                           j_s, j_a, j_sa, j_2, cond, failures)
