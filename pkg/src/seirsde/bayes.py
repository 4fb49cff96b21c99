"""Deterministic-model Bayesian calibration baseline.

Classical fourth-order Runge-Kutta integrates the death-carrying system,
cumulative symptomatic incidence gets a Poisson likelihood, and a
random-walk Metropolis chain samples the symptomatic-split proportion and
the incubation rate under a uniform/gamma prior pair.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, LengthMismatchError
from .model import ModelParams, Path, StateVec
from .reconstruct import IncidenceSeries
from .simulate import _generator


@dataclass(frozen=True)
class PriorSpec:
    """Uniform prior on p, gamma prior (shape, rate) on kappa."""

    p_lo: float = 0.3
    p_hi: float = 0.8
    kappa_shape: float = 10.0
    kappa_rate: float = 50.0

    def __post_init__(self):
        if not self.p_lo < self.p_hi:
            raise ValueError("p prior needs p_lo < p_hi")
        if self.kappa_shape <= 0 or self.kappa_rate <= 0:
            raise ValueError("gamma prior needs positive shape and rate")

    def log_density(self, p: float, kappa: float) -> float:
        if not self.p_lo < p < self.p_hi or kappa <= 0:
            return -math.inf
        return (self.kappa_shape - 1.0) * math.log(kappa) \
            - self.kappa_rate * kappa

    @property
    def p_mean(self) -> float:
        return 0.5 * (self.p_lo + self.p_hi)

    @property
    def kappa_mean(self) -> float:
        return self.kappa_shape / self.kappa_rate


@dataclass(frozen=True)
class McmcConfig:
    iterations: int
    burn_in: int
    proposal_sd: tuple  # (p scale, kappa scale)
    seed: int = 0
    ode_dt: float = 1.0  # day; RK4 substep for the likelihood evaluations

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if len(self.proposal_sd) != 2 or any(s < 0 for s in self.proposal_sd):
            raise ValueError("proposal_sd must be two nonnegative scales")
        if self.ode_dt <= 0:
            raise ValueError("ode_dt must be positive")


def _ode_core(params: ModelParams, init6, dt: float, n_steps: int):
    """RK4 on the six-equation deterministic system, plain floats.

    Unrolled because the Metropolis likelihood calls this once per
    proposal; tuple comprehensions would dominate the chain's runtime.
    """
    mu, bs, ba = params.mu, params.beta_s, params.beta_a
    kp, p_, th = params.kappa, params.p, params.theta
    aa, as_, gm = params.alpha_a, params.alpha_s, params.gamma
    ke = kp + mu
    qa = aa + mu
    qs = as_ + mu
    qr = mu + gm
    ps = (1.0 - p_) * kp
    pa = p_ * kp
    surv = as_ * (1.0 - th)
    die = th * as_

    def f(s, e, ia, is_, r):
        fb = bs * is_ + ba * ia
        return (mu + gm * r - (mu + fb) * s,
                fb * s - ke * e,
                pa * e - qa * ia,
                ps * e - qs * is_,
                aa * ia + surv * is_ - qr * r,
                die * is_)

    s, e, ia, is_, r, d = (float(v) for v in init6)
    out = [(s, e, ia, is_, r, d)]
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for _ in range(n_steps):
        a0, a1, a2, a3, a4, a5 = f(s, e, ia, is_, r)
        b0, b1, b2, b3, b4, b5 = f(s + h2 * a0, e + h2 * a1, ia + h2 * a2,
                                   is_ + h2 * a3, r + h2 * a4)
        c0, c1, c2, c3, c4, c5 = f(s + h2 * b0, e + h2 * b1, ia + h2 * b2,
                                   is_ + h2 * b3, r + h2 * b4)
        d0, d1, d2, d3, d4, d5 = f(s + dt * c0, e + dt * c1, ia + dt * c2,
                                   is_ + dt * c3, r + dt * c4)
        s += h6 * (a0 + 2.0 * (b0 + c0) + d0)
        e += h6 * (a1 + 2.0 * (b1 + c1) + d1)
        ia += h6 * (a2 + 2.0 * (b2 + c2) + d2)
        is_ += h6 * (a3 + 2.0 * (b3 + c3) + d3)
        r += h6 * (a4 + 2.0 * (b4 + c4) + d4)
        d += h6 * (a5 + 2.0 * (b5 + c5) + d5)
        out.append((s, e, ia, is_, r, d))
    return out


def ode_rk4(params: ModelParams, init: StateVec, dt: float,
            n_steps: int) -> Path:
    """Integrate the deterministic system; the death integrator rides along.

    With theta > 0 disease deaths leave the five tracked fractions, so the
    simplex check is skipped; with theta = 0 the sum is conserved to
    integrator accuracy.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    d0 = 0.0 if init.d is None else init.d
    states = _ode_core(params, (init.s, init.e, init.i_a, init.i_s, init.r, d0),
                       dt, n_steps)
    arr = np.array(states)
    return Path(0.0, dt, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                arr[:, 4], d=arr[:, 5], require_simplex=False)


def cumulative_incidence(path: Path, params: ModelParams,
                         population_n: float) -> np.ndarray:
    """Expected cumulative symptomatic counts at each grid point.

    Left-rectangle integral of (1 - p) kappa E scaled back to counts;
    nondecreasing, zero at the first point.
    """
    incr = (1.0 - params.p) * params.kappa * path.e[:-1] * path.dt \
        * population_n
    return np.concatenate([[0.0], np.cumsum(incr)])


def poisson_loglik(counts: Sequence[int], lam: Sequence[float]) -> float:
    """Sum of Poisson log masses; zero-count/zero-mean entries contribute 0."""
    y = np.asarray(counts, dtype=float)
    lam_arr = np.asarray(lam, dtype=float)
    if y.shape != lam_arr.shape:
        raise LengthMismatchError("counts and means must have equal length")
    total = 0.0
    for yi, li in zip(y, lam_arr):
        if li <= 0.0:
            if yi > 0.0:
                raise DomainError(f"zero mean with positive count {yi!r}")
            continue
        total += yi * math.log(li) - li - math.lgamma(yi + 1.0)
    return total


@dataclass(frozen=True)
class McmcResult:
    iters: np.ndarray
    p: np.ndarray
    kappa: np.ndarray
    loglik: np.ndarray
    acceptance_rate: float


def metropolis(series: Optional[IncidenceSeries], priors: PriorSpec,
               fixed: ModelParams, init: StateVec,
               cfg: McmcConfig) -> McmcResult:
    """Random-walk Metropolis over (p, kappa).

    The target is prior times Poisson likelihood of the cumulative counts
    observed after day zero (the day-zero count is absorbed by the initial
    condition). ``series=None`` runs on the priors alone. Out-of-support
    proposals are rejected and counted. Deterministic given cfg.seed.
    """
    rng = _generator(np.random.SeedSequence(cfg.seed))
    n_days = 0 if series is None else len(series) - 1
    substeps = max(1, int(round(1.0 / cfg.ode_dt)))
    y_cum = None
    if series is not None and n_days > 0:
        counts = np.asarray(series.counts, dtype=float)
        y_cum = np.cumsum(counts) - counts[0]  # cumulative new cases, day >= 1
    init6 = (init.s, init.e, init.i_a, init.i_s, init.r,
             0.0 if init.d is None else init.d)

    def loglik(p_, kappa_):
        if y_cum is None:
            return 0.0
        model = fixed.replaced(p=p_, kappa=kappa_)
        states = _ode_core(model, init6, 1.0 / substeps, n_days * substeps)
        rate = (1.0 - p_) * kappa_ * series.population_n / substeps
        lam = 0.0
        total = 0.0
        for day in range(1, n_days + 1):
            for j in range((day - 1) * substeps, day * substeps):
                lam += rate * states[j][1]
            yd = y_cum[day]
            if lam <= 0.0:
                if yd > 0.0:
                    return -math.inf
                continue
            total += yd * math.log(lam) - lam - math.lgamma(yd + 1.0)
        return total

    cur = np.array([priors.p_mean, priors.kappa_mean])
    cur_ll = loglik(*cur)
    cur_post = cur_ll + priors.log_density(*cur)
    sd = np.asarray(cfg.proposal_sd, dtype=float)
    n_accept = 0
    kept_iters, kept_p, kept_k, kept_ll = [], [], [], []
    for it in range(cfg.iterations):
        prop = cur + sd * rng.standard_normal(2)
        lp = priors.log_density(*prop)
        if math.isfinite(lp):
            ll = loglik(*prop)
            post = ll + lp
            if post - cur_post >= 0 or math.log(rng.uniform()) < post - cur_post:
                cur, cur_ll, cur_post = prop, ll, post
                n_accept += 1
        if it >= cfg.burn_in:
            kept_iters.append(it)
            kept_p.append(cur[0])
            kept_k.append(cur[1])
            kept_ll.append(cur_ll)
    return McmcResult(np.array(kept_iters), np.array(kept_p),
                      np.array(kept_k), np.array(kept_ll),
                      n_accept / cfg.iterations)


def accept_probability(log_post_new: float, log_post_old: float) -> float:
    """Metropolis acceptance probability min(1, ratio)."""
    if log_post_new >= log_post_old:
        return 1.0
    return math.exp(log_post_new - log_post_old)


def samples_to_csv(result: McmcResult, target) -> None:
    own = isinstance(target, (str, bytes))
    fh = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(["iter", "p", "kappa", "loglik"])
        for it, p_, k_, ll in zip(result.iters, result.p, result.kappa,
                                  result.loglik):
            writer.writerow([int(it), f"{p_:.17g}", f"{k_:.17g}",
                             f"{ll:.17g}"])
    finally:
        if own:
            fh.close()
