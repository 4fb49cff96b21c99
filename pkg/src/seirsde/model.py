"""Core model vocabulary: parameters, states, vector fields, R0, growth window.

The dynamics split a closed population into susceptible (S), exposed (E),
asymptomatic infectious (I_a), symptomatic infectious (I_s) and recovered (R)
fractions, with an optional cumulative-death integrator D for the
deterministic system. The stochastic system perturbs the natural mortality
rate with one shared Wiener process, so every compartment is driven by the
same increments and the fractions always sum to one.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DomainError, SimplexError, ZeroSigmaError

SIMPLEX_TOL = 1e-12
PATH_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """The nine epidemiological rates plus the noise intensity sigma.

    Rates are per day; ``p`` is the asymptomatic-branch proportion of newly
    infectious individuals, ``theta`` the symptomatic case fatality, and
    ``sigma`` scales the shared Wiener perturbation (per sqrt(day)).
    """

    mu: float
    beta_s: float
    beta_a: float
    kappa: float
    p: float
    theta: float
    alpha_a: float
    alpha_s: float
    gamma: float
    sigma: float

    def __post_init__(self):
        for name in ("mu", "kappa", "alpha_a", "alpha_s", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("beta_s", "beta_a"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("p", "theta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def replaced(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class StateVec:
    """One point on the compartment simplex, optionally with cumulative deaths.

    Construction rejects states off the simplex (sum != 1 beyond ``tol``)
    rather than renormalising, so data errors surface early.
    """

    s: float
    e: float
    i_a: float
    i_s: float
    r: float
    d: Optional[float] = None
    tol: InitVar[float] = SIMPLEX_TOL

    def __post_init__(self, tol):
        for name in ("s", "e", "i_a", "i_s", "r"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SimplexError(f"{name} = {v!r} outside [0, 1]")
        total = self.s + self.e + self.i_a + self.i_s + self.r
        if math.isfinite(tol) and abs(total - 1.0) > tol:
            raise SimplexError(f"components sum to {total!r}, not 1 within {tol}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.e, self.i_a, self.i_s, self.r])


@dataclass(frozen=True)
class HypothesisWindow:
    """Largest prefix [t_start, t_end] of a path on which the growth-phase
    inequalities hold: S below its start (with the window end the minimum)
    and E, I_a, I_s strictly above their start values."""

    t_start: float
    t_end: float
    satisfied: bool

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise ValueError("t_start must not exceed t_end")


@dataclass(frozen=True)
class Path:
    """Uniform-grid trajectory of the five compartments.

    Arrays are one value per grid point; ``wiener`` holds the generating
    increments (one per step) when the path came from the simulator, and
    ``d`` the cumulative-death fraction for deterministic integrations.
    ``rng_algorithm`` records how the increments were drawn, for
    reproducibility. Arrays are made read-only so paths can be shared
    freely between threads.
    """

    t0: float
    dt: float
    s: np.ndarray
    e: np.ndarray
    i_a: np.ndarray
    i_s: np.ndarray
    r: np.ndarray
    wiener: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    rng_algorithm: Optional[str] = None
    require_simplex: InitVar[bool] = True

    def __post_init__(self, require_simplex):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        arrays = {"s": self.s, "e": self.e, "i_a": self.i_a,
                  "i_s": self.i_s, "r": self.r}
        n = len(self.s)
        if n < 1:
            raise ValueError("a path needs at least one grid point")
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype=float)
            if a.shape != (n,):
                raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.wiener is not None:
            w = np.ascontiguousarray(self.wiener, dtype=float)
            if w.shape != (n - 1,):
                raise ValueError("wiener must hold one increment per step")
            w.setflags(write=False)
            object.__setattr__(self, "wiener", w)
        if self.d is not None:
            dd = np.ascontiguousarray(self.d, dtype=float)
            if dd.shape != (n,):
                raise ValueError("d must have one value per grid point")
            dd.setflags(write=False)
            object.__setattr__(self, "d", dd)
        if require_simplex:
            total = self.s + self.e + self.i_a + self.i_s + self.r
            worst = float(np.abs(total - 1.0).max())
            if worst > PATH_SIMPLEX_TOL:
                raise SimplexError(
                    f"max |sum - 1| = {worst:.3e} exceeds {PATH_SIMPLEX_TOL}"
                )

    def __len__(self) -> int:
        return len(self.s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)

    def state(self, k: int, tol: float = PATH_SIMPLEX_TOL) -> StateVec:
        d_k = None if self.d is None else float(self.d[k])
        return StateVec(float(self.s[k]), float(self.e[k]), float(self.i_a[k]),
                        float(self.i_s[k]), float(self.r[k]), d_k, tol=tol)

    def truncated(self, n_points: int) -> "Path":
        """Prefix of the first ``n_points`` grid points."""
        if not 1 <= n_points <= len(self):
            raise ValueError("n_points out of range")
        w = None if self.wiener is None else self.wiener[: n_points - 1]
        d = None if self.d is None else self.d[:n_points]
        return Path(self.t0, self.dt, self.s[:n_points], self.e[:n_points],
                    self.i_a[:n_points], self.i_s[:n_points], self.r[:n_points],
                    wiener=w, d=d, rng_algorithm=self.rng_algorithm,
                    require_simplex=False)


def force_of_infection(i_a: float, i_s: float, params: ModelParams) -> float:
    """f_beta = beta_s * I_s + beta_a * I_a."""
    return params.beta_s * i_s + params.beta_a * i_a


def deterministic_drift(x: StateVec, params: ModelParams) -> StateVec:
    """Right-hand side of the deterministic system, returned per day.

    The recovered equation keeps the (1 - theta) survival factor and the
    death integrator d' = theta * alpha_s * I_s, so with theta = 0 the five
    compartment rates cancel exactly on the simplex.
    """
    fb = force_of_infection(x.i_a, x.i_s, params)
    ds = params.mu + params.gamma * x.r - (params.mu + fb) * x.s
    de = fb * x.s - (params.kappa + params.mu) * x.e
    dia = params.p * params.kappa * x.e - (params.alpha_a + params.mu) * x.i_a
    dis = (1.0 - params.p) * params.kappa * x.e - (params.alpha_s + params.mu) * x.i_s
    dr = (params.alpha_a * x.i_a + params.alpha_s * (1.0 - params.theta) * x.i_s
          - (params.mu + params.gamma) * x.r)
    dd = params.theta * params.alpha_s * x.i_s
    out = object.__new__(StateVec)
    for name, val in (("s", ds), ("e", de), ("i_a", dia), ("i_s", dis),
                      ("r", dr), ("d", dd)):
        object.__setattr__(out, name, val)
    return out


def sde_drift(x: StateVec, params: ModelParams) -> np.ndarray:
    """Drift of the five-equation stochastic system.

    This is the deterministic field with theta dropped from the recovered
    equation, exactly as the stochastic system is written; the components
    sum to mu * (1 - sum(x)), zero on the simplex.
    """
    fb = force_of_infection(x.i_a, x.i_s, params)
    return np.array([
        params.mu - params.mu * x.s - fb * x.s + params.gamma * x.r,
        fb * x.s - (params.kappa + params.mu) * x.e,
        params.p * params.kappa * x.e - (params.alpha_a + params.mu) * x.i_a,
        (1.0 - params.p) * params.kappa * x.e
        - (params.alpha_s + params.mu) * x.i_s,
        params.alpha_a * x.i_a + params.alpha_s * x.i_s
        - (params.mu + params.gamma) * x.r,
    ])


def stochastic_diffusion(x: StateVec, sigma: float) -> np.ndarray:
    """Diffusion vector sigma * (1 - S, -E, -I_a, -I_s, -R).

    One shared Wiener increment multiplies all five entries; they sum to
    sigma * (1 - sum(x)), zero on the simplex.
    """
    return sigma * np.array([1.0 - x.s, -x.e, -x.i_a, -x.i_s, -x.r])


def lamperti_drift(x: StateVec, params: ModelParams) -> np.ndarray:
    """Drift of the log-transformed system with unit diffusion.

    Component i is the drift of -(1/sigma) d log(X_i) for
    X = (1-S, E, I_a, I_s, R). Requires an interior state (all log
    arguments positive) and sigma > 0.
    """
    sig = params.sigma
    if sig == 0:
        raise ZeroSigmaError("lamperti drift divides by sigma")
    one_minus_s = 1.0 - x.s
    for name, v in (("1-S", one_minus_s), ("E", x.e), ("I_a", x.i_a),
                    ("I_s", x.i_s), ("R", x.r)):
        if v <= 0:
            raise DomainError(f"log argument {name} = {v!r} is not positive")
    fb = force_of_infection(x.i_a, x.i_s, params)
    half = 0.5 * sig
    return np.array([
        params.mu / sig - fb * x.s / (sig * one_minus_s)
        + params.gamma * x.r / (sig * one_minus_s) + half,
        -fb * x.s / (sig * x.e) + (params.kappa + params.mu) / sig + half,
        -params.p * params.kappa * x.e / (sig * x.i_a)
        + (params.alpha_a + params.mu) / sig + half,
        -(1.0 - params.p) * params.kappa * x.e / (sig * x.i_s)
        + (params.alpha_s + params.mu) / sig + half,
        -(params.alpha_a * x.i_a + params.alpha_s * x.i_s) / (sig * x.r)
        + (params.mu + params.gamma) / sig + half,
    ])


def r0(params: ModelParams, convention: str = "paper") -> float:
    """Basic reproduction number of the deterministic system.

    ``convention="paper"`` reproduces the published pairing, which couples p
    with the symptomatic term even though the symptomatic inflow carries
    (1 - p); ``convention="consistent"`` pairs each branch with its own
    inflow fraction.
    """
    denom_exposed = params.mu + params.kappa
    term_s = params.kappa * params.beta_s / (denom_exposed * (params.mu + params.alpha_s))
    term_a = params.kappa * params.beta_a / (denom_exposed * (params.mu + params.alpha_a))
    if convention == "paper":
        return params.p * term_s + (1.0 - params.p) * term_a
    if convention == "consistent":
        return (1.0 - params.p) * term_s + params.p * term_a
    raise ValueError(f"unknown r0 convention {convention!r}")


def hypothesis_window(path: Path) -> HypothesisWindow:
    """Largest prefix window on which the growth-phase inequalities hold.

    For every grid point t in (t0, T*]: S(t) < S(t0), E(t) > E(t0),
    I_a(t) > I_a(t0), I_s(t) > I_s(t0), and S(T*) <= S(t). When the first
    step already violates them the window degenerates to [t0, t0].
    """
    n = len(path)
    if n < 2:
        return HypothesisWindow(path.t0, path.t0, False)
    pointwise = ((path.s[1:] < path.s[0]) & (path.e[1:] > path.e[0])
                 & (path.i_a[1:] > path.i_a[0]) & (path.i_s[1:] > path.i_s[0]))
    bad = np.flatnonzero(~pointwise)
    k_max = int(bad[0]) if bad.size else n - 1  # steps 1..k_max all admissible
    if k_max == 0:
        return HypothesisWindow(path.t0, path.t0, False)
    s_prefix = path.s[1: k_max + 1]
    # the window must end where S attains its running minimum
    k_end = int(np.flatnonzero(s_prefix == s_prefix.min())[-1]) + 1
    return HypothesisWindow(path.t0, path.t0 + path.dt * k_end, True)


def window_end_index(path: Path, window: HypothesisWindow) -> int:
    """Grid index of the window end on the path's grid."""
    return int(round((window.t_end - path.t0) / path.dt))


# Baseline calibration for the Mexico City COVID-19 outbreak of spring 2020
# (population 26 446 435, 47 daily records from March 10).
MEXICO_CITY_POPULATION = 26_446_435

BASELINE_PARAMS = ModelParams(
    mu=1.0 / (70 * 365),
    beta_s=0.058215322606755,
    beta_a=0.510968165093383,
    kappa=0.196078,
    p=0.585505,
    theta=0.11,
    alpha_a=0.167504,
    alpha_s=0.0925069,
    gamma=1.0 / 365,
    sigma=0.01,
)

_E0 = 198.504524717486 / MEXICO_CITY_POPULATION
_IA0 = 99.174034301964 / MEXICO_CITY_POPULATION
_IS0 = 74.0 / MEXICO_CITY_POPULATION

BASELINE_INIT = StateVec(
    s=1.0 - (_E0 + _IA0 + _IS0),
    e=_E0,
    i_a=_IA0,
    i_s=_IS0,
    r=0.0,
)

# Uniform prior bounds (in persons, divided by N on use) for the latent
# initial exposed and asymptomatic pools.
INITIAL_POOL_PRIOR = (47.0, 2100.0)
