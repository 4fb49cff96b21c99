"""Sample-path generation for the stochastic system.

Euler-Maruyama and Milstein steps share one Wiener stream per path; the same
increment enters all five equations. Increments come from numpy's PCG64
generator (normal draws via the ziggurat method), and replicate streams
derive from a base seed through ``replicate_seed`` so any Monte Carlo run
is reproducible end to end.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, PositivityError
from .model import ModelParams, Path, StateVec

RNG_ALGORITHM = "pcg64-ziggurat"

SCHEME_EULER = "euler-maruyama"
SCHEME_MILSTEIN = "milstein"
POSITIVITY_REJECT = "reject"
POSITIVITY_REFLECT = "reflect"

_CLAMP = 1e-12
_COMPONENTS = ("s", "e", "i_a", "i_s", "r")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one path bit for bit."""

    params: ModelParams
    init: StateVec
    dt: float
    n_steps: int
    scheme: str = SCHEME_EULER
    seed: int = 0
    positivity: str = POSITIVITY_REJECT

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.scheme not in (SCHEME_EULER, SCHEME_MILSTEIN):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.positivity not in (POSITIVITY_REJECT, POSITIVITY_REFLECT):
            raise ValueError(f"unknown positivity policy {self.positivity!r}")


@dataclass(frozen=True)
class WienerIncrements:
    """Ordered N(0, dt) increments, one per step."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Stream-split seed for replicate ``index`` of a Monte Carlo run.

    Replicate 0 is the base stream itself, so a single-replicate run
    reproduces the plain seeded call; further replicates split off by
    spawn key.
    """
    if index == 0:
        return np.random.SeedSequence(seed)
    return np.random.SeedSequence(seed, spawn_key=(index,))


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def draw_increments(seed, n_steps: int, dt: float) -> WienerIncrements:
    """Draw the path's Wiener increments; deterministic given the seed."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = _generator(seed)
    return WienerIncrements(rng.standard_normal(n_steps) * np.sqrt(dt), dt)


def _step_values(x, dw, dt, params, milstein):
    """One step on plain floats. x is the tuple (s, e, i_a, i_s, r)."""
    s, e, ia, is_, r = x
    fb = params.beta_s * is_ + params.beta_a * ia
    sig = params.sigma
    s1 = s + (params.mu - params.mu * s - fb * s + params.gamma * r) * dt \
        + sig * (1.0 - s) * dw
    e1 = e + (fb * s - (params.kappa + params.mu) * e) * dt - sig * e * dw
    ia1 = ia + (params.p * params.kappa * e
                - (params.alpha_a + params.mu) * ia) * dt - sig * ia * dw
    is1 = is_ + ((1.0 - params.p) * params.kappa * e
                 - (params.alpha_s + params.mu) * is_) * dt - sig * is_ * dw
    r1 = r + (params.alpha_a * ia + params.alpha_s * is_
              - (params.mu + params.gamma) * r) * dt - sig * r * dw
    if milstein:
        # diffusion b_i is affine with b_i' = -sigma except for S where
        # b(S) = sigma (1 - S), b' = -sigma; correction = 0.5 b b' (dW^2 - dt)
        c = 0.5 * sig * sig * (dw * dw - dt)
        s1 -= c * (1.0 - s)
        e1 += c * e
        ia1 += c * ia
        is1 += c * is_
        r1 += c * r
    return s1, e1, ia1, is1, r1


def _apply_positivity(values, policy, step_index):
    if policy == POSITIVITY_REJECT:
        for name, v in zip(_COMPONENTS, values):
            if not 0.0 <= v <= 1.0:
                raise PositivityError(step_index, name, v)
        return values
    return tuple(min(max(v, _CLAMP), 1.0 - _CLAMP) for v in values)


def _step_state(x: StateVec, dw: float, cfg: SimConfig, milstein: bool,
                step_index: int) -> StateVec:
    vals = _step_values((x.s, x.e, x.i_a, x.i_s, x.r), dw, cfg.dt,
                        cfg.params, milstein)
    vals = _apply_positivity(vals, cfg.positivity, step_index)
    return StateVec(*vals, tol=float("inf"))


def step_em(x: StateVec, dw: float, cfg: SimConfig, step_index: int = 0) -> StateVec:
    """One Euler-Maruyama step; drift and diffusion both sum to zero on the
    simplex, so the component sum is preserved up to rounding."""
    return _step_state(x, dw, cfg, milstein=False, step_index=step_index)


def step_milstein(x: StateVec, dw: float, cfg: SimConfig,
                  step_index: int = 0) -> StateVec:
    """One Milstein step; the corrections also sum to zero on the simplex."""
    return _step_state(x, dw, cfg, milstein=True, step_index=step_index)


def simulate_path(cfg: SimConfig,
                  increments: Optional[WienerIncrements] = None) -> Path:
    """Integrate the stochastic system over n_steps from cfg.init.

    Deterministic given cfg; pass ``increments`` to reuse an externally
    drawn Wiener stream (it must match n_steps and dt).
    """
    if increments is None:
        increments = draw_increments(cfg.seed, cfg.n_steps, cfg.dt)
    if len(increments) != cfg.n_steps:
        raise ValueError("increment count does not match n_steps")
    dw = increments.values
    milstein = cfg.scheme == SCHEME_MILSTEIN
    n = cfg.n_steps
    cols = np.empty((5, n + 1))
    x = (cfg.init.s, cfg.init.e, cfg.init.i_a, cfg.init.i_s, cfg.init.r)
    cols[:, 0] = x
    for k in range(n):
        x = _step_values(x, dw[k], cfg.dt, cfg.params, milstein)
        x = _apply_positivity(x, cfg.positivity, k)
        cols[:, k + 1] = x
    return Path(0.0, cfg.dt, cols[0], cols[1], cols[2], cols[3], cols[4],
                wiener=dw.copy(), rng_algorithm=RNG_ALGORITHM)


def simulate_batch(params: ModelParams, init: StateVec, dt: float,
                   n_steps: int, seeds: Sequence, scheme: str = SCHEME_EULER,
                   positivity: str = POSITIVITY_REJECT):
    """Vectorised engine for Monte Carlo studies.

    Integrates one path per seed simultaneously; per-replicate results are
    identical to ``simulate_path`` with the same seed. Returns
    ``(states, increments, failures)`` where states has shape
    (n_rep, n_steps + 1, 5) and failures maps replicate index to the
    PositivityError met first (those rows are frozen at the failing step).
    """
    seeds = list(seeds)
    n_rep = len(seeds)
    dw = np.empty((n_rep, n_steps))
    for i, sd in enumerate(seeds):
        dw[i] = _generator(sd).standard_normal(n_steps)
    dw *= np.sqrt(dt)
    x = np.empty((n_rep, n_steps + 1, 5))
    x[:, 0] = (init.s, init.e, init.i_a, init.i_s, init.r)
    milstein = scheme == SCHEME_MILSTEIN
    alive = np.ones(n_rep, dtype=bool)
    failures = {}
    sig = params.sigma
    for k in range(n_steps):
        s, e, ia, is_, r = x[:, k].T
        fb = params.beta_s * is_ + params.beta_a * ia
        w = dw[:, k]
        nxt = np.stack([
            s + (params.mu - params.mu * s - fb * s + params.gamma * r) * dt
            + sig * (1.0 - s) * w,
            e + (fb * s - (params.kappa + params.mu) * e) * dt - sig * e * w,
            ia + (params.p * params.kappa * e
                  - (params.alpha_a + params.mu) * ia) * dt - sig * ia * w,
            is_ + ((1.0 - params.p) * params.kappa * e
                   - (params.alpha_s + params.mu) * is_) * dt - sig * is_ * w,
            r + (params.alpha_a * ia + params.alpha_s * is_
                 - (params.mu + params.gamma) * r) * dt - sig * r * w,
        ], axis=-1)
        if milstein:
            c = (0.5 * sig * sig * (w * w - dt))[:, None]
            nxt += c * np.stack([-(1.0 - s), e, ia, is_, r], axis=-1)
        if positivity == POSITIVITY_REFLECT:
            np.clip(nxt, _CLAMP, 1.0 - _CLAMP, out=nxt)
        if positivity == POSITIVITY_REJECT:
            bad = alive & ~np.all((nxt >= 0.0) & (nxt <= 1.0), axis=-1)
            for i in np.flatnonzero(bad):
                comp = int(np.argmax((nxt[i] < 0.0) | (nxt[i] > 1.0)))
                failures[int(i)] = PositivityError(k, _COMPONENTS[comp],
                                                   float(nxt[i, comp]))
            alive &= ~bad
        nxt[~alive] = x[~alive, k]  # freeze failed replicates
        x[:, k + 1] = nxt
    return x, dw, failures


# ---------------------------------------------------------------------------
# Path CSV interface: header t,S,E,Ia,Is,R[,dW], full double precision.

def path_to_csv(path: Path, target) -> None:
    """Write one row per grid point with 17 significant digits."""
    own = isinstance(target, (str, bytes))
    fh = open(target, "w", newline="") if own else target
    try:
        has_w = path.wiener is not None
        writer = csv.writer(fh)
        writer.writerow(["t", "S", "E", "Ia", "Is", "R"] + (["dW"] if has_w else []))
        times = path.times
        for k in range(len(path)):
            row = [f"{times[k]:.17g}", f"{path.s[k]:.17g}", f"{path.e[k]:.17g}",
                   f"{path.i_a[k]:.17g}", f"{path.i_s[k]:.17g}",
                   f"{path.r[k]:.17g}"]
            if has_w:
                row.append(f"{path.wiener[k]:.17g}" if k < len(path) - 1 else "")
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def path_from_csv(source, require_simplex: bool = True) -> Path:
    """Read a path written by ``path_to_csv``; exact round trip."""
    own = isinstance(source, (str, bytes))
    fh = open(source, "r", newline="") if own else source
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        base = ["t", "S", "E", "Ia", "Is", "R"]
        if header[:6] != base or header[6:] not in ([], ["dW"]):
            raise ParseError(f"unexpected header {header!r}", line=1)
        has_w = header[6:] == ["dW"]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields", line=lineno)
            try:
                vals = [float(v) for v in row[:6]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            w = None
            if has_w and row[6] != "":
                try:
                    w = float(row[6])
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno) from None
            rows.append((vals, w))
    finally:
        if own:
            fh.close()
    if not rows:
        raise ParseError("no data rows", line=2)
    if len(rows) == 1:
        raise ParseError("cannot recover dt from a single grid point", line=2)
    data = np.array([v for v, _ in rows])
    t = data[:, 0]
    wiener = None
    if has_w:
        w_vals = [w for _, w in rows[:-1]]
        if any(w is None for w in w_vals):
            raise ParseError("missing dW value before the final row")
        wiener = np.array(w_vals)
    return Path(float(t[0]), float(t[1] - t[0]), data[:, 1], data[:, 2],
                data[:, 3], data[:, 4], data[:, 5], wiener=wiener,
                rng_algorithm=None, require_simplex=require_simplex)
