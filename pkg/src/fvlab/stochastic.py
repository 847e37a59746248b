"""Seeded random streams, Brownian stepping and exit-time sampling.

Reproducibility contract: a (seed, stream) pair fully determines every draw a
``RngStream`` will ever produce (PCG64 seeded through ``SeedSequence`` with the
stream as spawn key), and distinct streams are statistically independent.
Ensemble code assigns one stream per fixed block of replicas, so results are
byte-identical no matter how blocks are scheduled across threads.

Boundary-hit model for a discrete step a -> b over time dt: the step is a hit
if the segment a -> b crosses the boundary, or else with the half-space bridge
probability exp(-2 dist(a) dist(b)/dt) using one uniform draw.  Segment hits
carry their crossing fraction; bridge hits are booked at the midpoint dt/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Domain

__all__ = [
    "RngStream",
    "PathConfig",
    "SdeStep",
    "gaussian_increment",
    "sde_step_repulsive",
    "sample_exit_time",
    "exit_times_batch",
    "ExitSample",
]

# Repulsed-to-the-origin test diffusion dX = dW - (5/(2X)) dt.
DRIFT_NUM = 2.5
# Sub-stepping engages when x < _SUBSTEP_RATIO * sqrt(remaining time); each
# sub-step is then at most (x/_SUBSTEP_RATIO)^2.
_SUBSTEP_RATIO = 10.0
# Below this level the state is indistinguishable from absorbed: the residual
# time to reach 0 is O(floor^2), far below any statistic resolved here.
ABSORPTION_FLOOR = 1e-8


class RngStream:
    """A named, replayable random stream.

    Parameters
    ----------
    seed : int
        64-bit base seed shared by a whole run.
    stream : int or tuple of int
        Stream identifier; tuples address nested sub-streams.
    """

    def __init__(self, seed: int, stream=0):
        self.seed = int(seed)
        self.stream = (int(stream),) if np.isscalar(stream) else tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, k: int) -> "RngStream":
        """Independent child stream; children with distinct k never overlap."""
        return RngStream(self.seed, self.stream + (int(k),))

    # Thin delegates so callers rarely need .generator directly.
    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True)
class PathConfig:
    """Discretisation parameters for path simulation."""

    dt: float = 1e-4
    horizon: float = 10.0
    substep_near_boundary: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.horizon <= self.dt:
            raise ValueError(
                f"horizon must exceed dt, got horizon={self.horizon}, dt={self.dt}"
            )


def gaussian_increment(rng: RngStream, d: int, dt: float) -> np.ndarray:
    """A d-vector of independent centred normals with variance dt."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return rng.standard_normal(int(d)) * math.sqrt(dt)


class SdeStep(NamedTuple):
    value: float
    absorbed: bool
    time: float  # time actually elapsed within the step (= dt unless absorbed)


def sde_step_repulsive(x: float, dt: float, rng: RngStream) -> SdeStep:
    """One Euler-Maruyama macro step of dX = dW - (5/(2X)) dt from x > 0.

    The drift blows up at 0, so the step is subdivided near the origin: while
    x < 10 sqrt(remaining), sub-steps are capped at (x/10)^2.  A sub-step that
    crosses 0 reports absorption at the linear interpolation of the crossing;
    a state that grinds below ``ABSORPTION_FLOOR`` is likewise absorbed (the
    true residual lifetime there is O(1e-16)).  Never returns a non-positive
    alive state.
    """
    if x <= 0.0:
        raise ValueError(f"x must be positive, got {x}")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    remaining = dt
    elapsed = 0.0
    while remaining > 0.0:
        step = min(remaining, (x / _SUBSTEP_RATIO) ** 2)
        g = float(rng.standard_normal())
        x_new = x + math.sqrt(step) * g - DRIFT_NUM * step / x
        if x_new <= 0.0:
            frac = x / (x - x_new)
            return SdeStep(0.0, True, elapsed + frac * step)
        if x_new <= ABSORPTION_FLOOR:
            return SdeStep(0.0, True, elapsed + step)
        elapsed += step
        remaining -= step
        x = x_new
    return SdeStep(x, False, dt)


# ---------------------------------------------------------------------------
# Batched path engine
# ---------------------------------------------------------------------------


def step_with_hits(domain: Domain, x: np.ndarray, da: np.ndarray, dt: float,
                   rng: RngStream, substeps: int = 1):
    """Advance a batch of points by one Brownian macro step with hit detection.

    Parameters
    ----------
    x : (n, d) array
        Current interior positions.
    da : (n,) array
        Cached boundary distances of ``x`` (saves one kernel call per step).
    substeps : int
        When > 1, points within 10 sqrt(dt) of the boundary advance in this
        many sub-steps, each with its own crossing and bridge test.

    Returns
    -------
    b : (n, d) array
        Proposed end-of-step positions (unused for hit points).
    db : (n,) array
        Boundary distances of ``b`` (garbage where hit).
    hit : (n,) bool array
    frac : (n,) array
        Crossing fraction of the macro step for hit points (bridge hits at the
        sub-step midpoint), 1.0 elsewhere.
    """
    n = x.shape[0]
    if substeps <= 1:
        return _single_step(domain, x, da, dt, rng)
    near = da < _SUBSTEP_RATIO * math.sqrt(dt)
    b = np.empty_like(x)
    db = np.empty(n)
    hit = np.zeros(n, bool)
    frac = np.ones(n)
    far = ~near
    if far.any():
        bf, dbf, hf, ff = _single_step(domain, x[far], da[far], dt, rng)
        b[far] = bf
        db[far] = dbf
        hit[far] = hf
        frac[far] = ff
    if near.any():
        idx = np.flatnonzero(near)
        xs = x[idx]
        ds = da[idx]
        sub_dt = dt / substeps
        sub_frac = np.ones(idx.size)
        sub_hit = np.zeros(idx.size, bool)
        alive = np.arange(idx.size)
        for k in range(substeps):
            if alive.size == 0:
                break
            bs, dbs, hs, fs = _single_step(domain, xs[alive], ds[alive], sub_dt, rng)
            xs[alive] = bs
            ds[alive] = dbs
            if hs.any():
                hit_local = alive[hs]
                sub_hit[hit_local] = True
                sub_frac[hit_local] = (k + fs[hs]) / substeps
                alive = alive[~hs]
        b[idx] = xs
        db[idx] = ds
        hit[idx] = sub_hit
        frac[idx] = sub_frac
    return b, db, hit, frac


def _single_step(domain, x, da, dt, rng):
    n, d = x.shape
    z = rng.standard_normal((n, d))
    u = rng.random(n)
    b = x + z * math.sqrt(dt)
    lam = domain.segment_exit_many(x, b)
    seg = np.isfinite(lam)
    db = domain.dist_many(b)
    inside = domain.contains_many(b)
    with np.errstate(over="ignore"):
        p_bridge = np.exp(-2.0 * da * np.maximum(db, 0.0) / dt)
    bridge = ~seg & inside & (u < p_bridge)
    # Landed outside without a detected crossing (grazing corner within
    # rounding): count as a hit at the end of the step.
    stray = ~seg & ~inside
    hit = seg | bridge | stray
    frac = np.where(seg, np.where(np.isfinite(lam), lam, 1.0), np.where(bridge, 0.5, 1.0))
    return b, db, hit, frac


@dataclass
class ExitSample:
    """Exit statistics for a batch of paths from a common start."""

    times: np.ndarray          # exit (or censoring) time per path
    censored: np.ndarray       # True where the horizon was reached first
    hit_target: Optional[np.ndarray] = None  # True where the target set was
                                             # touched before the exit

    @property
    def n(self) -> int:
        return self.times.size


def exit_times_batch(domain: Domain, x0, n_paths: int, cfg: PathConfig,
                     rng: RngStream, target: Optional[Domain] = None) -> ExitSample:
    """Simulate ``n_paths`` Brownian paths from ``x0`` until they leave the
    domain, recording exit times and (optionally) whether they touched a
    target set first.

    Paths that touch the target keep running until they exit the domain, so a
    single ensemble serves both the hitting probability and the mean exit
    time.  Paths still alive at the horizon are censored at the horizon.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    if x0.size != domain.dim:
        raise ValueError(f"x0 dimension {x0.size} != domain dimension {domain.dim}")
    n = int(n_paths)
    x = np.tile(x0, (n, 1))
    da = domain.dist_many(x)
    times = np.full(n, cfg.horizon)
    censored = np.ones(n, bool)
    hit_target = np.zeros(n, bool) if target is not None else None
    alive = np.arange(n)
    substeps = 4 if cfg.substep_near_boundary else 1
    n_steps = int(round(cfg.horizon / cfg.dt))
    t = 0.0
    for _ in range(n_steps):
        if alive.size == 0:
            break
        b, db, hit, frac = step_with_hits(domain, x, da, cfg.dt, rng, substeps)
        if target is not None:
            lam_t = target.segment_hit_fraction_many(x, b)
            touched = lam_t <= np.where(hit, frac, 1.0)
            hit_target[alive[touched]] = True
        if hit.any():
            ended = alive[hit]
            times[ended] = t + frac[hit] * cfg.dt
            censored[ended] = False
            keep = ~hit
            alive = alive[keep]
            x = b[keep]
            da = db[keep]
        else:
            x = b
            da = db
        t += cfg.dt
    return ExitSample(times=times, censored=censored, hit_target=hit_target)


def sample_exit_time(domain: Domain, x0, cfg: PathConfig, rng: RngStream):
    """First boundary-hit time of one discretised Brownian path.

    Returns ``(time, censored)``; ``censored`` is True iff the path survived
    to the horizon, in which case ``time`` equals the horizon.
    """
    sample = exit_times_batch(domain, x0, 1, cfg, rng)
    return float(sample.times[0]), bool(sample.censored[0])
