"""The branching particle system: N Brownian particles in a domain, killed at
the boundary, with uniform-donor branching keeping the population at N.

Between boundary events the particles move as independent Brownian motions.
When a particle's step is flagged as a boundary hit, a donor is chosen
uniformly among the other N-1 particles and the dying particle is relocated
to the donor's position; the event is logged as a jump.

Within a macro step, flagged particles are resolved in increasing order of
their crossing fraction (bridge hits count as fraction 1/2, ties are broken by
an independent uniform draw, mirroring the continuous process where exact ties
have probability zero).  A particle flagged later in the same step is still
alive when an earlier one dies, so it remains a valid donor at its interior
position along the step.  With this resolution an interior donor always
exists; ``SimultaneousExtinction`` is raised only if numerics ever produce a
step with no interior donor candidate, and is never silently resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .geometry import Ball, Box, Domain, Interval
from .stochastic import PathConfig, RngStream, step_with_hits

__all__ = [
    "FVState",
    "JumpRecord",
    "Histogram",
    "SimultaneousExtinction",
    "fv_step",
    "run_fv",
    "FVRun",
    "empirical_measure",
    "regular_grid",
    "qsd_estimate",
    "eigenfunction_reference",
    "DirichletGroundState",
    "jump_log_to_csv",
    "histogram_to_csv",
]


class SimultaneousExtinction(RuntimeError):
    """The whole population was flagged with no interior donor available."""

    def __init__(self, time: float, positions: np.ndarray):
        super().__init__(
            f"all particles hit the boundary within one step at t={time:.6g}"
        )
        self.time = time
        self.positions = positions


@dataclass
class FVState:
    """Positions of the N particles, elapsed time and jump counter."""

    positions: np.ndarray  # (N, d)
    t: float = 0.0
    jump_count: int = 0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float))

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class JumpRecord:
    """One branching event: particle ``dying`` jumped to ``xi`` (the position
    of ``donor``) at time ``tau``."""

    k: int
    tau: float
    dying: int
    donor: int
    xi: np.ndarray


def fv_step(state: FVState, domain: Domain, dt: float, rng: RngStream,
            substeps: int = 1) -> Tuple[FVState, List[JumpRecord]]:
    """Advance the particle system by one macro step of length dt.

    Returns the new state and the jump records generated during the step.
    """
    x = state.positions
    if x.shape[0] < 2:
        raise ValueError("the particle system needs N >= 2")
    da = domain.dist_many(x)
    new_x, _, records, _ = _advance(
        domain, x, da, state.t, state.jump_count, dt, rng,
        substeps=substeps, last_tau=-math.inf,
    )
    new_state = FVState(
        positions=new_x, t=state.t + dt, jump_count=state.jump_count + len(records)
    )
    return new_state, records


def _advance(domain, x, da, t, k0, dt, rng, substeps, last_tau):
    """One macro step plus jump resolution.  Returns (x', da', records, last_tau')."""
    b, db, hit, frac = step_with_hits(domain, x, da, dt, rng, substeps)
    if not hit.any():
        return b, db, [], last_tau
    n = x.shape[0]
    flagged = np.flatnonzero(hit)
    # Resolve in crossing order; ties broken by an independent uniform draw.
    ties = rng.random(flagged.size)
    order = np.lexsort((ties, frac[flagged]))
    dying_seq = flagged[order]
    resolved = b.copy()
    relocated = np.zeros(n, bool)
    records = []
    for j in dying_seq:
        lam = frac[j]
        donor_pos = None
        # Candidate donors in index order: every other particle, at its
        # current position as of fraction lam of the step.
        candidates = []
        positions = []
        for i in range(n):
            if i == j:
                continue
            if not hit[i]:
                pos = resolved[i]          # post-step interior position
            elif relocated[i]:
                pos = resolved[i]          # already branched, interior
            else:
                # Dies later this step; alive and interior at fraction lam.
                pos = x[i] + lam * (b[i] - x[i])
            candidates.append(i)
            positions.append(pos)
        positions = np.asarray(positions)
        interior = domain.contains_many(positions)
        if not interior.any():
            raise SimultaneousExtinction(t + lam * dt, x.copy())
        candidates = [c for c, ok in zip(candidates, interior) if ok]
        positions = positions[interior]
        pick = int(rng.integers(len(candidates)))
        donor = candidates[pick]
        donor_pos = positions[pick].copy()
        resolved[j] = donor_pos
        relocated[j] = True
        tau = t + lam * dt
        if tau <= last_tau:
            tau = np.nextafter(last_tau, math.inf)
        last_tau = tau
        records.append(
            JumpRecord(k=k0 + len(records) + 1, tau=float(tau), dying=int(j),
                       donor=int(donor), xi=donor_pos)
        )
    if relocated.any():
        db = db.copy()
        db[relocated] = domain.dist_many(resolved[relocated])
    return resolved, db, records, last_tau


@dataclass
class FVRun:
    """Output of ``run_fv``: the ordered jump log and sampled states."""

    jumps: List[JumpRecord]
    observation_times: np.ndarray
    states: List[np.ndarray]  # particle positions at each observation time
    final: FVState


def run_fv(domain: Domain, N: int, x0, cfg: PathConfig, rng: RngStream,
           obs_dt: float = 0.01,
           observer: Optional[Callable[[float, np.ndarray], None]] = None,
           keep_states: bool = True) -> FVRun:
    """Run the N-particle system from ``x0`` to the horizon.

    ``x0`` is either one point (all particles start together) or an (N, d)
    array of starting positions.  States are sampled every ``obs_dt``;
    pass an ``observer`` callback to stream them instead of storing.
    """
    N = int(N)
    if N < 2:
        raise ValueError("the particle system needs N >= 2")
    x0 = np.asarray(x0, float)
    if x0.ndim <= 1:
        x = np.tile(np.atleast_1d(x0), (N, 1))
    else:
        x = x0.copy()
    if x.shape != (N, domain.dim):
        raise ValueError(f"x0 must give {N} points of dimension {domain.dim}")
    if not domain.contains_many(x).all():
        raise ValueError("all starting positions must lie inside the domain")

    substeps = 4 if cfg.substep_near_boundary else 1
    obs_every = max(1, int(round(obs_dt / cfg.dt)))
    n_steps = int(round(cfg.horizon / cfg.dt))
    da = domain.dist_many(x)
    jumps: List[JumpRecord] = []
    obs_times = []
    states = []
    last_tau = -math.inf
    t = 0.0
    for k in range(n_steps):
        x, da, recs, last_tau = _advance(
            domain, x, da, t, len(jumps), cfg.dt, rng, substeps, last_tau
        )
        jumps.extend(recs)
        t += cfg.dt
        if (k + 1) % obs_every == 0:
            obs_times.append(t)
            if observer is not None:
                observer(t, x)
            if keep_states:
                states.append(x.copy())
    final = FVState(positions=x, t=t, jump_count=len(jumps))
    return FVRun(jumps=jumps, observation_times=np.asarray(obs_times),
                 states=states, final=final)


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------


@dataclass
class Histogram:
    """Binned probability measure on a regular grid."""

    edges: Tuple[np.ndarray, ...]
    masses: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def dim(self) -> int:
        return len(self.edges)

    def l1_distance(self, other: "Histogram") -> float:
        return float(np.abs(self.masses - other.masses).sum())


def regular_grid(domain: Domain, bins) -> Tuple[np.ndarray, ...]:
    """Regular bin edges over the domain's bounding box; ``bins`` is an int or
    one int per dimension."""
    lo, hi = domain.bounding_box()
    if np.isscalar(bins):
        bins = [int(bins)] * domain.dim
    if len(bins) != domain.dim:
        raise ValueError(f"need one bin count per dimension, got {bins}")
    return tuple(np.linspace(lo[i], hi[i], int(bins[i]) + 1) for i in range(domain.dim))


def empirical_measure(state: FVState, edges: Sequence[np.ndarray]) -> Histogram:
    """Deposit mass 1/N per particle into its grid bin."""
    x = state.positions
    edges = tuple(np.asarray(e, float) for e in edges)
    for i, e in enumerate(edges):
        if x[:, i].min() < e[0] or x[:, i].max() > e[-1]:
            raise ValueError(
                f"particle coordinate outside the grid along axis {i}; "
                "the grid must cover the domain"
            )
    counts, _ = np.histogramdd(x, bins=edges)
    return Histogram(edges=edges, masses=counts / x.shape[0])


def qsd_estimate(domain: Domain, N: int, cfg: PathConfig, burn_in: float,
                 rng: RngStream, bins=50, obs_dt: float = 0.01,
                 x0=None) -> Histogram:
    """Long-run empirical distribution of the particle system.

    Time-averages the empirical measure over the observation grid restricted
    to (burn_in, horizon], normalised to total mass 1.
    """
    if burn_in >= cfg.horizon:
        raise ValueError(
            f"burn_in must be below the horizon, got {burn_in} >= {cfg.horizon}"
        )
    edges = regular_grid(domain, bins)
    shape = tuple(len(e) - 1 for e in edges)
    counts = np.zeros(shape)
    n_obs = 0
    if x0 is None:
        x0 = domain.deep_point()

    def observe(t: float, x: np.ndarray):
        nonlocal n_obs
        if t <= burn_in:
            return
        c, _ = np.histogramdd(x, bins=edges)
        counts[...] += c
        n_obs += 1

    run_fv(domain, N, x0, cfg, rng, obs_dt=obs_dt, observer=observe,
           keep_states=False)
    if n_obs == 0:
        raise ValueError("no observation times after the burn-in")
    total = counts.sum()
    if total != n_obs * N:
        raise ValueError("particles escaped the histogram grid")
    return Histogram(edges=edges, masses=counts / total)


# ---------------------------------------------------------------------------
# Analytic references
# ---------------------------------------------------------------------------


class DirichletGroundState:
    """First Dirichlet eigenfunction of (1/2)Laplacian on a supported domain,
    normalised to unit integral; provides pointwise densities and exact-ish
    per-bin masses for comparisons with empirical histograms."""

    def __init__(self, domain: Domain):
        self.domain = domain
        if isinstance(domain, Interval):
            self._kind = "interval"
        elif isinstance(domain, Box):
            self._kind = "box"
        elif isinstance(domain, Ball):
            if domain.dim < 2:
                raise ValueError("ball reference needs dimension >= 2")
            self._kind = "ball"
            nu = domain.dim / 2.0 - 1.0
            self._nu = nu
            self._jz = _first_bessel_zero(nu)
            # Normalise c * profile(r) over the ball.
            R = domain.radius
            d = domain.dim
            surf = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)

            def shell(r):
                return self._profile(np.asarray([r]))[0] * surf * r ** (d - 1)

            total, err = integrate.quad(shell, 0.0, R, limit=200)
            if not math.isfinite(total) or total <= 0:
                raise ValueError("could not normalise the radial profile")
            self._norm = 1.0 / total
        else:
            raise ValueError(
                f"no analytic ground state for {type(domain).__name__}"
            )

    def _profile(self, r: np.ndarray) -> np.ndarray:
        # Unnormalised radial part for the ball: r^(1-d/2) J_{d/2-1}(jz r/R),
        # continuous at 0 (limit handled by series for tiny r).
        R = self.domain.radius
        nu = self._nu
        u = self._jz * np.asarray(r, float) / R
        vals = np.empty_like(u)
        tiny = u < 1e-8
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = special.jv(nu, u) / np.where(u == 0.0, 1.0, u) ** nu
        # J_nu(u)/u^nu -> 1/(2^nu Gamma(nu+1)) as u -> 0
        vals = np.where(tiny, 1.0 / (2.0**nu * math.gamma(nu + 1.0)), vals)
        return vals * (self._jz / R) ** nu

    def density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self._kind == "interval":
            dom: Interval = self.domain
            L = dom.b - dom.a
            v = x[:, 0]
            out = (math.pi / (2.0 * L)) * np.sin(math.pi * (v - dom.a) / L)
            return np.where((v >= dom.a) & (v <= dom.b), np.maximum(out, 0.0), 0.0)
        if self._kind == "box":
            dom: Box = self.domain
            out = np.ones(x.shape[0])
            for i in range(dom.dim):
                L = dom.hi[i] - dom.lo[i]
                v = x[:, i]
                f = (math.pi / (2.0 * L)) * np.sin(math.pi * (v - dom.lo[i]) / L)
                inside = (v >= dom.lo[i]) & (v <= dom.hi[i])
                out *= np.where(inside, np.maximum(f, 0.0), 0.0)
            return out
        dom: Ball = self.domain
        r = np.sqrt(((x - dom.center) ** 2).sum(axis=1))
        out = self._norm * self._profile(r)
        return np.where(r <= dom.radius, np.maximum(out, 0.0), 0.0)

    def bin_masses(self, edges: Sequence[np.ndarray]) -> np.ndarray:
        edges = tuple(np.asarray(e, float) for e in edges)
        if self._kind == "interval":
            dom: Interval = self.domain
            return _sine_bin_masses(edges[0], dom.a, dom.b)
        if self._kind == "box":
            dom: Box = self.domain
            per_axis = [
                _sine_bin_masses(edges[i], dom.lo[i], dom.hi[i])
                for i in range(dom.dim)
            ]
            out = per_axis[0]
            for m in per_axis[1:]:
                out = np.multiply.outer(out, m)
            return out
        # Ball: tensor midpoint quadrature per bin (the density is smooth and
        # vanishes outside the ball, so a modest rule suffices).
        sub = 24 if self.domain.dim == 2 else 8
        axes = []
        for e in edges:
            mids = []
            for i in range(len(e) - 1):
                mids.append(np.linspace(e[i], e[i + 1], 2 * sub + 1)[1::2])
            axes.append(np.asarray(mids))  # (nbins, sub)
        shape = tuple(len(e) - 1 for e in edges)
        out = np.zeros(shape)
        it = np.ndindex(*shape)
        for idx in it:
            grids = np.meshgrid(*[axes[i][idx[i]] for i in range(len(edges))],
                                indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
            vol = np.prod([edges[i][idx[i] + 1] - edges[i][idx[i]]
                           for i in range(len(edges))])
            out[idx] = self.density(pts).mean() * vol
        return out


def _sine_bin_masses(edges: np.ndarray, a: float, b: float) -> np.ndarray:
    # Integral of (pi/(2L)) sin(pi (x-a)/L) over each bin: [-cos(pi u)/2].
    L = b - a
    u = np.clip((edges - a) / L, 0.0, 1.0)
    anti = -np.cos(math.pi * u) / 2.0
    return np.diff(anti)


def _first_bessel_zero(nu: float) -> float:
    if abs(nu - round(nu)) < 1e-12:
        return float(special.jn_zeros(int(round(nu)), 1)[0])
    # Bracket the first positive zero of J_nu and bisect.
    lo = max(1e-6, nu)
    hi = nu + 20.0
    step = 0.05
    t = lo
    prev = special.jv(nu, t)
    while t < hi:
        t2 = t + step
        cur = special.jv(nu, t2)
        if prev > 0 >= cur:
            break
        t, prev = t2, cur
    else:
        raise ValueError(f"could not bracket the first zero of J_{nu}")
    lo, hi = t, t2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if special.jv(nu, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eigenfunction_reference(domain: Domain) -> DirichletGroundState:
    """Analytic long-run density reference; supports Interval, Box and Ball."""
    return DirichletGroundState(domain)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def jump_log_to_csv(records: Sequence[JumpRecord], path) -> None:
    """Write the jump log as ``k,tau,dying,donor,xi_0,...,xi_{d-1}``."""
    with open(path, "w", newline="") as f:
        if records:
            d = len(np.atleast_1d(records[0].xi))
        else:
            d = 1
        cols = ["k", "tau", "dying", "donor"] + [f"xi_{i}" for i in range(d)]
        f.write(",".join(cols) + "\n")
        for r in records:
            xi = np.atleast_1d(r.xi)
            vals = [str(r.k), repr(float(r.tau)), str(r.dying), str(r.donor)]
            vals += [repr(float(v)) for v in xi]
            f.write(",".join(vals) + "\n")


def histogram_to_csv(hist: Histogram, path) -> None:
    """Write a histogram as ``bin_lo_*,bin_hi_*,mass`` rows (row-major)."""
    d = hist.dim
    cols = [f"bin_lo_{i}" for i in range(d)] + [f"bin_hi_{i}" for i in range(d)] + ["mass"]
    shape = hist.masses.shape
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for idx in np.ndindex(*shape):
            lo = [hist.edges[i][idx[i]] for i in range(d)]
            hi = [hist.edges[i][idx[i] + 1] for i in range(d)]
            vals = [repr(float(v)) for v in lo + hi]
            vals.append(repr(float(hist.masses[idx])))
            f.write(",".join(vals) + "\n")
