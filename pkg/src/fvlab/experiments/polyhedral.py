"""Two-particle branching runs in polygonal domains.

In any polygon, including nonconvex ones with reentrant corners, the
two-particle system keeps jumping at a statistically steady rate: inter-jump
times show no systematic geometric decay (contrast with the extinction
counterexample), and jump counts grow roughly linearly in the horizon.  Each
replica's jump log is summarised by the collapse classifier, the minimum
inter-jump gap and the largest excursion of either particle away from the
last jump point.

Within-step double hits are resolved in crossing order exactly as in the
general engine: the earlier death takes the later-dying partner, still alive
at that moment, as its donor at the partner's interior position along the
step.  A step where no interior donor exists (both particles flagged at the
very end of the step with positions outside) is a resolution-level
simultaneous extinction; it terminates the replica and is reported as a
distinct outcome, with frequency expected to vanish as dt -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..geometry import Domain
from ..stochastic import PathConfig, RngStream, step_with_hits
from .common import InvalidFitError, collapse_slope, is_collapsing, run_in_blocks

__all__ = ["PolyhedralReplica", "PolyhedralReport", "polyhedral_experiment"]


@dataclass
class PolyhedralReplica:
    taus: np.ndarray          # jump times
    max_excursion: float      # max |X_t - xi_last| between consecutive jumps
    extinct: bool             # simultaneous-extinction outcome at resolution
    extinct_time: Optional[float]

    @property
    def n_jumps(self) -> int:
        return self.taus.size

    def n_jumps_before(self, t: float) -> int:
        return int((self.taus <= t).sum())

    @property
    def min_gap(self) -> float:
        gaps = np.diff(self.taus)
        gaps = gaps[gaps > 0]
        return float(gaps.min()) if gaps.size else math.nan

    def slope(self) -> float:
        gaps = np.diff(self.taus)
        return collapse_slope(gaps)

    def collapsing(self) -> bool:
        gaps = np.diff(self.taus)
        try:
            return is_collapsing(gaps)
        except InvalidFitError:
            return False


@dataclass
class PolyhedralReport:
    replicas: List[PolyhedralReplica]
    horizon: float

    @property
    def collapsing_count(self) -> int:
        return sum(1 for r in self.replicas if not r.extinct and r.collapsing())

    @property
    def extinct_count(self) -> int:
        return sum(1 for r in self.replicas if r.extinct)

    @property
    def total_jumps(self) -> int:
        return sum(r.n_jumps for r in self.replicas)

    def jump_count_ratio(self) -> float:
        """Aggregate jump count over [0, horizon] relative to [0, horizon/2]."""
        half = self.horizon / 2.0
        full = sum(r.n_jumps for r in self.replicas)
        first = sum(r.n_jumps_before(half) for r in self.replicas)
        return full / first if first else math.inf


def polyhedral_experiment(domain: Domain, horizon: float, n_reps: int,
                          cfg: PathConfig, rng: RngStream, x0=None,
                          threads: int = 1,
                          block_size: int = 25) -> PolyhedralReport:
    """Run ``n_reps`` independent two-particle replicas to the horizon."""
    if x0 is None:
        x0 = domain.deep_point()
    x0 = np.asarray(x0, float)
    run_cfg = PathConfig(dt=cfg.dt, horizon=horizon,
                         substep_near_boundary=cfg.substep_near_boundary)

    def worker(count, sub_rng):
        return _run_block(domain, x0, count, run_cfg, sub_rng)

    blocks = run_in_blocks(int(n_reps), block_size, rng, worker, threads)
    replicas = [rep for block in blocks for rep in block]
    return PolyhedralReport(replicas=replicas, horizon=horizon)


def _run_block(domain: Domain, x0: np.ndarray, n_reps: int, cfg: PathConfig,
               rng: RngStream) -> List[PolyhedralReplica]:
    R = n_reps
    n = 2 * R
    d = domain.dim
    x = np.tile(x0, (n, 1))
    da = domain.dist_many(x)
    substeps = 4 if cfg.substep_near_boundary else 1

    taus: List[List[float]] = [[] for _ in range(R)]
    last_tau = np.full(R, -math.inf)
    # Running max of |X - xi_last| per particle since the replica's last jump,
    # plus the largest such excursion over all completed inter-jump intervals.
    anchor = x.copy()
    vmax = np.zeros(R)
    vmax_all = np.zeros(R)
    alive = np.ones(R, bool)
    extinct_time = np.full(R, np.nan)

    n_steps = int(round(cfg.horizon / cfg.dt))
    t = 0.0
    for _ in range(n_steps):
        if not alive.any():
            break
        b, db, hit, frac = step_with_hits(domain, x, da, cfg.dt, rng, substeps)
        alive2 = np.repeat(alive, 2)
        hit &= alive2

        # Track the excursion away from the last jump point.
        disp = np.sqrt(((b - anchor) ** 2).sum(axis=1)).reshape(R, 2)
        np.maximum(vmax, disp.max(axis=1), out=vmax, where=alive)

        if hit.any():
            hr = hit.reshape(R, 2)
            lone = hr[:, 0] != hr[:, 1]
            for r in np.flatnonzero(lone & alive):
                i = 2 * r + (0 if hr[r, 0] else 1)
                j = i ^ 1
                tau = t + frac[i] * cfg.dt
                if tau <= last_tau[r]:
                    tau = np.nextafter(last_tau[r], math.inf)
                last_tau[r] = tau
                taus[r].append(float(tau))
                b[i] = b[j]          # donor: the surviving partner, post-step
                db[i] = db[j]
                anchor[i] = b[j]
                anchor[j] = b[j]
                vmax_all[r] = max(vmax_all[r], vmax[r])
                vmax[r] = 0.0
            both = hr[:, 0] & hr[:, 1]
            for r in np.flatnonzero(both & alive):
                i, j = 2 * r, 2 * r + 1
                # Earlier crossing dies first; uniform tie-break.
                fi, fj = frac[i], frac[j]
                if fi > fj or (fi == fj and rng.random() < 0.5):
                    i, j = j, i
                    fi, fj = fj, fi
                # Donor for the first death: the partner, alive at fraction
                # fi, at its interior position along its own step.
                donor_pos = x[j] + fi * (b[j] - x[j])
                if not bool(domain.contains_many(donor_pos[None, :])[0]):
                    alive[r] = False
                    extinct_time[r] = t + fi * cfg.dt
                    continue
                tau1 = t + fi * cfg.dt
                if tau1 <= last_tau[r]:
                    tau1 = np.nextafter(last_tau[r], math.inf)
                tau2 = t + fj * cfg.dt
                if tau2 <= tau1:
                    tau2 = np.nextafter(tau1, math.inf)
                last_tau[r] = tau2
                taus[r].extend([float(tau1), float(tau2)])
                # Second death: donor is the already-relocated first particle.
                b[i] = donor_pos
                b[j] = donor_pos
                dd = domain.dist_many(donor_pos[None, :])[0]
                db[i] = dd
                db[j] = dd
                anchor[i] = donor_pos
                anchor[j] = donor_pos
                vmax_all[r] = max(vmax_all[r], vmax[r])
                vmax[r] = 0.0
        x = b
        da = db
        t += cfg.dt

    out = []
    for r in range(R):
        out.append(PolyhedralReplica(
            taus=np.asarray(taus[r]),
            max_excursion=float(max(vmax_all[r], vmax[r])),
            extinct=not alive[r],
            extinct_time=None if alive[r] else float(extinct_time[r]),
        ))
    return out
