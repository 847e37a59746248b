"""Comparability of the hitting probability f(x) = P(reach a target set A
before the boundary) and the mean exit time g(x), estimated pointwise by
Monte Carlo.

In a domain whose boundary is flatter than the critical slope, f and g are
bounded multiples of each other; in a narrow wedge the ratio f/g decays like
a power of the distance to the tip, which is what ``ratio_radius_slope``
measures on axis points of decreasing radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..geometry import Domain, GeometryError
from ..stochastic import PathConfig, RngStream, exit_times_batch
from .common import mean_se, ols_line, run_in_blocks

__all__ = ["HarnackPoint", "HarnackReport", "harnack_experiment",
           "ratio_span", "ratio_radius_slope"]


@dataclass
class HarnackPoint:
    """Estimates at one query point."""

    x: np.ndarray
    f_hat: float          # P(T_A < T_boundary)
    f_se: float
    g_hat: float          # E[T_boundary]
    g_se: float
    censored_fraction: float
    n_paths: int

    @property
    def ratio(self) -> float:
        return self.f_hat / self.g_hat if self.g_hat > 0 else math.inf


@dataclass
class HarnackReport:
    points: List[HarnackPoint]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([p.ratio for p in self.points])


def _check_target_inside(domain: Domain, target: Domain):
    lo, hi = target.bounding_box()
    corners = np.stack(
        np.meshgrid(*[(lo[i], hi[i]) for i in range(target.dim)], indexing="ij"),
        axis=-1,
    ).reshape(-1, target.dim)
    if not domain.contains_many(corners).all():
        raise GeometryError("the target set must sit strictly inside the domain")


def harnack_experiment(domain: Domain, target: Domain, query_points,
                       n_paths: int, cfg: PathConfig, rng: RngStream,
                       threads: int = 1, block_size: int = 25_000) -> HarnackReport:
    """Estimate f and g at each query point from ``n_paths`` Brownian paths.

    Each path runs to the domain boundary (censored at the horizon) and
    records whether it touched the target first, so one ensemble yields both
    estimates.  One independent random stream per query point, split further
    into fixed blocks.
    """
    if target.dim != domain.dim:
        raise GeometryError("target and domain dimensions differ")
    _check_target_inside(domain, target)
    pts = np.atleast_2d(np.asarray(query_points, float))
    if not domain.contains_many(pts).all():
        raise GeometryError("every query point must lie inside the domain")

    points = []
    for qi, x0 in enumerate(pts):
        point_rng = rng.substream(qi)

        def worker(count, sub_rng, x0=x0):
            s = exit_times_batch(domain, x0, count, cfg, sub_rng, target=target)
            return s.times, s.censored, s.hit_target

        results = run_in_blocks(int(n_paths), block_size, point_rng, worker, threads)
        times = np.concatenate([r[0] for r in results])
        censored = np.concatenate([r[1] for r in results])
        hits = np.concatenate([r[2] for r in results])
        f_hat, f_se = mean_se(hits.astype(float))
        g_hat, g_se = mean_se(times)
        points.append(HarnackPoint(
            x=x0, f_hat=f_hat, f_se=f_se, g_hat=g_hat, g_se=g_se,
            censored_fraction=float(censored.mean()), n_paths=int(n_paths),
        ))
    return HarnackReport(points=points)


def ratio_span(report: HarnackReport) -> float:
    """max/min of the f/g ratios over the query points."""
    r = report.ratios
    r = r[np.isfinite(r) & (r > 0)]
    if r.size == 0:
        return math.inf
    return float(r.max() / r.min())


def ratio_radius_slope(report: HarnackReport, radii: Optional[Sequence[float]] = None):
    """Slope of log(f/g) against log(radius) over the query points.

    Radii default to the Euclidean norms of the query points (vertex at the
    origin).  Returns (slope, slope_se).
    """
    if radii is None:
        radii = [float(np.linalg.norm(p.x)) for p in report.points]
    r = np.asarray(radii, float)
    ratios = report.ratios
    ok = np.isfinite(ratios) & (ratios > 0)
    slope, _, se = ols_line(np.log(r[ok]), np.log(ratios[ok]))
    return slope, se
