"""Shared machinery for the experiment drivers: deterministic block-parallel
execution, standard-error helpers, log-log fits and the collapse classifier.

Replica ensembles are split into fixed-size blocks, one independent random
substream per block, merged in block order.  The thread count only changes
how blocks are scheduled, never the results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np

from ..stochastic import RngStream

__all__ = [
    "Criterion",
    "InvalidFitError",
    "mean_se",
    "ols_line",
    "collapse_slope",
    "is_collapsing",
    "COLLAPSE_SLOPE_THRESHOLD",
    "run_in_blocks",
]

COLLAPSE_SLOPE_THRESHOLD = -0.05


class InvalidFitError(RuntimeError):
    """A tail fit was requested on data that cannot support it."""


@dataclass
class Criterion:
    """A single pass/fail check with the measured value and its target."""

    name: str
    value: float
    target: str
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": None if self.value is None else float(self.value),
            "target": self.target,
            "pass": bool(self.passed),
        }


def mean_se(values: np.ndarray):
    """Sample mean and its standard error."""
    v = np.asarray(values, float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def ols_line(x: np.ndarray, y: np.ndarray):
    """Least-squares line fit; returns (slope, intercept, slope_se)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    if n < 3:
        raise InvalidFitError(f"need at least 3 points for a line fit, got {n}")
    xm = x.mean()
    ym = y.mean()
    sxx = ((x - xm) ** 2).sum()
    if sxx <= 0:
        raise InvalidFitError("degenerate abscissae in line fit")
    slope = ((x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    var = (resid**2).sum() / (n - 2)
    return slope, intercept, math.sqrt(var / sxx)


def collapse_slope(gaps: Sequence[float], max_points: int = 400) -> float:
    """Robust per-jump trend of log inter-jump times.

    Median of pairwise slopes (Theil-Sen) of log(gap) against the jump index,
    over the whole recorded sequence.  A stationary jump process gives a slope
    near zero even when the run ends inside a burst of rapid jumps, while a
    geometrically collapsing sequence gives a strongly negative slope.  Long
    sequences are evenly subsampled, keeping original indices, so the slope
    stays per-jump.
    """
    g = np.asarray(gaps, float)
    g = g[g > 0.0]
    if g.size < 2:
        raise InvalidFitError(f"need at least 2 positive gaps, got {g.size}")
    y = np.log(g)
    idx = np.arange(y.size, dtype=float)
    if y.size > max_points:
        pick = np.linspace(0, y.size - 1, max_points).astype(int)
        y = y[pick]
        idx = idx[pick]
    dy = y[None, :] - y[:, None]
    dx = idx[None, :] - idx[:, None]
    iu = np.triu_indices(y.size, k=1)
    return float(np.median(dy[iu] / dx[iu]))


def is_collapsing(gaps: Sequence[float],
                  threshold: float = COLLAPSE_SLOPE_THRESHOLD) -> bool:
    """Collapse verdict for one replica's inter-jump times."""
    return collapse_slope(gaps) < threshold


def run_in_blocks(total: int, block_size: int, rng: RngStream,
                  worker: Callable[[int, RngStream], object],
                  threads: int = 1) -> List[object]:
    """Run ``worker(count, substream)`` over fixed blocks covering ``total``
    replicas and return the per-block results in block order.

    The block layout depends only on (total, block_size), and block i always
    uses ``rng.substream(i)``, so any thread count yields identical output.
    """
    if total <= 0:
        return []
    block_size = max(1, int(block_size))
    counts = []
    start = 0
    while start < total:
        counts.append(min(block_size, total - start))
        start += block_size
    streams = [rng.substream(i) for i in range(len(counts))]
    if threads <= 1 or len(counts) == 1:
        return [worker(c, s) for c, s in zip(counts, streams)]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        futures = [pool.submit(worker, c, s) for c, s in zip(counts, streams)]
        return [f.result() for f in futures]
