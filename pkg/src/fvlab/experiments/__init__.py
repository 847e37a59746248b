"""Experiment drivers turning the model's quantitative claims into
statistical verdicts with reported uncertainties."""

from .common import (COLLAPSE_SLOPE_THRESHOLD, Criterion, InvalidFitError,
                     collapse_slope, is_collapsing, mean_se, ols_line,
                     run_in_blocks)
from .excursion import TailReport, excursion_tail_experiment
from .extinction import (ExtinctionReport, extinction_experiment,
                         simulate_absorption_pairs)
from .harnack import (HarnackPoint, HarnackReport, harnack_experiment,
                      ratio_radius_slope, ratio_span)
from .polyhedral import (PolyhedralReplica, PolyhedralReport,
                         polyhedral_experiment)
from .qsd import QsdReport, default_bins, qsd_experiment

__all__ = [
    "COLLAPSE_SLOPE_THRESHOLD",
    "Criterion",
    "InvalidFitError",
    "collapse_slope",
    "is_collapsing",
    "mean_se",
    "ols_line",
    "run_in_blocks",
    "TailReport",
    "excursion_tail_experiment",
    "ExtinctionReport",
    "extinction_experiment",
    "simulate_absorption_pairs",
    "HarnackPoint",
    "HarnackReport",
    "harnack_experiment",
    "ratio_radius_slope",
    "ratio_span",
    "PolyhedralReplica",
    "PolyhedralReport",
    "polyhedral_experiment",
    "QsdReport",
    "default_bins",
    "qsd_experiment",
]
