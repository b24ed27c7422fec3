"""Cache-enabled C-RAN downlink simulator.

Simulates a multicell downlink where base stations hold (coded or uncoded)
file caches, and optimizes beamformers to trade transmit power against the
backhaul rate needed for cache misses.  The optimizer lifts beamformers to
covariance matrices, smooths the serving indicator with a logarithm, and
solves the resulting problem as a sequence of linear semidefinite programs
on a built-in interior-point solver.
"""

from cachebeam.scenario import (
    CachePlacement,
    ChannelParams,
    GeometryConfig,
    PopularityModel,
    Scenario,
    TimeSlot,
    build_lattice,
    draw_channel,
    draw_time_slot,
    path_loss_db,
    place_caches,
    sample_user_positions,
    zipf_popularity,
)
from cachebeam.costmodel import Beamformers, CostBreakdown, QosConfig, network_cost, rate_of, sinr_of
from cachebeam.conic import ConicProblem, ConicSolution, SolverSettings, SolveStatus, kkt_residuals, solve
from cachebeam.relaxation import CutPool, LiftedScenario, MmSettings, RelaxedSolution, mm_optimize
from cachebeam.rounding import RoundingReport, RoundingSettings, extract_rank1, gaussian_randomize
from cachebeam.harness import ExperimentConfig, SweepRecord, gain_table, run_tradeoff_sweep

__version__ = "0.1.0"

__all__ = [
    "CachePlacement",
    "ChannelParams",
    "GeometryConfig",
    "PopularityModel",
    "Scenario",
    "TimeSlot",
    "build_lattice",
    "draw_channel",
    "draw_time_slot",
    "path_loss_db",
    "place_caches",
    "sample_user_positions",
    "zipf_popularity",
    "Beamformers",
    "CostBreakdown",
    "QosConfig",
    "network_cost",
    "rate_of",
    "sinr_of",
    "ConicProblem",
    "ConicSolution",
    "SolverSettings",
    "SolveStatus",
    "kkt_residuals",
    "solve",
    "CutPool",
    "LiftedScenario",
    "MmSettings",
    "RelaxedSolution",
    "mm_optimize",
    "RoundingReport",
    "RoundingSettings",
    "extract_rank1",
    "gaussian_randomize",
    "ExperimentConfig",
    "SweepRecord",
    "gain_table",
    "run_tradeoff_sweep",
]
