"""Moment-matrix relaxations: generic Shor lifting and the maneuver-planning SDP."""

from .generic import (
    RATIO_CAP,
    TIGHT_RATIO,
    RankOne,
    ShorResult,
    eigen_ratio,
    extract_rank_one,
    rank_reduce,
    shor_relax_generic,
    solve_shor,
)
from .layout import MomentLayout
from .planner import (
    ManeuverPlan,
    Mode,
    PlannerSpec,
    Scaling,
    TightnessReport,
    build_sdp,
    extract_solution,
    moment_blocks_from_rollout,
    terminal_mahalanobis,
    terminal_quadratic,
)

__all__ = [
    "RATIO_CAP", "TIGHT_RATIO", "ManeuverPlan", "Mode", "MomentLayout", "PlannerSpec", "RankOne",
    "Scaling", "ShorResult", "TightnessReport", "build_sdp", "eigen_ratio", "extract_rank_one",
    "extract_solution", "moment_blocks_from_rollout", "rank_reduce", "shor_relax_generic",
    "solve_shor", "terminal_mahalanobis", "terminal_quadratic",
]
