"""Line-search solvers on Tucker varieties."""

from .common import (DEFICIENT, EXACT, PREVIOUS, RANK_DECREASE, RANK_INCREASE, RESTART, TIGHTEN,
                     LineSearchConfig, LineSearchResult, Monitor, SolverTrace, StationaritySnapshot,
                     StoppingRules, armijo_backtrack, stationarity_snapshot)
from .grap import DEFAULT_OMEGA, grap_solve, rfgrap_solve
from .tram import (RESTARTING, PRACTICAL, RankIncreaseIneffective, TramConfig, rank_decrease, rank_increase,
                   rgd_fixed_rank, rgd_solve, tram_solve)

__all__ = [
    "DEFICIENT", "EXACT", "PREVIOUS", "RANK_DECREASE", "RANK_INCREASE", "RESTART", "TIGHTEN",
    "LineSearchConfig", "LineSearchResult", "Monitor", "SolverTrace", "StationaritySnapshot",
    "StoppingRules", "armijo_backtrack", "stationarity_snapshot", "DEFAULT_OMEGA", "grap_solve",
    "rfgrap_solve", "RESTARTING", "PRACTICAL", "RankIncreaseIneffective", "TramConfig", "rank_decrease",
    "rank_increase", "rgd_fixed_rank", "rgd_solve", "tram_solve",
]
