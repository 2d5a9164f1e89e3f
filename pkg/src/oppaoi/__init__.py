"""Average age of information under contention and opportunistic channel access."""

from .channel import (
    EffectiveLink,
    SystemParams,
    accept_prob,
    contention_success_prob,
    gain_threshold,
    load_params,
    path_loss_db,
    rate_of_gain,
)
from .moments import MomentSet, QuadratureError, QuadratureSpec, expect_P, expect_P2, expect_T, expect_T2, moment_set
from .monotonic import DmSolution, find_r_ddagger, minimize_dm, minimize_over_p, minimize_over_r
from .objective import AoiPoint, DmProblem, average_aoi, dinkelbach_F, dm_split_p, dm_split_r
from .optimizer import OptimizerReport, SolverConfig, bcd_solve, dinkelbach_solve, grid_search_oracle
from .simulator import SimResult, run_cycle, run_round, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
