"""Sum-rate optimization and Monte-Carlo simulation for an IRS-aided
multi-cell NOMA downlink."""

from .config import NetworkConfig, dbm_to_watt, load_config, validate_scenario, watt_to_dbm
from .channel import generate_channels, pathloss, without_irs
from .model import (
    Allocation,
    ChannelSet,
    PhaseConfig,
    RateReport,
    combined_gain,
    combined_gain_table,
    rates,
    sic_margin,
    sinr,
    validate_allocation,
)
from .power import CubState, allocate_power, cub_value, solve_power_subproblem, update_lambda
from .reflect import (
    decoding_order,
    feasibility_design,
    gaussian_randomization,
    lift_problem,
    sdr_solve,
    sum_gain_bcd,
    taylor_lower_bound,
)
from .matching import (
    MatchingState,
    SwapPair,
    apply_swap,
    init_user_association,
    is_swap_blocking,
    match_bs_to_subchannels,
    match_users_to_bs,
)
from .harness import (
    SCHEMES,
    RunResult,
    SweepSpec,
    alternating_optimize,
    baseline_oma,
    emit_results,
    run_monte_carlo,
)

__version__ = "0.1.0"
