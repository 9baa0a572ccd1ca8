"""Analytic step-time model: tree, PM, local and wide-area communication terms."""

from .constants import (
    DAS3_NETWORK,
    DAS3_ORDER,
    DAS3_SITES,
    GBBP_NETWORK,
    GBBP_SITES,
    GLOBAL_GRID_NETWORK,
    GLOBAL_GRID_SITE,
    PRESETS,
    MachineConstants,
    NetworkConstants,
    gbbp_roster,
)
from .model import (
    PredictionBreakdown,
    RunSpec,
    StellarModelSpec,
    StellarWanCost,
    ThetaRangeWarning,
    average_block_size,
    bandwidth_sweep,
    bandwidth_threshold,
    efficiency,
    local_comm_time,
    memory_estimate,
    n_interactions,
    pm_time,
    predict_step,
    speedup,
    stellar_step_time,
    stellar_wan_model,
    tree_time,
    wan_comm_time,
    wan_exchange_count,
    wan_volume,
)

__all__ = [
    "DAS3_NETWORK",
    "DAS3_ORDER",
    "DAS3_SITES",
    "GBBP_NETWORK",
    "GBBP_SITES",
    "GLOBAL_GRID_NETWORK",
    "GLOBAL_GRID_SITE",
    "PRESETS",
    "MachineConstants",
    "NetworkConstants",
    "PredictionBreakdown",
    "RunSpec",
    "StellarModelSpec",
    "StellarWanCost",
    "ThetaRangeWarning",
    "average_block_size",
    "bandwidth_sweep",
    "bandwidth_threshold",
    "efficiency",
    "gbbp_roster",
    "local_comm_time",
    "memory_estimate",
    "n_interactions",
    "pm_time",
    "predict_step",
    "speedup",
    "stellar_step_time",
    "stellar_wan_model",
    "tree_time",
    "wan_comm_time",
    "wan_exchange_count",
    "wan_volume",
]
