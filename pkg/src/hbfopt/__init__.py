"""Hybrid beamforming design by penalized alternating optimization.

Max-min rate, sum-rate and soft max-min objectives over array-of-subarrays or
fully-connected analog structures with b-bit phase shifters, plus the Monte
Carlo experiment tooling around them.
"""

from .algorithms import (MAXMIN, OBJECTIVES, SOFTMAXMIN, SUMRATE, BeamformerState,
                         RunResult, init_state, run)
from .channel import Channel, ChannelParams, array_response, generate_channel, noise_power_mw, path_loss_db
from .metrics import RateReport, build_report, nats_to_bps_hz
from .system import (AOSA, FC, InfeasibleBudgetError, SystemConfig, analog_matrix,
                     dbm_to_mw, effective_channel, mw_to_dbm, power_budget,
                     quantize_phases, transmit_power, user_rates)

__all__ = [
    "AOSA", "FC", "MAXMIN", "SUMRATE", "SOFTMAXMIN", "OBJECTIVES",
    "BeamformerState", "Channel", "ChannelParams", "InfeasibleBudgetError",
    "RateReport", "RunResult", "SystemConfig",
    "analog_matrix", "array_response", "build_report", "dbm_to_mw",
    "effective_channel", "generate_channel", "init_state", "mw_to_dbm",
    "nats_to_bps_hz", "noise_power_mw", "path_loss_db", "power_budget",
    "quantize_phases", "run", "transmit_power", "user_rates",
]

__version__ = "0.1.0"
