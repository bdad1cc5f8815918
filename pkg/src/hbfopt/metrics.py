"""Rate statistics and fairness measures for final designs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2_E = math.log2(math.e)
ZERO_RATE_BPS_HZ = 0.001


@dataclass(frozen=True)
class RateReport:
    """Per-user rates (nats) with the fairness summary used in the tables."""

    per_user_rates: np.ndarray
    mr: float
    sr: float
    zr_count: int
    minmax_ratio: float
    jain: float


def nats_to_bps_hz(x):
    """Rate unit conversion: multiply by log2(e)."""
    return np.asarray(x, dtype=float) * LOG2_E if np.ndim(x) else float(x) * LOG2_E


def build_report(rates) -> RateReport:
    """Summarize per-user rates (nats).

    A zero rate is anything below 0.001 bps/Hz.  Jain's index is
    (sum r)^2 / (K sum r^2); the all-zero corner case takes the one-user
    concentration limit 1/K (and min/max ratio 0).
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or rates.size == 0:
        raise ValueError("rates must be a nonempty vector")
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    k = rates.size
    total = float(rates.sum())
    sq = float(np.sum(rates ** 2))
    if sq == 0.0:
        jain = 1.0 / k
        minmax = 0.0
    else:
        jain = total ** 2 / (k * sq)
        minmax = float(rates.min() / rates.max())
    zr = int(np.count_nonzero(nats_to_bps_hz(rates) < ZERO_RATE_BPS_HZ))
    return RateReport(per_user_rates=rates.copy(), mr=float(rates.min()), sr=total,
                      zr_count=zr, minmax_ratio=minmax, jain=float(jain))
