"""Area, power and energy of an array configuration.

Area comes from the 28 nm synthesis table for the four characterised sizes
and from a quadratic fit elsewhere. Power is relative to the 4x4 FP32 array.
Energy is reported in normalised units (relative power x seconds at 1 GHz).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .accel import WeightFormat

CLOCK_HZ = 1e9
INT8_POWER_SAVING = 0.195

AREA_TABLE_MM2 = {
    WeightFormat.FP32: {4: 0.05, 8: 0.21, 16: 0.83, 32: 3.34},
    WeightFormat.INT8: {4: 0.03, 8: 0.14, 16: 0.53, 32: 2.13},
}


@dataclass(frozen=True)
class HwCost:
    area_mm2: float
    rel_power: float
    energy: float
    speedup: float

    @property
    def aep(self):
        return self.area_mm2 * self.energy


@lru_cache(maxsize=None)
def area_coefficients(fmt):
    """(a2, a1, a0) of the area fit, least squares on relative residuals."""
    table = AREA_TABLE_MM2[WeightFormat(fmt)]
    t = np.array(sorted(table), dtype=np.float64)
    a = np.array([table[k] for k in sorted(table)])
    return tuple(float(c) for c in np.polyfit(t, a, 2, w=1.0 / a))


def area_model(cfg):
    a2, a1, a0 = area_coefficients(cfg.weight_format)
    t_min = min(AREA_TABLE_MM2[cfg.weight_format])
    T = float(cfg.size)
    if T < t_min:
        # below the characterised range the fit turns negative; scale the
        # smallest fitted point by PE count instead
        anchor = a2 * t_min**2 + a1 * t_min + a0
        return anchor * (T / t_min) ** 2
    return a2 * T**2 + a1 * T + a0


def area_lookup(cfg):
    """Table area when characterised, else the fitted model."""
    table = AREA_TABLE_MM2[cfg.weight_format]
    if cfg.size in table:
        return table[cfg.size]
    return area_model(cfg)


def area_source(cfg):
    return "table" if cfg.size in AREA_TABLE_MM2[cfg.weight_format] else "fitted"


def power_model(cfg):
    p = (cfg.size / 4.0) ** 2
    if cfg.int8:
        p *= 1.0 - INT8_POWER_SAVING
    return p


def energy_and_speedup(cfg, stats, baseline_cycles):
    if baseline_cycles <= 0:
        raise ValueError("baseline cycle count must be positive")
    total = stats.total_cycles
    if total <= 0:
        raise ValueError("cannot cost a run with zero cycles")
    power = power_model(cfg)
    return HwCost(
        area_mm2=area_lookup(cfg),
        rel_power=power,
        energy=power * total / CLOCK_HZ,
        speedup=baseline_cycles / total,
    )
