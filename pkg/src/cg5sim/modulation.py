"""Level-shifted carrier PWM for the five-level bridge.

A normalised reference r in [-2, 2] is decomposed into a band (which pair of
adjacent levels brackets it) and a duty (fraction of the carrier period spent
on the upper level).  One triangular carrier per band realises
phase-disposition PWM.  Because every positive-half state gates S2 and every
negative-half state gates S6, those two devices switch only at the
fundamental frequency; all others toggle at carrier rate or below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import GateVector, SwitchingState, gate_vector_for_state


@dataclass(frozen=True)
class ModulationConfig:
    f_sw: float = 5000.0   # carrier frequency
    f0: float = 50.0       # fundamental frequency
    m_index: float = 0.8   # modulation index for open-loop runs

    def __post_init__(self):
        if self.f_sw / self.f0 < 20.0:
            raise ValueError("carrier must run at least 20x the fundamental")
        if not 0.0 < self.m_index <= 1.0:
            raise ValueError("m_index must lie in (0, 1]")


def level_select(r: float) -> tuple[SwitchingState, SwitchingState, float, bool]:
    """Band decomposition of the normalised reference.

    Returns ``(low_state, high_state, duty, saturated)``; ``duty`` is the
    within-period fraction spent in the high state (so the series-mode dwell
    per carrier period in the outer bands is duty * T).  References beyond
    +-2 are clamped and flagged.
    """
    saturated = abs(r) > 2.0
    r = max(-2.0, min(2.0, r))
    if r >= 0.0:
        if r <= 1.0:
            return SwitchingState.ZERO_POS, SwitchingState.POS1, r, saturated
        return SwitchingState.POS1, SwitchingState.POS2, r - 1.0, saturated
    if r >= -1.0:
        return SwitchingState.ZERO_NEG, SwitchingState.NEG1, -r, saturated
    return SwitchingState.NEG1, SwitchingState.NEG2, -r - 1.0, saturated


def carrier(t: float, f_sw: float) -> float:
    """Symmetric triangle in [0, 1], starting from 0 at t = 0."""
    ph = t * f_sw
    ph -= math.floor(ph)
    return 2.0 * ph if ph < 0.5 else 2.0 * (1.0 - ph)


def state_at(t: float, r: float, cfg: ModulationConfig) -> SwitchingState:
    """Active switching state at time t for a held reference r."""
    lo, hi, duty, _ = level_select(r)
    return hi if carrier(t, cfg.f_sw) < duty else lo


def pwm_gates(t: float, r: float, cfg: ModulationConfig) -> GateVector:
    """Gate vector at time t: carrier-compare then table lookup."""
    return gate_vector_for_state(state_at(t, r, cfg))


def reference_from_control(m: float, theta: float) -> float:
    """r = 2 m sin(theta): peak synthesised voltage is m * 2 * vin."""
    if not 0.0 < m <= 1.0:
        raise ValueError("modulation index must lie in (0, 1]")
    return 2.0 * m * math.sin(theta)
