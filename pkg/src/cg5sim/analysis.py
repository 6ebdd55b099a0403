"""Post-processing: harmonics, power quality, losses, ripple and stress.

All spectral metrics insist on integer-period windows so no leakage
correction is ever needed; callers slice records with
:func:`integer_cycle_window`.  The capacitor design math implements the
published sizing chain (peak output current, per-period charge swing,
minimum cell capacitance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernel import CFG_NEG2, CFG_NEG2_PUMP
from .circuit import (
    GATED_SWITCHES,
    STRESS_CLASS,
    CircuitParams,
    SwitchId,
    SwitchingState,
)
from .solver import WaveformRecord


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Fundamental plus harmonic amplitudes (peak) up to a given order."""

    f0: float
    fundamental: float
    harmonics: np.ndarray   # index k -> order k (0 = DC), amplitudes >= 0
    phase: np.ndarray       # radians, same indexing

    @property
    def dc(self) -> float:
        return float(self.harmonics[0])


def _check_integer_window(n: int, f0: float, fs: float) -> int:
    periods = n * f0 / fs
    if abs(periods - round(periods)) > 1e-6 or round(periods) < 1:
        raise ValueError(
            f"window of {n} samples at fs={fs:g} is not an integer number of "
            f"{f0:g} Hz periods ({periods:.6f})")
    return int(round(periods))


def spectrum(waveform: np.ndarray, f0: float, fs: float,
             n_max: int = 50) -> HarmonicSpectrum:
    """DFT harmonic extraction on an integer-period window."""
    x = np.asarray(waveform, dtype=float)
    periods = _check_integer_window(len(x), f0, fs)
    if fs < 2.0 * n_max * f0:
        raise ValueError("sample rate too low for the requested harmonic order")
    fx = np.fft.rfft(x)
    amps = np.zeros(n_max + 1)
    phase = np.zeros(n_max + 1)
    amps[0] = abs(fx[0].real) / len(x)
    for k in range(1, n_max + 1):
        c = fx[k * periods]
        amps[k] = 2.0 * abs(c) / len(x)
        phase[k] = math.atan2(c.imag, c.real)
    return HarmonicSpectrum(f0=f0, fundamental=float(amps[1]),
                            harmonics=amps, phase=phase)


def thd(waveform: np.ndarray, f0: float, fs: float, n_max: int = 50) -> float:
    """Total harmonic distortion: rss(orders 2..n_max) / fundamental."""
    sp = spectrum(waveform, f0, fs, n_max)
    if sp.fundamental <= 0.0:
        raise ValueError("zero fundamental; THD undefined")
    return float(np.sqrt(np.sum(sp.harmonics[2:] ** 2)) / sp.fundamental)


def rms(waveform: np.ndarray) -> float:
    x = np.asarray(waveform, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def power_metrics(v: np.ndarray, i: np.ndarray, f0: float, fs: float):
    """(P, Q, PF) over an integer-period window.

    Q is the non-active power sqrt(S^2 - P^2) signed by the fundamental
    phase (lagging current gives positive Q).  Returns PF as None when no
    apparent power flows.
    """
    v = np.asarray(v, dtype=float)
    i = np.asarray(i, dtype=float)
    if len(v) != len(i):
        raise ValueError("v and i must share a window")
    _check_integer_window(len(v), f0, fs)
    p = float(np.mean(v * i))
    s = rms(v) * rms(i)
    if s <= 0.0:
        return p, 0.0, None
    q_mag = math.sqrt(max(s * s - p * p, 0.0))
    sv = spectrum(v, f0, fs, n_max=1)
    si = spectrum(i, f0, fs, n_max=1)
    lag = math.remainder(sv.phase[1] - si.phase[1], 2.0 * math.pi)
    q = math.copysign(q_mag, lag) if abs(lag) > 1e-12 else 0.0
    return p, q, p / s


def fundamental_phase_shift(v: np.ndarray, i: np.ndarray, f0: float,
                            fs: float) -> float:
    """Angle of the current fundamental relative to the voltage fundamental,
    in degrees (positive = current lags)."""
    sv = spectrum(v, f0, fs, n_max=1)
    si = spectrum(i, f0, fs, n_max=1)
    return math.degrees(math.remainder(sv.phase[1] - si.phase[1],
                                       2.0 * math.pi))


def integer_cycle_window(record: WaveformRecord, t_from: float,
                         t_to: float | None = None,
                         f0: float = 50.0) -> tuple[int, int]:
    """Largest integer-cycle [i0, i1) window inside [t_from, t_to]."""
    per = int(round(1.0 / (f0 * record.dt)))
    i_hi = record.index_at(t_to) if t_to is not None else record.n
    i_lo = record.index_at(t_from)
    n_cyc = (i_hi - i_lo) // per
    if n_cyc < 1:
        raise ValueError("window shorter than one fundamental cycle")
    return i_hi - n_cyc * per, i_hi


# ---------------------------------------------------------------------------
# losses and efficiency


def switching_energy(record: WaveformRecord, i0: int, i1: int,
                     params: CircuitParams | None = None) -> float:
    """Estimated switching loss over [i0, i1): for every gate transition,
    0.5 * |V_block| * |I| * t_sw with the blocking voltage taken on the off
    side of the edge and the bridge current at the edge sample."""
    p = params or record.params
    masks = record.gates_mask()[i0:i1].astype(np.uint16)
    if len(masks) < 2:
        return 0.0
    flips = masks[1:] ^ masks[:-1]
    edge_rows = np.nonzero(flips)[0]
    if len(edge_rows) == 0:
        return 0.0
    blk_before = record.blocking(i0, i1 - 1)[edge_rows]
    blk_after = record.blocking(i0 + 1, i1)[edge_rows]
    il1 = np.abs(record.x[i0:i1, 3][edge_rows])
    e = 0.0
    for row, k in enumerate(edge_rows):
        word = int(flips[k])
        for bit in range(10):
            if word & (1 << bit):
                v_off = max(abs(blk_before[row, bit]), abs(blk_after[row, bit]))
                e += 0.5 * v_off * il1[row] * p.t_sw
    return e


def loss_breakdown(record: WaveformRecord, i0: int, i1: int,
                   params: CircuitParams | None = None) -> dict:
    en = record.energy_between(i0, i1)
    en["switching"] = switching_energy(record, i0, i1, params)
    return en


def efficiency(record: WaveformRecord, params: CircuitParams | None = None,
               window: tuple[int, int] | None = None) -> float:
    """Delivered over delivered-plus-losses on a steady window.

    Losses are conduction (every r_on / r_src / ESR branch), diode drop and
    the behavioural switching estimate; over an integer-cycle steady window
    this equals E_load / E_source.
    """
    i0, i1 = window if window is not None else (0, record.n)
    en = loss_breakdown(record, i0, i1, params)
    e_loss = en["cond"] + en["diode"] + en["switching"]
    if en["load"] <= 0.0:
        return float("nan")
    return en["load"] / (en["load"] + e_loss)


# ---------------------------------------------------------------------------
# capacitor sizing (design math)


@dataclass(frozen=True)
class SizingInputs:
    p_out: float     # peak output power, W
    v_dc: float      # capacitor voltage target, V
    m_index: float
    f_sw: float
    delta_v: float   # allowed peak-to-peak ripple, V

    def __post_init__(self):
        for name in ("p_out", "v_dc", "m_index", "f_sw", "delta_v"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"SizingInputs.{name} must be positive")
        if self.delta_v >= self.v_dc:
            raise ValueError("delta_v must be below v_dc")


@dataclass(frozen=True)
class SizingResult:
    i_out: float        # peak output current
    delta_q: float      # per-period charge fluctuation of the cell
    c_min: float        # minimum cell capacitance


def capacitor_sizing(s: SizingInputs) -> SizingResult:
    """Minimum cell capacitance C = P M / (V f ΔV), with the intermediate
    output current and charge-swing values."""
    i_out = s.p_out / s.v_dc
    t = 1.0 / s.f_sw
    delta_q = i_out * s.m_index * t
    c_min = s.p_out * s.m_index / (s.v_dc * s.f_sw * s.delta_v)
    return SizingResult(i_out=i_out, delta_q=delta_q, c_min=c_min)


def delta_v_per_period(record: WaveformRecord, i0: int, i1: int,
                       f_sw: float = 5000.0) -> dict:
    """Per-switching-period ripple: the discretised charge-balance
    prediction next to the measured vC1 excursion.

    Two prediction conventions are returned: ``predicted_half`` integrates
    half the output current per capacitor (the published formula as written)
    and ``predicted_full`` integrates the full series current, which is what
    the series connection physically imposes; the measured excursion tracks
    the full-current form.
    """
    dt = record.dt
    per = int(round(1.0 / (f_sw * dt)))
    n_per = (i1 - i0) // per
    if n_per < 1:
        raise ValueError("window shorter than one switching period")
    c = record.params.c1
    cfgs = record.cfg_ids[i0:i0 + n_per * per].reshape(n_per, per)
    il1 = record.x[i0:i0 + n_per * per, 3].reshape(n_per, per)
    i_d1 = record.i_d1(i0, i0 + n_per * per).reshape(n_per, per)
    vc1 = record.x[i0:i0 + n_per * per + 1, 0]
    series = (cfgs == int(SwitchingState.POS2)) | (cfgs == CFG_NEG2) \
        | (cfgs == CFG_NEG2_PUMP)
    q_ser = np.sum(np.abs(il1) * series, axis=1) * dt
    q_pump = np.sum(i_d1, axis=1) * dt
    predicted_full = (q_ser - 0.5 * q_pump) / c
    predicted_half = 0.5 * predicted_full
    measured = np.array([
        float(np.ptp(vc1[k * per:(k + 1) * per + 1])) for k in range(n_per)
    ])
    return {
        "predicted_full": predicted_full,
        "predicted_half": predicted_half,
        "measured": measured,
    }


# ---------------------------------------------------------------------------
# ripple / balance / stress summaries


def ripple_and_balance(record: WaveformRecord, i0: int, i1: int) -> dict:
    """Per-capacitor min/max/mean and worst cell imbalance on the window."""
    out = {}
    for name, col in (("vc1", 0), ("vc2", 1), ("vc3", 2)):
        v = record.x[i0:i1, col]
        out[name] = {"min": float(v.min()), "max": float(v.max()),
                     "mean": float(v.mean())}
    out["max_imbalance"] = float(
        np.max(np.abs(record.x[i0:i1, 0] - record.x[i0:i1, 1])))
    return out


def stress_summary(record: WaveformRecord, i0: int, i1: int) -> dict:
    """Blocking-voltage extrema per device, classified against the
    0.5 / 1.0 / 1.5 V_dc envelope-span groups (V_dc = 2 vin)."""
    blk = record.blocking(i0, i1)
    v_dc = 2.0 * record.params.vin
    devices = {}
    for idx, sw in enumerate(GATED_SWITCHES):
        vmin = float(blk[:, idx].min())
        vmax = float(blk[:, idx].max())
        span = vmax - vmin
        cls = STRESS_CLASS[sw]
        devices[sw.value] = {
            "min": vmin,
            "max": vmax,
            "span": span,
            "class_vdc": cls,
            "exceeds_class": span > 1.1 * cls * v_dc,
        }
    devices["D1"] = {
        "min": float(blk[:, 10].min()),
        "max": float(blk[:, 10].max()),
        "span": float(blk[:, 10].max() - blk[:, 10].min()),
        "class_vdc": None,
        "exceeds_class": False,
    }
    over_400 = sorted(sw for sw, d in devices.items()
                      if d["class_vdc"] is not None and d["span"] > v_dc)
    return {"devices": devices, "v_dc": v_dc, "span_over_vdc": over_400}
