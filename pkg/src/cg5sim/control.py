"""Controllers: standalone PI voltage loop and grid-connected dq current loop.

The grid loop is the classic single-phase chain: a SOGI orthogonal-signal
generator fabricates the quadrature companion of each measured signal, Park
rotation moves fundamental quantities to DC, an SRF-PLL supplies the rotation
angle, and two PI controllers with grid-voltage feedforward and omega*L
cross-coupling terms produce the voltage command.  The standalone loop
compares a half-cycle RMS of the load voltage against the setpoint and trims
the modulation index.

Gain defaults are documented artifact choices (none are published): current
loop placed near 500 Hz, PLL near 20 Hz, standalone kp = 0.005/V and
ki = 0.5/(V s) on the RMS error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class PiState:
    """PI controller with conditional-integration anti-windup."""

    kp: float
    ki: float
    integ: float = 0.0
    u_min: float = -math.inf
    u_max: float = math.inf


def pi_step(s: PiState, err: float, dt: float) -> tuple[float, PiState]:
    """One PI update: u = clamp(kp*err + integ'); the integrator freezes when
    the pre-clamp output already exceeds the active limit in the direction of
    the error."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    integ = s.integ + s.ki * err * dt
    u_raw = s.kp * err + integ
    if (u_raw > s.u_max and err > 0.0) or (u_raw < s.u_min and err < 0.0):
        integ = s.integ
        u_raw = s.kp * err + integ
    u = min(max(u_raw, s.u_min), s.u_max)
    return u, replace(s, integ=integ)


@dataclass(frozen=True)
class DqFrame:
    d: float
    q: float


def park(alpha: float, beta: float, theta: float) -> DqFrame:
    c, s = math.cos(theta), math.sin(theta)
    return DqFrame(d=alpha * c + beta * s, q=-alpha * s + beta * c)


def inverse_park(dq: DqFrame, theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    return dq.d * c - dq.q * s, dq.d * s + dq.q * c


SOGI_GAIN = math.sqrt(2.0)


@dataclass
class Sogi:
    """Second-order generalised integrator (orthogonal signal generator).

    In sinusoidal steady state at the supplied frequency, ``alpha`` tracks
    the input with unity gain and ``beta`` lags it by 90 degrees with equal
    amplitude.  Integrated trapezoidally; the input is held over the step.
    """

    k: float = SOGI_GAIN
    alpha: float = 0.0
    beta: float = 0.0

    def step(self, v: float, omega: float, dt: float) -> tuple[float, float]:
        if omega <= 0.0:
            raise ValueError("omega must be positive")
        # d alpha/dt = k w (v - alpha) - w beta ; d beta/dt = w alpha
        h2 = 0.5 * dt
        kw, w = self.k * omega, omega
        fa = kw * (v - self.alpha) - w * self.beta
        fb = w * self.alpha
        # trapezoidal: (I - h/2 J) z+ = z + h/2 f(z) + h/2 [kw v, 0]
        a11 = 1.0 + h2 * kw
        a12 = h2 * w
        a21 = -h2 * w
        a22 = 1.0
        r1 = self.alpha + h2 * fa + h2 * kw * v
        r2 = self.beta + h2 * fb
        det = a11 * a22 - a12 * a21
        self.alpha = (r1 * a22 - a12 * r2) / det
        self.beta = (a11 * r2 - r1 * a21) / det
        return self.alpha, self.beta


def osg_step(sogi: Sogi, v: float, omega: float, dt: float) -> tuple[float, float]:
    """Functional wrapper over :meth:`Sogi.step`."""
    return sogi.step(v, omega, dt)


@dataclass
class Pll:
    """SRF-PLL: drives the q component of the rotated grid voltage to zero.

    The q error is normalised by the instantaneous amplitude so the loop
    bandwidth does not collapse during voltage sags.  Defaults place the
    loop near 20 Hz with 0.7 damping.
    """

    f_nom: float = 50.0
    kp: float = 178.0      # 2 * zeta * wn, wn = 2*pi*20
    ki: float = 15791.0    # wn^2
    theta: float = -math.pi / 2.0   # locked angle for a sin() grid at t = 0
    omega: float = field(default=2.0 * math.pi * 50.0)
    integ: float = 0.0

    def step(self, alpha: float, beta: float, dt: float) -> tuple[float, float]:
        amp = math.hypot(alpha, beta)
        c, s = math.cos(self.theta), math.sin(self.theta)
        q = -alpha * s + beta * c
        qn = q / max(amp, 1e-6)
        self.integ += self.ki * qn * dt
        w_nom = 2.0 * math.pi * self.f_nom
        self.omega = w_nom + self.kp * qn + self.integ
        self.theta = (self.theta + self.omega * dt) % (2.0 * math.pi)
        return self.theta, self.omega


def pll_step(pll: Pll, alpha: float, beta: float, dt: float) -> tuple[float, float, Pll]:
    theta, omega = pll.step(alpha, beta, dt)
    return theta, omega, pll


def grid_current_loop(
    i_meas: DqFrame,
    i_ref: DqFrame,
    v_grid: DqFrame,
    omega: float,
    l_total: float,
    s_d: PiState,
    s_q: PiState,
    dt: float,
) -> tuple[DqFrame, PiState, PiState]:
    """dq current regulators with decoupling and grid feedforward:

       v_d = PI_d(i_ref_d - i_d) - omega*L*i_q + v_grid_d
       v_q = PI_q(i_ref_q - i_q) + omega*L*i_d + v_grid_q
    """
    u_d, s_d = pi_step(s_d, i_ref.d - i_meas.d, dt)
    u_q, s_q = pi_step(s_q, i_ref.q - i_meas.q, dt)
    v_d = u_d - omega * l_total * i_meas.q + v_grid.d
    v_q = u_q + omega * l_total * i_meas.d + v_grid.q
    return DqFrame(v_d, v_q), s_d, s_q


@dataclass(frozen=True)
class ControlConfig:
    """Controller gains and rails (artifact defaults, overridable)."""

    # current loop: pole placement for ~500 Hz with l_total = 20 mH
    cc_kp: float = 2.0 * math.pi * 500.0 * 20e-3
    cc_ki: float = 2.0 * math.pi * 500.0 * 20e-3 * 300.0
    cc_clamp: float = 450.0      # per-axis PI rail, volts
    # PLL
    pll_kp: float = 178.0
    pll_ki: float = 15791.0
    # standalone RMS loop
    sv_kp: float = 0.005
    sv_ki: float = 0.5
    m_min: float = 0.02
    m_max: float = 1.0
    # trip rules (reported, never acted on: the model has no breaker)
    trip_i_factor: float = 2.0      # overcurrent: |i| > factor * |i_ref| peak
    trip_f_dev: float = 5.0         # PLL unlock: |f - f0| above this, Hz
    trip_hold: float = 1e-3         # violation must persist this long, s


class GridCurrentController:
    """Sampled grid-injection controller producing the normalised reference.

    Per control step: SOGI both measurements, lock the PLL on the voltage,
    rotate, run the dq PIs, rotate back, scale by the synthesisable peak
    (2*vin).  Also keeps the trip bookkeeping used by ride-through reports.
    """

    def __init__(self, params_vin: float, l_total: float,
                 cfg: ControlConfig | None = None, f0: float = 50.0):
        self.cfg = cfg or ControlConfig()
        self.vin = params_vin
        self.l_total = l_total
        self.f0 = f0
        c = self.cfg
        self.sogi_v = Sogi()
        self.sogi_i = Sogi()
        self.pll = Pll(f_nom=f0, kp=c.pll_kp, ki=c.pll_ki)
        self.pi_d = PiState(c.cc_kp, c.cc_ki, u_min=-c.cc_clamp, u_max=c.cc_clamp)
        self.pi_q = PiState(c.cc_kp, c.cc_ki, u_min=-c.cc_clamp, u_max=c.cc_clamp)
        self.i_ref = DqFrame(0.0, 0.0)
        self.saturated = False
        self.tripped = False
        self._viol_i = 0.0
        self._viol_f = 0.0

    def set_reference(self, i_d: float, i_q: float):
        self.i_ref = DqFrame(i_d, i_q)

    def step(self, v_grid_meas: float, i_meas: float, dt: float) -> float:
        av, bv = self.sogi_v.step(v_grid_meas, self.pll.omega, dt)
        theta, omega = self.pll.step(av, bv, dt)
        ai, bi = self.sogi_i.step(i_meas, omega, dt)
        v_dq = park(av, bv, theta)
        i_dq = park(ai, bi, theta)
        v_cmd, self.pi_d, self.pi_q = grid_current_loop(
            i_dq, self.i_ref, v_dq, omega, self.l_total, self.pi_d, self.pi_q, dt)
        alpha_cmd, _ = inverse_park(v_cmd, theta)
        r = alpha_cmd / self.vin          # == 2 * alpha_cmd / (2*vin)
        if abs(r) > 2.0:
            self.saturated = True
            r = max(-2.0, min(2.0, r))
        self._trip_watch(i_meas, omega, dt)
        return r

    def _trip_watch(self, i_meas: float, omega: float, dt: float):
        c = self.cfg
        i_pk = math.hypot(self.i_ref.d, self.i_ref.q)
        over_i = i_pk > 0.0 and abs(i_meas) > c.trip_i_factor * i_pk
        self._viol_i = self._viol_i + dt if over_i else 0.0
        f_err = abs(omega / (2.0 * math.pi) - self.f0)
        self._viol_f = self._viol_f + dt if f_err > c.trip_f_dev else 0.0
        if self._viol_i >= c.trip_hold or self._viol_f >= 100.0 * c.trip_hold:
            self.tripped = True


class StandaloneVoltageController:
    """RMS voltage regulator for off-grid operation.

    The measured load voltage is squared and averaged over each half
    fundamental cycle; at every half-cycle boundary the RMS error updates a
    PI whose output is the modulation index.  An internal oscillator supplies
    the reference angle.
    """

    def __init__(self, v_ref_rms: float, params_vin: float,
                 cfg: ControlConfig | None = None, f0: float = 50.0):
        self.cfg = cfg or ControlConfig()
        self.v_ref = v_ref_rms
        self.f0 = f0
        c = self.cfg
        m0 = min(c.m_max, v_ref_rms * math.sqrt(2.0) / (2.0 * params_vin))
        # integrator preloaded with the feedforward index: zero initial error
        # keeps m at the analytic operating point
        self.pi = PiState(c.sv_kp, c.sv_ki, integ=m0, u_min=c.m_min, u_max=c.m_max)
        self.m_index = m0
        self._acc = 0.0
        self._n = 0
        self._next_boundary = 0.5 / f0
        self.rms = v_ref_rms

    def step(self, t: float, v_meas: float, dt: float) -> float:
        """Returns the normalised reference r for the coming control period."""
        self._acc += v_meas * v_meas
        self._n += 1
        if t + 0.5 * dt >= self._next_boundary:
            self.rms = math.sqrt(self._acc / max(self._n, 1))
            self._acc = 0.0
            self._n = 0
            err = self.v_ref - self.rms
            self.m_index, self.pi = pi_step(self.pi, err, 0.5 / self.f0)
            self._next_boundary += 0.5 / self.f0
        theta = 2.0 * math.pi * self.f0 * t
        return 2.0 * self.m_index * math.sin(theta)


def standalone_voltage_loop(v_meas: float, v_ref_rms: float, s: PiState,
                            dt: float) -> tuple[float, PiState]:
    """Single PI update of the RMS loop (already-measured RMS as input)."""
    if v_ref_rms <= 0.0:
        raise ValueError("v_ref_rms must be positive")
    return pi_step(s, v_ref_rms - v_meas, dt)
