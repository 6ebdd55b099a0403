"""Fixed-step switched-linear solver and the waveform record it produces.

Each switching state (plus the pump-conducting variant of NEG2 and an
all-off idle bridge) is discretised once into ``x+ = P x + G u`` companion
form; the jitted kernel then marches the active configuration per step,
resolving the charge-pump diode by assume-step-check iteration and snapping
PWM edges to the simulation grid.  Trapezoidal integration is the default
(energy-exact bookkeeping for the lightly damped filter); backward Euler is
kept as a stiff-debugging fallback whose numerical dissipation is charged to
the loss account so the energy audit still closes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernel
from .circuit import (
    ALL_STATES,
    GATE_MASKS,
    GATED_SWITCHES,
    N_INPUTS,
    N_STATES,
    Branch,
    CircuitParams,
    GridPort,
    LinearOde,
    ResistiveLoad,
    StateVector,
    SwitchId,
    SwitchingState,
    Terminal,
    BLOCKING_COEFS,
    assemble_state_ode,
    initial_state,
    state_derivative,
    stored_energy,
)
from .modulation import ModulationConfig, level_select

R_BRIDGE_OFF = 1e4  # open-bridge leakage model for the idle configuration

INTEGRATORS = ("trapezoidal", "backward-euler")


class ConfigurationError(RuntimeError):
    """Raised when the discretised system is singular (zero-resistance loop)."""


class DiodeConvergenceError(RuntimeError):
    """Raised when the pump-diode fixed point fails to settle in 8 passes."""


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt_sim: float = 1e-6
    dt_ctrl: float = 20e-6
    integrator: str = "trapezoidal"

    def __post_init__(self):
        if self.t_end <= 0 or self.dt_sim <= 0 or self.dt_ctrl <= 0:
            raise ValueError("all times must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        ratio = self.dt_ctrl / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_sim must divide dt_ctrl")

    @property
    def n_sub(self) -> int:
        return int(round(self.dt_ctrl / self.dt_sim))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt_sim))


def _integrator_code(name: str) -> int:
    return _kernel.TRAPEZOIDAL if name == "trapezoidal" else _kernel.BACKWARD_EULER


def discretize(a: np.ndarray, b: np.ndarray, dt: float, integrator: str):
    """Companion form of dx/dt = a x + b u for one step of size dt."""
    eye = np.eye(N_STATES)
    try:
        if integrator == "trapezoidal":
            m = eye - 0.5 * dt * a
            p = np.linalg.solve(m, eye + 0.5 * dt * a)
            g = np.linalg.solve(m, dt * b)
        else:
            m = eye - dt * a
            p = np.linalg.solve(m, eye)
            g = np.linalg.solve(m, dt * b)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(
            "singular implicit matrix; the active circuit has a "
            "zero-resistance loop or non-physical parameters"
        ) from exc
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise ConfigurationError("non-finite companion matrices")
    return p, g


def step(
    ode: LinearOde,
    x: StateVector | np.ndarray,
    dt: float,
    vin: float = 0.0,
    v_ext: float = 0.0,
    integrator: str = "trapezoidal",
):
    """One-step solution of the given linear ODE with inputs held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if integrator not in INTEGRATORS:
        raise ValueError(f"integrator must be one of {INTEGRATORS}")
    p, g = discretize(ode.a_matrix, ode.b_matrix, dt, integrator)
    as_vec = isinstance(x, StateVector)
    xa = x.as_array() if as_vec else np.asarray(x, dtype=float)
    xn = p @ xa + g @ np.array([vin, v_ext, 1.0])
    return StateVector.from_array(xn) if as_vec else xn


# ---------------------------------------------------------------------------
# configuration tables


def _cfg_derivative(cfg: int, x, u, params, terminal):
    """Derivative of configuration ``cfg``: states 0..5 with the pump idle,
    6 = NEG2 and 7 = ZERO_NEG with the pump conducting, 8 = idle bridge."""
    if cfg < 6:
        return state_derivative(SwitchingState(cfg), x, u, params, terminal, False)
    if cfg == _kernel.CFG_NEG2_PUMP:
        return state_derivative(SwitchingState.NEG2, x, u, params, terminal, True)
    if cfg == _kernel.CFG_ZERO_NEG_PUMP:
        return state_derivative(SwitchingState.ZERO_NEG, x, u, params, terminal,
                                True)
    # idle: capacitors isolated, bridge replaced by a weak leakage path
    p = params
    vc1, vc2, vc3, il1, il2, vcf = (float(v) for v in x)
    _, v_ext, _ = (float(v) for v in u)
    i_cf = il1 - il2
    va_filter = vcf + p.r_cf * i_cf
    v_phi = -R_BRIDGE_OFF * il1
    dil1 = (v_phi - va_filter - p.r_l * il1) / p.l1
    v_term = terminal.r_load * il2 if isinstance(terminal, ResistiveLoad) else v_ext
    dil2 = (va_filter - v_term - p.r_l * il2) / p.l2
    dxdt = np.array([0.0, 0.0, 0.0, dil1, dil2, i_cf / p.cf])
    branches = [
        Branch("bridge_off", "PHI", "N", R_BRIDGE_OFF, il1),
        Branch("l1_esr", "PHI", "A", p.r_l, il1),
        Branch("l2_esr", "A", "B", p.r_l, il2),
        Branch("cf_damp", "A", "N", p.r_cf, i_cf),
    ]
    return dxdt, v_phi, branches


_SRC_BRANCHES = ("src_charge", "pump_charge")


@dataclass
class ConfigTables:
    """Per-configuration companion matrices and linear measurement rows."""

    P: np.ndarray       # (8, 6, 6)
    G: np.ndarray       # (8, 6, 3)
    BC: np.ndarray      # (8, MAX_BRANCH, 9) branch-current rows over [x; u]
    BR: np.ndarray      # (8, MAX_BRANCH) branch resistances
    BVD: np.ndarray     # (8, MAX_BRANCH) branch series EMFs (diode drop)
    SRC: np.ndarray     # (8, 9) total source-current row
    PUMP: np.ndarray    # (8, 9) D1 branch current row
    NODE: np.ndarray    # (8, 9) bridge terminal voltage row
    qdiag: np.ndarray   # (6,) storage quadratic form diagonal
    dt: float
    integrator: str


def build_config_tables(
    params: CircuitParams,
    terminal: Terminal,
    dt: float,
    integrator: str = "trapezoidal",
) -> ConfigTables:
    nb = _kernel.MAX_BRANCH
    ncfg = _kernel.N_CFG
    nz = N_STATES + N_INPUTS
    tP = np.zeros((ncfg, N_STATES, N_STATES))
    tG = np.zeros((ncfg, N_STATES, N_INPUTS))
    tBC = np.zeros((ncfg, nb, nz))
    tBR = np.zeros((ncfg, nb))
    tBVD = np.zeros((ncfg, nb))
    tSRC = np.zeros((ncfg, nz))
    tPUMP = np.zeros((ncfg, nz))
    tNODE = np.zeros((ncfg, nz))

    for cfg in range(ncfg):
        a = np.zeros((N_STATES, N_STATES))
        b = np.zeros((N_STATES, N_INPUTS))
        ref_branches = None
        for j in range(nz):
            xb = np.zeros(N_STATES)
            ub = np.zeros(N_INPUTS)
            if j < N_STATES:
                xb[j] = 1.0
            else:
                ub[j - N_STATES] = 1.0
            dx, v_phi, branches = _cfg_derivative(cfg, xb, ub, params, terminal)
            if ref_branches is None:
                ref_branches = branches
            if j < N_STATES:
                a[:, j] = dx
            else:
                b[:, j - N_STATES] = dx
            tNODE[cfg, j] = v_phi
            for bi, br in enumerate(branches):
                tBC[cfg, bi, j] = br.current
                if br.name in _SRC_BRANCHES:
                    tSRC[cfg, j] += br.current
                if br.name == "pump_charge":
                    tPUMP[cfg, j] = br.current
        for bi, br in enumerate(ref_branches):
            tBR[cfg, bi] = br.r
            tBVD[cfg, bi] = br.v_drop
        tP[cfg], tG[cfg] = discretize(a, b, dt, integrator)

    return ConfigTables(
        P=tP, G=tG, BC=tBC, BR=tBR, BVD=tBVD, SRC=tSRC, PUMP=tPUMP,
        NODE=tNODE, qdiag=params.storage_diag(), dt=dt, integrator=integrator,
    )


# ---------------------------------------------------------------------------
# waveform record


_STATE_OF_CFG = np.array([0, 1, 2, 3, 4, 5, 5, -1], dtype=np.int8)
_MASK_OF_CFG = np.concatenate(
    [GATE_MASKS, [GATE_MASKS[int(SwitchingState.NEG2)], np.uint16(0)]]
).astype(np.uint16)
# quantised bridge voltage = coef * (vC1 + vC2)
_RAW_COEF_OF_CFG = np.array([0.5, 1.0, 0.0, 0.0, -0.5, -1.0, -1.0, 0.0])


@dataclass
class WaveformRecord:
    """Uniformly sampled simulation log.

    Row k holds the state vector at t = k dt and the configuration active on
    [k dt, (k+1) dt); derived quantities (gates, raw and node voltages,
    powers, blocking voltages) are reconstructed on demand from the logged
    states, which keeps the record compact and the reconstruction exact.
    """

    dt: float
    mode: str                      # "standalone" | "grid"
    params: CircuitParams
    integrator: str
    cfg_ids: np.ndarray            # (n,) int8
    x: np.ndarray                  # (n+1, 6)
    energy: np.ndarray             # [e_src, e_load, e_cond, e_diode]
    f_grid: float = 50.0
    amp_t: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    amp_v: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    rload_t: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    rload_v: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    meta: dict = field(default_factory=dict)

    _tables: ConfigTables | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.cfg_ids)

    @property
    def t_end(self) -> float:
        return self.n * self.dt

    def time(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    def index_at(self, t: float) -> int:
        return min(max(int(round(t / self.dt)), 0), self.n)

    # -- derived channels --------------------------------------------------

    def states(self) -> np.ndarray:
        return _STATE_OF_CFG[self.cfg_ids]

    def gates_mask(self) -> np.ndarray:
        return _MASK_OF_CFG[self.cfg_ids]

    def v_raw(self) -> np.ndarray:
        return _RAW_COEF_OF_CFG[self.cfg_ids] * (self.x[:-1, 0] + self.x[:-1, 1])

    def grid_amplitude(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.amp_t, self.amp_v)

    def v_grid(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        t = np.arange(i0, i1) * self.dt
        if self.mode != "grid":
            return np.zeros(i1 - i0)
        return self.grid_amplitude(t) * np.sin(2.0 * np.pi * self.f_grid * t)

    def r_load_at(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.rload_t, t, side="right") - 1
        return self.rload_v[np.clip(idx, 0, len(self.rload_v) - 1)]

    def v_out(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        """Filtered output voltage at the far terminal."""
        i1 = self.n if i1 is None else i1
        if self.mode == "grid":
            return self.v_grid(i0, i1)
        t = np.arange(i0, i1) * self.dt
        return self.r_load_at(t) * self.x[i0:i1, 4]

    def i_out(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        return self.x[i0:i1, 4]

    def _ensure_tables(self) -> ConfigTables:
        if self._tables is None:
            terminal = (GridPort() if self.mode == "grid"
                        else ResistiveLoad(float(self.rload_v[0])))
            self._tables = build_config_tables(
                self.params, terminal, self.dt, self.integrator)
        return self._tables

    def _z(self, i0: int, i1: int) -> np.ndarray:
        """[x; u] at sample points (inputs at the same instants)."""
        z = np.empty((i1 - i0, N_STATES + N_INPUTS))
        z[:, :N_STATES] = self.x[i0:i1]
        z[:, 6] = self.params.vin
        z[:, 7] = self.v_grid(i0, i1)
        z[:, 8] = 1.0
        return z

    def _row_channel(self, rows: np.ndarray, i0: int, i1: int) -> np.ndarray:
        z = self._z(i0, i1)
        cfgs = self.cfg_ids[i0:i1]
        out = np.zeros(i1 - i0)
        for cfg in np.unique(cfgs):
            m = cfgs == cfg
            out[m] = z[m] @ rows[cfg]
        return out

    def v_node(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        """Simulated pre-filter node voltage (includes conduction drops)."""
        i1 = self.n if i1 is None else i1
        return self._row_channel(self._ensure_tables().NODE, i0, i1)

    def i_src(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        return self._row_channel(self._ensure_tables().SRC, i0, i1)

    def i_d1(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        return self._row_channel(self._ensure_tables().PUMP, i0, i1)

    def p_src(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        return self.params.vin * self.i_src(i0, i1)

    def p_load(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.n if i1 is None else i1
        return self.v_out(i0, i1) * self.x[i0:i1, 4]

    def blocking(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        """(m, 11) signed blocking voltages, devices in GATED_SWITCHES + D1
        order, evaluated per sample."""
        i1 = self.n if i1 is None else i1
        cfgs = self.cfg_ids[i0:i1]
        states = _STATE_OF_CFG[cfgs]
        basis = np.empty((i1 - i0, 4))
        basis[:, 0] = self.params.vin
        basis[:, 1:] = self.x[i0:i1, 0:3]
        out = np.zeros((i1 - i0, 11))
        for s in np.unique(states):
            m = states == s
            if s < 0:
                continue  # idle: nothing defined as blocking
            out[m, :10] = basis[m] @ BLOCKING_COEFS[s].T
        # D1 reverse bias is visible only in NEG2 while the pump is off
        m = cfgs == _kernel.CFG_NEG2
        out[m, 10] = np.minimum(
            self.params.vin - self.x[i0:i1, 2][m] - self.params.v_d, 0.0)
        return out

    def blocking_envelopes(self, i0: int = 0, i1: int | None = None,
                           f0: float = 50.0) -> np.ndarray:
        """(n_cycles, 11, 2) per-device [min, max] per fundamental cycle."""
        i1 = self.n if i1 is None else i1
        per = int(round(1.0 / (f0 * self.dt)))
        n_cyc = (i1 - i0) // per
        env = np.empty((n_cyc, 11, 2))
        for c in range(n_cyc):
            blk = self.blocking(i0 + c * per, i0 + (c + 1) * per)
            env[c, :, 0] = blk.min(axis=0)
            env[c, :, 1] = blk.max(axis=0)
        return env

    def transition_counts(self, i0: int, i1: int) -> dict:
        """Gate transition count per switch over [i0, i1)."""
        masks = self.gates_mask()[i0:i1].astype(np.uint16)
        flips = masks[1:] ^ masks[:-1]
        return {
            sw: int(np.count_nonzero(flips & np.uint16(1 << bit)))
            for bit, sw in enumerate(GATED_SWITCHES)
        }

    # -- energy ------------------------------------------------------------

    def stored(self, k: int) -> float:
        return stored_energy(self.x[k], self.params)

    def energy_between(self, i0: int, i1: int) -> dict:
        """Windowed energy integrals recomputed from the log with the same
        evaluation rule the kernel used (midpoint for trapezoidal)."""
        tb = self._ensure_tables()
        dt = self.dt
        trap = self.integrator == "trapezoidal"
        x0 = self.x[i0:i1]
        x1 = self.x[i0 + 1:i1 + 1]
        xe = 0.5 * (x0 + x1) if trap else x1
        t = np.arange(i0, i1) * dt
        if self.mode == "grid":
            vg0 = self.v_grid(i0, i1)
            vg1 = self.grid_amplitude(t + dt) * np.sin(
                2.0 * np.pi * self.f_grid * (t + dt))
            vge = 0.5 * (vg0 + vg1) if trap else vg1
        else:
            vge = np.zeros(i1 - i0)
        z = np.empty((i1 - i0, N_STATES + N_INPUTS))
        z[:, :N_STATES] = xe
        z[:, 6] = self.params.vin
        z[:, 7] = vge
        z[:, 8] = 1.0
        cfgs = self.cfg_ids[i0:i1]
        e_src = e_cond = e_diode = 0.0
        for cfg in np.unique(cfgs):
            m = cfgs == cfg
            zc = z[m]
            e_src += dt * self.params.vin * float(np.sum(zc @ tb.SRC[cfg]))
            for b in range(_kernel.MAX_BRANCH):
                if tb.BR[cfg, b] == 0.0 and tb.BVD[cfg, b] == 0.0:
                    continue
                ib = zc @ tb.BC[cfg, b]
                e_cond += dt * tb.BR[cfg, b] * float(ib @ ib)
                e_diode += dt * tb.BVD[cfg, b] * float(np.sum(ib))
        il2e = z[:, 4]
        if self.mode == "grid":
            e_load = dt * float(vge @ il2e)
        else:
            e_load = dt * float(self.r_load_at(t) @ (il2e * il2e))
        if not trap:
            d = x1 - x0
            e_cond += 0.5 * float(np.sum((d * d) @ tb.qdiag))
        return {
            "src": e_src,
            "load": e_load,
            "cond": e_cond,
            "diode": e_diode,
            "stored_delta": self.stored(i1) - self.stored(i0),
        }


def energy_audit(record: WaveformRecord, params: CircuitParams | None = None):
    """Relative closure error of the full-run energy balance, or None when no
    source energy flowed (not-applicable)."""
    if record.n == 0:
        return None
    e_src, e_load, e_cond, e_diode = record.energy
    if abs(e_src) < 1e-12:
        return None
    p = params or record.params
    d_stored = (stored_energy(record.x[record.n], p)
                - stored_energy(record.x[0], p))
    return abs(e_src - e_load - e_cond - e_diode - d_stored) / abs(e_src)


# ---------------------------------------------------------------------------
# open-loop simulation


@dataclass(frozen=True)
class OpenLoopPwm:
    """Open-loop reference drive: r(t) evaluated at the control rate and
    carrier-compared inside the kernel."""

    reference: Callable[[float], float]
    mod: ModulationConfig


Schedule = SwitchingState | Sequence | OpenLoopPwm


def _materialize_states(schedule, n: int, dt: float) -> np.ndarray:
    ids = np.empty(n, dtype=np.int8)
    if isinstance(schedule, SwitchingState):
        ids[:] = int(schedule)
        return ids
    pairs = sorted(schedule, key=lambda p: p[0])
    if not pairs or pairs[0][0] > 0.0:
        raise ValueError("schedule must cover t = 0")
    times = np.array([p[0] for p in pairs])
    vals = np.array(
        [int(p[1]) if p[1] is not None else _kernel.CFG_IDLE for p in pairs],
        dtype=np.int8,
    )
    t = np.arange(n) * dt
    ids[:] = vals[np.clip(np.searchsorted(times, t, side="right") - 1, 0, None)]
    return ids


class BlockRunner:
    """Shared stepping driver: owns the log arrays and advances the kernel
    one control block (or arbitrary span) at a time."""

    def __init__(self, params: CircuitParams, terminal: Terminal,
                 cfg: SimConfig, x0: np.ndarray | None = None,
                 f_grid: float = 50.0):
        self.params = params
        self.terminal = terminal
        self.cfg = cfg
        self.tables = build_config_tables(params, terminal, cfg.dt_sim,
                                          cfg.integrator)
        self.grid_mode = isinstance(terminal, GridPort)
        self.f_grid = f_grid
        n = cfg.n_steps
        self.x = (x0.copy() if x0 is not None
                  else initial_state(params).as_array())
        self.x_log = np.empty((n + 1, N_STATES))
        self.x_log[0] = self.x
        self.cfg_log = np.empty(n, dtype=np.int8)
        self.acc = np.zeros(4)
        self.k = 0
        # grid amplitude profile (piecewise linear breakpoints)
        self.amp_t = [0.0]
        self.amp_v = [0.0]
        # load profile (step breakpoints)
        self.rload_t = [0.0]
        self.rload_v = [terminal.r_load if isinstance(terminal, ResistiveLoad)
                        else 0.0]

    def set_load(self, r_load: float, t: float):
        """Swap the standalone load; rebuilds the companion matrices."""
        self.terminal = ResistiveLoad(r_load)
        self.tables = build_config_tables(self.params, self.terminal,
                                          self.cfg.dt_sim, self.cfg.integrator)
        self.rload_t.append(t)
        self.rload_v.append(r_load)

    def grid_amp_segment(self, amp0: float, slope: float, t_ref: float):
        self._amp0, self._slope, self._t_ref = amp0, slope, t_ref

    def run(self, n_steps: int, *, duty: float = 0.0,
            lo: int = 0, hi: int = 0, f_sw: float = 5000.0,
            states: np.ndarray | None = None,
            amp0: float = 0.0, amp_slope: float = 0.0, t_amp_ref: float = 0.0):
        p = self.params
        mode_pwm = states is None
        dummy = np.zeros(1, dtype=np.int8)
        status, k_end = _kernel.run_block(
            self.x, self.k, n_steps, self.cfg.dt_sim,
            _integrator_code(self.cfg.integrator),
            mode_pwm, states if states is not None else dummy,
            float(duty), int(lo), int(hi), float(f_sw),
            p.vin, p.v_d,
            self.grid_mode, float(amp0), float(amp_slope), float(t_amp_ref),
            2.0 * np.pi * self.f_grid,
            float(self.rload_v[-1]),
            self.tables.P, self.tables.G, self.tables.BC, self.tables.BR,
            self.tables.BVD, self.tables.SRC, self.tables.PUMP,
            self.tables.qdiag,
            self.cfg_log, self.x_log, self.acc,
        )
        if status == _kernel.STATUS_DIODE_STUCK:
            raise DiodeConvergenceError(
                f"pump diode state did not settle at step {k_end} "
                f"(t = {k_end * self.cfg.dt_sim:.6e} s)")
        self.k += n_steps

    def finish(self, mode: str, meta: dict | None = None) -> WaveformRecord:
        return WaveformRecord(
            dt=self.cfg.dt_sim,
            mode=mode,
            params=self.params,
            integrator=self.cfg.integrator,
            cfg_ids=self.cfg_log,
            x=self.x_log,
            energy=self.acc.copy(),
            f_grid=self.f_grid,
            amp_t=np.asarray(self.amp_t),
            amp_v=np.asarray(self.amp_v),
            rload_t=np.asarray(self.rload_t),
            rload_v=np.asarray(self.rload_v),
            meta=meta or {},
        )


def simulate(
    schedule: Schedule,
    params: CircuitParams,
    cfg: SimConfig,
    external: Terminal,
    x0: StateVector | np.ndarray | None = None,
    grid_amp: float = 0.0,
    f_grid: float = 50.0,
) -> WaveformRecord:
    """Open-loop run of a gate timeline (fixed states or PWM reference)."""
    n = cfg.n_steps
    x0a = x0.as_array() if isinstance(x0, StateVector) else x0
    runner = BlockRunner(params, external, cfg, x0a, f_grid)
    if isinstance(external, GridPort):
        runner.amp_t = [0.0]
        runner.amp_v = [grid_amp]

    if isinstance(schedule, OpenLoopPwm):
        n_sub = cfg.n_sub
        if n % n_sub:
            raise ValueError("t_end must be a whole number of control periods")
        for blk in range(n // n_sub):
            t = blk * cfg.dt_ctrl
            lo, hi, duty, _ = level_select(schedule.reference(t))
            runner.run(n_sub, duty=duty, lo=int(lo), hi=int(hi),
                       f_sw=schedule.mod.f_sw, amp0=grid_amp)
    else:
        ids = _materialize_states(schedule, n, cfg.dt_sim)
        runner.run(n, states=ids, amp0=grid_amp)

    mode = "grid" if isinstance(external, GridPort) else "standalone"
    return runner.finish(mode)
