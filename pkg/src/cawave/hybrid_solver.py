r"""Coupled cytosol/ER calcium dynamics on a 1D radial cross-section.

Three fields evolve: cytosolic calcium u and free buffer b on [L, R], and ER
calcium u_e on [0, L], each obeying

    w_t = D (w_rr + w_r / r) + reaction,

with Neumann data tying the domains together at r = L (flux through the ER
membrane, gated by the channel open probability P) and feeding u at r = R
(plasma-membrane fluxes plus an optional stimulus pulse).  The weak form uses
unweighted inner products; the 1/r term becomes the convection matrix of
fem_core, with Hadamard finite-part entries on the ER mesh where it touches
the origin.

Time stepping is a first-order IMEX splitting.  Per step:

  (i)   advance the gating model with the newest interface concentration
        (Markov backward-Euler step, surrogate explicit step, or P = 0);
  (ii)  solve for u implicitly, with b, u_e and P lagged: the reaction is
        linear in the new u and goes into the matrix, the Hill-type boundary
        terms (PMCA/NCX at R, SERCA at L) are resolved by a fixed-point
        iteration whose passes linearize the boundary terms into the
        diagonal (tolerance 1e-10, at most 50 passes);
  (iii) solve for b implicitly against the old u (single linear solve);
  (iv)  solve for u_e implicitly against the old u at L, same fixed-point
        treatment of the SERCA term.

Each pass assembles (M/dt + D K - D A) plus boundary contributions and does
one tridiagonal solve.  Nodal values in [-1e-8, 0) are clamped to zero before
flux evaluation; anything below -1e-8 aborts the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem_core, ryr_markov, surrogate_net
from .channel_flux import BufferParams, ErParams, PlasmaParams
from .errors import ConfigError, SolverDivergenceError, StateInvariantError
from .fem_core import BandedMatrix, Mesh1D, build_mesh, solve_tridiagonal
from .ryr_markov import MarkovRates, MarkovState

UNDERSHOOT_TOL = 1e-8
BOUNDARY_ITER_TOL = 1e-10
BOUNDARY_ITER_MAX = 50


@dataclass
class StimulusSpec:
    """Polynomial influx pulse at the outer membrane, active on 0 <= t <= 1."""

    amplitude: float = 1200.0

    def value(self, t: float) -> float:
        if 0.0 <= t <= 1.0:
            return self.amplitude * t * t * (1.0 - t) ** 2
        return 0.0


@dataclass
class SimConfig:
    """Geometry, physics, discretization and channel selection for one run."""

    er_radius: float = 1.5
    cell_radius: float = math.pi
    er_elements: int = 40
    cyto_elements: int = 40
    d_calcium: float = 220.0
    d_buffer: float = 20.0
    plasma: PlasmaParams = field(default_factory=PlasmaParams)
    er: ErParams = field(default_factory=ErParams)
    buffer: BufferParams = field(default_factory=BufferParams)
    rates: MarkovRates = field(default_factory=MarkovRates)
    u_init: float = 0.05
    b_init: float = 37.0
    ue_init: float = 250.0
    stimulus: StimulusSpec = field(default_factory=StimulusSpec)
    dt: float = 0.01
    t_end: float = 4.0
    channel: str = "markov"  # markov | surrogate | zero
    plasma_enabled: bool = True  # False seals the outer membrane: no leak,
    # pumps, or stimulus (conservation studies)
    initial_markov_state: MarkovState = ryr_markov.RESTING_STATE
    network: surrogate_net.NetworkParams | None = None
    weights_path: str | None = None
    initial_probability: float | None = None  # surrogate start; defaults to the
    # open probability of initial_markov_state
    observer_stride: int = 1
    snapshot_stride: int = 0  # 0 disables field snapshots

    def validate(self) -> None:
        if not 0.0 < self.er_radius < self.cell_radius:
            raise ConfigError(f"need 0 < er_radius < cell_radius, got {self.er_radius}, {self.cell_radius}")
        if self.er_elements < 1 or self.cyto_elements < 1:
            raise ConfigError("element counts must be positive")
        if self.d_calcium <= 0 or self.d_buffer <= 0:
            raise ConfigError("diffusivities must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigError("dt and t_end must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end shorter than one step")
        if self.channel not in ("markov", "surrogate", "zero"):
            raise ConfigError(f"unknown channel model: {self.channel!r}")
        if self.u_init < 0 or self.ue_init <= 0 or not 0 <= self.b_init <= self.buffer.total:
            raise ConfigError("initial concentrations out of range")
        if self.observer_stride < 1:
            raise ConfigError("observer_stride must be >= 1")
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot_stride must be >= 0")


class ZeroChannel:
    """Channel held shut: P identically zero."""

    probability = 0.0

    def update(self, u_interface: float, dt: float) -> float:
        return 0.0

    def copy(self) -> "ZeroChannel":
        return ZeroChannel()


@dataclass
class MarkovChannel:
    """Gating by the Markov master equation, advanced with backward Euler."""

    rates: MarkovRates
    state: MarkovState

    @property
    def probability(self) -> float:
        return ryr_markov.open_probability(self.state)

    def update(self, u_interface: float, dt: float) -> float:
        self.state = ryr_markov.step_backward_euler(self.state, u_interface, dt, self.rates)
        return self.probability

    def copy(self) -> "MarkovChannel":
        return MarkovChannel(self.rates, self.state)


@dataclass
class SurrogateChannel:
    """Gating by the trained network; remembers the previous interface u."""

    params: surrogate_net.NetworkParams
    probability: float = 0.0
    u_prev: float | None = None

    def update(self, u_interface: float, dt: float) -> float:
        dudt = 0.0 if self.u_prev is None else (u_interface - self.u_prev) / dt
        self.probability = surrogate_net.predict_next_probability(
            self.params, self.probability, u_interface, dudt, dt
        )
        self.u_prev = u_interface
        return self.probability

    def copy(self) -> "SurrogateChannel":
        return SurrogateChannel(self.params, self.probability, self.u_prev)


def select_channel_model(
    kind: str,
    rates: MarkovRates | None = None,
    initial_state: MarkovState | None = None,
    params: surrogate_net.NetworkParams | None = None,
    weights_path: str | None = None,
    initial_probability: float = 0.0,
):
    """Build a gating handle: 'markov', 'surrogate', or 'zero'."""
    if kind == "zero":
        return ZeroChannel()
    if kind == "markov":
        return MarkovChannel(rates or MarkovRates(), initial_state or ryr_markov.RESTING_STATE)
    if kind == "surrogate":
        if params is None:
            if weights_path is None:
                raise ConfigError("surrogate channel needs network params or a weight file")
            params = surrogate_net.load_weights(weights_path)
        if not 0.0 <= initial_probability <= 1.0:
            raise ConfigError(f"initial probability outside [0, 1]: {initial_probability}")
        return SurrogateChannel(params, initial_probability)
    raise ConfigError(f"unknown channel model: {kind!r}")


@dataclass
class SimState:
    """Solution snapshot: fields, time, and the gating handle."""

    t: float
    u: np.ndarray  # cytosolic calcium on the [L, R] mesh
    b: np.ndarray  # free buffer on the [L, R] mesh
    ue: np.ndarray  # ER calcium on the [0, L] mesh
    channel: object
    cyto_mesh: Mesh1D
    er_mesh: Mesh1D

    @property
    def probability(self) -> float:
        return self.channel.probability


@dataclass
class _System:
    """Assembled matrices and static LHS bands, fixed for a given config."""

    cyto: Mesh1D
    er: Mesh1D
    mass_c: BandedMatrix
    mass_e: BandedMatrix
    u_bands: tuple
    b_bands: tuple
    e_bands: tuple


def build_system(cfg: SimConfig) -> _System:
    cfg.validate()
    cyto = build_mesh(cfg.er_radius, cfg.cell_radius, cfg.cyto_elements)
    er = build_mesh(0.0, cfg.er_radius, cfg.er_elements)
    mass_c = fem_core.assemble_mass(cyto)
    stiff_c = fem_core.assemble_stiffness(cyto)
    conv_c = fem_core.assemble_convection(cyto)
    mass_e = fem_core.assemble_mass(er)
    stiff_e = fem_core.assemble_stiffness(er)
    conv_e = fem_core.assemble_convection(er)

    def lhs_bands(mass, stiff, conv, diff):
        return (
            mass.lower / cfg.dt + diff * (stiff.lower - conv.lower),
            mass.diag / cfg.dt + diff * (stiff.diag - conv.diag),
            mass.upper / cfg.dt + diff * (stiff.upper - conv.upper),
        )

    return _System(
        cyto,
        er,
        mass_c,
        mass_e,
        lhs_bands(mass_c, stiff_c, conv_c, cfg.d_calcium),
        lhs_bands(mass_c, stiff_c, conv_c, cfg.d_buffer),
        lhs_bands(mass_e, stiff_e, conv_e, cfg.d_calcium),
    )


def make_initial_state(cfg: SimConfig, system: _System | None = None) -> SimState:
    cfg.validate()
    sys_ = system if system is not None else build_system(cfg)
    if cfg.channel == "surrogate":
        p0 = cfg.initial_probability
        if p0 is None:
            p0 = ryr_markov.open_probability(cfg.initial_markov_state)
        channel = select_channel_model(
            "surrogate",
            params=cfg.network,
            weights_path=cfg.weights_path,
            initial_probability=p0,
        )
    else:
        channel = select_channel_model(
            cfg.channel, rates=cfg.rates, initial_state=cfg.initial_markov_state
        )
    return SimState(
        0.0,
        np.full(sys_.cyto.num_nodes, cfg.u_init),
        np.full(sys_.cyto.num_nodes, cfg.b_init),
        np.full(sys_.er.num_nodes, cfg.ue_init),
        channel,
        sys_.cyto,
        sys_.er,
    )


def _clamped(arr: np.ndarray, name: str) -> np.ndarray:
    low = float(arr.min())
    if low < -UNDERSHOOT_TOL:
        raise StateInvariantError(f"{name} undershot to {low}")
    return np.maximum(arr, 0.0) if low < 0.0 else arr


def _check_field(arr: np.ndarray, name: str, lo: float, hi: float) -> None:
    if not np.all(np.isfinite(arr)):
        raise StateInvariantError(f"{name} became non-finite")
    if arr.min() < lo or arr.max() > hi:
        raise StateInvariantError(
            f"{name} left [{lo}, {hi}]: range [{arr.min()}, {arr.max()}]"
        )


def step_imex(state: SimState, cfg: SimConfig, system: _System | None = None) -> SimState:
    """Advance one IMEX step; returns a fresh SimState, inputs untouched."""
    sys_ = system if system is not None else build_system(cfg)
    dt = cfg.dt
    pl, er_p, bf = cfg.plasma, cfg.er, cfg.buffer
    t_next = state.t + dt

    u_old = _clamped(state.u, "cytosolic calcium")
    b_old = _clamped(state.b, "free buffer")
    ue_old = _clamped(state.ue, "ER calcium")
    u_l = float(u_old[0])
    ue_l = float(ue_old[-1])
    if ue_l <= 1e-12:
        raise StateInvariantError(f"ER interface concentration collapsed: {ue_l}")

    # (i) gating update with the newest interface concentration
    channel = state.channel.copy()
    p_open = channel.update(u_l, dt)
    gate = er_p.ryr_scale * p_open + er_p.leak  # linear interface conductance

    mass_c = sys_.mass_c
    # (ii) cytosolic calcium: reaction linear in new u, Hill terms iterated
    react = bf.bind_rate * b_old
    low = sys_.u_bands[0] + mass_c.lower * react[:-1]
    diag = sys_.u_bands[1] + mass_c.diag * react
    up = sys_.u_bands[2] + mass_c.upper * react[1:]
    diag[0] += gate
    if cfg.plasma_enabled:
        diag[-1] += pl.leak
    rhs = mass_c.matvec(state.u / dt + bf.unbind_rate * (bf.total - b_old))
    rhs[0] += gate * ue_l
    if cfg.plasma_enabled:
        rhs[-1] += pl.leak * pl.c_out + cfg.stimulus.value(t_next)

    kp2 = pl.pmca_k * pl.pmca_k
    u_new = state.u
    u_iter = state.u
    for it in range(BOUNDARY_ITER_MAX + 1):
        ur = float(u_iter[-1])
        ul = float(u_iter[0])
        if cfg.plasma_enabled:
            hill = pl.pmca_scale * ur * ur / (kp2 + ur * ur) + pl.ncx_scale * ur / (pl.ncx_k + ur)
            hill_d = (
                2.0 * pl.pmca_scale * kp2 * ur / (kp2 + ur * ur) ** 2
                + pl.ncx_scale * pl.ncx_k / (pl.ncx_k + ur) ** 2
            )
        else:
            hill = hill_d = 0.0
        serca = er_p.serca_scale * ul / ((er_p.serca_k + ul) * ue_l)
        serca_d = er_p.serca_scale * er_p.serca_k / ((er_p.serca_k + ul) ** 2 * ue_l)
        d_it = diag.copy()
        d_it[-1] += hill_d
        d_it[0] += serca_d
        r_it = rhs.copy()
        r_it[-1] += -hill + hill_d * ur
        r_it[0] += -serca + serca_d * ul
        u_new = solve_tridiagonal(low, d_it, up, r_it)
        delta = float(np.max(np.abs(u_new - u_iter)))
        u_iter = u_new
        if delta <= BOUNDARY_ITER_TOL:
            break
    else:
        raise SolverDivergenceError(
            f"outer-boundary iteration did not converge at t = {t_next}"
        )

    # (iii) free buffer: fully linear in the new b
    decay = bf.unbind_rate + bf.bind_rate * u_old
    low_b = sys_.b_bands[0] + mass_c.lower * decay[:-1]
    diag_b = sys_.b_bands[1] + mass_c.diag * decay
    up_b = sys_.b_bands[2] + mass_c.upper * decay[1:]
    rhs_b = mass_c.matvec(state.b / dt + bf.unbind_rate * bf.total)
    b_new = solve_tridiagonal(low_b, diag_b, up_b, rhs_b)

    # (iv) ER calcium against the old interface u
    diag_e = sys_.e_bands[1].copy()
    diag_e[-1] += gate
    rhs_e = sys_.mass_e.matvec(state.ue / dt)
    rhs_e[-1] += gate * u_l
    serca_num = er_p.serca_scale * u_l / (er_p.serca_k + u_l)
    ue_new = state.ue
    ue_iter = state.ue
    for it in range(BOUNDARY_ITER_MAX + 1):
        uel = float(ue_iter[-1])
        if uel <= 1e-12:
            raise StateInvariantError(f"ER interface concentration collapsed: {uel}")
        d_it = diag_e.copy()
        d_it[-1] += serca_num / (uel * uel)
        r_it = rhs_e.copy()
        r_it[-1] += 2.0 * serca_num / uel
        ue_new = solve_tridiagonal(sys_.e_bands[0], d_it, sys_.e_bands[2], r_it)
        delta = float(np.max(np.abs(ue_new - ue_iter)))
        ue_iter = ue_new
        if delta <= BOUNDARY_ITER_TOL:
            break
    else:
        raise SolverDivergenceError(
            f"ER-boundary iteration did not converge at t = {t_next}"
        )

    big = 1e9
    _check_field(u_new, "cytosolic calcium", -UNDERSHOOT_TOL, big)
    _check_field(b_new, "free buffer", -UNDERSHOOT_TOL, bf.total + UNDERSHOOT_TOL)
    _check_field(ue_new, "ER calcium", -UNDERSHOOT_TOL, big)

    return SimState(t_next, u_new, b_new, ue_new, channel, sys_.cyto, sys_.er)


def conserved_quantity(state: SimState) -> float:
    """Q = int_L^R (u - b) r dr + int_0^L u_e r dr (nodal trapezoid).

    With the outer membrane sealed and no stimulus, dQ/dt = 0: the reaction
    cancels in u - b and the interface fluxes cancel by the sign convention.
    """
    rc = state.cyto_mesh.nodes
    re = state.er_mesh.nodes
    return float(
        np.trapezoid((state.u - state.b) * rc, rc) + np.trapezoid(state.ue * re, re)
    )


@dataclass
class SimOutput:
    """Observer series at the two membranes plus summary wave metrics."""

    times: np.ndarray
    u_r: np.ndarray
    u_l: np.ndarray
    ue_l: np.ndarray
    p: np.ndarray
    peak_u_l: float
    peak_time: float
    peak_u_anywhere: float
    wave_duration: float
    final_state: SimState
    snapshots: list


def _longest_run(mask: np.ndarray, dt: float) -> float:
    best = run = 0
    for flag in mask:
        run = run + 1 if flag else 0
        best = max(best, run)
    return best * dt


def run_simulation(cfg: SimConfig, initial_state: SimState | None = None) -> SimOutput:
    """Integrate to t_end and collect observers.

    The wave duration metric is the longest contiguous stretch with
    u(L) > 2 * u_init (twice resting calcium).
    """
    cfg.validate()
    sys_ = build_system(cfg)
    state = initial_state if initial_state is not None else make_initial_state(cfg, sys_)
    n_steps = int(round(cfg.t_end / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ConfigError(f"t_end = {cfg.t_end} is not a whole number of steps of {cfg.dt}")

    stride = cfg.observer_stride
    times = [state.t]
    u_r = [float(state.u[-1])]
    u_l = [float(state.u[0])]
    ue_l = [float(state.ue[-1])]
    p_series = [float(state.probability)]
    snapshots = []
    peak_anywhere = float(state.u.max())
    if cfg.snapshot_stride:
        snapshots.append((state.t, state.u.copy(), state.b.copy(), state.ue.copy()))

    for n in range(1, n_steps + 1):
        state = step_imex(state, cfg, sys_)
        peak_anywhere = max(peak_anywhere, float(state.u.max()))
        if n % stride == 0 or n == n_steps:
            times.append(state.t)
            u_r.append(float(state.u[-1]))
            u_l.append(float(state.u[0]))
            ue_l.append(float(state.ue[-1]))
            p_series.append(float(state.probability))
        if cfg.snapshot_stride and (n % cfg.snapshot_stride == 0 or n == n_steps):
            snapshots.append((state.t, state.u.copy(), state.b.copy(), state.ue.copy()))

    times = np.asarray(times)
    u_l_arr = np.asarray(u_l)
    peak_idx = int(np.argmax(u_l_arr))
    return SimOutput(
        times,
        np.asarray(u_r),
        u_l_arr,
        np.asarray(ue_l),
        np.asarray(p_series),
        float(u_l_arr[peak_idx]),
        float(times[peak_idx]),
        peak_anywhere,
        _longest_run(u_l_arr > 2.0 * cfg.u_init, cfg.dt * stride),
        state,
        snapshots,
    )


def write_simulation_csv(path, output: SimOutput) -> None:
    """Observer series as CSV with 17 significant digits per value."""
    with open(path, "w") as fh:
        fh.write("t,u_R,u_L,ue_L,P\n")
        for row in zip(output.times, output.u_r, output.u_l, output.ue_l, output.p):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def preset_config(name: str, **overrides) -> SimConfig:
    """Named scenarios: 'example1' (full stimulus) and 'example1-reduced'."""
    presets = {
        "example1": 1200.0,
        "example1-reduced": 600.0,
    }
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    cfg = SimConfig(stimulus=StimulusSpec(presets[name]))
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    return cfg
