"""Time evolution of (rho, S) for any coupling, plus a split-step propagator for psi.

Three schemes are available:

``rk4``
    Method of lines on the grid: ``drho/dt = -(rho S'/m)'`` and
    ``dS/dt = L0 - S'^2/2m - V``, both with central differences.  Below
    the density floor the fields are continued by :func:`fill_vacuum`.
``split_step``
    Strang splitting for the Schrodinger form of the quantum coupling.
``lagrangian``
    Fluid markers carrying mass, position, momentum S' and the phase S.
    Used for the classical and power-law couplings, whose grid form
    develops caustics or shocks (e.g. every classical ensemble in a
    harmonic well focuses within half a period).  Pressure forces between
    neighbouring markers cancel pairwise, so the total momentum obeys
    dp/dt = F exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .coupling import Classical, PowerLaw, Quantum, l0_values
from .errors import BlowUp, NodeError, NormalizationDrift, StatQMError
from .fields import (DENSITY_FLOOR, FieldState, GridSpec, SampledField, WaveFunction, diff,
                     from_wavefunction, integrate, normalize, support_interval, above_floor,
                     to_wavefunction)
from .observables import ObservableRecord, record_from_psi, record_from_state

SCHEMES = ("rk4", "split_step", "lagrangian")


@dataclass(frozen=True)
class Potential:
    """External potential V(x) with its exact gradient.

    ``kind`` is ``none``, ``linear`` (V = -F x), ``harmonic``
    (V = m omega^2 x^2 / 2) or ``sampled`` (cubic spline through samples).
    """

    kind: str = "none"
    F: float = 0.0
    omega: float = 0.0
    mass: float = 1.0
    samples: SampledField | None = None

    @classmethod
    def linear(cls, F: float) -> "Potential":
        return cls("linear", F=float(F))

    @classmethod
    def harmonic(cls, omega: float, mass: float = 1.0) -> "Potential":
        return cls("harmonic", omega=float(omega), mass=float(mass))

    @classmethod
    def from_samples(cls, field_: SampledField) -> "Potential":
        return cls("sampled", samples=field_)

    def _spline(self):
        return CubicSpline(self.samples.grid.x, self.samples.values)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "linear":
            return -self.F * x
        if self.kind == "harmonic":
            return 0.5 * self.mass * self.omega**2 * x**2
        if self.kind == "sampled":
            return self._spline()(x)
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "linear":
            return np.full_like(x, -self.F)
        if self.kind == "harmonic":
            return self.mass * self.omega**2 * x
        if self.kind == "sampled":
            return self._spline()(x, 1)
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def sample(self, grid: GridSpec) -> SampledField:
        if self.kind == "sampled" and self.samples.grid == grid:
            return self.samples
        return SampledField(grid, self.value(grid.x))


def as_potential(V) -> Potential:
    if V is None:
        return Potential()
    if isinstance(V, Potential):
        return V
    if isinstance(V, SampledField):
        return Potential.from_samples(V)
    raise TypeError(f"cannot use {type(V).__name__} as a potential")


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_final: float
    record_every: int = 1
    scheme: str = "rk4"
    potential: Potential = field(default_factory=Potential)
    coupling: object = field(default_factory=Classical)
    mass: float = 1.0
    s_const: float = 1.0
    norm_tol: float = 1e-8
    overflow: float = 1e12
    fd_scheme: str = "central4"
    momentum_rule: str = "quantum"
    floor: float = DENSITY_FLOOR
    viscosity: float = 0.0
    vacuum: str = "extrapolate"
    cfl: float = 0.25
    min_substep: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "potential", as_potential(self.potential))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.vacuum not in ("extrapolate", "none"):
            raise ValueError("vacuum must be 'extrapolate' or 'none'")
        if self.momentum_rule not in ("quantum", "hybrid"):
            raise ValueError("momentum_rule must be 'quantum' or 'hybrid'")
        if not (self.mass > 0 and self.s_const > 0):
            raise ValueError("mass and s_const must be positive")
        if self.scheme == "split_step":
            c = self.coupling
            if not isinstance(c, Quantum):
                raise ValueError("split_step needs the quantum coupling")
            if not math.isclose(c.hbar_eff, self.s_const, rel_tol=1e-12):
                raise ValueError("split_step needs s_const == hbar_eff")
            if not math.isclose(c.mass, self.mass, rel_tol=1e-12):
                raise ValueError("split_step needs the coupling mass to equal the particle mass")
        if self.scheme == "lagrangian" and not isinstance(self.coupling, (Classical, PowerLaw)):
            raise ValueError("the lagrangian scheme supports classical and power-law couplings")

    @property
    def n_steps(self) -> int:
        steps = self.t_final / self.dt
        n = int(round(steps))
        if abs(n - steps) > 1e-9 * max(1.0, steps):
            raise ValueError("t_final must be an integer multiple of dt")
        return n


@dataclass
class Trajectory:
    """Recorded snapshots; ``waves`` is filled by the split-step scheme only.

    A ``None`` entry in ``states`` marks a snapshot whose (rho, S) view is
    unavailable (a node in psi, or crossing markers).
    """

    cfg: EvolutionConfig
    states: list = field(default_factory=list)
    waves: list = field(default_factory=list)
    records: list = field(default_factory=list)
    markers: object = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


# --- grid (rho, S) scheme ----------------------------------------------------

VACUUM_FIT_POINTS = 6
_J = np.arange(VACUUM_FIT_POINTS, dtype=float)
_QUAD_FIT = np.linalg.pinv(np.vander(_J, 3, increasing=True))


def _extrapolate_side(ell, s_phase, inner: np.ndarray, outer: np.ndarray):
    """Quadratic least-squares continuation from ``inner`` (edge first) onto ``outer`` (nearest first)."""
    j = -np.arange(1, outer.size + 1, dtype=float)
    basis = np.vander(j, 3, increasing=True)
    ell_out = basis @ (_QUAD_FIT @ ell[inner])
    # The continuation must not rise away from the support.
    ell[outer] = np.minimum.accumulate(np.minimum(ell_out, ell[inner[0]]))
    s_phase[outer] = basis @ (_QUAD_FIT @ s_phase[inner])


def fill_vacuum(rho: np.ndarray, s_phase: np.ndarray, floor: float = DENSITY_FLOOR):
    """Continue (ln rho, S) quadratically into the sub-floor tails.

    Below the floor the phase carries no information and the fields are
    dominated by amplified truncation error, which drives the grid
    equations unstable.  The tails are therefore slaved to a least-squares
    quadratic fit of ``ln rho`` and ``S`` over the outermost
    ``VACUUM_FIT_POINTS`` above-floor points on each side (exact for
    Gaussian states).  Returns new arrays.
    """
    rho = np.asarray(rho, dtype=float)
    span = support_interval(above_floor(rho, floor))
    if span is None:
        raise NodeError("density vanishes on the whole grid")
    lo, hi = span
    n = rho.size
    if lo == 0 and hi == n - 1:
        return rho, np.asarray(s_phase, dtype=float)
    if hi - lo + 1 < VACUUM_FIT_POINTS:
        raise NodeError("support is too narrow to continue the fields into the tails")
    ell = 0.5 * np.log(np.maximum(rho, np.finfo(float).tiny))
    s_new = np.array(s_phase, dtype=float)
    if lo > 0:
        _extrapolate_side(ell, s_new, np.arange(lo, lo + VACUUM_FIT_POINTS), np.arange(lo - 1, -1, -1))
    if hi < n - 1:
        _extrapolate_side(ell, s_new, np.arange(hi, hi - VACUUM_FIT_POINTS, -1), np.arange(hi + 1, n))
    rho_new = rho.copy()
    outside = np.ones(n, dtype=bool)
    outside[lo:hi + 1] = False
    rho_new[outside] = np.exp(2 * ell[outside])
    return rho_new, s_new


def _rhs_arrays(rho, s_phase, grid, cfg, v):
    if cfg.vacuum == "extrapolate":
        rho, s_phase = fill_vacuum(rho, s_phase, cfg.floor)
    fd = cfg.fd_scheme
    g = diff(s_phase, grid, 1, fd)
    drho = -diff(rho * g / cfg.mass, grid, 1, fd)
    l0 = l0_values(cfg.coupling, rho, grid, fd, cfg.floor)
    ds = l0 - g**2 / (2 * cfg.mass) - v
    return drho, ds


def rhs(state: FieldState, cfg: EvolutionConfig) -> tuple[SampledField, SampledField]:
    """Right-hand side (drho/dt, dS/dt) of the field equations."""
    v = cfg.potential.value(state.grid.x)
    drho, ds = _rhs_arrays(state.rho, state.s_phase, state.grid, cfg, v)
    return SampledField(state.grid, drho), SampledField(state.grid, ds)


def stable_dt(grid: GridSpec, cfg: EvolutionConfig) -> float:
    """Largest dt of the documented rule dt <= 0.2 m dx^2 / s."""
    return 0.2 * cfg.mass * grid.dx**2 / cfg.s_const


def _check_guard(rho, s_phase, cfg, t):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(s_phase))):
        raise BlowUp("non-finite field values; reduce dt", t)
    if np.max(np.abs(rho)) > cfg.overflow or np.max(np.abs(s_phase)) > cfg.overflow:
        raise BlowUp("field exceeded the overflow guard; reduce dt", t)


def _renormalize(rho, grid, cfg, t):
    norm = integrate(rho, grid)
    if abs(norm - 1.0) > cfg.norm_tol:
        raise NormalizationDrift(f"norm drifted to {norm!r} in one step", t)
    return rho / norm


def _rk4_arrays(rho, s_phase, grid, cfg, v, dt):
    k1 = _rhs_arrays(rho, s_phase, grid, cfg, v)
    k2 = _rhs_arrays(rho + 0.5 * dt * k1[0], s_phase + 0.5 * dt * k1[1], grid, cfg, v)
    k3 = _rhs_arrays(rho + 0.5 * dt * k2[0], s_phase + 0.5 * dt * k2[1], grid, cfg, v)
    k4 = _rhs_arrays(rho + dt * k3[0], s_phase + dt * k3[1], grid, cfg, v)
    rho_new = rho + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    s_new = s_phase + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return rho_new, s_new


def step_rk4(state: FieldState, cfg: EvolutionConfig, dt: float | None = None) -> FieldState:
    """One classical Runge-Kutta step of the grid equations.

    Negative round-off in rho is clipped, the sub-floor tails are refilled
    by :func:`fill_vacuum` (unless ``cfg.vacuum == "none"``) and rho is
    renormalized; a drift beyond ``cfg.norm_tol`` raises
    :class:`NormalizationDrift`.
    """
    dt = cfg.dt if dt is None else dt
    if dt == 0:
        return state
    grid = state.grid
    v = cfg.potential.value(grid.x)
    rho, s_phase = _rk4_arrays(state.rho, state.s_phase, grid, cfg, v, dt)
    t = state.t + dt
    rho, s_phase = _finish_step(rho, s_phase, grid, cfg, t)
    return FieldState(grid, rho, s_phase, t)


def _finish_step(rho, s_phase, grid, cfg, t):
    _check_guard(rho, s_phase, cfg, t)
    rho = np.clip(rho, 0.0, None)
    if cfg.vacuum == "extrapolate":
        rho, s_phase = fill_vacuum(rho, s_phase, cfg.floor)
    return _renormalize(rho, grid, cfg, t), s_phase


# --- split-step --------------------------------------------------------------

class SplitStepPropagator:
    """Strang splitting exp(-iV dt/2s) F^-1 exp(-i s k^2 dt/2m) F exp(-iV dt/2s)."""

    def __init__(self, grid: GridSpec, v: np.ndarray, dt: float, mass: float = 1.0, s_const: float = 1.0):
        self.grid, self.dt, self.s_const = grid, dt, s_const
        self.half = np.exp(-0.5j * np.asarray(v, dtype=float) * dt / s_const)
        self.kinetic = np.exp(-0.5j * s_const * grid.k**2 * dt / mass)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.half * np.fft.ifft(self.kinetic * np.fft.fft(self.half * values))

    def step(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction(psi.grid, self.apply(psi.values), psi.t + self.dt, psi.s_const)


def split_step_schrodinger(psi: WaveFunction, V, dt: float, m: float = 1.0) -> WaveFunction:
    v = V.values if isinstance(V, SampledField) else as_potential(V).value(psi.grid.x) \
        if isinstance(V, Potential) or V is None else np.asarray(V, dtype=float)
    return SplitStepPropagator(psi.grid, v, dt, m, psi.s_const).step(psi)


# --- lagrangian markers ------------------------------------------------------

@dataclass(frozen=True)
class Markers:
    """Fluid elements: weight ``w`` (sums to 1), position, momentum S' and phase S."""

    w: np.ndarray
    x: np.ndarray
    p: np.ndarray
    s: np.ndarray
    t: float = 0.0

    @classmethod
    def from_state(cls, state: FieldState, cfg: EvolutionConfig) -> "Markers":
        span = support_interval(above_floor(state.rho, cfg.floor))
        lo, hi = span
        idx = slice(lo, hi + 1)
        g = diff(state.s_phase, state.grid, 1, cfg.fd_scheme)
        w = state.rho[idx] * state.grid.dx
        return cls(w / w.sum(), state.grid.x[idx].copy(), g[idx].copy(), state.s_phase[idx].copy(), state.t)

    def ordered(self) -> bool:
        return bool(np.all(np.diff(self.x) > 0))

    def node_density(self) -> np.ndarray:
        """rho at each marker from the spacing of its neighbours (nan once markers cross)."""
        x = self.x
        width = np.empty_like(x)
        width[1:-1] = (x[2:] - x[:-2]) / 2
        width[0] = x[1] - x[0]
        width[-1] = x[-1] - x[-2]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = self.w / width
        return np.where(width > 0, rho, np.nan)


def _cell_pressure(x, p, w, cfg):
    coup = cfg.coupling
    length = np.diff(x)
    mass = (w[1:] + w[:-1]) / 2
    pressure = np.zeros_like(length)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_c = mass / length
    if isinstance(coup, PowerLaw) and coup.n > 1:
        pressure = -coup.coeff * (coup.n - 1) * rho_c**coup.n
    if cfg.viscosity > 0:
        dv = np.diff(p) / cfg.mass
        pressure = pressure + np.where(dv < 0, cfg.viscosity * cfg.mass * rho_c * dv**2, 0.0)
    return pressure, rho_c


def _marker_rates(x, p, w, cfg):
    pot = cfg.potential
    pressure, rho_c = _cell_pressure(x, p, w, cfg)
    padded = np.concatenate([[0.0], pressure, [0.0]])
    dpdt = -(padded[1:] - padded[:-1]) / w - pot.gradient(x)
    coup = cfg.coupling
    if isinstance(coup, PowerLaw):
        rc = np.concatenate([[rho_c[0]], rho_c, [rho_c[-1]]])
        rho_node = (rc[1:] + rc[:-1]) / 2
        l0 = coup.coeff * coup.n * rho_node ** (coup.n - 1)
    else:
        l0 = 0.0
    dsdt = l0 + p**2 / (2 * cfg.mass) - pot.value(x)
    return p / cfg.mass, dpdt, dsdt


def _marker_time_scale(mk_x, mk_p, w, cfg) -> float:
    """Courant limit min dx / (c_s + |dv|) over cells; inf for free markers."""
    spec = cfg.coupling
    if not (isinstance(spec, PowerLaw) and spec.n > 1) and cfg.viscosity == 0:
        return np.inf
    length = np.diff(mk_x)
    if np.any(length <= 0):
        return 0.0
    rho_c = (w[1:] + w[:-1]) / 2 / length
    dv = np.abs(np.diff(mk_p)) / cfg.mass
    cs2 = np.zeros_like(rho_c)
    if isinstance(spec, PowerLaw) and spec.n > 1:
        cs2 = np.maximum(-spec.coeff * spec.n * (spec.n - 1) * rho_c ** (spec.n - 1), 0.0) / cfg.mass
    speed = np.sqrt(cs2) + (1 + cfg.viscosity) * dv
    with np.errstate(divide="ignore"):
        return float(np.min(np.where(speed > 0, length / speed, np.inf)))


def _rk4_markers(y, w, cfg, h):
    def rates(state):
        return _marker_rates(state[0], state[1], w, cfg)

    def shift(state, k, step):
        return tuple(a + step * b for a, b in zip(state, k))

    k1 = rates(y)
    k2 = rates(shift(y, k1, h / 2))
    k3 = rates(shift(y, k2, h / 2))
    k4 = rates(shift(y, k3, h))
    return tuple(a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def step_markers(mk: Markers, cfg: EvolutionConfig, dt: float | None = None) -> Markers:
    """Advance markers by ``dt`` with RK4, sub-stepping under the Courant limit when pressure acts."""
    dt = cfg.dt if dt is None else dt
    y = (mk.x, mk.p, mk.s)
    done = 0.0
    while done < dt:
        limit = cfg.cfl * _marker_time_scale(y[0], y[1], mk.w, cfg)
        if limit < cfg.min_substep * dt:
            raise BlowUp("markers collapsed (Courant limit vanished); add viscosity or reduce dt",
                         mk.t + done)
        h = min(dt - done, limit)
        if dt - done - h < 1e-12 * dt:
            h = dt - done
        y = _rk4_markers(y, mk.w, cfg, h)
        done += h
        t = mk.t + done
        if not all(np.all(np.isfinite(a)) for a in y):
            raise BlowUp("non-finite marker data; reduce dt", t)
        if max(np.max(np.abs(a)) for a in y) > cfg.overflow:
            raise BlowUp("marker data exceeded the overflow guard; reduce dt", t)
    return Markers(mk.w, y[0], y[1], y[2], mk.t + dt)


def markers_to_state(mk: Markers, grid: GridSpec) -> FieldState | None:
    """Grid view of ordered markers; ``None`` once markers have crossed."""
    if not mk.ordered():
        return None
    rho_nodes = mk.node_density()
    rho = np.interp(grid.x, mk.x, rho_nodes, left=0.0, right=0.0)
    s_phase = np.interp(grid.x, mk.x, mk.s)
    if not integrate(rho, grid) > 0:
        return None
    return FieldState(grid, normalize(rho, grid), s_phase, mk.t)


def record_from_markers(mk: Markers, cfg: EvolutionConfig) -> ObservableRecord:
    """Observables as marker sums; Fisher I and entropy are nan after markers cross."""
    pot = cfg.potential
    w, x, p = mk.w, mk.x, mk.p
    v_mean = float(np.sum(w * pot.value(x)))
    kinetic = float(np.sum(w * p**2)) / (2 * cfg.mass)
    fisher = entropy = float("nan")
    if mk.ordered():
        rho = mk.node_density()
        logr = np.log(rho)
        dlog = np.gradient(logr, x)
        fisher = float(np.sum(w * dlog**2))
        entropy = float(-np.sum(w * logr))
    if cfg.momentum_rule == "quantum":
        kinetic += cfg.s_const**2 / (8 * cfg.mass) * fisher
    return ObservableRecord(
        t=mk.t, x_mean=float(np.sum(w * x)), p_mean=float(np.sum(w * p)),
        F_mean=-float(np.sum(w * pot.gradient(x))), T_mean=kinetic, V_mean=v_mean,
        E_mean=kinetic + v_mean, fisher_I=fisher, entropy=entropy)


# --- driver ------------------------------------------------------------------

def _state_record(state, cfg, grid):
    v = cfg.potential.value(grid.x)
    dv = cfg.potential.gradient(grid.x)
    g = diff(state.s_phase, grid, 1, cfg.fd_scheme)
    return record_from_state(state, v, dv, cfg.mass, cfg.s_const, cfg.momentum_rule, s_prime=g)


def _with_time(err: StatQMError, t: float) -> StatQMError:
    if isinstance(err, BlowUp):
        return err
    out = type(err)(f"{err} (t={t!r})")
    out.__cause__ = err
    return out


def evolve(initial, cfg: EvolutionConfig) -> Trajectory:
    """Step ``initial`` (FieldState or WaveFunction) to ``cfg.t_final``.

    Snapshots are taken every ``record_every`` steps and at the end.
    """
    n_steps = cfg.n_steps
    traj = Trajectory(cfg)
    if cfg.scheme == "split_step":
        psi = initial if isinstance(initial, WaveFunction) else to_wavefunction(initial, cfg.s_const)
        grid = psi.grid
        v = cfg.potential.value(grid.x)
        dv = cfg.potential.gradient(grid.x)
        prop = SplitStepPropagator(grid, v, cfg.dt, cfg.mass, cfg.s_const)

        def snap(w):
            traj.waves.append(w)
            traj.records.append(record_from_psi(w, v, dv, cfg.mass))
            try:
                traj.states.append(from_wavefunction(w, floor=cfg.floor))
            except StatQMError:
                traj.states.append(None)

        snap(psi)
        for k in range(1, n_steps + 1):
            psi = prop.step(psi)
            if k % cfg.record_every == 0 or k == n_steps:
                snap(psi)
        return traj

    state = initial if isinstance(initial, FieldState) else from_wavefunction(initial, floor=cfg.floor)
    grid = state.grid

    if cfg.scheme == "lagrangian":
        mk = Markers.from_state(state, cfg)
        traj.states.append(state)
        traj.records.append(record_from_markers(mk, cfg))
        for k in range(1, n_steps + 1):
            mk = step_markers(mk, cfg)
            if k % cfg.record_every == 0 or k == n_steps:
                traj.states.append(markers_to_state(mk, grid))
                traj.records.append(record_from_markers(mk, cfg))
        traj.markers = mk
        return traj

    if isinstance(cfg.coupling, Quantum) and cfg.dt > stable_dt(grid, cfg):
        warnings.warn(f"dt={cfg.dt:g} exceeds the stability rule 0.2 m dx^2/s = {stable_dt(grid, cfg):g}",
                      RuntimeWarning, stacklevel=2)
    v = cfg.potential.value(grid.x)
    traj.states.append(state)
    traj.records.append(_state_record(state, cfg, grid))
    rho, s_phase, t = state.rho, state.s_phase, state.t
    for k in range(1, n_steps + 1):
        t = state.t + k * cfg.dt
        try:
            rho, s_phase = _rk4_arrays(rho, s_phase, grid, cfg, v, cfg.dt)
            rho, s_phase = _finish_step(rho, s_phase, grid, cfg, t)
        except StatQMError as err:
            raise _with_time(err, t) from err
        if k % cfg.record_every == 0 or k == n_steps:
            snap_state = FieldState(grid, rho, s_phase, t)
            traj.states.append(snap_state)
            traj.records.append(_state_record(snap_state, cfg, grid))
    return traj


# --- energy balance ----------------------------------------------------------

def _drho_dt(state, cfg, wave=None):
    grid = state.grid
    if wave is not None:
        flux = cfg.s_const * np.imag(np.conj(wave.values) * diff(wave.values, grid, 1, "spectral")) / cfg.mass
        return -diff(flux, grid, 1, "spectral")
    v = cfg.potential.value(grid.x)
    return _rhs_arrays(state.rho, state.s_phase, grid, cfg, v)[0]


def energy_balance_residual(trajectory: Trajectory, cfg: EvolutionConfig | None = None) -> np.ndarray:
    """r(t) = \\int [L0 - (s^2/2m) (sqrt rho)''/sqrt rho] drho/dt dx per snapshot.

    This is the rate of change of the mean energy T + V under the h = 0
    rule.  With ``momentum_rule="hybrid"`` the Fisher part is dropped and
    r = \\int L0 drho/dt dx.  drho/dt comes from the field equations, not
    from differencing snapshots.  Snapshots without a (rho, S) view give nan.
    """
    cfg = trajectory.cfg if cfg is None else cfg
    if len(trajectory) < 3:
        raise ValueError("energy balance needs at least 3 snapshots")
    fd = cfg.fd_scheme
    fisher_coupling = Quantum(cfg.s_const, cfg.mass)
    out = []
    for i, state in enumerate(trajectory.states):
        if state is None:
            out.append(float("nan"))
            continue
        wave = trajectory.waves[i] if trajectory.waves else None
        drho = _drho_dt(state, cfg, wave)
        bracket = l0_values(cfg.coupling, state.rho, state.grid, fd, cfg.floor)
        if cfg.momentum_rule == "quantum":
            bracket = bracket - l0_values(fisher_coupling, state.rho, state.grid, fd, cfg.floor)
        out.append(integrate(bracket * drho, state.grid))
    return np.array(out)


# --- decay conditions --------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    maxima: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.maxima.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.maxima.items() if v > self.tol]


def check_decay(state: FieldState, V=None, cfg: EvolutionConfig | None = None,
                decay_tol: float = 1e-8, edge_fraction: float = 0.05) -> DecayReport:
    """Size of rho*A at the box edges for A in {1, V, dS/dt, x S', S'^2}.

    The edge region is the outermost ``edge_fraction`` of the grid points,
    split evenly between both ends.  dS/dt comes from :func:`rhs` with the
    coupling of ``cfg`` (classical if ``cfg`` is None).
    """
    grid = state.grid
    pot = as_potential(V) if V is not None else (cfg.potential if cfg else Potential())
    if cfg is None:
        cfg = EvolutionConfig(dt=1.0, t_final=0.0, potential=pot)
    else:
        cfg = replace(cfg, potential=pot)
    v = pot.value(grid.x)
    _, ds = _rhs_arrays(state.rho, state.s_phase, grid, cfg, v)
    g = diff(state.s_phase, grid, 1, cfg.fd_scheme)
    per_side = max(1, int(round(edge_fraction * grid.n / 2)))
    edge = np.zeros(grid.n, dtype=bool)
    edge[:per_side] = True
    edge[-per_side:] = True
    rho = state.rho
    products = {"rho": rho, "rho*V": rho * v, "rho*dS_dt": rho * ds,
                "rho*x*dS_dx": rho * grid.x * g, "rho*dS_dx^2": rho * g**2}
    return DecayReport({k: float(np.max(np.abs(a[edge]))) for k, a in products.items()}, decay_tol)
