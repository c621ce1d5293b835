"""Scalar functionals of the state: means, energies, Fisher information, entropies."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields as dc_fields, replace
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .fields import (DENSITY_FLOOR, FieldState, GridSpec, SampledField, WaveFunction, above_floor,
                     diff, integrate, phase_gradient)
from .momentum import fisher_from_psi, kinetic_expectation


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    x_mean: float
    p_mean: float
    F_mean: float
    T_mean: float
    V_mean: float
    E_mean: float
    fisher_I: float
    entropy: float
    ehrenfest_r1: float = float("nan")
    ehrenfest_r2: float = float("nan")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in dc_fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


class Means(NamedTuple):
    x: float
    p: float
    F: float
    V: float


def _potential_arrays(V, grid: GridSpec, dV=None):
    if V is None:
        return np.zeros(grid.n), np.zeros(grid.n)
    v = np.asarray(V.values if isinstance(V, SampledField) else V, dtype=float)
    dv = diff(v, grid, 1, "central") if dV is None else np.asarray(dV, dtype=float)
    return v, dv


def means(obj, V=None, s_const: float | None = None, dV=None, scheme: str = "spectral") -> Means:
    """x, p, F and V averages for a FieldState or WaveFunction.

    ``V`` is a SampledField or array on the grid; ``dV`` optionally supplies
    V' exactly, otherwise it is differenced from ``V``.
    """
    grid = obj.grid
    v, dv = _potential_arrays(V, grid, dV)
    if isinstance(obj, WaveFunction):
        rho = obj.density
        s = obj.s_const if s_const is None else s_const
        flux = s * np.imag(np.conj(obj.values) * diff(obj.values, grid, 1, "spectral"))
    else:
        rho = obj.rho
        s = 1.0 if s_const is None else s_const
        flux = rho * phase_gradient(obj, s, scheme)
    return Means(integrate(rho * grid.x, grid), integrate(flux, grid),
                 -integrate(rho * dv, grid), integrate(rho * v, grid))


def fisher_information(rho: SampledField, scheme: str = "spectral", floor: float = DENSITY_FLOOR) -> float:
    """I = \\int rho'^2 / rho over above-floor points."""
    vals = np.asarray(rho.values, dtype=float)
    mask = above_floor(vals, floor)
    d = diff(vals, rho.grid, 1, scheme)
    integrand = np.zeros_like(vals)
    integrand[mask] = d[mask] ** 2 / vals[mask]
    return integrate(integrand, rho.grid)


def shannon_entropy(rho: SampledField, floor: float = 0.0) -> float:
    """-\\int rho ln rho (k = 1); points at or below ``floor * max`` contribute 0."""
    vals = np.asarray(rho.values, dtype=float)
    mask = vals > floor * vals.max()
    integrand = np.zeros_like(vals)
    integrand[mask] = -vals[mask] * np.log(vals[mask])
    return integrate(integrand, rho.grid)


def discrete_entropy(probs) -> float:
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


# --- records ---------------------------------------------------------------

def record_from_state(state: FieldState, V=None, dV=None, mass: float = 1.0, s_const: float = 1.0,
                      momentum_rule: str = "quantum", scheme: str = "spectral",
                      s_prime=None) -> ObservableRecord:
    """Observables of a (rho, S) snapshot.

    ``momentum_rule="quantum"`` (h = 0) adds the Fisher term
    ``(s^2/8m) I`` to the kinetic energy; ``"hybrid"`` uses ``<S'^2>/2m``
    alone.  ``s_prime`` lets a propagator pass the S' it used.
    """
    grid = state.grid
    v, dv = _potential_arrays(V, grid, dV)
    g = phase_gradient(state, s_const, scheme) if s_prime is None else np.asarray(s_prime)
    rho = state.rho
    fisher = fisher_information(SampledField(grid, rho))
    kinetic = integrate(rho * g**2, grid) / (2 * mass)
    if momentum_rule == "quantum":
        kinetic += s_const**2 / (8 * mass) * fisher
    elif momentum_rule != "hybrid":
        raise ValueError(f"unknown momentum rule {momentum_rule!r}")
    v_mean = integrate(rho * v, grid)
    return ObservableRecord(
        t=state.t, x_mean=integrate(rho * grid.x, grid), p_mean=integrate(rho * g, grid),
        F_mean=-integrate(rho * dv, grid), T_mean=kinetic, V_mean=v_mean, E_mean=kinetic + v_mean,
        fisher_I=fisher, entropy=shannon_entropy(SampledField(grid, rho)))


def record_from_psi(psi: WaveFunction, V=None, dV=None, mass: float = 1.0) -> ObservableRecord:
    grid = psi.grid
    v, dv = _potential_arrays(V, grid, dV)
    m = means(psi, v, dV=dv)
    kinetic = kinetic_expectation(psi, mass).total
    return ObservableRecord(
        t=psi.t, x_mean=m.x, p_mean=m.p, F_mean=m.F, T_mean=kinetic, V_mean=m.V,
        E_mean=kinetic + m.V, fisher_I=fisher_from_psi(psi),
        entropy=shannon_entropy(SampledField(grid, psi.density)))


# --- Ehrenfest -------------------------------------------------------------

def time_derivative(values, dt: float) -> np.ndarray:
    """Fourth-order finite differences on a uniformly sampled series."""
    f = np.asarray(values, dtype=float)
    if f.size < 5:
        raise ValueError("need at least 5 samples")
    out = np.empty_like(f)
    out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dt)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dt)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dt)
    return out


@dataclass(frozen=True)
class EhrenfestResiduals:
    t: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    scale1: float
    scale2: float

    @property
    def rel1(self) -> float:
        return float(np.max(np.abs(self.r1)) / self.scale1)

    @property
    def rel2(self) -> float:
        return float(np.max(np.abs(self.r2)) / self.scale2)


def _scale(*candidates) -> float:
    """First candidate that is not round-off compared with the largest one."""
    mags = [float(c) for c in candidates]
    top = max(mags)
    for m in mags:
        if m > 1e-8 * top:
            return m
    return 1.0


def ehrenfest_residuals(trajectory, mass: float | None = None) -> EhrenfestResiduals:
    """r1 = dx/dt - p/m and r2 = dp/dt - F along recorded observables.

    Relative errors use max|p/m| and max|F| over the run as scales.  When
    one of them is zero up to round-off (no force, or no motion) the next
    candidate is used: max|x| (resp. max|p|) over the run length, then the
    rms velocity sqrt(2 max T / m) (resp. m times it over the run length).
    """
    records = getattr(trajectory, "records", trajectory)
    if mass is None:
        cfg = getattr(trajectory, "cfg", None)
        mass = cfg.mass if cfg is not None else 1.0
    t = np.array([r.t for r in records])
    if t.size < 5:
        raise ValueError("ehrenfest residuals need at least 5 snapshots")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("snapshots must be uniformly spaced in time")
    x = np.array([r.x_mean for r in records])
    p = np.array([r.p_mean for r in records])
    f = np.array([r.F_mean for r in records])
    kinetic = np.array([r.T_mean for r in records])
    dxdt = time_derivative(x, steps[0])
    dpdt = time_derivative(p, steps[0])
    duration = t[-1] - t[0]
    v_rms = np.sqrt(2 * max(float(np.nanmax(kinetic)), 0.0) / mass)
    scale1 = _scale(np.max(np.abs(p)) / mass, np.max(np.abs(x)) / duration, v_rms)
    scale2 = _scale(np.max(np.abs(f)), np.max(np.abs(p)) / duration, mass * v_rms / duration)
    return EhrenfestResiduals(t, dxdt - p / mass, dpdt - f, scale1, scale2)


def with_ehrenfest(records: list, res: EhrenfestResiduals) -> list:
    return [replace(r, ehrenfest_r1=float(a), ehrenfest_r2=float(b))
            for r, a, b in zip(records, res.r1, res.r2)]


# --- relative entropy ------------------------------------------------------

@dataclass(frozen=True)
class RelativeEntropy:
    shift: float
    G: float
    expansion: float

    @property
    def ratio(self) -> float:
        return self.G / self.expansion if self.expansion != 0 else float("nan")


def relative_entropy_shift(rho: SampledField, dx_shift: float, floor: float = DENSITY_FLOOR,
                           fisher: float | None = None) -> RelativeEntropy:
    """G = -\\int rho(x) ln[rho(x)/rho(x+dx)] dx against the translated density.

    ``ln rho`` is interpolated with a cubic spline over the above-floor
    region, and the integral runs over points whose shifted partner also lies
    there.  ``expansion`` is the small-shift value ``-dx^2 I/2``.
    """
    grid = rho.grid
    vals = np.asarray(rho.values, dtype=float)
    mask = above_floor(vals, floor)
    lo, hi = np.flatnonzero(mask)[[0, -1]]
    xs = grid.x[lo:hi + 1]
    logs = np.log(vals[lo:hi + 1])
    spline = CubicSpline(xs, logs)
    target = xs + dx_shift
    ok = (target >= xs[0]) & (target <= xs[-1])
    integrand = np.zeros_like(xs)
    integrand[ok] = -vals[lo:hi + 1][ok] * (logs[ok] - spline(target[ok]))
    G = float(np.trapezoid(integrand, dx=grid.dx))
    if fisher is None:
        fisher = fisher_information(rho, floor=floor)
    return RelativeEntropy(float(dx_shift), G, -dx_shift**2 * fisher / 2)


def expansion_slopes(rho: SampledField, shifts=(0.04, 0.02, 0.01)) -> tuple[np.ndarray, np.ndarray]:
    """Ratios G/(-dx^2 I/2) and the observed order of |ratio - 1| between successive shifts."""
    fisher = fisher_information(rho)
    ratios = np.array([relative_entropy_shift(rho, h, fisher=fisher).ratio for h in shifts])
    err = np.abs(ratios - 1)
    h = np.asarray(shifts, dtype=float)
    slopes = np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])
    return ratios, slopes


# --- composition -----------------------------------------------------------

def fisher_information_2d(rho2: np.ndarray, gx: GridSpec, gy: GridSpec, scheme: str = "spectral",
                          floor: float = DENSITY_FLOOR) -> float:
    rho2 = np.asarray(rho2, dtype=float)
    dxr = np.apply_along_axis(diff, 0, rho2, gx, 1, scheme)
    dyr = np.apply_along_axis(diff, 1, rho2, gy, 1, scheme)
    mask = rho2 > floor * rho2.max()
    integrand = np.zeros_like(rho2)
    integrand[mask] = (dxr[mask] ** 2 + dyr[mask] ** 2) / rho2[mask]
    return _integrate_2d(integrand, gx, gy)


def shannon_entropy_2d(rho2: np.ndarray, gx: GridSpec, gy: GridSpec) -> float:
    rho2 = np.asarray(rho2, dtype=float)
    integrand = np.zeros_like(rho2)
    pos = rho2 > 0
    integrand[pos] = -rho2[pos] * np.log(rho2[pos])
    return _integrate_2d(integrand, gx, gy)


def _integrate_2d(values, gx, gy) -> float:
    return float(np.trapezoid(np.trapezoid(values, dx=gy.dx, axis=1), dx=gx.dx))


@dataclass(frozen=True)
class CompositionReport:
    entropy_parts: tuple
    entropy_joint: float
    fisher_parts: tuple
    fisher_joint: float
    tol: float

    @property
    def entropy_error(self) -> float:
        return abs(self.entropy_joint - sum(self.entropy_parts))

    @property
    def fisher_error(self) -> float:
        return abs(self.fisher_joint - sum(self.fisher_parts))

    @property
    def ok(self) -> bool:
        scale_s = max(1.0, abs(self.entropy_joint))
        scale_i = max(1.0, abs(self.fisher_joint))
        return self.entropy_error <= self.tol * scale_s and self.fisher_error <= self.tol * scale_i


def entropy_composition_check(rho1: SampledField, rho2: SampledField, tol: float = 1e-8) -> CompositionReport:
    """Compare S and I of the product density rho1(x) rho2(y) with the sums of the parts."""
    joint = np.outer(rho1.values, rho2.values)
    return CompositionReport(
        (shannon_entropy(rho1), shannon_entropy(rho2)),
        shannon_entropy_2d(joint, rho1.grid, rho2.grid),
        (fisher_information(rho1), fisher_information(rho2)),
        fisher_information_2d(joint, rho1.grid, rho2.grid),
        tol)
