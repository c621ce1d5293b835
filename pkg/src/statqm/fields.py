"""Uniform 1-D grids, sampled fields and the (rho, S) <-> psi change of variables.

Grids are periodic-style: ``n`` points ``x_k = x_min + k*dx`` with
``dx = (x_max - x_min)/n``, so the same samples serve finite differences and
the discrete Fourier transform.  Integrals use the trapezoid rule.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NodeError

DENSITY_FLOOR = 1e-12
"""Relative density below which the phase is treated as undefined."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs an integer n >= 8, got {self.n!r}")
        if not self.x_max > self.x_min:
            raise ValueError("grid needs x_max > x_min")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @classmethod
    def centered(cls, half_width: float, n: int) -> "GridSpec":
        return cls(-half_width, half_width, n)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def integrate(values: np.ndarray, grid: GridSpec) -> float:
    """Trapezoid rule over the grid samples."""
    return float(np.trapezoid(values, dx=grid.dx))


@dataclass(frozen=True)
class SampledField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sampled field has non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, f) -> "SampledField":
        return cls(grid, f(grid.x))

    def integral(self) -> float:
        return integrate(self.values, self.grid)

    def normalized(self) -> "SampledField":
        return SampledField(self.grid, normalize(self.values, self.grid))

    def to_csv(self, path) -> None:
        write_columns(path, {"x": self.grid.x, "value": self.values})


@dataclass(frozen=True)
class FieldState:
    """The pair (rho, S) at time ``t``; S carries action units."""

    grid: GridSpec
    rho: np.ndarray
    s_phase: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        rho = _frozen(self.rho)
        s = _frozen(self.s_phase)
        if rho.shape != (self.grid.n,) or s.shape != (self.grid.n,):
            raise ValueError("rho and S must be sampled on the grid")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ValueError("density must be finite and non-negative")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "s_phase", s)
        object.__setattr__(self, "t", float(self.t))

    @property
    def norm(self) -> float:
        return integrate(self.rho, self.grid)

    def support(self, floor: float = DENSITY_FLOOR) -> np.ndarray:
        return above_floor(self.rho, floor)

    def to_csv(self, path) -> None:
        write_columns(path, {"x": self.grid.x, "rho": self.rho, "S": self.s_phase})


@dataclass(frozen=True)
class WaveFunction:
    grid: GridSpec
    values: np.ndarray
    t: float = 0.0
    s_const: float = 1.0

    def __post_init__(self):
        vals = _frozen(self.values, complex)
        if vals.shape != (self.grid.n,):
            raise ValueError("wave function must be sampled on the grid")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t", float(self.t))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def norm(self) -> float:
        return integrate(self.density, self.grid)


# --- helpers ---------------------------------------------------------------

def normalize(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    total = integrate(values, grid)
    if not total > 0:
        raise ValueError("cannot normalize a field with non-positive integral")
    return np.asarray(values, dtype=float) / total


def above_floor(rho: np.ndarray, floor: float = DENSITY_FLOOR) -> np.ndarray:
    rho = np.asarray(rho)
    peak = float(rho.max()) if rho.size else 0.0
    return rho > floor * peak


def support_interval(mask: np.ndarray) -> tuple[int, int] | None:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    return int(idx[0]), int(idx[-1])


def interior_nodes(rho: np.ndarray, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Indices of sub-floor points lying between above-floor points."""
    mask = above_floor(rho, floor)
    span = support_interval(mask)
    if span is None:
        return np.array([], dtype=int)
    lo, hi = span
    return lo + np.flatnonzero(~mask[lo:hi + 1])


def gaussian(grid: GridSpec, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    x = grid.x
    return np.exp(-((x - mu) ** 2) / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2)


def gaussian_state(grid: GridSpec, mu=0.0, sigma=1.0, p0=0.0, t=0.0) -> FieldState:
    return FieldState(grid, normalize(gaussian(grid, mu, sigma), grid), p0 * grid.x, t)


# --- derivatives -----------------------------------------------------------

def _central(values: np.ndarray, dx: float, order: int) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    out = np.empty_like(f)
    if order == 1:
        out[1:-1] = (f[2:] - f[:-2]) / (2 * dx)
        out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dx)
        out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dx)
    else:
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / dx**2
        out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / dx**2
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / dx**2
    return out


def _central4(values: np.ndarray, dx: float, order: int) -> np.ndarray:
    """Fourth-order interior stencils; the two outermost points fall back to ``_central``."""
    f = np.asarray(values, dtype=float)
    out = _central(f, dx, order)
    if f.size < 5:
        return out
    if order == 1:
        out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dx)
    else:
        out[2:-2] = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * dx**2)
    return out


def _spectral(values: np.ndarray, grid: GridSpec, order: int) -> np.ndarray:
    f = np.asarray(values)
    ik = 1j * grid.k
    if order == 1 and grid.n % 2 == 0:
        # Nyquist mode has no odd derivative.
        ik[grid.n // 2] = 0.0
    out = np.fft.ifft(ik**order * np.fft.fft(f))
    return out if np.iscomplexobj(f) else out.real


def diff(values: np.ndarray, grid: GridSpec, order: int = 1, scheme: str = "central") -> np.ndarray:
    """Array-level derivative used throughout the package."""
    if order not in (1, 2):
        raise ValueError("only first and second derivatives are supported")
    if scheme in ("central", "central4"):
        stencil = _central if scheme == "central" else _central4
        if np.iscomplexobj(values):
            return stencil(np.real(values), grid.dx, order) + 1j * stencil(np.imag(values), grid.dx, order)
        return stencil(values, grid.dx, order)
    if scheme == "spectral":
        return _spectral(values, grid, order)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def derivative(f: SampledField, order: int = 1, scheme: str = "central") -> SampledField:
    """Second-order central stencils (one-sided at the edges) or FFT differentiation.

    ``"central4"`` is also accepted and uses fourth-order interior stencils.

    The spectral scheme treats the field as periodic on the box, which is
    only accurate when the field and its derivatives are negligible at the
    edges.
    """
    return SampledField(f.grid, diff(f.values, f.grid, order, scheme))


# --- change of variables ---------------------------------------------------

def to_wavefunction(state: FieldState, s_const: float = 1.0) -> WaveFunction:
    psi = np.sqrt(state.rho) * np.exp(1j * state.s_phase / s_const)
    return WaveFunction(state.grid, psi, state.t, s_const)


def from_wavefunction(psi: WaveFunction, unwrap_policy: str = "anchor",
                      floor: float = DENSITY_FLOOR) -> FieldState:
    """Recover (rho, S) from psi by unwrapping the phase along the grid.

    The unwrap starts at the leftmost above-floor point and runs to the
    rightmost one.  ``unwrap_policy="anchor"`` puts S = 0 at the start,
    ``"principal"`` keeps the principal phase value there.  Outside the
    support S is continued as a constant.
    """
    if unwrap_policy not in ("anchor", "principal"):
        raise ValueError(f"unknown unwrap policy {unwrap_policy!r}")
    vals = psi.values
    rho = np.abs(vals) ** 2
    mask = above_floor(rho, floor)
    span = support_interval(mask)
    s_phase = np.zeros(psi.grid.n)
    if span is not None:
        lo, hi = span
        nodes = interior_nodes(rho, floor)
        if nodes.size:
            x = psi.grid.x[nodes[0]]
            raise NodeError(f"|psi| falls below the floor at x={x:.6g} inside the support")
        seg = vals[lo:hi + 1]
        steps = np.angle(seg[1:] * np.conj(seg[:-1]))
        theta = np.concatenate([[0.0], np.cumsum(steps)])
        if unwrap_policy == "principal":
            theta += np.angle(seg[0])
        s_phase[lo:hi + 1] = psi.s_const * theta
        s_phase[:lo] = s_phase[lo]
        s_phase[hi + 1:] = s_phase[hi]
    return FieldState(psi.grid, rho, s_phase, psi.t)


def phase_gradient(state: FieldState, s_const: float = 1.0, scheme: str = "spectral",
                   floor: float = DENSITY_FLOOR) -> np.ndarray:
    """S' on the grid.

    ``"spectral"`` differentiates psi = sqrt(rho) exp(iS/s) instead of S, so
    a non-periodic S (e.g. a linear phase) is handled correctly; sub-floor
    points get S' = 0.  ``"central"`` differentiates S directly.
    """
    if scheme == "central":
        return diff(state.s_phase, state.grid, 1, "central")
    u = np.sqrt(state.rho)
    psi = u * np.exp(1j * state.s_phase / s_const)
    dpsi = diff(psi, state.grid, 1, "spectral")
    mask = above_floor(state.rho, floor)
    g = np.zeros(state.grid.n)
    g[mask] = s_const * np.imag(np.conj(psi[mask]) * dpsi[mask]) / state.rho[mask]
    return g


# --- CSV -------------------------------------------------------------------

def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_columns(path, columns: dict) -> None:
    """Write equal-length columns as CSV with 17 significant digits."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([format_float(v) for v in row])


def read_columns(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [[] for _ in header]
    return {name: np.array(col, dtype=float) for name, col in zip(header, cols)}
