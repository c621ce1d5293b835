"""Momentum space: scaled Fourier transform, quantum and hybrid momentum densities.

The transform pair uses the action scale ``s`` in the exponent,
``phi(p) = (2 pi)^-1/2 \\int psi(x) exp(-i p x / s) dx``, so that
``w = |phi|^2 / s`` is a normalized density in ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (DENSITY_FLOOR, FieldState, GridSpec, WaveFunction, diff, phase_gradient,
                     to_wavefunction, write_columns)


def momentum_grid(grid: GridSpec, s_const: float = 1.0) -> np.ndarray:
    """Sorted momenta ``s * 2 pi j / (n dx)`` covering (-pi s/dx, pi s/dx]."""
    n = grid.n
    j = np.arange(-((n - 1) // 2), n // 2 + 1)
    return s_const * 2 * np.pi * j / (n * grid.dx)


@dataclass(frozen=True)
class MomentumAmplitude:
    p: np.ndarray
    phi: np.ndarray
    s_const: float

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])


@dataclass(frozen=True)
class MomentumDensity:
    """Density ``w`` on momentum points ``p``; ``edges`` is set for histogram densities."""

    p: np.ndarray
    w: np.ndarray
    edges: np.ndarray | None = None

    @property
    def widths(self) -> np.ndarray:
        if self.edges is not None:
            return np.diff(self.edges)
        return np.full(self.p.shape, self.p[1] - self.p[0])

    def moment(self, k: int) -> float:
        return float(np.sum(self.w * self.p**k * self.widths))

    def norm(self) -> float:
        return self.moment(0)

    def mean(self) -> float:
        return self.moment(1)


def fourier_forward(psi: WaveFunction) -> MomentumAmplitude:
    grid, s = psi.grid, psi.s_const
    p = momentum_grid(grid, s)
    j = np.rint(p * grid.n * grid.dx / (2 * np.pi * s)).astype(int)
    spectrum = np.fft.fft(psi.values)[j % grid.n]
    phi = grid.dx / np.sqrt(2 * np.pi) * np.exp(-1j * p * grid.x_min / s) * spectrum
    return MomentumAmplitude(p, phi, s)


def quantum_momentum_density(phi: MomentumAmplitude) -> MomentumDensity:
    return MomentumDensity(phi.p, np.abs(phi.phi) ** 2 / phi.s_const)


def hybrid_bin_edges(grid: GridSpec, s_const: float = 1.0, bins: int | None = None) -> np.ndarray:
    """Bin edges aligned with the quantum momentum grid, ``n/bins`` points per bin.

    The default ``bins = n/4`` groups four quantum momenta per bin.
    """
    p = momentum_grid(grid, s_const)
    dp = p[1] - p[0]
    bins = grid.n // 4 if bins is None else int(bins)
    per = grid.n // bins
    if per * bins != grid.n:
        raise ValueError(f"bins={bins} must divide n={grid.n}")
    return p[0] - dp / 2 + dp * per * np.arange(bins + 1)


def _edges_from_centers(centers: np.ndarray) -> np.ndarray:
    centers = np.asarray(centers, dtype=float)
    half = np.diff(centers) / 2
    return np.concatenate([[centers[0] - half[0]], centers[:-1] + half, [centers[-1] + half[-1]]])


def classical_momentum_density(state: FieldState, p_grid=None, s_const: float = 1.0,
                               bins: int | None = None, scheme: str = "spectral") -> MomentumDensity:
    """Pushforward of rho under x -> S'(x) as a rho dx weighted histogram.

    ``p_grid`` gives bin centers; by default the bins from
    :func:`hybrid_bin_edges` are used.
    """
    if p_grid is None:
        edges = hybrid_bin_edges(state.grid, s_const, bins)
    else:
        edges = _edges_from_centers(p_grid)
    g = phase_gradient(state, s_const, scheme)
    weights = state.rho * state.grid.dx
    mass, _ = np.histogram(g, bins=edges, weights=weights)
    widths = np.diff(edges)
    centers = (edges[:-1] + edges[1:]) / 2
    return MomentumDensity(centers, mass / widths, edges)


def rebin(density: MomentumDensity, edges: np.ndarray) -> MomentumDensity:
    """Re-bin a point-sampled density onto histogram edges, conserving mass."""
    mass, _ = np.histogram(density.p, bins=edges, weights=density.w * density.widths)
    return MomentumDensity((edges[:-1] + edges[1:]) / 2, mass / np.diff(edges), edges)


@dataclass(frozen=True)
class HDiagnostic:
    """Difference between the hybrid and the quantum momentum density.

    ``moments[k]`` is the k-th moment of h; the hybrid part is evaluated as
    ``\\int rho S'^k dx`` (exact change of variables, no binning error) and
    the quantum part as the spectral sum.
    """

    p: np.ndarray
    h: np.ndarray
    hybrid: MomentumDensity
    quantum: MomentumDensity
    moments: tuple

    def as_dict(self) -> dict:
        return {f"m{k}": float(v) for k, v in enumerate(self.moments)}


def h_diagnostic(state: FieldState, s_const: float = 1.0, bins: int | None = None) -> HDiagnostic:
    psi = to_wavefunction(state, s_const)
    quantum = quantum_momentum_density(fourier_forward(psi))
    edges = hybrid_bin_edges(state.grid, s_const, bins)
    hybrid = classical_momentum_density(state, s_const=s_const, bins=bins)
    binned = rebin(quantum, edges)
    g = phase_gradient(state, s_const, "spectral")
    dx = state.grid.dx
    moments = tuple(float(np.sum(state.rho * g**k) * dx) - quantum.moment(k) for k in range(3))
    return HDiagnostic(hybrid.p, hybrid.w - binned.w, hybrid, binned, moments)


@dataclass(frozen=True)
class KineticEnergy:
    """Mean kinetic energy under the h = 0 rule and its two-term split."""

    total: float
    phase_term: float
    fisher_term: float

    @property
    def split_sum(self) -> float:
        return self.phase_term + self.fisher_term


def fisher_from_psi(psi: WaveFunction, floor: float = DENSITY_FLOOR) -> float:
    """I = \\int rho'^2/rho with rho' = 2 Re(psi* psi') from spectral psi'."""
    rho = psi.density
    mask = rho > floor * rho.max()
    drho = 2 * np.real(np.conj(psi.values) * diff(psi.values, psi.grid, 1, "spectral"))
    return float(np.sum(drho[mask] ** 2 / rho[mask]) * psi.grid.dx)


def kinetic_expectation(psi: WaveFunction, mass: float = 1.0) -> KineticEnergy:
    """Spectral mean kinetic energy sum p^2 |phi|^2 dp / (2 m s).

    The split ``<S'^2>/2m + (s^2/8m) I[rho]`` is evaluated in position
    space from the same spectral derivative of psi.
    """
    s = psi.s_const
    amp = fourier_forward(psi)
    total = float(np.sum(amp.p**2 * np.abs(amp.phi) ** 2) * amp.dp / (2 * mass * s))
    rho = psi.density
    mask = rho > DENSITY_FLOOR * rho.max()
    dpsi = diff(psi.values, psi.grid, 1, "spectral")
    g = s * np.imag(np.conj(psi.values[mask]) * dpsi[mask]) / rho[mask]
    phase_term = float(np.sum(rho[mask] * g**2) * psi.grid.dx / (2 * mass))
    fisher_term = s**2 / (8 * mass) * fisher_from_psi(psi)
    return KineticEnergy(total, phase_term, fisher_term)


def to_csv(density: MomentumDensity, path) -> None:
    write_columns(path, {"p": density.p, "w": density.w})
