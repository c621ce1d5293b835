"""Constrained entropy maximization: the canonical distribution and its multipliers.

The functional is ``K[rho] = S[rho] - lambda2 <E> - lambda1 \\int rho``;
its extremum is ``rho = exp(-lambda2 E) / Z`` with ``lambda1 = ln Z - 1``.
Continuous landscapes live on a grid (trapezoid weights), discrete ones
use unit weights; both share the code below.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import OutOfRange
from .fields import GridSpec, read_columns

LAMBDA_GUARD = 1e8


@dataclass(frozen=True)
class EnergyLandscape:
    E: np.ndarray
    grid: GridSpec | None = None

    def __post_init__(self):
        e = np.array(self.E, dtype=float)
        e.setflags(write=False)
        if e.ndim != 1 or e.size < 2:
            raise ValueError("a landscape needs at least two points")
        if not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite")
        if self.grid is not None and self.grid.n != e.size:
            raise ValueError("energies must be sampled on the grid")
        object.__setattr__(self, "E", e)

    @classmethod
    def discrete(cls, energies) -> "EnergyLandscape":
        return cls(np.asarray(energies, dtype=float))

    @classmethod
    def on_grid(cls, grid: GridSpec, energy) -> "EnergyLandscape":
        values = energy(grid.x) if callable(energy) else energy
        return cls(np.asarray(values, dtype=float), grid)

    @classmethod
    def from_csv(cls, path) -> "EnergyLandscape":
        """Read ``x,E`` (uniform grid) or ``i,E`` (discrete) columns."""
        cols = read_columns(path)
        if "E" not in cols:
            raise ValueError(f"{path}: missing column 'E'")
        if "x" in cols:
            x = cols["x"]
            dx = np.diff(x)
            if x.size < 2 or not np.allclose(dx, dx[0], rtol=1e-9, atol=0) or dx[0] <= 0:
                raise ValueError(f"{path}: x must be uniform and increasing")
            grid = GridSpec(x[0], x[0] + dx[0] * x.size, x.size)
            return cls(cols["E"], grid)
        if "i" in cols:
            return cls(cols["E"])
        raise ValueError(f"{path}: need an 'x' or 'i' column")

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights: trapezoid on a grid, 1 per state otherwise."""
        if self.grid is None:
            return np.ones(self.E.size)
        w = np.full(self.E.size, self.grid.dx)
        w[0] = w[-1] = self.grid.dx / 2
        return w

    @property
    def is_discrete(self) -> bool:
        return self.grid is None

    def expectation(self, rho, f=None) -> float:
        f = np.ones_like(self.E) if f is None else f
        return float(np.sum(self.weights * rho * f))


def _shifted_boltzmann(landscape: EnergyLandscape, lambda2: float):
    """exp(-lambda2 (E - E_ref)) with E_ref chosen so the largest factor is 1."""
    e = landscape.E
    ref = e.min() if lambda2 >= 0 else e.max()
    return np.exp(-lambda2 * (e - ref)), ref


def log_partition(landscape: EnergyLandscape, lambda2: float) -> float:
    b, ref = _shifted_boltzmann(landscape, lambda2)
    return float(np.log(np.sum(landscape.weights * b)) - lambda2 * ref)


def canonical_distribution(landscape: EnergyLandscape, lambda2: float) -> np.ndarray:
    """exp(-lambda2 E)/Z: a density on a grid, probabilities in the discrete case."""
    b, _ = _shifted_boltzmann(landscape, float(lambda2))
    return b / np.sum(landscape.weights * b)


def mean_energy(landscape: EnergyLandscape, lambda2: float) -> float:
    return landscape.expectation(canonical_distribution(landscape, lambda2), landscape.E)


def energy_variance(landscape: EnergyLandscape, lambda2: float) -> float:
    rho = canonical_distribution(landscape, lambda2)
    mean = landscape.expectation(rho, landscape.E)
    return landscape.expectation(rho, (landscape.E - mean) ** 2)


def lambda1_of(landscape: EnergyLandscape, lambda2: float) -> float:
    return log_partition(landscape, lambda2) - 1.0


def solve_lambda(landscape: EnergyLandscape, E_target: float, guard: float = LAMBDA_GUARD) -> float:
    """lambda2 with <E>(lambda2) = E_target: bracketing, Brent, then Newton polish.

    Raises :class:`OutOfRange` if the target is not strictly inside the
    energy range, or if it needs ``|lambda2 * spread|`` beyond ``guard``.
    """
    e = landscape.E
    lo_e, hi_e = float(e.min()), float(e.max())
    spread = hi_e - lo_e
    if not (lo_e < E_target < hi_e):
        raise OutOfRange(f"target {E_target!r} not strictly inside [{lo_e!r}, {hi_e!r}]")

    def f(lam):
        return mean_energy(landscape, lam) - E_target

    f0 = f(0.0)
    if f0 == 0:
        return 0.0
    direction = 1.0 if f0 > 0 else -1.0
    step = 1.0 / spread
    a, b = 0.0, direction * step
    while f(b) * direction > 0:
        a, b = b, 2 * b
        if abs(b) * spread > guard:
            raise OutOfRange(f"target {E_target!r} needs |lambda2| beyond the guard {guard / spread:g}")
    lam = brentq(f, min(a, b), max(a, b), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        var = energy_variance(landscape, lam)
        r = f(lam)
        if var <= 0 or r == 0:
            break
        candidate = lam + r / var
        if abs(f(candidate)) < abs(r):
            lam = candidate
        else:
            break
    return float(lam)


def entropy(landscape: EnergyLandscape, rho) -> float:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    pos = rho > 0
    out[pos] = -rho[pos] * np.log(rho[pos])
    return float(np.sum(landscape.weights * out))


def functional_K(landscape: EnergyLandscape, rho, lambda1: float, lambda2: float) -> float:
    return (entropy(landscape, rho) - lambda2 * landscape.expectation(rho, landscape.E)
            - lambda1 * landscape.expectation(rho))


@dataclass(frozen=True)
class ExtremumReport:
    K_star: float
    changes: np.ndarray
    delta: float
    energy_preserving: bool
    tol: float

    @property
    def all_non_increasing(self) -> bool:
        return bool(np.all(self.changes <= self.tol))

    @property
    def max_change(self) -> float:
        return float(np.max(self.changes)) if self.changes.size else 0.0


def _project_out(eta, basis, weights):
    """Remove the components of eta along ``basis`` in the weighted inner product."""
    q, _ = np.linalg.qr((basis * np.sqrt(weights)).T)
    v = eta * np.sqrt(weights)
    v = v - q @ (q.T @ v)
    return v / np.sqrt(weights)


def extremum_check(landscape: EnergyLandscape, rho_star, trials: int = 100, delta: float = 1e-3,
                   lambda2: float = 0.0, seed: int = 0) -> ExtremumReport:
    """Compare K at rho_star with K at random perturbations rho_star + delta*eta.

    Each eta is a random relative modulation of rho_star that keeps the
    normalization and, when the landscape leaves room for it, the mean
    energy; it is scaled so that |eta| <= rho_star pointwise.  A two-level
    landscape admits no non-zero eta preserving both, so there only the
    normalization is kept; K still cannot increase because rho_star is its
    unconstrained stationary point and K is concave.
    """
    rho_star = np.asarray(rho_star, dtype=float)
    w = landscape.weights
    lambda1 = lambda1_of(landscape, lambda2)
    k_star = functional_K(landscape, rho_star, lambda1, lambda2)
    rng = np.random.default_rng(seed)
    energy_basis = np.vstack([np.ones_like(rho_star), landscape.E])
    rank = np.linalg.matrix_rank(energy_basis)
    preserve_energy = rho_star.size > rank
    basis = energy_basis if preserve_energy else energy_basis[:1]
    changes = np.empty(int(trials))
    for i in range(int(trials)):
        # eta = rho_star * zeta; the constraints on eta are orthogonality of
        # zeta to 1 and E in the rho_star-weighted inner product.
        zeta = _project_out(rng.standard_normal(rho_star.size), basis, w * rho_star)
        scale = np.max(np.abs(zeta))
        eta = rho_star * (zeta / scale if scale > 0 else zeta)
        changes[i] = functional_K(landscape, rho_star + delta * eta, lambda1, lambda2) - k_star
    tol = 64 * np.finfo(float).eps * max(1.0, abs(k_star))
    return ExtremumReport(k_star, changes, float(delta), preserve_energy, tol)
