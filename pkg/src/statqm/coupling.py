"""Coupling terms L0(rho, rho', rho'') closing the generalized Hamilton-Jacobi equation.

Every variant is described by a :class:`CouplingSpec`.  ``L0`` enters the
phase equation as ``dS/dt = L0 - S'^2/2m - V``; the companion potential
``Q`` satisfies ``Q' = rho' L0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import BadIndex, DivisionByFloor
from .fields import DENSITY_FLOOR, GridSpec, SampledField, above_floor, diff, interior_nodes
from .symbolic import JetPolynomial, family_beta


@dataclass(frozen=True)
class Classical:
    kind = "classical"


@dataclass(frozen=True)
class PowerLaw:
    n: int
    coeff: float
    kind = "power_law"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise BadIndex(f"power-law exponent must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "coeff", float(self.coeff))


@dataclass(frozen=True)
class Quantum:
    hbar_eff: float = 1.0
    mass: float = 1.0
    kind = "quantum"

    def __post_init__(self):
        if not (self.hbar_eff > 0 and self.mass > 0):
            raise ValueError("hbar_eff and mass must be positive")

    @property
    def c0(self) -> float:
        """Coefficient of the n = 0 family member reproducing this coupling."""
        return self.hbar_eff**2 / (4 * self.mass)


def _check_family_index(n: int) -> int:
    if int(n) != n:
        raise BadIndex(f"family index must be an integer, got {n!r}")
    n = int(n)
    if n in (1, 2):
        raise BadIndex(f"family index n={n} is not admissible (need n <= 0 or n >= 3)")
    return n


@dataclass(frozen=True)
class PolynomialFamily:
    A: float = 0.0
    coeffs: dict = field(default_factory=dict)
    kind = "polynomial_family"

    def __post_init__(self):
        clean = {_check_family_index(n): c for n, c in dict(self.coeffs).items()}
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))


CouplingSpec = Classical | PowerLaw | Quantum | PolynomialFamily


@dataclass(frozen=True)
class CouplingEval:
    """L0 and Q on the grid; both are zero outside ``defined``."""

    L0: SampledField
    Q: SampledField
    defined: np.ndarray


def family_member(A=0, coeffs=None) -> JetPolynomial:
    """beta(rho, rho', rho'') of the polynomial family, with exact coefficients."""
    coeffs = {_check_family_index(n): c for n, c in dict(coeffs or {}).items()}
    return family_beta(A, coeffs)


def _raise_on_nodes(rho, grid, floor, what="density"):
    nodes = interior_nodes(rho, floor)
    if nodes.size:
        x = grid.x[nodes[0]]
        raise DivisionByFloor(f"{what} is below the floor at x={x:.6g} inside the support")


def l0_values(spec, rho: np.ndarray, grid: GridSpec, scheme: str = "central4",
              floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Array-level L0 used by the propagators.

    Variants that divide by rho are evaluated wherever rho > 0 (finite
    differences keep their relative accuracy deep in the tails); points
    where rho underflows to zero get L0 = 0.  A sub-floor point inside the
    support raises :class:`DivisionByFloor`.
    """
    rho = np.asarray(rho, dtype=float)
    if isinstance(spec, Classical):
        return np.zeros_like(rho)
    if isinstance(spec, PowerLaw):
        return spec.coeff * spec.n * rho ** (spec.n - 1)
    _raise_on_nodes(rho, grid, floor)
    pos = rho > 0
    out = np.zeros_like(rho)
    if isinstance(spec, Quantum):
        scale = spec.hbar_eff**2 / (2 * spec.mass)
        if scheme == "spectral":
            u = np.sqrt(rho)
            upp = diff(u, grid, 2, scheme)
            out[pos] = scale * upp[pos] / u[pos]
            return out
        # Finite differences use u''/u = l'' + l'^2 with l = ln(u): l is smooth
        # (quadratic for a Gaussian) even where u falls off by orders of magnitude.
        ell = 0.5 * np.log(np.where(pos, rho, np.finfo(float).tiny))
        out[pos] = scale * (diff(ell, grid, 2, scheme) + diff(ell, grid, 1, scheme) ** 2)[pos]
        return out
    if isinstance(spec, PolynomialFamily):
        r1 = diff(rho, grid, 1, scheme)
        r2 = diff(rho, grid, 2, scheme)
        needs_slope = any(n != 0 for n in spec.coeffs)
        if needs_slope:
            mask = above_floor(rho, floor)
            scale = np.max(np.abs(r1)) if r1.size else 0.0
            flat = mask & (np.abs(r1) <= floor * scale)
            if np.any(flat):
                x = grid.x[np.flatnonzero(flat)[0]]
                raise DivisionByFloor(f"rho' vanishes at x={x:.6g}; the family member divides by it")
        r, g, h = rho[pos], r1[pos], r2[pos]
        val = np.full(r.shape, float(spec.A))
        with np.errstate(divide="ignore", invalid="ignore"):
            for n, cn in spec.coeffs.items():
                cn = float(cn)
                val += cn * r ** (n - 1) * g ** (-n) * h
                val -= cn * (n - 1) / (n - 2) * r ** (n - 2) * g ** (2 - n)
        out[pos] = val
        return out
    raise TypeError(f"unknown coupling {spec!r}")


def q_values(spec, rho: np.ndarray, grid: GridSpec, l0: np.ndarray, scheme: str = "central4") -> np.ndarray:
    if isinstance(spec, Classical):
        return np.zeros_like(rho)
    if isinstance(spec, PowerLaw):
        return spec.coeff * rho**spec.n
    if isinstance(spec, Quantum):
        du = diff(np.sqrt(rho), grid, 1, scheme)
        return spec.hbar_eff**2 / (2 * spec.mass) * du**2
    # Q' = rho' L0 fixes Q up to a constant; pin Q = 0 at the left edge.
    return cumulative_simpson(diff(rho, grid, 1, scheme) * l0, dx=grid.dx, initial=0.0)


def eval_L0(spec, rho: SampledField, scheme: str = "central4",
            floor: float = DENSITY_FLOOR) -> CouplingEval:
    """Evaluate L0 and Q for ``spec`` on a sampled density."""
    grid = rho.grid
    values = np.asarray(rho.values)
    if np.any(values < 0):
        raise ValueError("density must be non-negative")
    l0 = l0_values(spec, values, grid, scheme, floor)
    q = q_values(spec, values, grid, l0, scheme)
    if isinstance(spec, (Classical, PowerLaw)):
        defined = np.ones(grid.n, dtype=bool)
    else:
        defined = above_floor(values, floor)
    l0 = np.where(defined, l0, 0.0)
    q = np.where(defined, q, 0.0)
    return CouplingEval(SampledField(grid, l0), SampledField(grid, q), defined)


def describe(spec) -> dict:
    """Plain-dict form used in configs and summaries."""
    if isinstance(spec, Classical):
        return {"kind": "classical"}
    if isinstance(spec, PowerLaw):
        return {"kind": "power_law", "n": spec.n, "coeff": spec.coeff}
    if isinstance(spec, Quantum):
        return {"kind": "quantum", "hbar_eff": spec.hbar_eff, "mass": spec.mass}
    return {"kind": "polynomial_family", "A": float(spec.A),
            "coeffs": {int(n): float(Fraction(c)) if not isinstance(c, float) else c
                       for n, c in spec.coeffs.items()}}
