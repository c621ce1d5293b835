"""Exact Laurent polynomials in jet variables and the variational checks built on them.

Jet variables are ``u0 = rho, u1 = rho', u2 = rho'', u3, u4``; they are
treated as independent symbols, and ``d/dx`` acts through the chain rule
``sum_k u_{k+1} d/du_k``.  All coefficients are :class:`fractions.Fraction`,
so every residual below is an exact zero/non-zero decision.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from numbers import Rational

import numpy as np

from .errors import ExponentOverflow, JetOverflow

NVARS = 5
MAX_EXPONENT = 16
VAR_NAMES = ("rho", "rho'", "rho''", "rho'''", "rho''''")


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c).limit_denominator(10**12) if c != int(c) else Fraction(int(c))
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"cannot use {type(c).__name__} as an exact coefficient")


def _pad(exps) -> tuple:
    exps = tuple(int(e) for e in exps)
    if len(exps) > NVARS:
        raise JetOverflow(f"jet variables go up to u{NVARS - 1}")
    return exps + (0,) * (NVARS - len(exps))


class JetPolynomial:
    """Sparse map ``exponent tuple -> Fraction`` with canonical term order."""

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        acc: dict[tuple, Fraction] = {}
        for exps, coeff in dict(terms or {}).items():
            key = _pad(exps)
            acc[key] = acc.get(key, Fraction(0)) + _as_fraction(coeff)
        clean = {}
        for key in sorted(acc):
            c = acc[key]
            if c == 0:
                continue
            if any(abs(e) > MAX_EXPONENT for e in key):
                raise ExponentOverflow(f"exponent {key} outside |a| <= {MAX_EXPONENT}")
            clean[key] = c
        self._terms = clean

    # constructors
    @classmethod
    def zero(cls) -> "JetPolynomial":
        return cls()

    @classmethod
    def const(cls, c) -> "JetPolynomial":
        return cls({(0,) * NVARS: c})

    @classmethod
    def var(cls, k: int, power: int = 1) -> "JetPolynomial":
        if not 0 <= k < NVARS:
            raise JetOverflow(f"no jet variable u{k}")
        exps = [0] * NVARS
        exps[k] = power
        return cls({tuple(exps): 1})

    @classmethod
    def monomial(cls, exps, coeff=1) -> "JetPolynomial":
        return cls({_pad(exps): coeff})

    # access
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def max_order(self) -> int:
        """Highest jet index that appears with a non-zero exponent (-1 for constants)."""
        order = -1
        for exps in self._terms:
            for k, e in enumerate(exps):
                if e:
                    order = max(order, k)
        return order

    def degree_in(self, k: int) -> int:
        return max((e[k] for e in self._terms), default=0)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, JetPolynomial):
            return other
        try:
            return JetPolynomial.const(_as_fraction(other))
        except TypeError:
            return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        merged = dict(self._terms)
        for k, c in other._terms.items():
            merged[k] = merged.get(k, Fraction(0)) + c
        return JetPolynomial(merged)

    __radd__ = __add__

    def __neg__(self):
        return JetPolynomial({k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[tuple, Fraction] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                key = tuple(a + b for a, b in zip(ka, kb))
                out[key] = out.get(key, Fraction(0)) + ca * cb
        return JetPolynomial(out)

    __rmul__ = __mul__

    def __pow__(self, p: int):
        if int(p) != p or p < 0:
            raise ValueError("only non-negative integer powers")
        result = JetPolynomial.const(1)
        for _ in range(int(p)):
            result = result * self
        return result

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._terms == other._terms

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    # calculus
    def partial(self, k: int) -> "JetPolynomial":
        out = {}
        for exps, c in self._terms.items():
            e = exps[k]
            if e:
                new = list(exps)
                new[k] = e - 1
                out[tuple(new)] = c * e
        return JetPolynomial(out)

    def total_derivative(self) -> "JetPolynomial":
        """d/dx = sum_k u_{k+1} d/du_k; needs u_{k+1} to exist."""
        if self.max_order() >= NVARS - 1:
            raise JetOverflow(f"d/dx of a polynomial in u{NVARS - 1} needs u{NVARS}")
        result = JetPolynomial()
        for k in range(NVARS - 1):
            dk = self.partial(k)
            if dk:
                result = result + dk * JetPolynomial.var(k + 1)
        return result

    def evaluate(self, *jets):
        """Numerically evaluate with ``jets[k]`` substituted for u_k."""
        values = [np.asarray(j, dtype=float) for j in jets]
        total = 0.0
        for exps, c in self._terms.items():
            term = float(c)
            for k, e in enumerate(exps):
                if e:
                    if k >= len(values):
                        raise ValueError(f"polynomial needs u{k}, only {len(values)} jets given")
                    term = term * values[k] ** e
            total = total + term
        return total

    def __repr__(self):
        return f"JetPolynomial({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for exps, c in self._terms.items():
            factors = []
            for name, e in zip(VAR_NAMES, exps):
                if e == 1:
                    factors.append(name)
                elif e:
                    factors.append(f"{name}^{e}")
            mono = "*".join(factors)
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"({c})*{mono}")
        return " + ".join(parts).replace("+ -", "- ")


U0, U1, U2, U3, U4 = (JetPolynomial.var(k) for k in range(NVARS))


def D(p: JetPolynomial, times: int = 1) -> JetPolynomial:
    for _ in range(times):
        p = p.total_derivative()
    return p


def _require_second_order(p: JetPolynomial, what: str):
    if p.max_order() > 2:
        raise ValueError(f"{what} may depend on rho, rho', rho'' only")


def pde_residual(beta: JetPolynomial) -> JetPolynomial:
    """-d2/dx2 dbeta/du2 + d/dx dbeta/du1 - dbeta/du0 + beta/u0."""
    _require_second_order(beta, "beta")
    return (-D(beta.partial(2), 2) + D(beta.partial(1)) - beta.partial(0)
            + beta * JetPolynomial.var(0, -1))


def variational_derivative(lagrangian: JetPolynomial) -> JetPolynomial:
    """Euler operator sum_k (-d/dx)^k dL/du_k for a Lagrangian in u0..u2."""
    _require_second_order(lagrangian, "the Lagrangian")
    out = JetPolynomial()
    for k in range(3):
        term = D(lagrangian.partial(k), k)
        out = out + (term if k % 2 == 0 else -term)
    return out


def euler_lagrange_residual(L0: JetPolynomial) -> JetPolynomial:
    """Rho-dependent part of the Euler-Lagrange equation of rho*(L - L0).

    The full equation reads ``L - L0 + rest = 0``; with ``L = L0`` enforced
    by the field equation only ``rest`` survives, and that is returned.
    It is computed from the generic Euler operator, independently of
    :func:`pde_residual`.
    """
    _require_second_order(L0, "L0")
    return variational_derivative(-JetPolynomial.var(0) * L0) + L0


def first_order_criterion(beta: JetPolynomial) -> tuple[bool, JetPolynomial]:
    """True iff d2/dx2 of dbeta/du2 vanishes identically; the second item is that expression."""
    _require_second_order(beta, "beta")
    witness = D(beta.partial(2), 2)
    return witness.is_zero(), witness


# --- polynomial family -----------------------------------------------------

def family_beta(A=0, coeffs=None) -> JetPolynomial:
    """beta = C(rho, rho') rho'' + D(rho, rho') for the polynomial family.

    C = sum_n C_n rho^n rho'^-n,
    D = A rho - sum_n (n-1)/(n-2) C_n rho^(n-1) rho'^(2-n).
    No index validation here; n = 2 is rejected because the formula is singular.
    """
    beta = JetPolynomial.monomial((1,), A)
    for n, cn in dict(coeffs or {}).items():
        n = int(n)
        if n == 2:
            raise ZeroDivisionError("the family formula is singular at n = 2")
        cn = _as_fraction(cn)
        beta = beta + JetPolynomial.monomial((n, -n, 1), cn)
        beta = beta - JetPolynomial.monomial((n - 1, 2 - n), Fraction(n - 1, n - 2) * cn)
    return beta


# --- coefficient recursions ------------------------------------------------

@dataclass(frozen=True)
class CoefficientGrid:
    """Coefficients c_{n,m}, d_{n,m} of C = sum c rho^n rho'^m and D = sum d rho^n rho'^m."""

    window: tuple[int, int]
    c: dict = field(default_factory=dict)
    d: dict = field(default_factory=dict)

    def to_beta(self) -> JetPolynomial:
        terms = {}
        for (n, m), v in self.c.items():
            terms[(n, m, 1)] = v
        for (n, m), v in self.d.items():
            terms[(n, m, 0)] = v
        return JetPolynomial(terms)

    def family_index(self):
        """Classify against the closed-form family.

        Returns ``("C", n, ratio)`` for a basis vector with c_{n,-n} and
        d_{n-1,2-n} = ratio * c_{n,-n}, ``("A", None, None)`` for the pure
        d_{1,0} solution, and ``None`` for anything else.
        """
        if not self.c and set(self.d) == {(1, 0)}:
            return ("A", None, None)
        if len(self.c) != 1:
            return None
        (n, m), cv = next(iter(self.c.items()))
        if m != -n:
            return None
        extra = set(self.d) - {(n - 1, 2 - n)}
        if extra:
            return None
        dv = self.d.get((n - 1, 2 - n), Fraction(0))
        return ("C", n, dv / cv)


def recursion_rows(window=(-6, 6)) -> list[dict]:
    """Linear constraints on the coefficients, one dict per equation.

    Keys are ``("c", n, m)`` / ``("d", n, m)``; coefficients outside the
    window are taken as zero, so equations touching the window are kept
    even when their partner lies outside.
    """
    lo, hi = window
    inside = lambda n, m: lo <= n <= hi and lo <= m <= hi  # noqa: E731
    rows = []
    for n, m in product(range(lo - 2, hi + 3), repeat=2):
        for coeffs in (
            {("c", n + 1, m): n * m + 2 * n + m + 1, ("d", n, m + 2): -(m + 1) * (m + 2)},
            {("c", n + 2, m - 2): (n + 1) * (n + 2), ("d", n + 1, m): -(n * m - n + m)},
        ):
            row = {k: v for k, v in coeffs.items() if v != 0 and inside(k[1], k[2])}
            if row:
                rows.append(row)
    return rows


def _echelon(matrix: list[list[int]]):
    """Fraction-free (Bareiss) row echelon form; returns rows and pivot columns."""
    m = [row[:] for row in matrix]
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    r, prev, pivots = 0, 1, []
    for col in range(ncols):
        if r == nrows:
            break
        piv = next((i for i in range(r, nrows) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][col]
        for i in range(r + 1, nrows):
            a = m[i][col]
            for j in range(col + 1, ncols):
                num = p * m[i][j] - a * m[r][j]
                m[i][j] = num // prev
            m[i][col] = 0
        prev = p
        pivots.append(col)
        r += 1
    return m[:r], pivots


def rational_nullspace(rows: list[dict], variables: list) -> list[dict]:
    """Exact nullspace basis of a sparse integer system.

    Variables coupled by no equation chain are solved independently
    (connected components), each by fraction-free elimination.
    """
    parent = {v: v for v in variables}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for row in rows:
        keys = list(row)
        for k in keys[1:]:
            a, b = find(keys[0]), find(k)
            if a != b:
                parent[a] = b
    comps: dict = {}
    for v in variables:
        comps.setdefault(find(v), []).append(v)
    comp_rows: dict = {}
    for row in rows:
        comp_rows.setdefault(find(next(iter(row))), []).append(row)

    basis = []
    for root, cvars in comps.items():
        crow = comp_rows.get(root, [])
        col = {v: i for i, v in enumerate(cvars)}
        mat = [[0] * len(cvars) for _ in crow]
        for i, row in enumerate(crow):
            for k, v in row.items():
                mat[i][col[k]] = int(v)
        ech, pivots = _echelon(mat) if mat else ([], [])
        free = [j for j in range(len(cvars)) if j not in pivots]
        for f in free:
            x = [Fraction(0)] * len(cvars)
            x[f] = Fraction(1)
            for r in range(len(pivots) - 1, -1, -1):
                p = pivots[r]
                acc = sum((ech[r][j] * x[j] for j in range(p + 1, len(cvars))), Fraction(0))
                x[p] = -acc / ech[r][p]
            basis.append({cvars[j]: x[j] for j in range(len(cvars)) if x[j] != 0})
    return basis


@dataclass(frozen=True)
class RecursionSolution:
    window: tuple[int, int]
    basis: list

    def admitted_indices(self) -> set:
        out = set()
        for g in self.basis:
            tag = g.family_index()
            if tag and tag[0] == "C":
                out.add(tag[1])
        return out

    def has_constant_solution(self) -> bool:
        return any((g.family_index() or (None,))[0] == "A" for g in self.basis)


def solve_recursions(window=(-6, 6)) -> RecursionSolution:
    lo, hi = window
    variables = [(kind, n, m) for kind in ("c", "d")
                 for n in range(lo, hi + 1) for m in range(lo, hi + 1)]
    rows = recursion_rows(window)
    basis = []
    for vec in rational_nullspace(rows, variables):
        c = {(n, m): v for (kind, n, m), v in vec.items() if kind == "c"}
        d = {(n, m): v for (kind, n, m), v in vec.items() if kind == "d"}
        lead = next(iter(c.values())) if c else next(iter(d.values()))
        c = {k: v / lead for k, v in sorted(c.items())}
        d = {k: v / lead for k, v in sorted(d.items())}
        basis.append(CoefficientGrid((lo, hi), c, d))
    basis.sort(key=lambda g: (sorted(g.c) or [(99, 99)], sorted(g.d)))
    return RecursionSolution((lo, hi), basis)


def expected_family_ratio(n: int) -> Fraction:
    """d_{n-1,2-n} / c_{n,-n} in the closed-form family."""
    return -Fraction(n - 1, n - 2)


# --- verification suite ----------------------------------------------------

FAMILY_TEST_INDICES = (-3, -2, -1, 0, 3, 4)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    witness: str = ""


def window_indices(window=(-6, 6)) -> set:
    """Family indices whose two coefficients c_{n,-n}, d_{n-1,2-n} fit in the window."""
    lo, hi = window
    return {n for n in range(lo, hi + 1)
            if lo <= -n <= hi and lo <= n - 1 <= hi and lo <= 2 - n <= hi}


def _zero_check(name, poly):
    return Check(name, poly.is_zero(), "" if poly.is_zero() else str(poly))


def run_suite(window=(-6, 6)) -> list[Check]:
    """Every exact check of the variational derivation, in a fixed order."""
    checks = []
    inv = JetPolynomial.var(0, -1)
    quantum = U2 - Fraction(1, 2) * U1**2 * inv
    minus_one = U1 * U2 * inv - Fraction(2, 3) * U1**3 * inv * inv
    checks.append(_zero_check("pde_residual(n=0 solution)", pde_residual(quantum)))
    checks.append(_zero_check("pde_residual(n=-1 solution)", pde_residual(minus_one)))
    checks.append(_zero_check("pde_residual(A solution)", pde_residual(U0)))
    for n in FAMILY_TEST_INDICES:
        checks.append(_zero_check(f"pde_residual(family n={n})", pde_residual(family_beta(0, {n: 1}))))
    l0 = quantum * inv
    checks.append(_zero_check("euler_lagrange_residual(n=0 L0)", euler_lagrange_residual(l0)))
    probe = l0 + U1 * inv * inv + U0 * U2
    identity = euler_lagrange_residual(probe) - pde_residual(U0 * probe)
    checks.append(_zero_check("euler_lagrange_residual = pde_residual(u0 L0)", identity))

    sol = solve_recursions(window)
    bad = [str(g.to_beta()) for g in sol.basis if not pde_residual(g.to_beta()).is_zero()]
    checks.append(Check("nullspace vectors solve the PDE", not bad, "; ".join(bad)))
    unclassified = [g for g in sol.basis if g.family_index() is None]
    checks.append(Check("nullspace vectors are family members", not unclassified,
                        "; ".join(str(g.to_beta()) for g in unclassified)))
    wrong = [(tag[1], tag[2]) for tag in (g.family_index() for g in sol.basis)
             if tag and tag[0] == "C" and tag[2] != expected_family_ratio(tag[1])]
    checks.append(Check("D/C ratio is -(n-1)/(n-2)", not wrong,
                        ", ".join(f"n={n}: {r}" for n, r in wrong)))
    checks.append(Check("constant solution A present", sol.has_constant_solution()))
    admitted = sol.admitted_indices()
    expected = window_indices(window) - {1, 2}
    missing = sorted(expected - admitted)
    checks.append(Check("admitted indices cover n<=0 and n>=3", not missing,
                        f"missing {missing}" if missing else ""))
    for n in (1, 2):
        found = [g for g in sol.basis if (g.family_index() or (None, None))[1] == n]
        witness = "; ".join(f"beta = {g.to_beta()}, pde_residual = {pde_residual(g.to_beta())}"
                            for g in found)
        checks.append(Check(f"no solution at n={n}", not found, witness))

    flags = {}
    for n in FAMILY_TEST_INDICES:
        ok, w = first_order_criterion(family_beta(0, {n: 1}))
        flags[n] = (ok, w)
    wrong = [n for n, (ok, _) in flags.items() if ok != (n == 0)]
    checks.append(Check("first_order_criterion true only for n=0", not wrong,
                        "; ".join(f"n={n}: {flags[n][1]}" for n in wrong)))
    return checks
