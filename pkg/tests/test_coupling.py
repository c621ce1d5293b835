from fractions import Fraction

import numpy as np
import pytest

from statqm.coupling import (Classical, PolynomialFamily, PowerLaw, Quantum, describe, eval_L0,
                             family_member, l0_values)
from statqm.errors import BadIndex, DivisionByFloor
from statqm.fields import GridSpec, SampledField, diff, gaussian, gaussian_state, normalize
from statqm.symbolic import U0, U1, U2, JetPolynomial


def _gauss(grid, mu=0.0, sigma=1.0):
    return SampledField(grid, gaussian_state(grid, mu, sigma).rho)


def _monotone_density(n=2048):
    g = GridSpec(0.0, 5.0, n)
    return g, normalize(np.exp(-g.x) * (1 + 0.3 * np.sin(g.x) ** 2), g)


def test_classical_is_zero(grid):
    ev = eval_L0(Classical(), _gauss(grid))
    assert np.all(ev.L0.values == 0) and np.all(ev.Q.values == 0)
    assert ev.defined.all()


def test_power_law_n2():
    g = GridSpec.centered(8, 128)
    rho = _gauss(g)
    ev = eval_L0(PowerLaw(2, -0.3), rho)
    np.testing.assert_allclose(ev.L0.values, 2 * -0.3 * rho.values, rtol=1e-15)
    np.testing.assert_allclose(ev.Q.values, -0.3 * rho.values**2, rtol=1e-15)


def test_quantum_gaussian_closed_form():
    # (sqrt rho)''/sqrt rho for a Gaussian is x^2/4 sigma^4 - 1/(2 sigma^2)
    hbar, m, mu, sig = 1.3, 0.7, 0.3, 1.1
    g = GridSpec.centered(16, 512)
    rho = _gauss(g, mu, sig)
    ev = eval_L0(Quantum(hbar, m), rho, scheme="spectral")
    y = g.x - mu
    exact = hbar**2 / (2 * m) * (y**2 / (4 * sig**4) - 1 / (2 * sig**2))
    core = rho.values > 1e-6 * rho.values.max()
    assert np.max(np.abs(ev.L0.values - exact)[core]) < 1e-8


def test_quantum_log_form_exact_on_gaussian():
    g = GridSpec.centered(10, 256)
    rho = _gauss(g, 0.2, 0.9)
    l0 = l0_values(Quantum(), rho.values, g, "central4")
    exact = 0.5 * ((g.x - 0.2) ** 2 / (4 * 0.9**4) - 1 / (2 * 0.9**2))
    mask = rho.values > 0
    assert np.max(np.abs(l0 - exact)[mask]) < 1e-9


def test_quantum_c0():
    assert Quantum(2.0, 0.5).c0 == 2.0


def test_family_n0_equals_quantum():
    q = Quantum(1.0, 1.0)
    g = GridSpec.centered(15, 512)
    rho = _gauss(g, 0.4, 1.2)
    a = eval_L0(q, rho, scheme="spectral").L0.values
    b = eval_L0(PolynomialFamily(0.0, {0: q.c0}), rho, scheme="spectral").L0.values
    core = rho.values > 1e-4 * rho.values.max()
    assert np.max(np.abs(a - b)[core]) < 1e-10


@pytest.mark.parametrize("spec", [PowerLaw(2, 0.4), PowerLaw(3, -1.0), Quantum(1.0, 1.0),
                                  PolynomialFamily(0.1, {3: 0.5, -1: 0.2, 0: 0.3})])
def test_l0_equals_q_prime_over_rho_prime(spec):
    g, rho = _monotone_density()
    ev = eval_L0(spec, SampledField(g, rho), scheme="central4")
    dq = diff(ev.Q.values, g, 1, "central4")
    dr = diff(rho, g, 1, "central4")
    inner = slice(8, -8)
    L = ev.L0.values[inner]
    # relative to the size of L0: the quantum L0 crosses zero inside the box
    rel = np.abs(dq[inner] / dr[inner] - L) / np.max(np.abs(L))
    assert np.max(rel) < 1e-6


def test_family_member_quantum():
    assert family_member(0, {0: 1}) == U2 - Fraction(1, 2) * U1**2 * JetPolynomial.var(0, -1)


def test_family_member_minus_one():
    inv = JetPolynomial.var(0, -1)
    assert family_member(0, {-1: 1}) == U1 * U2 * inv - Fraction(2, 3) * U1**3 * inv * inv


def test_family_member_constant():
    assert family_member(Fraction(3, 2)) == Fraction(3, 2) * U0
    g = GridSpec.centered(8, 64)
    ev = eval_L0(PolynomialFamily(1.5), _gauss(g))
    np.testing.assert_allclose(ev.L0.values[ev.defined], 1.5)


@pytest.mark.parametrize("n", [1, 2, 1.5])
def test_bad_family_index(n):
    with pytest.raises(BadIndex):
        family_member(0, {n: 1})
    with pytest.raises(BadIndex):
        PolynomialFamily(0, {n: 1})


@pytest.mark.parametrize("n", [0, -2])
def test_bad_power_law(n):
    with pytest.raises(BadIndex):
        PowerLaw(n, 1.0)


def test_symbolic_numeric_agreement():
    g, rho = _monotone_density(1024)
    spec = PolynomialFamily(0.2, {-2: 0.3, 0: 0.25, 4: -0.1})
    r1, r2 = diff(rho, g, 1, "central4"), diff(rho, g, 2, "central4")
    beta = family_member(spec.A, spec.coeffs)
    sym = beta.evaluate(rho, r1, r2) / rho
    num = l0_values(spec, rho, g, "central4")
    np.testing.assert_allclose(num, sym, rtol=1e-10)


def test_division_by_floor_inside_support():
    g = GridSpec.centered(8, 128)
    rho = normalize(g.x**2 * np.exp(-g.x**2), g)
    with pytest.raises(DivisionByFloor):
        eval_L0(Quantum(), SampledField(g, rho))


def test_family_divides_by_slope():
    g = GridSpec.centered(8, 128)
    with pytest.raises(DivisionByFloor):
        eval_L0(PolynomialFamily(0, {3: 1.0}), _gauss(g))


def test_undefined_points_are_zeroed():
    g = GridSpec.centered(40, 256)
    rho = SampledField(g, normalize(gaussian(g, 0, 1), g))
    ev = eval_L0(Quantum(), rho)
    assert not ev.defined.all()
    assert np.all(ev.L0.values[~ev.defined] == 0)


def test_describe_round_trip_keys():
    assert describe(Classical()) == {"kind": "classical"}
    assert describe(PowerLaw(2, 1.5)) == {"kind": "power_law", "n": 2, "coeff": 1.5}
    assert describe(PolynomialFamily(0.0, {0: 0.25}))["coeffs"] == {0: 0.25}
