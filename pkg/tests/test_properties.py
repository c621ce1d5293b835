from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

from statqm.coupling import Classical, PowerLaw, Quantum
from statqm.dynamics import EvolutionConfig, SplitStepPropagator, rhs
from statqm.fields import (FieldState, GridSpec, from_wavefunction, gaussian_state, integrate, normalize,
                           to_wavefunction)
from statqm.maxent import (EnergyLandscape, canonical_distribution, entropy, mean_energy, solve_lambda)
from statqm.momentum import fourier_forward, h_diagnostic, quantum_momentum_density
from statqm.symbolic import D, JetPolynomial, pde_residual

G = GridSpec.centered(16, 256)
FAST = settings(max_examples=30, deadline=None)

mus = st.floats(-2, 2)
sigmas = st.floats(0.8, 1.6)
momenta = st.floats(-2, 2)
coeffs = st.floats(-1, 1)


def state(mu, sigma, p0, c2, c3):
    base = gaussian_state(G, mu, sigma, p0)
    return FieldState(G, base.rho, base.s_phase + 0.1 * c2 * G.x**2 + 0.3 * c3 * np.sin(G.x))


@FAST
@given(mus, sigmas, momenta, coeffs, coeffs)
def test_wavefunction_round_trip(mu, sigma, p0, c2, c3):
    s0 = state(mu, sigma, p0, c2, c3)
    back = from_wavefunction(to_wavefunction(s0))
    np.testing.assert_allclose(back.rho, s0.rho, atol=1e-14)
    core = s0.rho > 1e-8 * s0.rho.max()
    offset = (back.s_phase - s0.s_phase)[core]
    assert np.ptp(offset) < 1e-8


@FAST
@given(mus, sigmas, momenta, coeffs, coeffs,
       st.sampled_from([Classical(), PowerLaw(2, -0.5), PowerLaw(3, 0.2), Quantum()]))
def test_rhs_conserves_probability(mu, sigma, p0, c2, c3, coupling):
    drho, _ = rhs(state(mu, sigma, p0, c2, c3), EvolutionConfig(dt=1e-3, t_final=0, coupling=coupling))
    assert abs(integrate(drho.values, G)) < 1e-11


@FAST
@given(mus, sigmas, momenta, st.floats(0.001, 0.1))
def test_split_step_unitary(mu, sigma, p0, dt):
    psi = to_wavefunction(gaussian_state(G, mu, sigma, p0))
    out = SplitStepPropagator(G, 0.5 * G.x**2, dt).step(psi)
    assert abs(out.norm - psi.norm) < 1e-13


@FAST
@given(mus, sigmas, momenta, coeffs, coeffs, st.floats(0.5, 2.0))
def test_h_zeroth_and_first_moments_vanish(mu, sigma, p0, c2, c3, s):
    m = h_diagnostic(state(mu, sigma, p0, c2, c3), s).moments
    assert abs(m[0]) < 1e-10 and abs(m[1]) < 1e-8


@FAST
@given(mus, sigmas, momenta)
def test_quantum_momentum_density_normalized(mu, sigma, p0):
    dens = quantum_momentum_density(fourier_forward(to_wavefunction(gaussian_state(G, mu, sigma, p0))))
    assert abs(dens.norm() - 1) < 1e-12
    assert abs(dens.mean() - p0) < 1e-10


@FAST
@given(st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8))
def test_normalize(values):
    rho = normalize(np.interp(G.x, np.linspace(-16, 16, 8), values), G)
    assert abs(integrate(rho, G) - 1) < 1e-13


energies = st.lists(st.floats(-5, 5), min_size=2, max_size=8).filter(lambda e: np.ptp(e) > 1e-3)


@FAST
@given(energies, st.floats(-3, 3))
def test_canonical_distribution_invariants(e, lam):
    land = EnergyLandscape.discrete(e)
    p = canonical_distribution(land, lam)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)
    assert min(e) - 1e-12 <= mean_energy(land, lam) <= max(e) + 1e-12
    assert entropy(land, p) <= np.log(len(e)) + 1e-12


@FAST
@given(energies, st.floats(0.05, 0.95))
def test_solve_lambda_hits_target(e, frac):
    land = EnergyLandscape.discrete(e)
    target = min(e) + frac * np.ptp(e)
    lam = solve_lambda(land, target)
    assert abs(mean_energy(land, lam) - target) <= 1e-10 * np.ptp(e)


exponents = st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(0, 2))
fractions_ = st.fractions(min_value=-5, max_value=5, max_denominator=6)
polys = st.dictionaries(exponents, fractions_, min_size=1, max_size=4).map(JetPolynomial)


@settings(max_examples=40, deadline=None)
@given(polys, polys, fractions_)
def test_pde_residual_linear(p, q, a):
    assert pde_residual(p + a * q) == pde_residual(p) + a * pde_residual(q)


@settings(max_examples=40, deadline=None)
@given(polys, polys)
def test_total_derivative_leibniz(p, q):
    assert D(p * q) == D(p) * q + p * D(q)


@settings(max_examples=40, deadline=None)
@given(polys, st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3))
def test_evaluate_is_ring_homomorphism(p, jets):
    q = p * p + Fraction(1, 3)
    assert np.isclose(q.evaluate(*jets), p.evaluate(*jets) ** 2 + 1 / 3, rtol=1e-10, atol=1e-10)
