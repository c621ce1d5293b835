import numpy as np
import pytest

from statqm.coupling import Classical, PolynomialFamily, PowerLaw, Quantum
from statqm.dynamics import (EvolutionConfig, Markers, Potential, SplitStepPropagator, energy_balance_residual,
                             evolve, fill_vacuum, markers_to_state, rhs, split_step_schrodinger, stable_dt,
                             step_markers, step_rk4)
from statqm.errors import BlowUp, NodeError
from statqm.fields import (FieldState, GridSpec, SampledField, WaveFunction, diff, gaussian, gaussian_state, integrate,
                           normalize, to_wavefunction)
from statqm.observables import time_derivative


def test_rhs_classical_plane_phase():
    g = GridSpec.centered(10, 256)
    p0, m = 0.7, 1.3
    st = gaussian_state(g, 0, 1, p0)
    cfg = EvolutionConfig(dt=0.01, t_final=0.0, coupling=Classical(), mass=m)
    drho, ds = rhs(st, cfg)
    core = st.rho > 1e-8 * st.rho.max()
    np.testing.assert_allclose(drho.values[core], -(p0 / m) * diff(st.rho, g, 1, "central4")[core], atol=1e-12)
    np.testing.assert_allclose(ds.values, -p0**2 / (2 * m), rtol=1e-11)


def test_rhs_quantum_ground_state_is_stationary():
    # ground state of m omega^2 x^2 / 2: rho variance hbar/(2 m omega), S = 0
    hbar, m, w = 1.0, 1.0, 1.5
    g = GridSpec.centered(8, 256)
    st = gaussian_state(g, 0, np.sqrt(hbar / (2 * m * w)))
    cfg = EvolutionConfig(dt=1e-3, t_final=0.0, coupling=Quantum(hbar, m), mass=m, s_const=hbar,
                          potential=Potential.harmonic(w, m))
    drho, ds = rhs(st, cfg)
    np.testing.assert_allclose(ds.values, -hbar * w / 2, atol=1e-9)
    assert np.max(np.abs(drho.values)) < 1e-14


@pytest.mark.parametrize("coupling", [Classical(), PowerLaw(2, -0.5), Quantum(), PolynomialFamily(0.3)])
def test_rhs_conserves_probability(coupling):
    g = GridSpec.centered(10, 256)
    st = FieldState(g, gaussian_state(g, 0, 1.2).rho, 0.3 * g.x**2)
    drho, _ = rhs(st, EvolutionConfig(dt=1e-3, t_final=0, coupling=coupling))
    assert abs(integrate(drho.values, g)) < 1e-12


def test_constant_potential_shifts_phase_rate_only():
    g = GridSpec.centered(10, 128)
    st = gaussian_state(g, 0, 1, 0.4)
    sampled = Potential.from_samples(Potential().sample(g))
    base = EvolutionConfig(dt=1e-3, t_final=0, coupling=PowerLaw(2, 0.2), potential=sampled)
    shifted = EvolutionConfig(dt=1e-3, t_final=0, coupling=PowerLaw(2, 0.2),
                              potential=SampledField(g, np.full(g.n, 2.5)))
    d0, s0 = rhs(st, base)
    d1, s1 = rhs(st, shifted)
    np.testing.assert_array_equal(d0.values, d1.values)
    np.testing.assert_allclose(s1.values - s0.values, -2.5, atol=1e-9)


def test_one_rk4_step_advects_classical_gaussian():
    g = GridSpec.centered(10, 512)
    p0, dt = 0.8, 0.01
    st = gaussian_state(g, 0, 1, p0)
    out = step_rk4(st, EvolutionConfig(dt=dt, t_final=dt, coupling=Classical()))
    exact = normalize(gaussian(g, p0 * dt, 1), g)
    assert np.max(np.abs(out.rho - exact)) < 1e-8
    assert out.t == dt


def test_rk4_zero_step_is_identity():
    g = GridSpec.centered(10, 128)
    st = gaussian_state(g, 0, 1, 0.3)
    assert step_rk4(st, EvolutionConfig(dt=0.1, t_final=0.1), dt=0.0) is st


def test_overflow_guard_raises_blowup():
    g = GridSpec.centered(10, 128)
    st = gaussian_state(g, 0, 1, 0.3)
    with pytest.raises(BlowUp) as err:
        step_rk4(st, EvolutionConfig(dt=0.01, t_final=0.01, overflow=1e-3))
    assert err.value.t == pytest.approx(0.01)


def test_split_step_free_gaussian_spreading():
    g = GridSpec.centered(30, 1024)
    sigma0, hbar, m, t_end = 1.0, 1.0, 1.0, 2.0
    psi = to_wavefunction(gaussian_state(g, 0, sigma0, 0.5))
    for _ in range(200):
        psi = split_step_schrodinger(psi, None, t_end / 200, m)
    rho = psi.density
    mean = integrate(rho * g.x, g)
    var = integrate(rho * (g.x - mean) ** 2, g)
    assert var == pytest.approx(sigma0**2 * (1 + (hbar * t_end / (2 * m * sigma0**2)) ** 2), rel=1e-10)
    assert mean == pytest.approx(0.5 * t_end, rel=1e-10)


def test_split_step_ground_state_phase():
    g = GridSpec.centered(10, 256)
    w = 1.0
    st = gaussian_state(g, 0, np.sqrt(0.5 / w))
    psi0 = to_wavefunction(st)
    pot = Potential.harmonic(w)
    prop = SplitStepPropagator(g, pot.value(g.x), 1e-4, 1.0, 1.0)
    psi = psi0
    for _ in range(10_000):
        psi = prop.step(psi)
    core = st.rho > 1e-6 * st.rho.max()
    np.testing.assert_allclose(np.abs(psi.values)[core], np.abs(psi0.values)[core], atol=1e-8)
    ratio = psi.values[core] / psi0.values[core]
    np.testing.assert_allclose(ratio, np.exp(-0.5j * w * psi.t), atol=1e-7)


def test_split_step_unitary_over_many_steps():
    g = GridSpec.centered(20, 256)
    psi = to_wavefunction(gaussian_state(g, 1, 1, 0.5))
    prop = SplitStepPropagator(g, Potential.harmonic(1).value(g.x), 1e-3)
    vals = psi.values
    for _ in range(10_000):
        vals = prop.apply(vals)
    assert abs(integrate(np.abs(vals) ** 2, g) - 1) < 1e-12


def test_split_step_time_reversal():
    g = GridSpec.centered(20, 256)
    psi = to_wavefunction(gaussian_state(g, 1, 1, 0.5))
    v = Potential.harmonic(1).value(g.x)
    back = SplitStepPropagator(g, v, -0.01).step(SplitStepPropagator(g, v, 0.01).step(psi))
    assert np.max(np.abs(back.values - psi.values)) < 1e-12


def test_evolve_zero_horizon():
    g = GridSpec.centered(10, 128)
    st = gaussian_state(g, 0, 1, 0.2)
    traj = evolve(st, EvolutionConfig(dt=0.01, t_final=0.0))
    assert len(traj) == 1
    assert traj.states[0] is st


def test_evolve_records_and_times():
    g = GridSpec.centered(10, 128)
    traj = evolve(gaussian_state(g, 0, 1, 0.2), EvolutionConfig(dt=0.01, t_final=0.25, record_every=10))
    np.testing.assert_allclose(traj.times, [0, 0.1, 0.2, 0.25])
    assert np.all(np.diff(traj.times) > 0)
    for st in traj.states:
        assert abs(st.norm - 1) < 1e-8


@pytest.mark.parametrize("scheme", ["rk4", "lagrangian"])
def test_classical_constant_force(scheme):
    g = GridSpec.centered(10, 256)
    F, T = 0.5, 2.0
    cfg = EvolutionConfig(dt=0.01, t_final=T, record_every=20, scheme=scheme, coupling=Classical(),
                          potential=Potential.linear(F), momentum_rule="hybrid")
    traj = evolve(gaussian_state(g, 0, 1, 0.1), cfg)
    p = traj.series("p_mean")
    np.testing.assert_allclose(p - p[0], F * traj.times, atol=1e-6)


@pytest.mark.parametrize("coupling", [Classical(), PowerLaw(2, -0.5), Quantum()])
def test_rk4_probability_conservation(coupling):
    g = GridSpec.centered(10, 128)
    cfg = EvolutionConfig(dt=1e-3, t_final=0.2, record_every=50, coupling=coupling,
                          potential=Potential.harmonic(1.0))
    traj = evolve(gaussian_state(g, 0.5, 1, 0.2), cfg)
    assert abs(integrate(traj.states[-1].rho, g) - 1) <= 1e-8


def test_quantum_stability_rule_warns():
    g = GridSpec.centered(10, 128)
    cfg = EvolutionConfig(dt=0.01, t_final=0.01, coupling=Quantum())
    assert cfg.dt > stable_dt(g, cfg)
    with pytest.warns(RuntimeWarning):
        evolve(gaussian_state(g, 0, 1), cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.01, t_final=1, scheme="split_step", coupling=Classical())
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.01, t_final=1, scheme="split_step", coupling=Quantum(2.0), s_const=1.0)
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.01, t_final=1, scheme="lagrangian", coupling=Quantum())
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.0, t_final=1)
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.3, t_final=1).n_steps


def test_split_step_scheme_tracks_rho_s_view():
    g = GridSpec.centered(15, 256)
    cfg = EvolutionConfig(dt=0.01, t_final=0.5, record_every=10, scheme="split_step", coupling=Quantum())
    traj = evolve(gaussian_state(g, 0, 1, 0.5), cfg)
    assert len(traj.waves) == len(traj.states) == len(traj.records) == 6
    for w, st in zip(traj.waves, traj.states):
        np.testing.assert_allclose(st.rho, w.density)


def test_split_step_node_gives_none_view():
    g = GridSpec.centered(10, 128)
    psi = WaveFunction(g, g.x * np.exp(-g.x**2 / 2) / np.sqrt(np.sqrt(np.pi) / 2))
    cfg = EvolutionConfig(dt=0.01, t_final=0.02, scheme="split_step", coupling=Quantum())
    traj = evolve(psi, cfg)
    assert all(st is None for st in traj.states)


# --- energy balance ----------------------------------------------------------

def test_energy_balance_quantum_vanishes():
    g = GridSpec.centered(10, 128)
    cfg = EvolutionConfig(dt=1e-3, t_final=0.05, record_every=10, coupling=Quantum(),
                          potential=Potential.harmonic(1.0))
    traj = evolve(gaussian_state(g, 0.5, 0.9, 0.3), cfg)
    r = energy_balance_residual(traj)
    e = abs(traj.records[0].E_mean)
    assert np.max(np.abs(r)) <= 1e-8 * e


def test_energy_balance_classical_hybrid_conserves():
    g = GridSpec.centered(10, 256)
    cfg = EvolutionConfig(dt=1e-2, t_final=1.0, record_every=10, scheme="lagrangian", coupling=Classical(),
                          potential=Potential.harmonic(1.0), momentum_rule="hybrid")
    traj = evolve(gaussian_state(g, 1, 0.7, 0.0), cfg)
    assert np.all(energy_balance_residual(traj)[np.isfinite(energy_balance_residual(traj))] == 0)
    e = traj.series("E_mean")
    assert np.max(np.abs(e - e[0])) < 1e-10 * abs(e[0])


def test_energy_balance_power_law_nonzero():
    g = GridSpec.centered(10, 256)
    T = 0.5
    cfg = EvolutionConfig(dt=1e-3, t_final=T, record_every=10, coupling=PowerLaw(2, -0.5))
    traj = evolve(gaussian_state(g, 0, 1, 0.5), cfg)
    e = traj.series("E_mean")
    de = time_derivative(e, traj.times[1] - traj.times[0])
    assert np.max(np.abs(de)) > 1e-3 * abs(e[0]) / T
    r = energy_balance_residual(traj)
    assert np.max(np.abs(r)) > 1e-3 * abs(e[0]) / T


def test_energy_balance_needs_three_snapshots():
    g = GridSpec.centered(10, 128)
    traj = evolve(gaussian_state(g), EvolutionConfig(dt=0.01, t_final=0.01))
    with pytest.raises(ValueError):
        energy_balance_residual(traj)


# --- vacuum continuation and markers ----------------------------------------

def test_fill_vacuum_exact_for_gaussian_tails():
    g = GridSpec.centered(12, 256)
    rho = gaussian(g, 0.5, 1.0)
    s = 0.3 * g.x + 0.1 * g.x**2
    cut = np.where(rho > 1e-12 * rho.max(), rho, 0.0)
    r2, s2 = fill_vacuum(cut, s)
    np.testing.assert_allclose(r2, rho, rtol=1e-8)
    np.testing.assert_allclose(s2, s, atol=1e-8)


def test_fill_vacuum_rejects_empty_density():
    g = GridSpec.centered(5, 64)
    with pytest.raises(NodeError):
        fill_vacuum(np.zeros(g.n), np.zeros(g.n))


def test_markers_conserve_total_momentum_under_pressure():
    g = GridSpec.centered(8, 128)
    cfg = EvolutionConfig(dt=0.01, t_final=0.1, scheme="lagrangian", coupling=PowerLaw(2, -0.5),
                          viscosity=1.0)
    mk = Markers.from_state(gaussian_state(g, 0, 1, 0.0), cfg)
    p0 = np.sum(mk.w * mk.p)
    for _ in range(10):
        mk = step_markers(mk, cfg)
    assert abs(np.sum(mk.w * mk.p) - p0) < 1e-14
    assert mk.ordered()
    st = markers_to_state(mk, g)
    assert abs(st.norm - 1) < 1e-12
