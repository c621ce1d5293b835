import numpy as np
import pytest

from statqm.dynamics import EvolutionConfig, Potential, evolve
from statqm.fields import GridSpec, SampledField, gaussian, gaussian_state, normalize, to_wavefunction
from statqm.coupling import Quantum
from statqm.observables import (ObservableRecord, discrete_entropy, ehrenfest_residuals, entropy_composition_check,
                                expansion_slopes, fisher_information, means, record_from_psi, record_from_state,
                                relative_entropy_shift, shannon_entropy, time_derivative, with_ehrenfest)

G = GridSpec.centered(12, 1024)


@pytest.mark.parametrize("sigma", [0.6, 1.0, 1.5])
def test_gaussian_fisher_and_entropy(sigma):
    rho = SampledField(G, normalize(gaussian(G, 0.2, sigma), G))
    assert fisher_information(rho) == pytest.approx(1 / sigma**2, rel=1e-3)
    assert shannon_entropy(rho) == pytest.approx(0.5 * np.log(2 * np.pi * np.e * sigma**2), rel=1e-8)


def test_discrete_entropy():
    assert discrete_entropy([0.25] * 4) == pytest.approx(np.log(4))
    assert discrete_entropy([1, 0]) == 0
    with pytest.raises(ValueError):
        discrete_entropy([1.5, -0.5])


def test_means_state_and_psi_agree():
    st = gaussian_state(G, 0.5, 1.0, 0.7)
    v = 0.5 * G.x**2
    a = means(st, v, dV=G.x)
    b = means(to_wavefunction(st), v, dV=G.x)
    np.testing.assert_allclose(a, b, atol=1e-10)
    assert a.x == pytest.approx(0.5)
    assert a.p == pytest.approx(0.7)
    assert a.F == pytest.approx(-0.5)


def test_record_rules():
    st = gaussian_state(G, 0, 1.0, 0.6)
    q = record_from_state(st)
    h = record_from_state(st, momentum_rule="hybrid")
    assert h.T_mean == pytest.approx(0.18)
    assert q.T_mean - h.T_mean == pytest.approx(q.fisher_I / 8, rel=1e-12)
    assert record_from_psi(to_wavefunction(st)).T_mean == pytest.approx(q.T_mean, rel=1e-8)
    with pytest.raises(ValueError):
        record_from_state(st, momentum_rule="bogus")
    assert list(q.as_dict()) == ObservableRecord.columns()


def test_time_derivative_fourth_order():
    t = np.linspace(0, 1, 41)
    err = np.max(np.abs(time_derivative(np.sin(3 * t), t[1]) - 3 * np.cos(3 * t)))
    assert err < 1e-4
    np.testing.assert_allclose(time_derivative(t**3, t[1]), 3 * t**2, atol=1e-12)
    with pytest.raises(ValueError):
        time_derivative([1, 2, 3], 0.1)


def test_ehrenfest_on_quantum_harmonic_run():
    g = GridSpec.centered(10, 256)
    cfg = EvolutionConfig(dt=0.002, t_final=2.0, record_every=5, scheme="split_step", coupling=Quantum(),
                          potential=Potential.harmonic(1.0))
    traj = evolve(gaussian_state(g, 1, 0.8, 0.3), cfg)
    res = ehrenfest_residuals(traj)
    assert res.rel1 < 1e-5 and res.rel2 < 1e-5
    recs = with_ehrenfest(traj.records, res)
    assert recs[3].ehrenfest_r1 == res.r1[3]


def test_ehrenfest_rejects_short_or_uneven_runs():
    recs = [record_from_state(gaussian_state(G, t=t)) for t in (0, 1, 2, 3)]
    with pytest.raises(ValueError):
        ehrenfest_residuals(recs)
    recs = [record_from_state(gaussian_state(G, t=t)) for t in (0, 1, 2, 3, 5)]
    with pytest.raises(ValueError):
        ehrenfest_residuals(recs)


def test_relative_entropy_shift_gaussian():
    sigma = 1.2
    rho = SampledField(G, normalize(gaussian(G, 0, sigma), G))
    for h in (0.1, 0.02):
        r = relative_entropy_shift(rho, h)
        # exact for a Gaussian: G = -h^2 / (2 sigma^2)
        assert r.G == pytest.approx(-h**2 / (2 * sigma**2), rel=1e-6)
        assert r.ratio == pytest.approx(1, rel=1e-3)


def test_expansion_slopes_skewed_density():
    from scipy.stats import skewnorm
    rho = SampledField(G, skewnorm.pdf(G.x, 3.0))
    ratios, slopes = expansion_slopes(rho)
    assert np.all(np.abs(ratios - 1) < 0.1)
    np.testing.assert_allclose(slopes, 1, atol=0.1)


def test_composition_gaussian_pair():
    g2 = GridSpec.centered(8, 256)
    r1 = SampledField(G, normalize(gaussian(G, 0, 1.0), G))
    r2 = SampledField(g2, normalize(gaussian(g2, 0.5, 0.7), g2))
    rep = entropy_composition_check(r1, r2)
    assert rep.ok, (rep.entropy_error, rep.fisher_error)
