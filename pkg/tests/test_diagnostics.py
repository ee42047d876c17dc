import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memheat import diagnostics as dg
from memheat.dynamics import EvolutionConfig, StateZ, evolve, evolve_linear, random_state
from memheat.errors import KernelError, SandwichViolation
from memheat.history import HistoryField
from memheat.kernels import check_conditions, make_kernel, quadrature
from memheat.spectral import NonlinearitySpec, SpectralField

EXP = make_kernel("exponential", {"delta": 1.0})
CPT = make_kernel("compact-linear", {"support": 1.0})
Q = quadrature(EXP)
N = 16


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 50.0))
def test_choose_alpha_meets_every_requirement(kappa0):
    a = dg.choose_alpha(kappa0)
    req = dg.alpha_requirements(kappa0)
    assert a >= req["lemma"] and a >= req["lower"] and a >= req["upper"]


def test_alpha_requirement_values():
    req = dg.alpha_requirements(1.0)
    assert req["lemma"] == 3.0
    assert req["lower"] == pytest.approx(0.5 + 8 / 3)
    a = req["upper"]
    assert a - 1 - 1 / a - 1 / (a - 8) == pytest.approx(0.0, abs=1e-9)
    assert dg.choose_alpha(1.0) == 10.0
    with pytest.raises(ValueError):
        dg.choose_alpha(0.0)


def test_unsafe_alpha_fails_upper_bound_at_rest():
    alpha = dg.choose_alpha(1.0, sandwich_safe=False)
    assert alpha == 5.0
    z = StateZ.zeros(Q, N)
    f = SpectralField.mode(1, N)
    with pytest.raises(SandwichViolation) as info:
        dg.lambda_functional(z, f, alpha)
    assert info.value.value == pytest.approx(8.0)
    assert dg.lambda_functional(z, f, dg.choose_alpha(1.0)) == pytest.approx(8.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_sandwich_random_states(seed, log_r, log_f):
    rng = np.random.default_rng(seed)
    z = random_state(Q, N, rng, eta_profile="rough" if seed % 2 else "smooth",
                     radius=10**log_r, space="V")
    f = SpectralField(rng.standard_normal(N) * 10**log_f)
    alpha = dg.choose_alpha(EXP.kappa0)
    lo, hi = dg.sandwich_bounds(z, f, alpha)
    val = dg.lambda_functional(z, f, alpha)
    assert lo <= val * (1 + 1e-12) and val <= hi * (1 + 1e-12)


@pytest.mark.parametrize("kernel", [EXP, CPT], ids=["exp", "compact"])
def test_memory_convolution_of_constant(kernel):
    t = np.linspace(0, 5, 501)
    F = dg.memory_convolution_F(t, np.ones_like(t), kernel)
    np.testing.assert_allclose(F, kernel.mu_integral(t), atol=1e-13)


def test_memory_convolution_of_linear_input_exp():
    # int_0^t e^{-(t-s)} s ds = t - 1 + e^{-t}
    t = np.linspace(0, 5, 301)
    F = dg.memory_convolution_F(t, t, EXP)
    np.testing.assert_allclose(F, t - 1 + np.exp(-t), atol=1e-13)


def test_memory_convolution_needs_uniform_grid():
    with pytest.raises(ValueError, match="gap"):
        dg.memory_convolution_F([0.0, 0.1, 0.3], [1.0, 1.0, 1.0], EXP)


def test_translation_bound():
    t = np.linspace(0, 10, 1001)
    assert dg.translation_bound(t, np.ones_like(t)) == pytest.approx(1.0)
    assert dg.translation_bound(t, t) == pytest.approx(9.5)
    with pytest.raises(ValueError):
        dg.translation_bound(t[:50], t[:50])


def test_gronwall_bound_examples():
    assert dg.gronwall_bound(1.0, 1.0, 0.0, 0.0, 1e3) == pytest.approx(1 / (1 - math.exp(-1)))
    assert dg.gronwall_bound(2.0, 0.0, 0.0, 0.0, 0.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        dg.gronwall_bound(1.0, -1.0, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_gronwall_instance_dominated(seed):
    g = dg.gronwall_instance(np.random.default_rng(seed))
    assert g.holds and min(g.m) >= 0


def test_upsilon_fitted_weights_equality():
    rng = np.random.default_rng(0)
    xi = HistoryField(Q, rng.standard_normal((len(Q), N)))
    rep = dg.upsilon_functional(xi, check_conditions(EXP))
    assert rep.holds and rep.value == pytest.approx(rep.bound, rel=1e-12)


def test_upsilon_compact_kernel_and_missing_theta():
    q = quadrature(CPT)
    xi = HistoryField(q, np.random.default_rng(1).standard_normal((len(q), N)))
    rep = dg.upsilon_functional(xi, 1.0)
    assert rep.holds and rep.value <= rep.bound
    with pytest.raises(KernelError):
        dg.upsilon_functional(xi, None)


def test_fit_recovers_rate():
    t = np.linspace(0, 10, 1001)
    fit = dg.fit_exponential_decay(t, 3 * np.exp(-0.7 * t))
    assert fit.rate == pytest.approx(0.7, rel=1e-10) and not fit.rejected
    assert fit.amplitude == pytest.approx(1.0)


def test_fit_oscillatory_decay_uses_envelope():
    t = np.linspace(0, 20, 4001)
    v = np.exp(-0.5 * t) * (1.05 + np.cos(3 * t))
    fit = dg.fit_exponential_decay(t, v)
    assert fit.rate == pytest.approx(0.5, rel=0.05) and not fit.rejected


def test_fit_rejects_noise_and_bad_input():
    t = np.linspace(0, 10, 200)
    noise = 1 + 0.5 * np.random.default_rng(0).random(200)
    assert dg.fit_exponential_decay(t, noise, envelope=False).rejected
    assert dg.fit_exponential_decay(t, np.ones_like(t)).rate == 0.0
    with pytest.raises(ValueError):
        dg.fit_exponential_decay(t, -np.ones_like(t))
    with pytest.raises(ValueError):
        dg.fit_exponential_decay(t, np.ones_like(t), window=(20, 30))


def test_scalar_invariants():
    assert dg.max_increase([3.0, 2.0, 2.5, 1.0]) == pytest.approx(0.5 / 3)
    assert dg.max_increase([1.0]) == 0.0
    t = np.linspace(0, 50, 5001)
    assert dg.datko_tail_fraction(t, np.ones_like(t)) == pytest.approx(0.2)


def test_lipschitz_constant_against_brute_force():
    z = random_state(Q, N, np.random.default_rng(2))
    tr = evolve_linear(z, EvolutionConfig(0.01, 2.0, EXP, N, quad=Q, cadence=20))
    states = tr.states()
    sel = [i for i, s in enumerate(states) if 1.0 - 1e-9 <= s.t <= 2.0 + 1e-9]
    brute = max((states[b] - states[a]).norm_V() / (states[b].t - states[a].t)
                for a in sel for b in sel if b > a)
    assert dg.lipschitz_constant(tr, 1.0, 2.0) == pytest.approx(brute, rel=1e-10)


def test_separation_scaling_exact_for_linear_dynamics():
    rng = np.random.default_rng(3)
    z, d = random_state(Q, N, rng), random_state(Q, N, rng)
    cfg = EvolutionConfig(0.01, 1.0, EXP, N, quad=Q, cadence=10)
    _, _, ratio = dg.separation_scaling(z, d, cfg, evolve_fn=evolve_linear)
    np.testing.assert_allclose(ratio, 2.0, rtol=1e-6)


def test_separation_growth_reports_exponent():
    rng = np.random.default_rng(4)
    z = random_state(Q, N, rng)
    res = dg.separation_growth(z, z * 1.001, EvolutionConfig(0.01, 2.0, EXP, N, quad=Q, cadence=10),
                               evolve_fn=evolve_linear)
    assert res.exponent < 0
    assert res.trace[0] == pytest.approx(res.initial_separation)


def test_keyin_monitor_fits_theta():
    rng = np.random.default_rng(5)
    z = random_state(Q, N, rng, radius=1.0, space="V")
    f = SpectralField.mode(1, N)
    phi = NonlinearitySpec((0, -1, 0, 1))
    tr = evolve(z, EvolutionConfig(1e-3, 1.0, EXP, N, quad=Q, f=f, phi=phi, cadence=1))
    rep = dg.keyin_monitor(tr, f, None, dg.choose_alpha(1.0), EXP)
    assert math.isfinite(rep.theta_min) and rep.holds
    with pytest.raises(ValueError, match="cadence 1"):
        dg.keyin_monitor(evolve(z, EvolutionConfig(1e-2, 0.1, EXP, N, quad=Q, cadence=5)),
                         None, None, 10.0, EXP)


def test_functional_trace_validation():
    with pytest.raises(ValueError):
        dg.FunctionalTrace("x", [0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        dg.FunctionalTrace("x", [0.0, 1.0], [1.0, np.nan])


def test_report_summary():
    rep = dg.DiagnosticsReport()
    rep.residuals["r"] = np.float64(1e-9)
    rep.fits["fit"] = dg.fit_exponential_decay([0, 1, 2, 3], [1, 0.5, 0.25, 0.125], transient=0)
    rep.verdicts["ok"] = True
    assert rep.passed and rep.summary()["fits"]["fit"]["rate"] == pytest.approx(math.log(2))
    rep.verdicts["bad"] = False
    assert not rep.passed


def test_per_step_lambda_matches_snapshots():
    rng = np.random.default_rng(7)
    z = random_state(Q, N, rng, radius=1.0, space="V")
    f = SpectralField(rng.standard_normal(N) / np.arange(1, N + 1) ** 2)
    phi = NonlinearitySpec((0, -1, 0, 1))
    tr = evolve(z, EvolutionConfig(1e-2, 1.0, EXP, N, quad=Q, f=f, phi=phi, cadence=10))
    val, lo, hi = dg.lambda_step_values(tr, f, 10.0)
    snap = dg.lambda_trace(tr, f, 10.0).values
    np.testing.assert_allclose(val[::10], snap, rtol=1e-12)
    assert dg.sandwich_violations(tr, f, 10.0) == 0
