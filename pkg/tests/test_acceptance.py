"""Acceptance criteria C1-C12 at their stated tolerances.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one
pass/fail line per criterion at the end of the run.
"""

import time

import numpy as np
import pytest

from memheat import diagnostics as dg
from memheat.dynamics import (
    EvolutionConfig,
    SampledSource,
    StateZ,
    evolve,
    evolve_forced,
    evolve_linear,
    evolve_schedule,
    make_zf,
    memory_moment,
    random_state,
    reduce_single_mode,
    state_norm,
    zf_residual,
)
from memheat.errors import SandwichViolation
from memheat.history import HistoryField, apply_T, mr_inner, rep_residual
from memheat.kernels import check_conditions, make_kernel, quadrature
from memheat.spectral import NonlinearitySpec, SpectralField, eigenvalues

N = 64
PHI = NonlinearitySpec((0, -1, 0, 0, 0, 1))  # u^5 - u
C10_SCHEDULE = [(1.0, 5e-4), (49.0, 1e-2)]


def criterion(cid, title):
    return pytest.mark.criterion(cid, title)


# -----------------------------------------------------------------------------
# Shared runs (reused by the "all runs" criteria C7 and C9)
# -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def exp_kernel():
    return make_kernel("exponential", {"delta": 1.0})


@pytest.fixture(scope="module")
def quad(exp_kernel):
    return quadrature(exp_kernel)


@pytest.fixture(scope="module")
def stationary_run(exp_kernel, quad):
    f = SpectralField.mode(1, N)
    zf = make_zf(f, quad)
    cfg = EvolutionConfig(1e-2, 10.0, exp_kernel, N, quad=quad, f=f, cadence=100)
    return zf, f, evolve(zf, cfg)


@pytest.fixture(scope="module")
def linear_runs(exp_kernel, quad):
    cfg = EvolutionConfig(1e-2, 50.0, exp_kernel, N, quad=quad, cadence=500)
    runs = []
    for seed in range(20):
        z = random_state(quad, N, np.random.default_rng(seed), radius=1.0, space="V",
                         eta_profile="rough" if seed % 4 == 3 else "smooth")
        runs.append(evolve_linear(z, cfg))
    return runs


@pytest.fixture(scope="module")
def absorption_runs(exp_kernel, quad):
    f = SpectralField.mode(1, N, 4.0)
    cfg = EvolutionConfig(1e-2, 50.0, exp_kernel, N, quad=quad, phi=PHI, f=f, cadence=100)
    radii = (1.0, 2.0, 5.0)
    runs = []
    for i in range(20):
        r = radii[i % 3]
        z = random_state(quad, N, np.random.default_rng(100 + i), u_decay=1.5, eta_decay=1.5,
                         radius=r, space="H1")
        runs.append((r, z, evolve_schedule(z, cfg, C10_SCHEDULE)))
    return f, runs


@pytest.fixture(scope="module")
def decomposition_runs(exp_kernel, quad):
    f = SpectralField.mode(1, N, 4.0)
    z = random_state(quad, N, np.random.default_rng(0), radius=2.0, space="V")
    cfg = EvolutionConfig(1e-3, 10.0, exp_kernel, N, quad=quad, phi=PHI, f=f, cadence=100)
    S = evolve(z, cfg)
    zf = make_zf(f, quad)
    L = evolve_linear(z - zf, cfg.with_(phi=None, f=None))
    W = evolve_forced(StateZ.zeros(quad, N), None, SampledSource.minus_phi(S, PHI), cfg)
    return f, zf, S, L, W


@pytest.fixture(scope="module")
def compact_run():
    k = make_kernel("compact-linear", {"support": 1.0})
    q = quadrature(k)
    f = SpectralField.mode(2, N, 2.0)
    z = random_state(q, N, np.random.default_rng(7), radius=1.0, space="V")
    cfg = EvolutionConfig(2e-3, 10.0, k, N, quad=q, phi=PHI, f=f, cadence=50)
    return k, f, evolve(z, cfg)


# -----------------------------------------------------------------------------
# C1-C12
# -----------------------------------------------------------------------------


@criterion("C1", "kernel conditions: exponential NEC/BAD/NEC2, compact-linear fails BAD")
def test_c1_kernel_conditions(record_property):
    t0 = time.perf_counter()
    e = check_conditions(make_kernel("exponential", {"delta": 1.0}))
    c = check_conditions(make_kernel("compact-linear", {"support": 1.0}))
    elapsed = time.perf_counter() - t0
    record_property("theta", round(e.nec_theta, 6))
    record_property("bad_delta", round(e.bad_delta, 6))
    record_property("compact_bad_witness", c.bad.witness)
    record_property("seconds", round(elapsed, 3))
    assert e.nec.holds and abs(e.nec_theta - 1.0) <= 1e-3
    assert e.bad.holds and abs(e.bad_delta - 1.0) <= 1e-3
    assert e.nec2.holds and e.nec2.constants["C"] == 1.0
    assert c.nec.holds and c.nec2.holds
    assert not c.bad.holds and c.bad.witness is not None
    assert elapsed < 1.0


@criterion("C2", "discrete <T_h eta, eta>_{M^r} <= 0 in 1e3 randomized trials")
def test_c2_translation_dissipative(record_property):
    t0 = time.perf_counter()
    e = make_kernel("exponential", {"delta": 1.0})
    cpt = make_kernel("compact-linear", {"support": 1.0})
    quads = [quadrature(e), quadrature(e, weighting="trapezoid"), quadrature(e, node_rule="geometric"),
             quadrature(cpt), quadrature(cpt, node_rule="uniform")]
    rng = np.random.default_rng(2024)
    violations, worst = 0, -np.inf
    for i in range(1000):
        q = quads[i % len(quads)]
        r = i % 4
        n = int(rng.integers(1, 17))
        kind = rng.integers(3)
        if kind == 0:
            vals = rng.standard_normal((len(q), n))
        elif kind == 1:
            vals = np.cumsum(rng.standard_normal((len(q), n)), axis=0)
        else:
            vals = np.outer(q.nodes ** rng.uniform(0, 2), rng.standard_normal(n))
        eta = HistoryField(q, vals)
        val = mr_inner(apply_T(eta), eta, r)
        # rounding scale of the computed sum
        scale = float(q.densities @ ((vals ** 2) @ eigenvalues(n) ** r))
        worst = max(worst, val / scale)
        violations += val > 1e-12 * scale
    elapsed = time.perf_counter() - t0
    record_property("violations", violations)
    record_property("max_normalized_value", f"{worst:.3g}")
    record_property("seconds", round(elapsed, 2))
    assert violations == 0
    assert elapsed < 10.0


@criterion("C3", "z_f stationary: residual < 1e-6, 10-unit drift < 1e-5 in V")
def test_c3_stationary(stationary_run, record_property):
    zf, f, tr = stationary_run
    r_u, r_eta = zf_residual(zf, f)
    drift = max((tr.state(i) - zf).norm_V() for i in range(len(tr.times)))
    record_property("residual", f"{max(r_u, r_eta):.3g}")
    record_property("drift", f"{drift:.3g}")
    assert r_u < 1e-6 and r_eta < 1e-6
    assert tr.times[-1] == pytest.approx(10.0)
    assert drift < 1e-5


@criterion("C4", "linear contraction in H1, fitted rate > 0, Datko tail < 1%")
def test_c4_linear_decay(linear_runs, record_property):
    rates, tails, worst_inc = [], [], 0.0
    for tr in linear_runs:
        h1 = tr.norm("H1")
        inc = np.diff(h1) / h1[0]
        worst_inc = max(worst_inc, float(inc.max()))
        assert np.all(inc < 1e-9)
        fit = dg.fit_exponential_decay(tr.step_times, tr.norm("V"))
        rates.append(fit.rate)
        assert fit.rate > 0 and not fit.rejected
        tails.append(dg.datko_tail_fraction(tr.step_times, tr.norms2["V"], 40.0))
    record_property("min_rate", round(min(rates), 4))
    record_property("max_tail", f"{max(tails):.3g}")
    record_property("max_step_increase", f"{worst_inc:.3g}")
    assert len(linear_runs) == 20
    assert max(tails) < 0.01


@criterion("C5", "single-mode oracle: rel. error < 1e-4 at dt=1e-3, first order")
def test_c5_single_mode_oracle(exp_kernel, quad, record_property):
    red = reduce_single_mode(1, exp_kernel)
    errs = {}
    for dt in (1e-3, 5e-4):
        z0 = StateZ.from_arrays(quad, SpectralField.mode(1, N).coeffs, np.zeros((len(quad), N)))
        tr = evolve_linear(z0, EvolutionConfig(dt, 5.0, exp_kernel, N, quad=quad, cadence=10**9))
        ref = red.evaluate(tr.step_times, [1.0, 0.0])
        # error at t = 5, each component relative to the reference's sup on [0, 5]
        eu = abs(tr.u_steps[-1, 0] - ref[-1, 0]) / np.abs(ref[:, 0]).max()
        em = abs(memory_moment(tr.final.eta, 1) - ref[-1, 1]) / np.abs(ref[:, 1]).max()
        errs[dt] = max(eu, em)
        assert tr.step_times[-1] == pytest.approx(5.0)
    ratio = errs[1e-3] / errs[5e-4]
    record_property("rel_error", f"{errs[1e-3]:.3g}")
    record_property("halving_ratio", round(ratio, 4))
    assert errs[1e-3] < 1e-4
    assert ratio >= 1.8


@criterion("C6", "representation formula: stationary < 10(dt+ds), generic order >= 0.8")
def test_c6_representation(stationary_run, exp_kernel, record_property):
    zf, f, tr = stationary_run
    q = tr.quad
    sel = q.nodes <= tr.step_times[-1]
    ds = float(q.spacings[sel].max())
    r_stat = rep_residual(tr.final.eta, tr.step_times, tr.u_steps, tr.step_times[-1])
    assert r_stat < 10 * (tr.dt + ds)

    n, t_final = 16, 3.0
    a = np.zeros(n)
    a[0] = 0.5
    q0 = quadrature(exp_kernel)
    levels = [(4e-3, q0), (2e-3, q0.refined()), (1e-3, q0.refined().refined())]
    res = []
    for dt, ql in levels:
        z = StateZ(SpectralField(a), HistoryField.linear(ql, a))
        run = evolve(z, EvolutionConfig(dt, t_final, exp_kernel, n, quad=ql, phi=PHI, cadence=10**9))
        res.append(rep_residual(run.final.eta, run.step_times, run.u_steps, t_final))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    record_property("stationary", f"{r_stat:.3g}")
    record_property("generic_residuals", [f"{x:.3g}" for x in res])
    record_property("orders", [round(float(o), 3) for o in orders])
    assert np.all(orders >= 0.8)


@criterion("C7", "energy functional sandwich: 1e3 random states and every suite step")
def test_c7_sandwich(quad, exp_kernel, stationary_run, linear_runs, absorption_runs,
                     decomposition_runs, compact_run, record_property):
    alpha = dg.choose_alpha(exp_kernel.kappa0)
    rng = np.random.default_rng(77)
    random_viol = 0
    for i in range(1000):
        z = random_state(quad, N, rng, u_decay=rng.uniform(1.0, 3.0), eta_decay=rng.uniform(1.0, 3.0),
                         eta_profile="rough" if i % 2 else "smooth", radius=10 ** rng.uniform(-3, 3),
                         space="V")
        f = None if i % 7 == 0 else SpectralField(rng.standard_normal(N) * 10 ** rng.uniform(-3, 3)
                                                  / np.arange(1, N + 1) ** rng.uniform(0, 2))
        try:
            dg.lambda_functional(z, f, alpha)
        except SandwichViolation:
            random_viol += 1
    f_dec, _, S, L, W = decomposition_runs
    f_abs, runs = absorption_runs
    zf, f_st, st = stationary_run
    k_c, f_c, tr_c = compact_run
    suite = [(st, f_st, alpha)] + [(tr, None, alpha) for tr in linear_runs]
    suite += [(tr, f_abs, alpha) for _, _, tr in runs]
    suite += [(S, f_dec, alpha), (L, None, alpha), (W, None, alpha)]
    suite += [(tr_c, f_c, dg.choose_alpha(k_c.kappa0))]
    steps = sum(len(tr.step_times) for tr, _, _ in suite)
    step_viol = sum(dg.sandwich_violations(tr, f, a) for tr, f, a in suite)
    record_property("random_violations", random_viol)
    record_property("steps_checked", steps)
    record_property("step_violations", step_viol)
    assert random_viol == 0
    assert step_viol == 0


@criterion("C8", "Gronwall closed form dominates the ODE on 20 instances")
def test_c8_gronwall(record_property):
    rng = np.random.default_rng(8)
    checks = [dg.gronwall_instance(rng) for _ in range(20)]
    record_property("worst_ratio", round(max(c.worst_ratio for c in checks), 4))
    assert all(c.holds for c in checks)


def _tau_excess(tr, kernel):
    excess = []
    dt = np.diff(tr.step_times)
    cuts = np.flatnonzero(np.abs(np.diff(dt)) > 1e-9 * dt[1:]) + 1
    bounds = [0, *cuts.tolist(), len(dt)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        t = tr.step_times[a:b + 1]
        if t[-1] - t[0] < 1.0:
            continue
        u2 = tr.norms2["u2"][a:b + 1]
        F = dg.memory_convolution_F(t - t[0], u2, kernel)
        excess.append(dg.translation_bound(t, F) - kernel.kappa0 * dg.translation_bound(t, u2))
    return max(excess)


@criterion("C9", "tau(F) <= kappa0 tau(|u|_2^2) + 1e-6 and Upsilon <= Theta |xi|^2")
def test_c9_dissipation_functionals(exp_kernel, stationary_run, linear_runs, absorption_runs,
                                    decomposition_runs, compact_run, record_property):
    _, _, S, L, W = decomposition_runs
    _, runs = absorption_runs
    k_c, _, tr_c = compact_run
    suite = [(stationary_run[2], exp_kernel)] + [(tr, exp_kernel) for tr in linear_runs]
    suite += [(tr, exp_kernel) for _, _, tr in runs]
    suite += [(S, exp_kernel), (L, exp_kernel), (W, exp_kernel), (tr_c, k_c)]
    worst_tau = max(_tau_excess(tr, k) for tr, k in suite)
    thetas = {id(exp_kernel): check_conditions(exp_kernel).nec_theta, id(k_c): check_conditions(k_c).nec_theta}
    snaps, ups_ok, worst_ratio = 0, True, 0.0
    for tr, k in suite:
        for eta in tr.eta:
            rep = dg.upsilon_functional(HistoryField(tr.quad, eta), thetas[id(k)])
            snaps += 1
            ups_ok &= rep.holds
            if rep.bound > 0:
                worst_ratio = max(worst_ratio, rep.value / rep.bound)
    record_property("max_tau_excess", f"{worst_tau:.3g}")
    record_property("history_snapshots", snaps)
    record_property("max_upsilon_ratio", round(worst_ratio, 12))
    assert worst_tau <= 1e-6
    assert ups_ok


@criterion("C10", "u^5 - u absorption: bounded on [0,50], late sup H0 radius-independent")
def test_c10_absorption(absorption_runs, record_property):
    _, runs = absorption_runs
    late = {}
    for r, z, tr in runs:
        assert state_norm(z, "H1") <= 5.0 + 1e-12
        h0 = tr.norm("H0")
        assert tr.step_times[-1] == pytest.approx(50.0)
        assert np.all(np.isfinite(h0))
        late.setdefault(r, []).append(float(h0[tr.step_times > 20.0].max()))
    level = {r: max(v) for r, v in late.items()}
    spread = max(level.values()) / min(level.values())
    record_property("late_sup_H0", {r: round(v, 6) for r, v in sorted(level.items())})
    record_property("spread", round(spread, 8))
    assert len(runs) == 20 and sorted(level) == [1.0, 2.0, 5.0]
    assert spread <= 1.5


@criterion("C11", "z_f + L(z - z_f) + W reproduces S to 1e-6 in V; l1 decays")
def test_c11_decomposition(decomposition_runs, record_property):
    _, zf, S, L, W = decomposition_runs
    errs = [(zf + L.state(i) + W.state(i) - S.state(i)).norm_V() / S.state(i).norm_V()
            for i in range(len(S.times))]
    fit = dg.fit_exponential_decay(L.step_times, L.norm("V"))
    record_property("max_rel_error", f"{max(errs):.3g}")
    record_property("l1_rate", round(fit.rate, 4))
    assert max(errs) < 1e-6
    assert fit.rate > 0 and not fit.rejected


@criterion("C12", "separation scales linearly; time-Lipschitz constant per ball")
def test_c12_continuity(exp_kernel, quad, record_property):
    f = SpectralField.mode(1, N, 4.0)
    cfg = EvolutionConfig(1e-3, 5.0, exp_kernel, N, quad=quad, phi=PHI, f=f, cadence=50)
    z = random_state(quad, N, np.random.default_rng(0), radius=2.0, space="V")
    d = random_state(quad, N, np.random.default_rng(5))
    dev = 0.0
    for sizes in ((1e-6, 2e-6), (5e-5, 1e-4)):
        _, _, ratio = dg.separation_scaling(z, d, cfg, sizes)
        dev = max(dev, float(np.abs(ratio - 2.0).max()))
    assert dev <= 0.2

    lip = {}
    short = cfg.with_(t_final=2.0)
    for r in (1.0, 2.0, 5.0):
        ks, ks_fine = [], []
        for seed in range(3):
            zr = random_state(quad, N, np.random.default_rng(200 + seed), radius=r, space="V")
            tr = evolve(zr, short.with_(cadence=5))
            ks_fine.append(dg.lipschitz_constant(tr, 1.0, 2.0))
            coarse = [i for i in range(len(tr.times)) if i % 4 == 0]
            sub = type(tr)(tr.quad, tr.n_modes, tr.dt, [tr.times[i] for i in coarse],
                           [tr.u[i] for i in coarse], [tr.eta[i] for i in coarse])
            ks.append(dg.lipschitz_constant(sub, 1.0, 2.0))
        lip[r] = max(ks_fine)
        # a genuine Lipschitz bound does not grow as the snapshot spacing shrinks
        assert max(ks_fine) <= 1.1 * max(ks)
    record_property("ratio_deviation", f"{dev:.3g}")
    record_property("lipschitz_by_radius", {r: round(v, 4) for r, v in lip.items()})
    assert all(np.isfinite(v) for v in lip.values())
    assert lip[1.0] <= lip[2.0] <= lip[5.0]
