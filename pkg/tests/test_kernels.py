import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memheat.errors import KernelError, QuadratureError
from memheat.kernels import (
    check_conditions,
    kernel_from_config,
    load_tabulated_csv,
    make_kernel,
    quadrature,
    quadrature_from_nodes,
)


def test_exponential_closed_forms():
    k = make_kernel("exponential", {"delta": 2.0})
    s = np.array([0.0, 0.3, 1.7])
    assert k.kappa0 == 2.0
    np.testing.assert_allclose(k.mu(s), 4.0 * np.exp(-2.0 * s))
    np.testing.assert_allclose(k.kappa(s), 2.0 * np.exp(-2.0 * s), atol=1e-15)
    np.testing.assert_allclose(k.dmu(s), -2.0 * k.mu(s))
    assert max(k.normalization_residuals) < 1e-8
    assert k.moment(1) == pytest.approx(1.0, abs=1e-9)
    assert k.mu(k.s_max) / k.mu(0.0) <= 1e-12 * (1 + 1e-6)


def test_compact_linear_closed_forms():
    k = make_kernel("compact-linear", {"support": 0.5})
    assert k.kappa0 == pytest.approx(4.0)
    assert k.mu(0.6) == 0.0
    assert k.kappa(0.5) == pytest.approx(0.0, abs=1e-14)
    assert k.moment(1, upper=0.5) == pytest.approx(1.0, rel=1e-12)
    assert k.breakpoints == (0.5,)


def test_unknown_family_and_parameters():
    with pytest.raises(KernelError):
        make_kernel("gaussian", {})
    with pytest.raises(KernelError, match="unknown parameters"):
        make_kernel("compact-linear", {"a": 1.0})
    with pytest.raises(KernelError):
        make_kernel("exponential", {"delta": -1.0})


def _exp_table(n=40, delta=1.0, scale=1.0):
    s = np.linspace(0.05, 30.0 / delta, n)
    return s, scale * delta**2 * np.exp(-delta * s)


def test_tabulated_normalization_flag():
    s, mu = _exp_table(scale=3.0)
    k = make_kernel("tabulated", {"s": s, "mu": mu})
    assert max(k.normalization_residuals) < 1e-8
    assert k.params["normalized"]
    with pytest.raises(KernelError, match="not normalized"):
        make_kernel("tabulated", {"s": s, "mu": mu}, normalize=False)


@pytest.mark.parametrize("mutate, match", [
    (lambda s, m: (s[:10], m[:10]), "at least 16"),
    (lambda s, m: (s, m[::-1]), "nonincreasing"),
    (lambda s, m: (s[::-1], m), "strictly increasing"),
    (lambda s, m: (s, -m), "nonnegative"),
])
def test_tabulated_rejects_bad_tables(mutate, match):
    s, mu = mutate(*_exp_table())
    with pytest.raises(KernelError, match=match):
        make_kernel("tabulated", {"s": s, "mu": mu})


def test_tabulated_zero_beyond_last_sample_and_extrapolated_at_zero():
    s, mu = _exp_table()
    k = make_kernel("tabulated", {"s": s, "mu": mu})
    assert k.mu(s[-1] + 1.0) == 0.0
    slope = (k.mu(s[1]) - k.mu(s[0])) / (s[1] - s[0])
    assert k.mu(0.0) == pytest.approx(k.mu(s[0]) - slope * s[0])


def test_load_tabulated_csv(tmp_path):
    s, mu = _exp_table()
    p = tmp_path / "k.csv"
    p.write_text("s,mu\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(s, mu)))
    k = load_tabulated_csv(p)
    assert k.family == "tabulated"
    k2 = kernel_from_config({"family": "tabulated", "path": "k.csv"}, base_dir=str(tmp_path))
    np.testing.assert_array_equal(k.mu(s), k2.mu(s))


def test_conditions_scale_with_delta():
    rep = check_conditions(make_kernel("exponential", {"delta": 2.0}))
    assert rep.nec.holds and rep.nec_theta == pytest.approx(0.5, rel=1e-3)
    assert rep.bad.holds and rep.bad_delta == pytest.approx(2.0, rel=1e-3)
    assert rep.nec2.holds and rep.nec2.constants["C"] == 1.0
    assert rep.bad_implies_nec2


def test_compact_bad_witness_is_genuine():
    k = make_kernel("compact-linear", {"support": 1.0})
    rep = check_conditions(k)
    s = rep.bad.witness
    # mu' = 0 < mu there, so mu' + delta mu <= 0 fails for every delta > 0
    assert not rep.bad.holds and 0 < s < 1.0
    assert k.dmu(s) + 1e-3 * k.mu(s) > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0))
def test_fitted_quadrature_moments_exact(delta):
    k = make_kernel("exponential", {"delta": delta})
    q = quadrature(k)
    assert q.weighting == "fitted"
    assert q.weights.sum() == pytest.approx(delta, rel=1e-12)
    assert q.weights @ q.nodes == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(q.kappa_weights, q.weights / delta)
    assert np.all(np.diff(q.densities) <= 1e-12 * q.densities[0])


@pytest.mark.parametrize("rule", ["geometric", "uniform", "composite"])
def test_trapezoid_quadrature_compact(rule):
    k = make_kernel("compact-linear", {"support": 1.0})
    q = quadrature(k, node_rule=rule, n_nodes=64)
    assert q.weighting == "trapezoid"
    assert np.all(np.diff(q.nodes) > 0)
    assert q.weights.sum() == pytest.approx(k.kappa0, rel=1e-3)
    assert np.all(np.diff(q.densities) <= 1e-12 * q.densities.max())


def test_quadrature_errors():
    k = make_kernel("compact-linear", {"support": 1.0})
    with pytest.raises(QuadratureError, match="insufficient"):
        quadrature(k, n_nodes=2)
    with pytest.raises(QuadratureError):
        quadrature(k, weighting="fitted")
    with pytest.raises(QuadratureError):
        quadrature(k, node_rule="random")


def test_refined_quadrature_keeps_moments():
    k = make_kernel("exponential", {"delta": 1.0})
    q = quadrature(k, n_nodes=48)
    r = q.refined()
    assert len(r) == 2 * len(q) - 1
    assert r.weights.sum() == pytest.approx(1.0, rel=1e-12)
    assert r.weights @ r.nodes == pytest.approx(1.0, rel=1e-12)
    assert r.max_spacing <= q.max_spacing


def test_quadrature_unpacks():
    k = make_kernel("exponential", {"delta": 1.0})
    nodes, weights = quadrature_from_nodes(k, np.linspace(0.1, 20, 50))
    assert len(nodes) == len(weights) == 50
