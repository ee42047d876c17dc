"""Functionals and inequality checks evaluated on computed trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal, stats

from .errors import KernelError, SandwichViolation
from .history import HistoryField, mr_norm
from .spectral import eigenvalues

SANDWICH_RTOL = 1e-12
DEFAULT_MIN_R2 = 0.9


@dataclass(frozen=True)
class FunctionalTrace:
    """Values of a named functional on a strictly increasing time grid."""

    name: str
    times: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("trace times and values must be equal-length 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trace time grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"trace {self.name!r} has nonfinite values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``v(t) ~ M v(t0) exp(-rate (t - t0))`` on ``window``."""

    amplitude: float
    rate: float
    rate_stderr: float
    residual: float
    window: tuple
    rejected: bool
    r_squared: float = 1.0

    def as_dict(self):
        return dict(self.__dict__, window=list(self.window))


# -----------------------------------------------------------------------------
# The energy functional
# -----------------------------------------------------------------------------


def alpha_requirements(kappa0):
    """Smallest ``alpha`` needed by each use of the energy functional.

    ``lemma``: the differential inequality needs ``alpha >= 1 + 2 kappa0``.
    ``lower``: ``Lambda >= ||Z||_V^2 / 2`` for all (Z, f) iff
    ``alpha >= 1/2 + 8 kappa0 / 3``.
    ``upper``: ``Lambda <= 2 alpha ||Z||_V^2 + alpha ||f||^2`` for all (Z, f)
    iff ``alpha > 8`` and ``alpha - 1 - kappa0/alpha - 1/(alpha - 8) >= 0``
    (positive semidefiniteness of the 3x3 form in ``||u||_2``,
    ``||eta||_{M^2}``, ``||f||``).
    """
    def upper_ok(a):
        return a > 8 and a - 1 - kappa0 / a - 1.0 / (a - 8) >= 0

    lo, hi = 8.0, 9.0 + kappa0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if upper_ok(mid) else (mid, hi)
    return {"lemma": 1 + 2 * kappa0, "lower": 0.5 + 8 * kappa0 / 3, "upper": hi}


def choose_alpha(kappa0, sandwich_safe=True):
    """``alpha`` for the energy functional.

    With ``sandwich_safe`` (default) the value ``max(4 kappa0 + 1, kappa0 + 9)``
    meets every requirement in :func:`alpha_requirements`.  Otherwise the
    value ``max(1 + 2 kappa0, 4 kappa0 + 1)`` is returned; that one fails the
    upper bound at ``Z = 0`` (where ``Lambda = 8 ||f||^2``) whenever it is
    below 8.
    """
    if not kappa0 > 0:
        raise ValueError(f"kappa0 must be positive, got {kappa0}")
    if sandwich_safe:
        return max(4 * kappa0 + 1, kappa0 + 9)
    return max(1 + 2 * kappa0, 4 * kappa0 + 1)


def _parts(Z, f):
    lam = eigenvalues(Z.n_modes)
    u = Z.u.coeffs
    eta = Z.eta
    u2 = float(u @ (lam ** 2 * u))
    u1 = float(u @ (lam * u))
    e2 = mr_norm(eta, 2) ** 2
    cross = float(lam ** 2 @ (u * (eta.weights @ eta.values)))
    fa = 0.0 if f is None else float(f.coeffs @ (lam * u))
    ff = 0.0 if f is None else float(f.coeffs @ f.coeffs)
    return u2, u1, e2, cross, fa, ff


def sandwich_bounds(Z, f, alpha):
    u2, _, e2, _, _, ff = _parts(Z, f)
    v2 = u2 + e2
    return 0.5 * v2, 2 * alpha * v2 + alpha * ff


def lambda_functional(Z, f, alpha, check=True):
    """``||u||_2^2 + alpha ||Z||_{H^1}^2 + 2<eta,u>_{M^2} - 2<f,Au> + 8||f||^2``.

    The two-sided bound ``||Z||_V^2/2 <= Lambda <= 2 alpha ||Z||_V^2 + alpha ||f||^2``
    is asserted on every call (relative slack ``SANDWICH_RTOL``).

    Raises
    ------
    SandwichViolation
        Carrying ``(lower, value, upper)``.
    """
    u2, u1, e2, cross, fa, ff = _parts(Z, f)
    val = u2 + alpha * (u1 + e2) + 2 * cross - 2 * fa + 8 * ff
    if check:
        v2 = u2 + e2
        lower, upper = 0.5 * v2, 2 * alpha * v2 + alpha * ff
        slack = SANDWICH_RTOL * max(upper, 1e-300)
        if not (lower - slack <= val <= upper + slack):
            raise SandwichViolation(
                f"energy functional {val:.6g} outside [{lower:.6g}, {upper:.6g}] (alpha={alpha:g})",
                lower, val, upper)
    return float(val)


def lambda_trace(traj, f, alpha):
    """``Lambda`` at every snapshot of ``traj`` (sandwich asserted)."""
    vals = [lambda_functional(traj.state(i), f, alpha) for i in range(len(traj.times))]
    return FunctionalTrace("Lambda", np.asarray(traj.times), np.asarray(vals), {"alpha": alpha})


def lambda_step_values(traj, f, alpha):
    """``(Lambda, lower, upper)`` at every step from the per-step norms of ``traj``."""
    n2 = traj.norms2
    lam = eigenvalues(traj.n_modes)
    fa = np.zeros_like(n2["u2"]) if f is None else traj.u_steps @ (lam * f.coeffs)
    ff = 0.0 if f is None else float(f.coeffs @ f.coeffs)
    val = n2["u2"] + alpha * (n2["u1"] + n2["eta2"]) + 2 * n2["cross"] - 2 * fa + 8 * ff
    return val, 0.5 * n2["V"], 2 * alpha * n2["V"] + alpha * ff


def sandwich_violations(traj, f, alpha):
    """Number of steps where ``Lambda`` leaves its two-sided bound."""
    val, lo, hi = lambda_step_values(traj, f, alpha)
    slack = SANDWICH_RTOL * np.maximum(hi, 1e-300)
    return int(np.sum((val < lo - slack) | (val > hi + slack)))


# -----------------------------------------------------------------------------
# Memory convolution, translation bound, Gronwall bound
# -----------------------------------------------------------------------------


def _uniform_step(times):
    t = np.asarray(times, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two time samples")
    dt = np.diff(t)
    h = float(np.mean(dt))
    if np.max(np.abs(dt - h)) > 1e-8 * h:
        raise ValueError("trajectory gap: the memory convolution needs uniformly sampled times")
    return h


def _kernel_hat_weights(kernel, h, n):
    """``A_i = int mu(y)(1-x) dy``, ``B_i = int mu(y) x dy`` on ``[ih, (i+1)h]``, ``x = y/h - i``."""
    gx, gw = np.polynomial.legendre.leggauss(8)
    lo = h * np.arange(n)
    x = 0.5 * (gx + 1.0)
    m = kernel.mu(lo[:, None] + h * x[None, :]) * (0.5 * h * gw)[None, :]
    a_w = m @ (1 - x)
    b_w = m @ x
    # cells cut by a kernel breakpoint are redone piecewise
    for c in kernel.breakpoints:
        i = int(c // h)
        if i >= n or c == i * h:
            continue
        a_w[i] = b_w[i] = 0.0
        for p, q in ((i * h, c), (c, (i + 1) * h)):
            y = 0.5 * (q - p) * gx + 0.5 * (p + q)
            mm = kernel.mu(y) * 0.5 * (q - p) * gw
            xx = y / h - i
            a_w[i] += float(np.sum(mm * (1 - xx)))
            b_w[i] += float(np.sum(mm * xx))
    return a_w, b_w


def memory_convolution_F(times, u2, kernel):
    """``F(t_n) = int_0^{t_n} mu(t_n - s) ||u(s)||_2^2 ds`` on a uniform grid.

    ``u2`` holds ``||u||_2^2`` at ``times``; the integrand is interpolated
    linearly in ``s`` and integrated exactly against ``mu`` (product rule).
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(u2, dtype=float)
    h = _uniform_step(t)
    n = len(t)
    a_w, b_w = _kernel_hat_weights(kernel, h, n - 1)
    # F_k = sum_{i<k} g_{k-i} A_i + g_{k-1-i} B_i
    ca = signal.fftconvolve(g, a_w)
    cb = signal.fftconvolve(g, b_w)
    k = np.arange(1, n)
    F = np.zeros(n)
    tail_a = np.where(k <= n - 2, a_w[np.minimum(k, n - 2)], 0.0)
    F[1:] = ca[k] - g[0] * tail_a + cb[k - 1]
    return F


def memory_convolution_trace(traj, kernel):
    F = memory_convolution_F(traj.step_times - traj.step_times[0], traj.norms2["u2"], kernel)
    return FunctionalTrace("F", traj.step_times, F)


def translation_bound(times, values, window=1.0):
    """``sup_t int_t^{t+window} values`` over windows inside the trace."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t[-1] - t[0] < window * (1 - 1e-12):
        raise ValueError(f"trace of length {t[-1] - t[0]:.6g} shorter than the window {window}")
    c = integrate.cumulative_trapezoid(v, t, initial=0.0)
    starts = t[t + window <= t[-1] + 1e-9 * window]
    if starts.size == 0 or starts[-1] < t[-1] - window - 1e-12:
        starts = np.append(starts, t[-1] - window)
    ends = np.minimum(starts + window, t[-1])
    win = np.interp(ends, t, c) - np.interp(starts, t, c)
    return float(np.max(win))


def gronwall_bound(lambda0_initial, m0, m1, m2, t):
    """``e^{m1} L0(0) e^{-t} + e^{m1}(m0 + m0 m1 + m2)/(1 - e^{-1})``."""
    for name, v in (("lambda0_initial", lambda0_initial), ("m0", m0), ("m1", m1), ("m2", m2)):
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")
    e1 = math.exp(m1)
    return e1 * lambda0_initial * np.exp(-np.asarray(t, dtype=float)) + e1 * (m0 + m0 * m1 + m2) / (1 - math.exp(-1))


@dataclass(frozen=True)
class GronwallCheck:
    """Integrated ``Lambda_0`` against the closed-form bound at checkpoints."""

    times: np.ndarray
    lambda0: np.ndarray
    bound: np.ndarray
    m: tuple

    @property
    def holds(self):
        return bool(np.all(self.lambda0 <= self.bound))

    @property
    def worst_ratio(self):
        return float(np.max(self.lambda0 / self.bound))


def _bumps(rng, n, t_final):
    centers = rng.uniform(0.0, t_final, n)
    widths = rng.uniform(0.05, 0.5, n)
    heights = rng.uniform(0.0, 3.0, n)

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.sum(heights[:, None] * np.exp(-((t[None] - centers[:, None]) / widths[:, None]) ** 2),
                      axis=0) if t.ndim else float(np.sum(heights * np.exp(-((t - centers) / widths) ** 2)))
    return fn


def gronwall_instance(rng, t_final=10.0, n_check=201):
    """Integrate ``L0' = L0 L1 + L2`` with random translation-bounded ``L1``, ``L2``.

    ``L1 = -c + bumps`` (so ``L0`` stays bounded) and ``L2 >= 0`` are sums of
    Gaussian bumps.  The constants ``m0, m1, m2`` are the unit-window
    translation bounds of ``L0``, the positive part of ``L1`` and ``L2`` over
    ``[0, t_final]``.
    """
    c = rng.uniform(1.0, 3.0)
    b1 = _bumps(rng, int(rng.integers(1, 8)), t_final)
    b2 = _bumps(rng, int(rng.integers(1, 8)), t_final)
    l1 = lambda t: b1(t) - c
    x0 = float(rng.uniform(0.0, 5.0))
    sol = integrate.solve_ivp(lambda t, y: y * l1(t) + b2(t), (0.0, t_final), [x0],
                              method="DOP853", rtol=1e-10, atol=1e-12, dense_output=True)
    fine = np.linspace(0.0, t_final, 20 * int(t_final) * 50 + 1)
    l0 = sol.sol(fine)[0]
    m0 = translation_bound(fine, np.maximum(l0, 0.0))
    m1 = translation_bound(fine, np.maximum(l1(fine), 0.0))
    m2 = translation_bound(fine, b2(fine))
    tc = np.linspace(0.0, t_final, n_check)
    return GronwallCheck(tc, sol.sol(tc)[0], gronwall_bound(x0, m0, m1, m2, tc), (m0, m1, m2))


# -----------------------------------------------------------------------------
# Upsilon
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class UpsilonReport:
    value: float
    bound: float
    holds: bool


def upsilon_functional(xi, theta):
    """``Upsilon = int kappa ||xi||_4^2`` and the bound ``Theta ||xi||^2_{M^4}``.

    ``theta`` is the verified NEC constant (a float or a ``ConditionReport``).
    """
    if hasattr(theta, "nec_theta"):
        theta = theta.nec_theta
    if theta is None:
        raise KernelError("upsilon needs a kernel with a verified NEC constant")
    lam4 = eigenvalues(xi.n_modes) ** 4
    dens = (xi.values ** 2) @ lam4
    val = float(xi.quad.kappa_weights @ dens)
    bound = float(theta * (xi.weights @ dens))
    return UpsilonReport(val, bound, val <= bound * (1 + SANDWICH_RTOL) + 1e-300)


def upsilon_trace(traj, theta):
    """Upsilon at every snapshot plus its difference quotient."""
    reps = [upsilon_functional(HistoryField(traj.quad, e), theta) for e in traj.eta]
    vals = np.array([r.value for r in reps])
    t = np.asarray(traj.times)
    rate = np.gradient(vals, t) if len(t) > 1 else np.zeros_like(vals)
    return FunctionalTrace("Upsilon", t, vals, {"all_bounded": all(r.holds for r in reps)}), rate


# -----------------------------------------------------------------------------
# Decay fits and separation
# -----------------------------------------------------------------------------


def fit_exponential_decay(times, values, window=None, transient=1.0,
                          min_r2=DEFAULT_MIN_R2, envelope=True):
    """Fit ``log v`` linearly on ``window`` (default: drop ``transient`` at the start).

    With ``envelope`` the fit uses the upper envelope ``max_{s >= t} v(s)``,
    which removes the dips of oscillatory decay while keeping every bound
    of the form ``v(t) <= M exp(-rate t)``.  The amplitude is referenced to
    the first sample of the trace and clamped to at least 1.  The fit is
    flagged ``rejected`` when its coefficient of determination is below
    ``min_r2`` (an absolute log residual would penalize long traces whose
    rate changes between transient and asymptotic phases).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = (t[0] + transient, t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise ValueError(f"fit window {window} holds fewer than two samples")
    ts, vs = t[sel], v[sel]
    if envelope:
        vs = np.maximum.accumulate(vs[::-1])[::-1]
    if np.any(vs <= 0) or not np.all(np.isfinite(vs)):
        raise ValueError("decay fit needs strictly positive values on the window")
    y = np.log(vs)
    if np.ptp(y) == 0:
        return DecayFit(1.0, 0.0, 0.0, 0.0, tuple(map(float, window)), False)
    res = stats.linregress(ts - t[0], y)
    resid = float(np.sqrt(np.mean((y - (res.intercept + res.slope * (ts - t[0]))) ** 2)))
    ref = v[0] if v[0] > 0 else vs[0]
    amp = max(1.0, float(math.exp(res.intercept) / ref))
    r2 = float(res.rvalue ** 2)
    return DecayFit(amp, float(-res.slope), float(res.stderr), resid,
                    tuple(map(float, window)), r2 < min_r2, r2)


def v_norm_differences(traj_a, traj_b):
    """``||Z_a(t) - Z_b(t)||_V`` at the shared snapshots of two runs."""
    if len(traj_a.times) != len(traj_b.times):
        raise ValueError("runs do not share their snapshots")
    lam2 = eigenvalues(traj_a.n_modes) ** 2
    w = traj_a.quad.weights
    du = np.asarray(traj_a.u) - np.asarray(traj_b.u)
    de = np.asarray(traj_a.eta) - np.asarray(traj_b.eta)
    sq = (du ** 2) @ lam2 + np.einsum("j,kjn,n->k", w, de ** 2, lam2)
    return np.sqrt(sq)


@dataclass(frozen=True)
class SeparationResult:
    times: np.ndarray
    trace: np.ndarray
    exponent: float | None
    initial_separation: float


def separation_growth(z1, z2, config, evolve_fn=None):
    """Separation ``||S(t) z1 - S(t) z2||_V`` and its fitted exponential exponent."""
    from .dynamics import evolve

    run = evolve_fn or evolve
    cfg = config.with_(store_history=True)
    ta, tb = run(z1, cfg), run(z2, cfg)
    tr = v_norm_differences(ta, tb)
    t = np.asarray(ta.times)
    exponent = None
    if np.all(tr > 0):
        exponent = float(stats.linregress(t, np.log(tr)).slope)
    return SeparationResult(t, tr, exponent, float((z1 - z2).norm_V()))


def separation_scaling(z, direction, config, sizes=(1e-6, 2e-6), evolve_fn=None):
    """Pointwise ratio of separation traces for perturbations ``sizes``.

    ``direction`` is a :class:`StateZ` normalized internally to unit V-norm.
    Returns ``(times, traces, ratio)`` with ``ratio = trace[1] / trace[0]``.
    """
    from .dynamics import evolve

    run = evolve_fn or evolve
    cfg = config.with_(store_history=True)
    d = direction * (1.0 / direction.norm_V())
    base = run(z, cfg)
    traces = []
    for eps in sizes:
        tp = run(z + d * eps, cfg)
        traces.append(v_norm_differences(tp, base))
    traces = np.array(traces)
    return np.asarray(base.times), traces, traces[1] / traces[0]


# -----------------------------------------------------------------------------
# Differential inequality monitor
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyinReport:
    times: np.ndarray
    lhs: np.ndarray
    memory_term: np.ndarray
    forcing_term: np.ndarray
    tolerance: float
    theta_min: float
    theta: float
    violation_fraction: float

    @property
    def holds(self):
        return self.violation_fraction == 0.0


def keyin_monitor(traj, f, g, alpha, kernel, theta=None, c_tol=1.0):
    """Check ``dLambda/dt <= mu(t) Lambda + theta (F + ||f||^2 + ||g||_1^2)``.

    ``traj`` must store snapshots at every step.  ``dLambda/dt`` is the
    centered difference quotient and the tolerance is
    ``c_tol * dt * max |Lambda|``.  With ``theta=None`` the smallest admissible
    value is fitted and used; otherwise the given ``theta`` is checked.
    """
    st = np.asarray(traj.step_times)
    if len(traj.times) != len(st):
        raise ValueError("keyin_monitor needs snapshots at every step (cadence 1)")
    lam = lambda_trace(traj, f, alpha).values
    t_rel = st - st[0]
    dt = traj.dt
    lhs = (lam[2:] - lam[:-2]) / (2 * dt)
    tc = t_rel[1:-1]
    mem = kernel.mu(tc) * lam[1:-1]
    F = memory_convolution_F(t_rel, traj.norms2["u2"], kernel)[1:-1]
    ff = 0.0 if f is None else float(f.coeffs @ f.coeffs)
    if g is None:
        gg = np.zeros_like(tc)
    else:
        l1 = eigenvalues(traj.n_modes)
        gg = np.array([float(np.asarray(g(t)) ** 2 @ l1) for t in st[1:-1]])
    forcing = F + ff + gg
    tol = c_tol * dt * float(np.max(np.abs(lam)))
    excess = lhs - mem - tol
    need = excess > 0
    if np.any(need & (forcing <= 0)):
        theta_min = math.inf
    elif np.any(need):
        theta_min = float(np.max(excess[need] / forcing[need]))
    else:
        theta_min = 0.0
    th = theta_min if theta is None else float(theta)
    viol = excess > th * forcing * (1 + 1e-12)
    return KeyinReport(st[1:-1], lhs, mem, forcing, tol, theta_min, th,
                       float(np.mean(viol)) if viol.size else 0.0)


# -----------------------------------------------------------------------------
# Trajectory invariants
# -----------------------------------------------------------------------------


def max_increase(values):
    """Largest step-to-step increase, relative to the first value."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    ref = v[0] if v[0] > 0 else 1.0
    return float(max(np.max(np.diff(v)), 0.0) / ref)


def datko_tail_fraction(times, v2, tail_start=40.0):
    """``int_{tail_start}^T ||Z||_V^2 / int_0^T ||Z||_V^2``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(v2, dtype=float)
    total = integrate.trapezoid(v, t)
    if total <= 0:
        return 0.0
    # integrate the tail on its own so tiny fractions are not lost to cancellation
    sel = t > tail_start
    tt = np.concatenate([[tail_start], t[sel]])
    vv = np.concatenate([[np.interp(tail_start, t, v)], v[sel]])
    return float(integrate.trapezoid(vv, tt) / total)


def lipschitz_constant(traj, t_lo, t_hi):
    """``max ||Z(t) - Z(s)||_V / |t - s|`` over snapshot pairs in ``[t_lo, t_hi]``."""
    t = np.asarray(traj.times)
    sel = np.flatnonzero((t >= t_lo - 1e-12) & (t <= t_hi + 1e-12))
    if sel.size < 2:
        raise ValueError("need at least two snapshots in the interval")
    lam2 = eigenvalues(traj.n_modes) ** 2
    w = traj.quad.weights
    U = np.asarray(traj.u)[sel]
    E = np.asarray(traj.eta)[sel]
    best = 0.0
    for a in range(len(sel) - 1):
        du = U[a + 1:] - U[a]
        de = E[a + 1:] - E[a]
        d = np.sqrt((du ** 2) @ lam2 + np.einsum("j,kjn,n->k", w, de ** 2, lam2))
        best = max(best, float(np.max(d / (t[sel[a + 1:]] - t[sel[a]]))))
    return best


def regularization_profile(traj, t_max=1.0):
    """``sup_{0 < t <= t_max} sqrt(t - t0) ||Z(t)||_V`` from the per-step norms."""
    t = np.asarray(traj.step_times) - traj.step_times[0]
    sel = (t > 0) & (t <= t_max + 1e-12)
    return float(np.max(np.sqrt(t[sel]) * np.sqrt(traj.norms2["V"][sel])))


@dataclass
class DiagnosticsReport:
    """Named traces, scalar residuals, fitted constants and verdicts of a run."""

    traces: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def add_trace(self, trace):
        self.traces[trace.name] = trace

    @property
    def passed(self):
        return all(bool(v) for v in self.verdicts.values())

    def summary(self):
        return {
            "residuals": {k: _jsonable(v) for k, v in self.residuals.items()},
            "fits": {k: (v.as_dict() if hasattr(v, "as_dict") else _jsonable(v)) for k, v in self.fits.items()},
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "passed": self.passed,
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v
