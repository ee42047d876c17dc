"""Memory kernels, their structural conditions, and history quadrature.

A kernel is the nonincreasing summable weight ``mu`` on (0, inf) together
with its complement ``kappa(s) = kappa0 - int_0^s mu``.  Every kernel built
here is normalized so that ``int kappa = int s mu = 1``.

Three families are supported:

``exponential``
    ``mu(s) = delta**2 * exp(-delta*s)``, ``kappa(s) = delta*exp(-delta*s)``.
``compact-linear``
    ``mu(s) = (2/a**2) * 1[0, a](s)``, so ``kappa`` is linear on the support.
``tabulated``
    Piecewise-linear interpolation of user samples (at least 16), extended
    linearly towards ``s = 0`` and by zero past the last sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import KernelError, QuadratureError

FAMILIES = ("exponential", "compact-linear", "tabulated")
NODE_RULES = ("geometric", "uniform", "composite")
WEIGHTINGS = ("auto", "trapezoid", "fitted")

#: Normalization residuals above this are rejected.
NORMALIZATION_TOL = 1e-8
#: Neglected tails of int mu and int s*mu must stay below this.
TAIL_TOL = 1e-10
#: Required decay mu(S_max) / mu(s_1) for decaying families.
DECAY_RATIO = 1e-12
#: Search interval for the best constants Theta, C, delta.
CONSTANT_RANGE = (1e-3, 1e3)
#: Cap on the NEC2 constant when C = 1 is not attainable.
NEC2_C_CAP = 10.0
MIN_TABULATED_SAMPLES = 16

_PARAM_NAMES = {"exponential": {"delta"}, "compact-linear": {"support"},
                "tabulated": {"s", "mu", "normalized", "scale"}}

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A normalized memory kernel with derived quantities on a sample grid.

    Use :func:`make_kernel` to build one; the constructor does no checking.
    """

    family: str
    params: dict
    s: np.ndarray
    mu_values: np.ndarray
    kappa0: float
    kappa_values: np.ndarray
    s_max: float
    breakpoints: tuple = ()
    normalization_residuals: tuple = (0.0, 0.0)
    _knots: tuple | None = field(default=None, repr=False)

    # -- pointwise evaluation ------------------------------------------------

    def mu(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            d = self.params["delta"]
            return d * d * np.exp(-d * np.maximum(s, 0.0))
        if self.family == "compact-linear":
            a = self.params["support"]
            return np.where(s <= a, 2.0 / a**2, 0.0)
        x, y = self._knots
        return np.where(s <= x[-1], np.interp(s, x, y), 0.0)

    def dmu(self, s):
        """Derivative of ``mu`` where it exists (jumps are ignored)."""
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            return -self.params["delta"] * self.mu(s)
        if self.family == "compact-linear":
            return np.zeros_like(s)
        x, y = self._knots
        slopes = np.diff(y) / np.diff(x)
        idx = np.clip(np.searchsorted(x, s, side="right") - 1, 0, len(slopes) - 1)
        return np.where(s < x[-1], slopes[idx], 0.0)

    def mu_integral(self, s):
        """``int_0^s mu``, evaluated exactly for every family."""
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            d = self.params["delta"]
            return d * (1.0 - np.exp(-d * np.maximum(s, 0.0)))
        if self.family == "compact-linear":
            a = self.params["support"]
            return 2.0 / a**2 * np.clip(s, 0.0, a)
        x, y = self._knots
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
        sc = np.clip(s, 0.0, x[-1])
        idx = np.clip(np.searchsorted(x, sc, side="right") - 1, 0, len(x) - 2)
        ys = np.interp(sc, x, y)
        return cum[idx] + 0.5 * (y[idx] + ys) * (sc - x[idx])

    def kappa(self, s):
        return np.maximum(self.kappa0 - self.mu_integral(s), 0.0)

    @property
    def delta(self):
        """Exponential rate, or None for non-exponential families."""
        return self.params.get("delta") if self.family == "exponential" else None

    @property
    def length_scale(self):
        if self.family == "exponential":
            return 1.0 / self.params["delta"]
        if self.family == "compact-linear":
            return self.params["support"]
        return self.s_max

    def moment(self, order, upper=None):
        """``int_0^upper s**order mu(s) ds`` by composite Gauss-Legendre."""
        upper = self.s_max if upper is None else upper
        edges = _panel_edges(self, 0.0, upper, 400)
        if self._knots is not None:
            k = self._knots[0]
            edges = np.unique(np.concatenate([edges, k[k < upper]]))
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
            total += 0.5 * (b - a) * np.dot(_GL_W, x**order * self.mu(x))
        return float(total)


def _panel_edges(kernel, lo, hi, n):
    """Panel edges on [lo, hi], graded near zero and split at breakpoints."""
    lo_pos = max(lo, 1e-9 * kernel.length_scale)
    base = np.geomspace(lo_pos, hi, n) if hi > lo_pos else np.array([hi])
    pts = np.concatenate([[lo], base, [b for b in kernel.breakpoints if lo < b < hi]])
    return np.unique(np.clip(pts, lo, hi))


def _exp_smax(delta):
    # (x + 1) e^{-x} < TAIL_TOL and e^{-x} <= DECAY_RATIO
    x_tail = optimize.brentq(lambda x: (x + 1) * math.exp(-x) - TAIL_TOL, 1.0, 200.0)
    return max(x_tail, math.log(1.0 / DECAY_RATIO)) / delta


def make_kernel(family, params=None, grid_spec=None, normalize=True):
    """Build a normalized kernel.

    Parameters
    ----------
    family : {"exponential", "compact-linear", "tabulated"}
    params : dict
        ``{"delta": d}`` (exponential), ``{"support": a}`` (compact-linear)
        or ``{"s": samples, "mu": values}`` (tabulated).
    grid_spec : dict, optional
        ``{"n": 256, "s_min": ..., "s_max": ...}`` for the sample grid of the
        analytic families.  Tabulated kernels sample at their own points.
    normalize : bool
        For tabulated kernels, rescale ``mu`` so that ``int s mu = 1``.
        Without it a non-normalized table is rejected.
    """
    params = dict(params or {})
    grid_spec = dict(grid_spec or {})
    if family not in FAMILIES:
        raise KernelError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
    unknown = set(params) - _PARAM_NAMES[family]
    if unknown:
        raise KernelError(f"unknown parameters {sorted(unknown)} for the {family} kernel; "
                          f"expected {sorted(_PARAM_NAMES[family])}")

    if family == "exponential":
        d = float(params.get("delta", 1.0))
        if not (math.isfinite(d) and d > 0):
            raise KernelError(f"exponential rate must be positive, got {d}")
        params = {"delta": d}
        s_max = float(grid_spec.get("s_max", _exp_smax(d)))
        if math.exp(-d * s_max) > DECAY_RATIO * 1.0000001:
            raise KernelError(f"s_max={s_max} too short: mu(s_max)/mu(0) > {DECAY_RATIO}")
        n = int(grid_spec.get("n", 256))
        s = np.geomspace(grid_spec.get("s_min", 1e-6 / d), s_max, n)
        kernel = KernelSpec(family, params, s, np.empty(0), d, np.empty(0), s_max)
    elif family == "compact-linear":
        a = float(params.get("support", 1.0))
        if not (math.isfinite(a) and a > 0):
            raise KernelError(f"support endpoint must be positive, got {a}")
        params = {"support": a}
        n = int(grid_spec.get("n", 256))
        s = np.concatenate([np.geomspace(grid_spec.get("s_min", 1e-6 * a), a, n - n // 8),
                            np.linspace(a, 2 * a, n // 8 + 1)[1:]])
        kernel = KernelSpec(family, params, s, np.empty(0), 2.0 / a, np.empty(0), a,
                            breakpoints=(a,))
    else:
        kernel = _tabulated(params, normalize)

    mu_vals = kernel.mu(kernel.s)
    kappa_vals = kernel.kappa(kernel.s)
    if kernel.kappa0 <= 0 or not np.any(mu_vals > 0):
        raise KernelError("degenerate kernel: kappa0 must be positive")
    res = _normalization_residuals(kernel)
    if max(res) > NORMALIZATION_TOL:
        raise KernelError(f"kernel not normalized: |int kappa - 1|, |int s mu - 1| = {res}")
    object.__setattr__(kernel, "mu_values", mu_vals)
    object.__setattr__(kernel, "kappa_values", kappa_vals)
    object.__setattr__(kernel, "normalization_residuals", res)
    return kernel


def _tabulated(params, normalize):
    s = np.asarray(params.get("s", []), dtype=float)
    mu = np.asarray(params.get("mu", []), dtype=float)
    if s.shape != mu.shape or s.ndim != 1:
        raise KernelError("tabulated kernel needs equal-length 1-D 's' and 'mu'")
    if len(s) < MIN_TABULATED_SAMPLES:
        raise KernelError(f"tabulated kernel needs at least {MIN_TABULATED_SAMPLES} samples, got {len(s)}")
    if not np.all(np.isfinite(s)) or not np.all(np.isfinite(mu)):
        raise KernelError("tabulated kernel has nonfinite entries")
    if s[0] <= 0 or np.any(np.diff(s) <= 0):
        raise KernelError("tabulated grid must be strictly increasing with s_1 > 0")
    if np.any(mu < 0):
        raise KernelError("tabulated mu must be nonnegative")
    if np.any(np.diff(mu) > 0):
        j = int(np.argmax(np.diff(mu) > 0))
        raise KernelError(f"tabulated mu is not nonincreasing near s={s[j + 1]:.6g}")
    if not np.any(mu > 0):
        raise KernelError("degenerate kernel: kappa0 must be positive")
    slope0 = (mu[1] - mu[0]) / (s[1] - s[0])
    x = np.concatenate([[0.0], s])
    y = np.concatenate([[mu[0] - slope0 * s[0]], mu])
    m1 = _first_moment_pl(x, y)
    if normalize:
        y = y / m1
    kappa0 = float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))
    bps = (float(s[-1]),) if mu[-1] > 0 else ()
    return KernelSpec("tabulated", {"normalized": bool(normalize), "scale": 1.0 / m1 if normalize else 1.0},
                      s.copy(), np.empty(0), kappa0, np.empty(0), float(s[-1]),
                      breakpoints=bps, _knots=(x, y))


def _first_moment_pl(x, y):
    # exact for piecewise-linear y: int s*y over each segment
    a, b = x[:-1], x[1:]
    ya, yb = y[:-1], y[1:]
    return float(np.sum((b - a) * (a * (2 * ya + yb) + b * (ya + 2 * yb)) / 6.0))


def _normalization_residuals(kernel):
    total_k = total_m = 0.0
    for a, b in _segments(kernel):
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        total_k += 0.5 * (b - a) * np.dot(_GL_W, kernel.kappa(x))
        total_m += 0.5 * (b - a) * np.dot(_GL_W, x * kernel.mu(x))
    return (abs(float(total_k) - 1.0), abs(float(total_m) - 1.0))


def _segments(kernel):
    edges = _panel_edges(kernel, 0.0, kernel.s_max, 400)
    if kernel._knots is not None:
        edges = np.unique(np.concatenate([edges, kernel._knots[0]]))
    return zip(edges[:-1], edges[1:])


def load_tabulated_csv(path, normalize=True):
    """Read a two-column ``s, mu`` CSV (header optional) into a kernel."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise KernelError(f"{path}: malformed row {rec!r}") from None
    if not rows:
        raise KernelError(f"{path}: no samples")
    s, mu = np.array(rows).T
    return make_kernel("tabulated", {"s": s, "mu": mu}, normalize=normalize)


def kernel_from_config(section, base_dir=None):
    """Build a kernel from a config mapping (``family`` plus parameters)."""
    import os

    section = dict(section)
    family = section.pop("family", "exponential")
    if family == "tabulated":
        path = section.pop("path")
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_tabulated_csv(path, normalize=section.pop("normalize", True))
    grid = {k: section.pop(k) for k in ("n", "s_min", "s_max") if k in section}
    return make_kernel(family, section, grid)


# -----------------------------------------------------------------------------
# Structural conditions
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    holds: bool
    constants: dict
    witness: object = None
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    nec: ConditionResult
    nec2: ConditionResult
    bad: ConditionResult
    normalization_residuals: tuple
    envelope_holds: bool | None
    bad_implies_nec2: bool | None

    @property
    def nec_theta(self):
        return self.nec.constants.get("theta") if self.nec.holds else None

    @property
    def bad_delta(self):
        return self.bad.constants.get("delta") if self.bad.holds else None

    @property
    def nec2_pair(self):
        if not self.nec2.holds:
            return None
        return self.nec2.constants["C"], self.nec2.constants["delta"]

    def as_dict(self):
        out = {}
        for r in (self.nec, self.nec2, self.bad):
            w = r.witness
            if isinstance(w, np.ndarray):
                w = w.tolist()
            out[r.name] = {"holds": r.holds, **r.constants, "witness": w, "note": r.note}
        out["normalization_residuals"] = list(self.normalization_residuals)
        out["envelope_holds"] = self.envelope_holds
        out["bad_implies_nec2"] = self.bad_implies_nec2
        return out


def _coarse_to_fine(pred, lo, hi, smallest, n_coarse=61, rtol=1e-10):
    """Extreme feasible value of a monotone predicate on [lo, hi] (log scale).

    ``smallest=True`` finds the smallest x with pred(x); otherwise the
    largest.  Returns None when no lattice point is feasible.
    """
    lattice = np.geomspace(lo, hi, n_coarse)
    ok = np.array([pred(x) for x in lattice])
    if not ok.any():
        return None
    if smallest:
        i = int(np.argmax(ok))
        if i == 0:
            return float(lattice[0])
        bad, good = lattice[i - 1], lattice[i]
    else:
        i = len(ok) - 1 - int(np.argmax(ok[::-1]))
        if i == len(ok) - 1:
            return float(lattice[-1])
        good, bad = lattice[i], lattice[i + 1]
    while abs(good / bad - 1.0) > rtol:
        mid = math.sqrt(good * bad)
        if pred(mid):
            good = mid
        else:
            bad = mid
    return float(good)


def check_conditions(kernel, n_lattice=96):
    """Report NEC, NEC2 and BAD for ``kernel`` with best constants found.

    A failing condition carries a witness (a point ``s`` or a pair
    ``(s, sigma)``); failures are data, never exceptions.
    """
    # s = 0 enters as the right limit of mu
    s = np.concatenate([[0.0], kernel.s])
    mu = np.concatenate([[kernel.mu(0.0)], kernel.mu_values])
    kap = np.concatenate([[kernel.kappa0], kernel.kappa_values])
    lo, hi = CONSTANT_RANGE
    atol_k = 1e-13 * kernel.kappa0
    mu_scale = float(mu.max())

    # NEC: kappa <= Theta mu
    def nec_ok(theta):
        return bool(np.all(kap <= theta * mu + atol_k))

    theta = _coarse_to_fine(nec_ok, lo, hi, smallest=True)
    if theta is None:
        j = int(np.argmax(kap - hi * mu))
        nec = ConditionResult("NEC", False, {}, float(s[j]), f"kappa > {hi:g} mu at witness")
    else:
        nec = ConditionResult("NEC", True, {"theta": theta})

    # BAD: mu' + delta mu <= 0 a.e., checked where the derivative exists
    sb = _derivative_points(kernel)
    mub, dmub = kernel.mu(sb), kernel.dmu(sb)

    def bad_ok(d):
        return bool(np.all(dmub + d * mub <= 1e-13 * mu_scale))

    dbad = _coarse_to_fine(bad_ok, lo, hi, smallest=False)
    if dbad is None:
        j = int(np.argmax(dmub + lo * mub))
        bad = ConditionResult("BAD", False, {}, float(sb[j]),
                              f"mu' + delta mu = {dmub[j] + lo * mub[j]:.3g} > 0 for delta={lo:g}")
    else:
        bad = ConditionResult("BAD", True, {"delta": dbad})

    # NEC2: mu(s + sigma) <= C exp(-delta sigma) mu(s) on a log lattice
    ls = np.geomspace(kernel.s[0], kernel.s_max, n_lattice)
    lsig = np.geomspace(kernel.s[0], kernel.s_max, n_lattice)
    S, SIG = np.meshgrid(ls, lsig, indexing="ij")
    base = kernel.mu(S)
    shifted = kernel.mu(S + SIG)
    live = (base > 0) & (shifted > 0)
    with np.errstate(divide="ignore"):
        log_ratio = np.where(live, np.log(np.where(live, shifted, 1.0) / np.where(live, base, 1.0)), -np.inf)

    def c_of(d):
        return math.exp(min(700.0, max(0.0, float(np.max(log_ratio + d * SIG)))))

    d1 = _coarse_to_fine(lambda d: c_of(d) <= 1.0 + 1e-12, lo, hi, smallest=False)
    if d1 is not None:
        nec2 = ConditionResult("NEC2", True, {"C": 1.0, "delta": d1})
    else:
        dc = _coarse_to_fine(lambda d: c_of(d) <= NEC2_C_CAP, lo, hi, smallest=False)
        if dc is None:
            k = np.unravel_index(np.argmax(log_ratio + lo * SIG), log_ratio.shape)
            nec2 = ConditionResult("NEC2", False, {}, (float(S[k]), float(SIG[k])),
                                   f"C > {NEC2_C_CAP:g} even for delta={lo:g}")
        else:
            nec2 = ConditionResult("NEC2", True, {"C": c_of(dc), "delta": dc},
                                   note=f"C = 1 unattainable; delta chosen with C <= {NEC2_C_CAP:g}")

    envelope = None
    if nec.holds:
        th = nec.constants["theta"]
        envelope = bool(np.all(kap <= kernel.kappa0 * np.exp(-s / th) * (1 + 1e-12) + atol_k))
    implied = None
    if bad.holds:
        implied = c_of(bad.constants["delta"]) <= 1.0 + 1e-12
    return ConditionReport(nec, nec2, bad, kernel.normalization_residuals, envelope, implied)


def _derivative_points(kernel):
    if kernel.family == "tabulated":
        # mu' is constant per segment, so mu' + delta mu peaks at left knots
        return kernel._knots[0][:-1]
    s = kernel.s
    if kernel.breakpoints:
        s = s[~np.isin(s, kernel.breakpoints)]
    return s


# -----------------------------------------------------------------------------
# History quadrature
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Nodes and weights discretizing the measure ``mu(s) ds``.

    ``weights[j]`` plays the role of ``mu(s) ds`` at node ``s_j`` and
    ``kappa_weights[j]`` of ``kappa(s) ds``.  The cell widths ``spacings``
    (with ``s_0 = 0``) are those of the upwind translation operator.
    Unpacks as ``nodes, weights = quad``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kappa_weights: np.ndarray
    rule: str
    weighting: str
    kernel: KernelSpec | None = None

    def __iter__(self):
        return iter((self.nodes, self.weights))

    def __len__(self):
        return len(self.nodes)

    @property
    def spacings(self):
        return np.diff(np.concatenate([[0.0], self.nodes]))

    @property
    def densities(self):
        """Cell densities ``w_j / h_j``; nonincreasing by construction."""
        return self.weights / self.spacings

    @property
    def max_spacing(self):
        return float(self.spacings.max())

    def refined(self):
        """Same rule with every cell split in two (a fitted tail cell is kept)."""
        s0 = np.concatenate([[0.0], self.nodes])
        mids = 0.5 * (s0[1:] + s0[:-1])
        keep_tail = self.weighting == "fitted"
        inner = mids[:-1] if keep_tail else mids
        nodes = np.sort(np.concatenate([self.nodes, inner]))
        return quadrature_from_nodes(self.kernel, nodes, self.weighting, rule=self.rule)


def _graded_nodes(n, s_min, s_max, tail, ratio=1.25):
    """Geometric grading from ``s_min`` merging into uniform cells, last cell ``tail``."""
    base = s_min * ratio ** np.arange(n - 1 if tail else n)
    tail = tail or 0.0

    def reach(cap):
        return np.minimum(base, cap).sum() + tail - s_max

    if reach(np.inf) < 0:
        raise QuadratureError(f"{n} nodes cannot reach s_max={s_max} with grading from {s_min}")
    cap = optimize.brentq(reach, s_min * 1e-6, s_max)
    h = np.minimum(base, cap)
    if tail:
        h = np.append(h, tail)
    return np.cumsum(h)


def quadrature(kernel, node_rule="composite", n_nodes=64, s_min=None, s_max=None,
               weighting="auto"):
    """Discretize ``mu(s) ds`` on ``n_nodes`` points.

    Parameters
    ----------
    kernel : KernelSpec
    node_rule : {"geometric", "uniform", "composite"}
        ``geometric`` spaces nodes geometrically on ``(s_min, s_max)``;
        ``uniform`` uses ``s_j = j s_max / n``; ``composite`` grades
        geometrically from ``s_min`` into uniform cells.
    weighting : {"auto", "trapezoid", "fitted"}
        ``trapezoid`` integrates ``mu`` against the piecewise-linear hat
        basis on ``0 = s_0 < s_1 < ...`` (the ``s_0`` share is folded into
        ``s_1``).  ``fitted`` is only defined for the exponential family: the
        cell densities obey ``c_{j+1} = c_j (1 - delta h_j)`` with a final
        cell of width ``1/delta``, which makes the zeroth and first moments
        exact and closes the memory moment ``m = sum w_j eta_j`` as
        ``m' = kappa0 u - delta m`` under upwind transport.  ``auto`` picks
        ``fitted`` for exponential kernels on the composite rule.
    """
    if node_rule not in NODE_RULES:
        raise QuadratureError(f"unknown node rule {node_rule!r}; expected one of {NODE_RULES}")
    if weighting not in WEIGHTINGS:
        raise QuadratureError(f"unknown weighting {weighting!r}")
    if n_nodes < 4:
        raise QuadratureError(f"insufficient nodes: need at least 4, got {n_nodes}")
    ell = kernel.length_scale
    if weighting == "auto":
        weighting = "fitted" if (kernel.family == "exponential" and node_rule == "composite") else "trapezoid"
    if weighting == "fitted" and kernel.family != "exponential":
        raise QuadratureError("fitted weights exist only for the exponential family")

    if node_rule == "geometric":
        lo = 1e-4 * ell if s_min is None else s_min
        hi = kernel.s_max if s_max is None else s_max
        nodes = np.geomspace(lo, hi, n_nodes)
    elif node_rule == "uniform":
        hi = kernel.s_max if s_max is None else s_max
        nodes = np.linspace(hi / n_nodes, hi, n_nodes)
    else:
        lo = 1e-3 * ell if s_min is None else s_min
        if weighting == "fitted":
            hi = 14.0 * ell if s_max is None else s_max
            nodes = _graded_nodes(n_nodes, lo, hi, tail=ell)
        else:
            hi = kernel.s_max if s_max is None else s_max
            nodes = _graded_nodes(n_nodes, lo, hi, tail=None)
    return quadrature_from_nodes(kernel, nodes, weighting, rule=node_rule)


def quadrature_from_nodes(kernel, nodes, weighting="trapezoid", rule="custom"):
    """Weights for explicit nodes; see :func:`quadrature` for the weightings."""
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 4:
        raise QuadratureError(f"insufficient nodes: need at least 4, got {len(nodes)}")
    if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
        raise QuadratureError("nodes must be strictly increasing and positive")
    h = np.diff(np.concatenate([[0.0], nodes]))
    if weighting == "fitted":
        d = kernel.delta
        if d is None:
            raise QuadratureError("fitted weights exist only for the exponential family")
        if np.any(d * h[:-1] >= 1.0):
            raise QuadratureError("fitted weights need delta * h_j < 1 on interior cells")
        if abs(d * h[-1] - 1.0) > 1e-9:
            raise QuadratureError("fitted weights need a final cell of width 1/delta")
        c = d * d * np.concatenate([[1.0], np.cumprod(1.0 - d * h[:-1])])
        w = c * h
        wk = w / d
    else:
        w = _hat_weights(kernel, nodes, kernel.mu)
        wk = _hat_weights(kernel, nodes, kernel.kappa)
        c = w / h
        if np.any(np.diff(c) > 1e-14 * c.max()):
            # restore the discrete dissipativity; the total mass is preserved
            c = optimize.isotonic_regression(c, weights=h, increasing=False).x
            w = c * h
    return Quadrature(nodes, w, wk, rule, weighting, kernel)


def _hat_weights(kernel, nodes, fn):
    s0 = np.concatenate([[0.0], nodes])
    cuts = np.unique(np.concatenate([s0, [b for b in kernel.breakpoints if 0 < b < nodes[-1]]]))
    a, b = cuts[:-1], cuts[1:]
    x = 0.5 * (b - a)[:, None] * _GL_X[None, :] + 0.5 * (a + b)[:, None]
    fx = fn(x) * (0.5 * (b - a))[:, None] * _GL_W[None, :]
    cell = np.clip(np.searchsorted(s0, 0.5 * (a + b)) - 1, 0, len(nodes) - 1)
    left, right = s0[cell], s0[cell + 1]
    lam = (x - left[:, None]) / (right - left)[:, None]
    w = np.zeros(len(s0))
    np.add.at(w, cell + 1, np.sum(fx * lam, axis=1))
    np.add.at(w, cell, np.sum(fx * (1.0 - lam), axis=1))
    w[1] += w[0]
    return w[1:]
