"""The memory variable on a quadrature grid in s.

``eta`` is stored densely as a ``(J, N)`` array: row ``j`` holds the sine
coefficients of ``eta(s_j)``.  The boundary value ``eta(0) = 0`` is implicit.
The translation generator ``T = -d/ds`` is discretized by the upwind
difference toward ``s = 0``,

    (T_h eta)_j = -(eta_j - eta_{j-1}) / h_j,   eta_0 = 0,

whose quadratic form is nonpositive whenever the cell densities
``w_j / h_j`` are nonincreasing (summation by parts).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import GridMismatchError, HistoryExtensionWarning, QuadratureError
from .kernels import Quadrature
from .spectral import SpectralField, eigenvalues

__all__ = [
    "HistoryField",
    "XiValue",
    "mr_inner",
    "mr_norm",
    "apply_T",
    "xi_functional",
    "build_initial_history",
    "rep_residual",
    "write_history_csv",
    "read_history_csv",
]


@dataclass(frozen=True, eq=False)
class HistoryField:
    """Memory variable ``eta(s_j)`` at the nodes of ``quad``."""

    quad: Quadrature
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[0] != len(self.quad.nodes):
            raise GridMismatchError(
                f"history values of shape {v.shape} do not match {len(self.quad.nodes)} nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, quad, n_modes):
        return cls(quad, np.zeros((len(quad.nodes), n_modes)))

    @classmethod
    def linear(cls, quad, u):
        """``eta(s) = u s``, the profile of a constant past."""
        a = u.coeffs if isinstance(u, SpectralField) else np.asarray(u, dtype=float)
        return cls(quad, np.outer(quad.nodes, a))

    @property
    def nodes(self):
        return self.quad.nodes

    @property
    def weights(self):
        return self.quad.weights

    @property
    def n_nodes(self):
        return self.values.shape[0]

    @property
    def n_modes(self):
        return self.values.shape[1]

    def at(self, j):
        return SpectralField(self.values[j])

    def norm(self, r=0.0):
        return mr_norm(self, r)

    def _like(self, values):
        return HistoryField(self.quad, values)

    def _check(self, other):
        _check_grids(self, other)
        return other.values

    def __add__(self, other):
        return self._like(self.values + self._check(other))

    def __sub__(self, other):
        return self._like(self.values - self._check(other))

    def __mul__(self, c):
        return self._like(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __repr__(self):
        return f"HistoryField(J={self.n_nodes}, N={self.n_modes})"


def _check_grids(eta, psi):
    if eta.values.shape != psi.values.shape:
        raise GridMismatchError(f"history shapes differ: {eta.values.shape} vs {psi.values.shape}")
    if eta.quad is not psi.quad and not (
            np.array_equal(eta.quad.nodes, psi.quad.nodes)
            and np.array_equal(eta.quad.weights, psi.quad.weights)):
        raise GridMismatchError("history fields live on different s-grids")


def mr_inner(eta, psi, r=0.0):
    """``<eta, psi>_{M^r} = sum_j w_j <eta(s_j), psi(s_j)>_r``."""
    _check_grids(eta, psi)
    lam = eigenvalues(eta.n_modes) ** r
    return float(eta.weights @ ((eta.values * psi.values) @ lam))


def mr_norm(eta, r=0.0):
    lam = eigenvalues(eta.n_modes) ** r
    return float(np.sqrt(max(eta.weights @ ((eta.values ** 2) @ lam), 0.0)))


def apply_T(eta):
    """Upwind ``T_h eta`` with the boundary value ``eta(0) = 0``."""
    if eta.n_nodes < 2:
        raise QuadratureError(f"translation operator needs at least 2 nodes, got {eta.n_nodes}")
    h = eta.quad.spacings
    diff = np.diff(eta.values, axis=0, prepend=np.zeros((1, eta.n_modes)))
    return eta._like(-diff / h[:, None])


@dataclass(frozen=True)
class XiValue:
    """The two parts of the W-norm functional and the maximizing ``x``."""

    translation_term: float
    tail_term: float
    argmax_x: float

    @property
    def total(self):
        return self.translation_term + self.tail_term

    def __float__(self):
        return self.total


def xi_functional(eta):
    """``||T eta||^2_{M^2} + sup_{x >= 1} x * int_{(0,1/x) u (x,inf)} mu ||eta||_2^2``.

    The supremum runs over the dyadic sample ``x = 1, 2, 4, ...`` up to the
    last node.
    """
    t_term = mr_norm(apply_T(eta), 2.0) ** 2
    s = eta.nodes
    dens = eta.weights * ((eta.values ** 2) @ eigenvalues(eta.n_modes) ** 2)
    xs = 2.0 ** np.arange(0, max(int(np.floor(np.log2(max(s[-1], 1.0)))), 0) + 1)
    best, arg = 0.0, 1.0
    for x in xs:
        mask = (s < 1.0 / x) | (s > x)
        val = float(x) * float(dens[mask].sum())
        if val > best:
            best, arg = val, float(x)
    return XiValue(t_term, best, arg)


def build_initial_history(quad, past, times=None, n_modes=None):
    """``eta_0(s) = int_0^s u_hat(-y) dy`` at the nodes of ``quad``.

    Parameters
    ----------
    quad : Quadrature
    past : callable or array
        Either ``past(t) -> coefficients`` for ``t <= 0`` (integrated per cell
        by Gauss-Legendre), or an array ``(T, N)`` of samples at ``times``.
    times : array, optional
        Sample times on ``(-T_past, 0]`` (any order) when ``past`` is an array.

    Past samples that stop short of the last node are extended by their
    oldest value and a :class:`HistoryExtensionWarning` is issued.
    """
    s0 = np.concatenate([[0.0], quad.nodes])
    if callable(past):
        gx, gw = np.polynomial.legendre.leggauss(12)
        cells = []
        for a, b in zip(s0[:-1], s0[1:]):
            y = 0.5 * (b - a) * gx + 0.5 * (a + b)
            vals = np.array([np.asarray(past(-yy), dtype=float) for yy in y])
            cells.append(0.5 * (b - a) * (gw @ vals))
        return HistoryField(quad, np.cumsum(np.array(cells), axis=0))

    vals = np.asarray([getattr(v, "coeffs", v) for v in past], dtype=float)
    t = np.asarray(times, dtype=float)
    if vals.ndim != 2 or len(t) != len(vals):
        raise ValueError("past samples must be (T, N) with matching times")
    if np.any(t > 1e-12):
        raise ValueError("past samples must lie at times t <= 0")
    order = np.argsort(-t)
    y, vals = -t[order], vals[order]
    if y[0] > 0:
        y = np.concatenate([[0.0], y])
        vals = np.vstack([vals[:1], vals])
    cum = integrate.cumulative_trapezoid(vals, y, axis=0, initial=0.0)
    out = np.empty((len(quad.nodes), vals.shape[1]))
    inside = quad.nodes <= y[-1]
    for k in range(vals.shape[1]):
        out[inside, k] = np.interp(quad.nodes[inside], y, cum[:, k])
    if not inside.all():
        warnings.warn(
            f"past samples reach s={y[-1]:.6g} but the grid extends to {quad.nodes[-1]:.6g}; "
            "tail extended by the oldest sample", HistoryExtensionWarning, stacklevel=2)
        extra = quad.nodes[~inside] - y[-1]
        out[~inside] = cum[-1] + np.outer(extra, vals[-1])
    return HistoryField(quad, out)


def rep_residual(eta_t, u_times, u_values, t):
    """Mismatch between ``eta^t`` and ``int_0^s u(t - y) dy`` on nodes ``s_j <= t``.

    ``u_times``/``u_values`` hold the stored solution on ``[0, t]``.  The
    maximum of ``||eta^t(s_j) - integral||_2`` is divided by
    ``||eta^t||_{M^2}`` (returned absolute when that norm vanishes).
    """
    if u_times is None or len(u_times) == 0:
        raise ValueError("no stored trajectory for the representation formula")
    tt = np.asarray(u_times, dtype=float)
    uv = np.asarray(u_values, dtype=float)
    if tt[0] > 1e-12 or tt[-1] < t - 1e-9 * max(1.0, t):
        raise ValueError(f"stored trajectory [{tt[0]:.6g}, {tt[-1]:.6g}] does not cover [0, {t:.6g}]")
    keep = tt <= t + 1e-12
    tt, uv = tt[keep], uv[keep]
    # integrate u(t - y) over y in [0, s]: variable y = t - tau
    y = (t - tt)[::-1]
    cum = integrate.cumulative_trapezoid(uv[::-1], y, axis=0, initial=0.0)
    nodes = eta_t.nodes
    sel = np.flatnonzero(nodes <= t + 1e-12)
    if sel.size == 0:
        return 0.0
    lam2 = eigenvalues(eta_t.n_modes) ** 2
    worst = 0.0
    for j in sel:
        ref = np.array([np.interp(nodes[j], y, cum[:, k]) for k in range(uv.shape[1])])
        worst = max(worst, float(np.sqrt(np.sum(lam2 * (eta_t.values[j] - ref) ** 2))))
    scale = mr_norm(eta_t, 2.0)
    return worst / scale if scale > 0 else worst


def write_history_csv(path, eta):
    """Rows are s-nodes: ``s, w, w_kappa, a1..aN``."""
    q = eta.quad
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "w", "w_kappa"] + [f"a{k}" for k in range(1, eta.n_modes + 1)])
        for j in range(eta.n_nodes):
            w.writerow(["%.17g" % x for x in (q.nodes[j], q.weights[j], q.kappa_weights[j], *eta.values[j])])


def read_history_csv(path, kernel=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    quad = Quadrature(data[:, 0], data[:, 1], data[:, 2], "custom", "file", kernel)
    return HistoryField(quad, data[:, 3:])
