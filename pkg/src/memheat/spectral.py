"""Fields on (0, pi) in the Dirichlet sine basis.

A field is ``u(x) = sum_k a_k sin(k x)`` with ``k = 1..N``.  Norms use the
unit-coefficient convention: ``||sin(k x)|| = 1``, so that

    ||u||_r**2 = sum_k lambda_k**r a_k**2,   lambda_k = k**2.

Pointwise work (the nonlinearity, sup norms) runs on the DST-I collocation
grid ``x_m = m pi / (M + 1)``, ``m = 1..M``, with ``M >= 3N`` by default
(the next FFT-friendly length).  For odd polynomials of degree at most 5
that grid is alias-free.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial
from scipy import fft

from .errors import NonlinearityError

LAMBDA_1 = 1.0
MAX_DEGREE = 5
DEALIAS_FACTOR = 3


def eigenvalues(n_modes):
    """Dirichlet Laplacian eigenvalues ``k**2`` on (0, pi), ``k = 1..n``."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return k * k


def default_collocation(n_modes):
    """Smallest M >= 3N for which the DST-I length 2(M+1) factors into small primes."""
    return fft.next_fast_len(DEALIAS_FACTOR * n_modes + 1, real=True) - 1


def collocation_points(n_points):
    return np.arange(1, n_points + 1) * (np.pi / (n_points + 1))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Sine coefficients of a field; immutable (the array is read-only)."""

    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float, copy=True).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def zeros(cls, n_modes):
        return cls(np.zeros(n_modes))

    @classmethod
    def mode(cls, k, n_modes, amplitude=1.0):
        a = np.zeros(n_modes)
        a[k - 1] = amplitude
        return cls(a)

    @property
    def n_modes(self):
        return self.coeffs.shape[0]

    def norm(self, r=0.0):
        return hr_norm(self, r)

    def inner(self, other, r=0.0):
        return hr_inner(self, other, r)

    def sup_norm(self, refine=4):
        """``max |u(x)|`` sampled on a grid ``refine`` times the collocation grid."""
        m = default_collocation(refine * self.n_modes)
        return float(np.max(np.abs(transform(self, "to_grid", n_points=m)), initial=0.0))

    def apply_A(self, power=1.0):
        return SpectralField(eigenvalues(self.n_modes) ** power * self.coeffs)

    def truncate(self, n_modes):
        a = np.zeros(n_modes)
        m = min(n_modes, self.n_modes)
        a[:m] = self.coeffs[:m]
        return SpectralField(a)

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.n_modes != self.n_modes:
                raise ValueError(f"mode count mismatch: {self.n_modes} vs {other.n_modes}")
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        b = self._other(other)
        return NotImplemented if b is NotImplemented else SpectralField(self.coeffs + b)

    def __sub__(self, other):
        b = self._other(other)
        return NotImplemented if b is NotImplemented else SpectralField(self.coeffs - b)

    def __mul__(self, c):
        if isinstance(c, (int, float, np.floating, np.integer)):
            return SpectralField(self.coeffs * float(c))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SpectralField(self.coeffs / float(c))

    def __neg__(self):
        return SpectralField(-self.coeffs)

    def allclose(self, other, atol=1e-12):
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"SpectralField(N={self.n_modes}, ||u||={self.norm():.6g})"


def _coeffs(field):
    return field.coeffs if isinstance(field, SpectralField) else np.asarray(field, dtype=float)


def transform(data, direction, n_points=None, n_modes=None):
    """Sine synthesis (``"to_grid"``) or analysis (``"to_modes"``).

    Parameters
    ----------
    data : SpectralField, array
        Coefficients for ``to_grid``; grid values (length M) for ``to_modes``.
    direction : {"to_grid", "to_modes"}
    n_points : int, optional
        Collocation count M for ``to_grid`` (default: the smallest fast
        length with ``M >= 3 N``).
    n_modes : int, optional
        Number of modes N returned by ``to_modes`` (default M).
    """
    if direction == "to_grid":
        a = _coeffs(data)
        n = a.shape[-1]
        m = default_collocation(n) if n_points is None else int(n_points)
        if m < n:
            raise ValueError(f"collocation count M={m} smaller than mode count N={n}")
        return to_grid_array(a, m)
    if direction == "to_modes":
        u = np.asarray(data, dtype=float)
        m = u.shape[-1]
        n = m if n_modes is None else int(n_modes)
        if m < n:
            raise ValueError(f"collocation count M={m} smaller than mode count N={n}")
        return SpectralField(to_modes_array(u, n))
    raise ValueError(f"direction must be 'to_grid' or 'to_modes', got {direction!r}")


def to_grid_array(a, m):
    """Grid values of coefficient array(s) ``a`` (last axis) on M points."""
    return 0.5 * fft.dst(a, type=1, n=m, axis=-1)


def to_modes_array(u, n):
    m = u.shape[-1]
    return (fft.dst(u, type=1, axis=-1) / (m + 1))[..., :n]


def grid_l2_norm(values):
    """L2 norm of grid samples in the unit-coefficient convention."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(2.0 / (v.shape[-1] + 1) * np.sum(v * v)))


def hr_norm(field, r=0.0):
    a = _coeffs(field)
    return float(np.sqrt(np.sum(eigenvalues(a.shape[-1]) ** r * a * a)))


def hr_inner(u, v, r=0.0):
    a, b = _coeffs(u), _coeffs(v)
    if a.shape != b.shape:
        raise ValueError(f"mode count mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(eigenvalues(a.shape[-1]) ** r * a * b))


def resolvent_solve(field, tau, r_shift=1.0):
    """Solve ``(I + tau A**r_shift) a = b`` mode by mode."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    b = _coeffs(field)
    return SpectralField(b / (1.0 + tau * eigenvalues(b.shape[-1]) ** r_shift))


# -----------------------------------------------------------------------------
# Nonlinearity
# -----------------------------------------------------------------------------


def _as_fraction(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, float):
        if not math.isfinite(c):
            raise NonlinearityError(f"nonfinite coefficient {c}")
        return Fraction(repr(c))
    return Fraction(c)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Polynomial ``phi(u) = sum_i c_i u**i`` with rational coefficients.

    ``coeffs`` are in ascending powers.  ``phi(0) = 0`` and ``deg phi <= 5``
    are enforced, so that ``|phi''(u)| <= c (1 + |u|**p)`` holds with
    ``p = max(deg - 2, 0) <= 3`` and ``c`` the sum of the absolute
    coefficients of ``phi''``.
    """

    coeffs: tuple

    def __post_init__(self):
        c = [_as_fraction(x) for x in self.coeffs]
        while c and c[-1] == 0:
            c.pop()
        if c and c[0] != 0:
            raise NonlinearityError(f"phi(0) must vanish, got constant term {c[0]}")
        if len(c) - 1 > MAX_DEGREE:
            raise NonlinearityError(f"degree {len(c) - 1} exceeds the critical degree {MAX_DEGREE}")
        object.__setattr__(self, "coeffs", tuple(c))
        # descending float coefficients for np.polyval
        fc = [float(x) for x in reversed(c)] or [0.0]
        object.__setattr__(self, "_desc", np.array(fc))
        object.__setattr__(self, "_ddesc", np.polyder(np.array(fc)) if len(fc) > 1 else np.array([0.0]))

    @classmethod
    def from_powers(cls, terms):
        """Build from ``{power: coefficient}``, e.g. ``{5: 1, 1: -1}``."""
        terms = {int(k): v for k, v in dict(terms).items()}
        deg = max(terms, default=0)
        return cls(tuple(terms.get(i, 0) for i in range(deg + 1)))

    @property
    def degree(self):
        return max(len(self.coeffs) - 1, 0)

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def is_odd(self):
        return all(c == 0 for c in self.coeffs[0::2])

    @property
    def growth_exponent(self):
        return max(self.degree - 2, 0)

    @property
    def second_derivative_coeffs(self):
        return tuple(c * i * (i - 1) for i, c in enumerate(self.coeffs))[2:]

    @property
    def growth_constant(self):
        """``c`` with ``|phi''(u)| <= c (1 + |u|**p)`` for all real u."""
        return float(sum(abs(b) for b in self.second_derivative_coeffs))

    @property
    def polynomial(self):
        return Polynomial([float(c) for c in self.coeffs] or [0.0])

    def __call__(self, u):
        return np.polyval(self._desc, u)

    def derivative(self, u):
        return np.polyval(self._ddesc, u)

    def as_list(self):
        return [str(c) for c in self.coeffs]


def apply_phi(field, phi, n_points=None):
    """Sine modes of ``phi(u(x))`` computed on the collocation grid."""
    if not isinstance(phi, NonlinearitySpec):
        phi = NonlinearitySpec(tuple(phi))
    a = _coeffs(field)
    n = a.shape[-1]
    return SpectralField(apply_phi_array(a, phi, n_points or default_collocation(n)))


def apply_phi_array(a, phi, n_points):
    n = a.shape[-1]
    if phi.is_zero:
        return np.zeros_like(a)
    return to_modes_array(phi(to_grid_array(a, n_points)), n)


@dataclass(frozen=True)
class DissipativityReport:
    """Outcome of the dissipation check ``liminf phi' > -lambda_1``."""

    liminf: float
    min_outside: float
    argmin_outside: float
    global_min: float
    argmin_global: float
    margin: float
    accepted: bool
    probe_interval: tuple

    def as_dict(self):
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in self.__dict__.items()}


def check_dissipativity(phi, probe_interval=(-10.0, 10.0), lambda_1=LAMBDA_1):
    """Report ``liminf_{|u|->inf} phi'(u)`` and the minimum of ``phi'`` off a compact set.

    ``margin = liminf + lambda_1``; the condition holds when it is positive.
    The minimum of ``phi'`` on ``|u| >= R`` outside ``probe_interval`` is
    reported with its location (finite when ``phi'`` is bounded below).
    """
    lo, hi = probe_interval
    if not lo < hi:
        raise ValueError("probe interval must satisfy lo < hi")
    dp = phi.polynomial.deriv()
    dc = np.trim_zeros(dp.coef, "b")
    deg = len(dc) - 1
    if deg <= 0:
        c = float(dc[0]) if len(dc) else 0.0
        liminf = min_out = gmin = c
        arg_out, garg = float(hi), 0.0
    elif deg % 2 == 0 and dc[deg] > 0:
        liminf = math.inf
        crit = dp.deriv().roots()
        crit = [float(np.real(x)) for x in crit if abs(np.imag(x)) < 1e-12]
        out = [x for x in crit if x <= lo or x >= hi] + [float(lo), float(hi)]
        vals = [float(dp(x)) for x in out]
        j = int(np.argmin(vals))
        min_out, arg_out = vals[j], out[j]
        gvals = [float(dp(x)) for x in crit]
        j = int(np.argmin(gvals))
        gmin, garg = gvals[j], crit[j]
    else:
        liminf = min_out = gmin = -math.inf
        # direction in which phi' is unbounded below
        arg_out = garg = -math.inf if (deg % 2 == 1 and dc[deg] > 0) else math.inf
    margin = liminf + lambda_1
    return DissipativityReport(liminf, min_out, arg_out, gmin, garg, margin, margin > 0,
                               (float(lo), float(hi)))


# -----------------------------------------------------------------------------
# Random fields and the Agmon constant
# -----------------------------------------------------------------------------


def random_field(n_modes, rng, decay=2.0, scale=1.0):
    """Gaussian coefficients ``a_k ~ scale * k**-decay * N(0, 1)``."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return SpectralField(scale * rng.standard_normal(n_modes) * k ** (-decay))


def agmon_ratio(field, refine=8):
    """``||u||_inf**2 / (||u||_1 ||u||_2)`` for a nonzero field."""
    den = hr_norm(field, 1) * hr_norm(field, 2)
    return field.sup_norm(refine) ** 2 / den


def fit_agmon_constant(n_modes, n_samples=200, seed=0, n_max=64, decay=3.0):
    """Fitted constant ``c`` in ``||u||_inf**2 <= c ||u||_1 ||u||_2``.

    The sample family is drawn once at ``n_max`` modes with a fixed seed and
    truncated to ``n_modes``, so fits at different N see the same fields.
    Returns the largest observed ratio (a diagnostic, not a certified bound).
    """
    rng = np.random.default_rng(seed)
    k = np.arange(1, max(n_max, n_modes) + 1, dtype=float)
    family = rng.standard_normal((n_samples, len(k))) * k ** (-decay)
    ratios = [agmon_ratio(SpectralField(a[:n_modes])) for a in family]
    return float(max(ratios))


# -----------------------------------------------------------------------------
# CSV
# -----------------------------------------------------------------------------


def write_fields_csv(path, fields, times=None):
    """One row per field (optionally prefixed by a time column)."""
    fields = list(fields)
    n = fields[0].n_modes if fields else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ([] if times is None else ["t"]) + [f"a{k}" for k in range(1, n + 1)]
        w.writerow(head)
        for i, f in enumerate(fields):
            row = [] if times is None else [_fmt(times[i])]
            w.writerow(row + [_fmt(x) for x in f.coeffs])


def read_fields_csv(path):
    """Inverse of :func:`write_fields_csv`; returns ``(times or None, fields)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    has_t = head and head[0] == "t"
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(head)))
    times = data[:, 0] if has_t else None
    coef = data[:, 1:] if has_t else data
    return times, [SpectralField(r) for r in coef]


def _fmt(x):
    return "%.17g" % x
