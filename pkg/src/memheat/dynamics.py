"""Time stepping of the coupled temperature/memory system.

    u_t + A u + sum_j w_j A eta_j + phi(u) = f + g(t)
    eta_t = T_h eta + u

The linear part (``A u``, the memory coupling and the upwind transport) is
advanced by backward Euler solved exactly mode by mode; ``phi`` and the
source ``g`` are explicit at the current level.  Writing ``D`` for the
bidiagonal matrix of ``-T_h``, ``G = (I + dt D)^{-1}`` and ``g = dt G 1``,
one step is

    u'   = (u + dt F - dt lam (w G eta)) / (1 + dt lam + dt lam (w g))
    eta' = G eta + g u'

which is an exact contraction in every ``H^r`` norm of the linear part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import BlowUpError, KernelError
from .history import HistoryField, mr_inner, mr_norm
from .kernels import KernelSpec, Quadrature, quadrature
from .spectral import (NonlinearitySpec, SpectralField, default_collocation, eigenvalues,
                       hr_norm, to_grid_array, to_modes_array)

BLOWUP_THRESHOLD = 1e6


@dataclass(frozen=True, eq=False)
class StateZ:
    """A phase-space point ``(u, eta)`` at time ``t``."""

    u: SpectralField
    eta: HistoryField
    t: float = 0.0

    @property
    def n_modes(self):
        return self.u.n_modes

    @property
    def quad(self):
        return self.eta.quad

    def norm_H(self, r=0):
        """``||Z||_{H^r} = (||u||_r^2 + ||eta||_{M^{r+1}}^2)^{1/2}``."""
        return math.sqrt(hr_norm(self.u, r) ** 2 + mr_norm(self.eta, r + 1) ** 2)

    def norm_V(self):
        """``||Z||_V = (||u||_2^2 + ||eta||_{M^2}^2)^{1/2}``."""
        return math.sqrt(hr_norm(self.u, 2) ** 2 + mr_norm(self.eta, 2) ** 2)

    def inner_H(self, other, r=0):
        return (self.u.inner(other.u, r) + mr_inner(self.eta, other.eta, r + 1))

    def __add__(self, other):
        return StateZ(self.u + other.u, self.eta + other.eta, self.t)

    def __sub__(self, other):
        return StateZ(self.u - other.u, self.eta - other.eta, self.t)

    def __mul__(self, c):
        return StateZ(self.u * c, self.eta * c, self.t)

    __rmul__ = __mul__

    def at_time(self, t):
        return StateZ(self.u, self.eta, t)

    @classmethod
    def zeros(cls, quad, n_modes, t=0.0):
        return cls(SpectralField.zeros(n_modes), HistoryField.zeros(quad, n_modes), t)

    @classmethod
    def from_arrays(cls, quad, u, eta, t=0.0):
        return cls(SpectralField(u), HistoryField(quad, eta), t)


class SampledSource:
    """A time-dependent field ``g(t)`` given by samples, linearly interpolated.

    Evaluating outside the sampled interval raises ``ValueError``.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.shape[0]:
            raise ValueError("source samples must be (T, N) with T matching times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("source times must be strictly increasing")
        self._tol = 1e-9 * max(1.0, abs(self.times[-1]))

    @property
    def t_min(self):
        return float(self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1])

    def covers(self, t0, t1):
        return self.t_min <= t0 + self._tol and self.t_max >= t1 - self._tol

    def __call__(self, t):
        if not self.covers(t, t):
            raise ValueError(f"source sampled on [{self.t_min:.6g}, {self.t_max:.6g}] queried at t={t:.6g}")
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and abs(self.times[i] - t) <= self._tol:
            return self.values[i]
        if i > 0 and abs(self.times[i - 1] - t) <= self._tol:
            return self.values[i - 1]
        i = min(max(i, 1), len(self.times) - 1)
        t0, t1 = self.times[i - 1], self.times[i]
        lam = (t - t0) / (t1 - t0)
        return (1 - lam) * self.values[i - 1] + lam * self.values[i]

    @classmethod
    def from_trajectory(cls, traj, fn):
        """Apply ``fn(u_coeffs_array) -> array`` to every stored step of ``traj``."""
        return cls(traj.step_times, fn(traj.u_steps))

    @classmethod
    def minus_phi(cls, traj, phi, n_points=None):
        """``g(t_n) = -phi(u(t_n))`` along a stored run."""
        m = n_points or default_collocation(traj.n_modes)
        return cls.from_trajectory(traj, lambda a: -phi_modes(a, phi, m))

    @classmethod
    def phi_difference(cls, traj1, traj2, phi, n_points=None):
        """``g(t_n) = phi(u_2(t_n)) - phi(u_1(t_n))`` for two stored runs."""
        if not np.allclose(traj1.step_times, traj2.step_times, rtol=0, atol=1e-12):
            raise ValueError("trajectories must share their time grid")
        m = n_points or default_collocation(traj1.n_modes)
        return cls(traj1.step_times, phi_modes(traj2.u_steps, phi, m) - phi_modes(traj1.u_steps, phi, m))


def phi_modes(a, phi, n_points):
    if phi is None or phi.is_zero:
        return np.zeros_like(a)
    return to_modes_array(phi(to_grid_array(a, n_points)), a.shape[-1])


@dataclass(frozen=True, eq=False)
class EvolutionConfig:
    """Discretization and data of one run.

    ``quad`` defaults to ``quadrature(kernel)`` (64 composite nodes).
    ``cadence`` is the number of steps between stored full snapshots; the
    temperature ``u`` and the norms are recorded at every step.
    """

    dt: float
    t_final: float
    kernel: KernelSpec
    n_modes: int = 64
    quad: Quadrature | None = None
    phi: NonlinearitySpec | None = None
    f: SpectralField | None = None
    g: Callable | None = None
    cadence: int = 100
    store_history: bool = True
    n_points: int | None = None
    blowup_threshold: float = BLOWUP_THRESHOLD
    stability_bound: float = 2.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"time step must be positive, got {self.dt}")
        if not self.t_final > 0:
            raise ValueError(f"final time must be positive, got {self.t_final}")
        if self.quad is None:
            object.__setattr__(self, "quad", quadrature(self.kernel))
        if self.f is not None and self.f.n_modes != self.n_modes:
            raise ValueError("forcing mode count does not match n_modes")
        if self.cadence < 1:
            raise ValueError("cadence must be at least 1")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def collocation(self):
        return self.n_points or default_collocation(self.n_modes)

    def with_(self, **kw):
        return replace(self, **kw)


class LinearPropagator:
    """Precomputed backward-Euler operators for a fixed grid and step.

    Grids of up to ``dense_limit`` nodes apply ``G`` as a dense matrix;
    larger ones use a bidiagonal solve.
    """

    dense_limit = 128

    def __init__(self, quad, n_modes, dt):
        self.quad = quad
        self.dt = dt
        self.n_modes = n_modes
        h = quad.spacings
        J = len(h)
        # (I + dt D) in banded storage, D = -T_h
        self.ab = np.vstack([1.0 + dt / h, np.append(-dt / h[1:], 0.0)])
        self.dense = J <= self.dense_limit
        ones = np.ones(J)
        self.gvec = dt * linalg.solve_banded((1, 0), self.ab, ones)
        w = quad.weights
        if self.dense:
            D = np.diag(1.0 / h) - np.diag(1.0 / h[1:], -1)
            self.G = linalg.solve_triangular(np.eye(J) + dt * D, np.eye(J), lower=True)
            self.wG = w @ self.G
        self.wg = float(w @ self.gvec)
        self.lam = eigenvalues(n_modes)
        self.denom = 1.0 + dt * self.lam * (1.0 + self.wg)

    def apply_G(self, eta):
        if self.dense:
            return self.G @ eta
        return linalg.solve_banded((1, 0), self.ab, eta, check_finite=False)

    def step(self, u, eta, forcing=None):
        """Advance arrays ``(u, eta)`` by one step with explicit ``forcing``."""
        Geta = self.apply_G(eta)
        rhs = u - self.dt * self.lam * (self.quad.weights @ Geta)
        if forcing is not None:
            rhs = rhs + self.dt * forcing
        u_new = rhs / self.denom
        eta_new = Geta + np.outer(self.gvec, u_new)
        return u_new, eta_new


@dataclass
class Trajectory:
    """Output of a run.

    ``times``/``u``/``eta`` hold snapshots every ``cadence`` steps (plus the
    last step).  ``step_times`` with ``u_steps`` and the squared norms
    ``norms2[name]`` are recorded at every step, including ``t0``.
    """

    quad: Quadrature
    n_modes: int
    dt: float
    times: list = field(default_factory=list)
    u: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    step_times: np.ndarray | None = None
    u_steps: np.ndarray | None = None
    norms2: dict = field(default_factory=dict)
    observed: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.state(-1)

    def state(self, i):
        eta = self.eta[i] if self.eta else np.zeros((len(self.quad.nodes), self.n_modes))
        return StateZ.from_arrays(self.quad, self.u[i], eta, float(self.times[i]))

    def states(self):
        return [self.state(i) for i in range(len(self.times))]

    def norm(self, name):
        """Per-step norm (not squared): ``H0``, ``H1``, ``H2``, ``V``, ``u2``."""
        return np.sqrt(self.norms2[name])

    def snapshot_index(self, t):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return i

    def concat(self, other):
        """Join a continuation run that starts at this run's final state."""
        if abs(other.step_times[0] - self.step_times[-1]) > 1e-9 * max(1.0, self.step_times[-1]):
            raise ValueError("continuation does not start at the end of this run")
        out = Trajectory(self.quad, self.n_modes, self.dt)
        out.times = list(self.times) + list(other.times[1:])
        out.u = list(self.u) + list(other.u[1:])
        out.eta = list(self.eta) + list(other.eta[1:]) if self.eta and other.eta else []
        out.step_times = np.concatenate([self.step_times, other.step_times[1:]])
        out.u_steps = np.concatenate([self.u_steps, other.u_steps[1:]])
        out.norms2 = {k: np.concatenate([v, other.norms2[k][1:]]) for k, v in self.norms2.items()}
        out.observed = {k: v + other.observed.get(k, [])[1:] for k, v in self.observed.items()}
        out.metadata = {**self.metadata, "continued": other.metadata,
                        "max_phi_stiffness": max(self.metadata.get("max_phi_stiffness", 0.0),
                                                 other.metadata.get("max_phi_stiffness", 0.0))}
        return out


def _sq_norms(u, eta, w, powers):
    # powers = [1, lam, lam^2, lam^3]
    uu = powers @ (u * u)
    we = powers @ (w @ (eta * eta))
    cross = powers[2] @ (u * (w @ eta))
    return uu[0] + we[1], uu[1] + we[2], uu[2] + we[3], uu[2] + we[2], uu[2], uu[1], we[2], cross


# squared norms, plus the cross term <eta, u>_{M^2} needed by the energy functional
_NORM_NAMES = ("H0", "H1", "H2", "V", "u2", "u1", "eta2", "cross")


def evolve(z0, config, observers=None, propagator=None):
    """Run the full system from ``z0`` over ``[z0.t, z0.t + t_final]``.

    Parameters
    ----------
    z0 : StateZ
    config : EvolutionConfig
    observers : dict of name -> callable(StateZ), optional
        Evaluated at every snapshot.

    Raises
    ------
    BlowUpError
        On nonfinite values or ``||u||_inf`` above the threshold.
    """
    quad = config.quad
    if z0.eta.quad is not quad and not np.array_equal(z0.eta.nodes, quad.nodes):
        raise ValueError("initial history lives on a different s-grid than the config")
    N = config.n_modes
    if z0.n_modes != N:
        raise ValueError(f"initial state has {z0.n_modes} modes, config expects {N}")
    prop = propagator or LinearPropagator(quad, N, config.dt)
    dt, n_steps, m = config.dt, config.n_steps, config.collocation
    t0 = float(z0.t)
    if config.g is not None and isinstance(config.g, SampledSource):
        if not config.g.covers(t0, t0 + (n_steps - 1) * dt):
            raise ValueError(f"source g sampled on [{config.g.t_min:.6g}, {config.g.t_max:.6g}] "
                             f"does not cover [{t0:.6g}, {t0 + n_steps * dt:.6g}]")
    phi = config.phi if config.phi is not None and not config.phi.is_zero else None
    f = None if config.f is None else np.array(config.f.coeffs)
    w, lam = quad.weights, prop.lam
    observers = observers or {}

    u = np.array(z0.u.coeffs)
    eta = np.array(z0.eta.values)
    traj = Trajectory(quad, N, dt)
    step_times = t0 + dt * np.arange(n_steps + 1)
    u_steps = np.empty((n_steps + 1, N))
    norm_rows = np.empty((n_steps + 1, len(_NORM_NAMES)))
    powers = np.vstack([np.ones_like(lam), lam, lam ** 2, lam ** 3])
    traj.observed = {k: [] for k in observers}

    def record(n, t):
        u_steps[n] = u
        norm_rows[n] = _sq_norms(u, eta, w, powers)
        if n % config.cadence == 0 or n == n_steps:
            traj.times.append(t)
            traj.u.append(u.copy())
            if config.store_history:
                traj.eta.append(eta.copy())
            if observers:
                z = StateZ.from_arrays(quad, u, eta, t)
                for k, fn in observers.items():
                    traj.observed[k].append(fn(z))

    record(0, t0)
    max_stiff = 0.0
    for n in range(n_steps):
        t = step_times[n]
        forcing = None if f is None else f.copy()
        if phi is not None:
            grid = to_grid_array(u, m)
            pu = to_modes_array(phi(grid), N)
            forcing = -pu if forcing is None else forcing - pu
            if n % 10 == 0:
                max_stiff = max(max_stiff, dt * float(np.max(np.abs(phi.derivative(grid)))))
        if config.g is not None:
            gv = np.asarray(config.g(t), dtype=float)
            forcing = gv if forcing is None else forcing + gv
        u_new, eta_new = prop.step(u, eta, forcing)
        _check_blowup(u_new, eta_new if n % 100 == 99 else None, step_times[n + 1], quad,
                      u, eta, t, config.blowup_threshold, m)
        u, eta = u_new, eta_new
        record(n + 1, step_times[n + 1])

    traj.step_times = step_times
    traj.u_steps = u_steps
    traj.norms2 = {k: norm_rows[:, i].copy() for i, k in enumerate(_NORM_NAMES)}
    traj.metadata = {
        "dt": dt,
        "t0": t0,
        "t_final": float(step_times[-1]),
        "n_steps": n_steps,
        "n_modes": N,
        "n_nodes": len(quad.nodes),
        "cadence": config.cadence,
        "max_phi_stiffness": max_stiff,
        "stiffness_within_bound": max_stiff <= config.stability_bound,
    }
    return traj


def _check_blowup(u_new, eta_new, t_new, quad, u, eta, t, threshold, m):
    bad = not np.all(np.isfinite(u_new)) or (eta_new is not None and not np.all(np.isfinite(eta_new)))
    if not bad and np.abs(u_new).sum() > threshold:
        bad = float(np.max(np.abs(to_grid_array(u_new, m)))) > threshold
    if bad:
        last = StateZ.from_arrays(quad, u, eta, t)
        raise BlowUpError(f"blow-up detected at t={t_new:.6g} (nonfinite or ||u||_inf > {threshold:g})",
                          t_new, last)


def evolve_linear(z0, config, **kw):
    """Homogeneous linear semigroup ``L(t) z0``: no ``phi``, ``f`` or ``g``."""
    if config.phi is not None and not config.phi.is_zero:
        raise ValueError("evolve_linear requires phi = 0")
    if config.f is not None and np.any(config.f.coeffs != 0):
        raise ValueError("evolve_linear requires f = 0")
    if config.g is not None:
        raise ValueError("evolve_linear requires g = 0")
    return evolve(z0, config, **kw)


def evolve_forced(z0, f, g, config, **kw):
    """Linear evolution with time-independent ``f`` and source ``g(t)``.

    ``g`` is a :class:`SampledSource` (or any callable of ``t``); it must
    cover every step level ``t0, ..., t0 + t_final - dt``.  ``phi`` is
    ignored.
    """
    if isinstance(g, SampledSource):
        t0 = float(z0.t)
        last = t0 + (config.n_steps - 1) * config.dt
        if not g.covers(t0, last):
            raise ValueError(f"g samples [{g.t_min:.6g}, {g.t_max:.6g}] do not cover [{t0:.6g}, {last:.6g}]")
    return evolve(z0, config.with_(phi=None, f=f, g=g), **kw)


# -----------------------------------------------------------------------------
# Stationary state and the single-mode oracle
# -----------------------------------------------------------------------------


def make_zf(f, quad):
    """``z_f = (u_f, eta_f)`` with ``u_f = A^{-1} f / 2`` and ``eta_f(s) = u_f s``."""
    u_f = SpectralField(0.5 * f.coeffs / eigenvalues(f.n_modes))
    return StateZ(u_f, HistoryField.linear(quad, u_f))


def zf_residual(z, f):
    """Residuals of the stationary linear system at ``z``.

    Returns ``(r_u, r_eta)`` with ``r_u = ||A u + sum w A eta - f||`` and
    ``r_eta = ||T_h eta + u||_{M^1}``.
    """
    from .history import apply_T

    lam = eigenvalues(z.n_modes)
    mem = z.eta.weights @ z.eta.values
    r_u = hr_norm(lam * (z.u.coeffs + mem) - f.coeffs, 0)
    t_eta = apply_T(z.eta).values + z.u.coeffs[None, :]
    r_eta = mr_norm(HistoryField(z.quad, t_eta), 1)
    return r_u, r_eta


@dataclass(frozen=True)
class SingleModeReduction:
    """Closed 2x2 dynamics of ``(u_k, m_k)``, ``m_k = int mu eta_k``."""

    k: int
    matrix: np.ndarray

    @property
    def eigenvalues(self):
        return np.linalg.eigvals(self.matrix)

    @property
    def decay_rate(self):
        return float(-np.max(self.eigenvalues.real))

    def evaluate(self, t, y0):
        """``exp(t M) y0`` for scalar or array ``t``."""
        y0 = np.asarray(y0, dtype=float)
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([linalg.expm(tt * self.matrix) @ y0 for tt in ts])
        return out[0] if np.ndim(t) == 0 else out


def reduce_single_mode(k, kernel):
    """The exact reduction ``u' = -lam_k (u + m)``, ``m' = kappa0 u - delta m``."""
    if kernel.family != "exponential":
        raise KernelError("single-mode reduction is exact only for the exponential family")
    lam = float(k * k)
    d = kernel.params["delta"]
    return SingleModeReduction(k, np.array([[-lam, -lam], [kernel.kappa0, -d]]))


def memory_moment(eta, k=None):
    """``m = sum_j w_j eta_j`` (all modes, or mode ``k``)."""
    m = eta.weights @ eta.values
    return m if k is None else float(m[k - 1])


# -----------------------------------------------------------------------------
# Random initial data
# -----------------------------------------------------------------------------


def random_state(quad, n_modes, rng, u_decay=3.0, eta_decay=3.0, eta_profile="smooth",
                 radius=None, space="H1"):
    """Random state with smooth ``u`` and a history profile in ``s``.

    ``eta_profile`` is ``"smooth"`` (``eta(s) = sum_i c_i (1 - exp(-s/ell_i))``)
    or ``"rough"`` (independent node values, bounded in ``s``).  With
    ``radius`` the two components are scaled to share the norm of ``space``
    (``"H0"``, ``"H1"``, ``"H2"`` or ``"V"``) equally.
    """
    k = np.arange(1, n_modes + 1, dtype=float)
    u = rng.standard_normal(n_modes) * k ** (-u_decay)
    s = quad.nodes[:, None]
    if eta_profile == "rough":
        eta = rng.standard_normal((len(quad.nodes), n_modes)) * k ** (-eta_decay)
    else:
        ell = rng.uniform(0.2, 3.0, size=2)
        c = rng.standard_normal((2, n_modes)) * k ** (-eta_decay)
        eta = sum(c[i][None, :] * (1 - np.exp(-s / ell[i])) for i in range(2))
    z = StateZ.from_arrays(quad, u, eta)
    if radius is not None:
        ru, re = _space_orders(space)
        half = radius / math.sqrt(2.0)
        nu, ne = hr_norm(z.u, ru), mr_norm(z.eta, re)
        z = StateZ(z.u * (half / nu), z.eta * (half / ne))
    return z


def _space_orders(space):
    table = {"H0": (0, 1), "H1": (1, 2), "H2": (2, 3), "V": (2, 2)}
    if space not in table:
        raise ValueError(f"unknown phase space {space!r}")
    return table[space]


def state_norm(z, space):
    ru, re = _space_orders(space)
    return math.sqrt(hr_norm(z.u, ru) ** 2 + mr_norm(z.eta, re) ** 2)


def scale_to(z, norm_fn, radius):
    n = norm_fn(z)
    return z * (radius / n) if n > 0 else z


def evolve_schedule(z0, config, schedule, **kw):
    """Run consecutive segments ``[(duration, dt), ...]`` and join them.

    Useful when the explicit nonlinearity is stiff only during an initial
    transient.  Segments share ``config`` apart from ``dt``/``t_final``.
    """
    traj, z = None, z0
    for duration, dt in schedule:
        part = evolve(z, config.with_(dt=dt, t_final=duration), **kw)
        traj = part if traj is None else traj.concat(part)
        z = part.final
    return traj
