"""Spectral-Galerkin simulation of heat conduction with fading memory."""

from .diagnostics import (
    DecayFit,
    DiagnosticsReport,
    FunctionalTrace,
    alpha_requirements,
    choose_alpha,
    datko_tail_fraction,
    fit_exponential_decay,
    gronwall_bound,
    keyin_monitor,
    lambda_functional,
    memory_convolution_F,
    separation_scaling,
    translation_bound,
    upsilon_functional,
)
from .dynamics import (
    EvolutionConfig,
    SampledSource,
    StateZ,
    Trajectory,
    evolve,
    evolve_forced,
    evolve_linear,
    evolve_schedule,
    make_zf,
    random_state,
    reduce_single_mode,
)
from .errors import (
    BlowUpError,
    ConfigError,
    GridMismatchError,
    KernelError,
    MemheatError,
    NonlinearityError,
    QuadratureError,
    SandwichViolation,
)
from .history import HistoryField, apply_T, build_initial_history, mr_norm, rep_residual, xi_functional
from .kernels import KernelSpec, Quadrature, check_conditions, make_kernel, quadrature
from .spectral import NonlinearitySpec, SpectralField, check_dissipativity, hr_norm, transform

__version__ = "0.1.0"

__all__ = [
    "DecayFit",
    "DiagnosticsReport",
    "FunctionalTrace",
    "alpha_requirements",
    "choose_alpha",
    "datko_tail_fraction",
    "fit_exponential_decay",
    "gronwall_bound",
    "keyin_monitor",
    "lambda_functional",
    "memory_convolution_F",
    "separation_scaling",
    "translation_bound",
    "upsilon_functional",
    "EvolutionConfig",
    "SampledSource",
    "StateZ",
    "Trajectory",
    "evolve",
    "evolve_forced",
    "evolve_linear",
    "evolve_schedule",
    "make_zf",
    "random_state",
    "reduce_single_mode",
    "BlowUpError",
    "ConfigError",
    "GridMismatchError",
    "KernelError",
    "MemheatError",
    "NonlinearityError",
    "QuadratureError",
    "SandwichViolation",
    "HistoryField",
    "apply_T",
    "build_initial_history",
    "mr_norm",
    "rep_residual",
    "xi_functional",
    "KernelSpec",
    "Quadrature",
    "check_conditions",
    "make_kernel",
    "quadrature",
    "NonlinearitySpec",
    "SpectralField",
    "check_dissipativity",
    "hr_norm",
    "transform",
    "__version__",
]
