"""Survival statistics of Sisyphus (reset-to-origin) random walkers with moving traps."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConstantVelocityTrap,
    DomainError,
    FitResult,
    LogarithmicTrap,
    OccupancyState,
    PowerLawDesign,
    StaticTrap,
    SurvivalSeries,
    TableTrap,
    trajectory_position,
    validate_trajectory,
)
from .analytics import (  # noqa: E402
    design_log_trajectory,
    gamma_sisyphus,
    lattice_beta,
    power_law_balance_residual,
    predicted_beta,
    trap_velocity,
)
from .exact import PropagationConfig, decay_rate_static, survival_exact, survival_recurrence  # noqa: E402
from .estimation import fit_exponential, fit_power_law, local_log_slope  # noqa: E402
from .montecarlo import McConfig, survival_mc  # noqa: E402
