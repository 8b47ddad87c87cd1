"""Extremes of Shepp statistics for Gaussian processes.

Models of the input process, exact simulation of the standardized
increment field, closed-form tail asymptotics, Pickands constants and
desk-scale Monte Carlo studies.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CholeskyFailure,
    ConfigError,
    DegenerateVariance,
    DomainError,
    EmbeddingFailure,
    FitFailure,
    IncommensurateGrid,
    OutOfTableRange,
    QuadratureFailure,
    SheppError,
)
from .models import (  # noqa: E402
    Example21Field,
    IncrementVariance,
    LocalStructure,
    StationaryCovariance,
    local_structure,
    shepp_correlation,
)
from .fieldsim import SheppGrid, simulate_field, simulate_maxima  # noqa: E402
from .asymptotics import (  # noqa: E402
    limit_cdf,
    normal_tail,
    normalizers,
    tail_constant,
    tail_probability_asym,
)
from .pickands import estimate_pickands, estimate_pickands_discrete  # noqa: E402
