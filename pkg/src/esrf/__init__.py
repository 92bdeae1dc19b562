"""Ensemble square root filters, their mean-field limits, and rate experiments."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateFit,
    DimensionMismatch,
    EsrfError,
    InvalidStep,
    NotPSD,
    QuadratureUnderResolved,
    SolveFailure,
    UnknownModel,
    UnsupportedTestFunction,
)
from .filters import Ensemble, TransformVariant, analysis, audit_identities, forecast
from .la import (
    SymmetricMatrix,
    integral_inv_sqrt,
    inv_sqrt_shifted,
    pinv_sqrt,
    spectral_norm,
    sqrt_psd,
    trace,
)
from .models import (
    ObservationSeries,
    StateSpaceModel,
    Trajectory,
    builtin_model,
    builtin_models,
    simulate_continuous,
    simulate_discrete,
)
from .reference import GaussianBelief, kb_integrate, kf_predict, kf_update
from .rng import NoiseStream
from .transforms import (
    kalman_gain,
    transform_eakf,
    transform_etkf,
    transform_unified,
    transform_whitaker,
)

__all__ = [name for name in dir() if not name.startswith("_")]
