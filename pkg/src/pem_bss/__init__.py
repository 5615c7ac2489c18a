"""Online blind source separation by predictive entropy maximization.

The separator maximizes a second-order entropy surrogate of the regularized
log-determinant of the streaming output covariance, subject to one of five
structured source domains.  See `pem` for the algorithm, `diagnostics` for
the surrogate-error certificates, and `experiments` for the reproducible
runner behind the `pem` command-line tool.
"""

from .datagen import MixingDistribution, SourceBatch
from .domains import SourceDomain
from .errors import (
    DegenerateMixing,
    DomainMismatch,
    InvalidInput,
    NotPositiveDefinite,
    NumericalDivergence,
    PemError,
    SpecError,
    SpectrumAtSingularity,
    TooLargeForExactAlignment,
)
from .pem import (
    InitSpec,
    PemConfig,
    PemState,
    StepSchedule,
    get_preset,
    infer_output,
    init_state,
    preset_names,
    run_online,
    slow_update,
)

__version__ = "0.1.0"

__all__ = [
    "MixingDistribution",
    "SourceBatch",
    "SourceDomain",
    "PemError",
    "InvalidInput",
    "NotPositiveDefinite",
    "DomainMismatch",
    "DegenerateMixing",
    "NumericalDivergence",
    "TooLargeForExactAlignment",
    "SpectrumAtSingularity",
    "SpecError",
    "InitSpec",
    "PemConfig",
    "PemState",
    "StepSchedule",
    "get_preset",
    "preset_names",
    "init_state",
    "infer_output",
    "slow_update",
    "run_online",
    "__version__",
]
