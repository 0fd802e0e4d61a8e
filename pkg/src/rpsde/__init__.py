"""Random periodic solutions of dissipative SDEs by pull-back schemes."""

from .errors import (ConditionError, ConfigError, DegenerateFitError, DivergenceError,
                     DomainError, ExtentError, GridAlignmentError, LogarithmExistenceError,
                     NumericalRankError, RpsError)
from .model import InitialCondition, SdeProblem, validate
from .noise import WienerPath, build_path, shift
from .oracle import LinearScalarProblem, exact_rps
from .pullback import PullbackResult, pullback_rps
from .schemes import EULER_MARUYAMA, MILSTEIN, SchemeConfig, integrate, propagate

__version__ = "0.1.0"
