"""Poisson-Gamma-Normal small-jump approximation of infinitely divisible laws."""

from .batch import SampleBatch
from .errors import (CenteringUnavailable, DomainError, EmptySample, HypothesisViolated,
                     InsufficientSample, MatchInfeasible, NonIntegrable, PGNError, RankDeficient,
                     RootBracketError, SchemaError, TauTooLarge)
from .levy import Custom, LogSingular, TiltedStablePoly, TruncStable, measure_from_dict
from .matching import MatchedParams, fit

__all__ = [
    "SampleBatch", "MatchedParams", "fit", "measure_from_dict",
    "TruncStable", "LogSingular", "TiltedStablePoly", "Custom",
    "PGNError", "DomainError", "NonIntegrable", "MatchInfeasible", "RootBracketError", "TauTooLarge",
    "RankDeficient", "CenteringUnavailable", "HypothesisViolated", "InsufficientSample",
    "EmptySample", "SchemaError",
]
__version__ = "0.1.0"
