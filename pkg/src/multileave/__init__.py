"""Multileaving toolkit for online ranking evaluation."""

from .credit import (
    CreditFunction,
    inverse_credit,
    negative_rank_credit,
    personalization_credit,
    rank_of,
)
from .multileaving import (
    GomConfig,
    Method,
    MultileaveOutcome,
    PositionWeight,
    bias_profile,
    candidate_rankings,
    gom_multileave,
    insensitivity,
    multileave,
    normalized_insensitivity,
    tdm_multileave,
)
from .rankings import (
    InputRankingSet,
    InvalidComparisonError,
    InvalidRankingError,
    ItemId,
    Ranking,
)

__version__ = "0.1.0"

__all__ = [
    "CreditFunction",
    "GomConfig",
    "InputRankingSet",
    "InvalidComparisonError",
    "InvalidRankingError",
    "ItemId",
    "Method",
    "MultileaveOutcome",
    "PositionWeight",
    "Ranking",
    "bias_profile",
    "candidate_rankings",
    "gom_multileave",
    "insensitivity",
    "inverse_credit",
    "multileave",
    "negative_rank_credit",
    "normalized_insensitivity",
    "personalization_credit",
    "rank_of",
    "tdm_multileave",
    "__version__",
]
