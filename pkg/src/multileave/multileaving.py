"""Output-ranking construction: team draft, greedy-optimized selection, and
the objective terms (insensitivity, bias) the greedy method minimizes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .credit import CreditFunction
from .rankings import InputRankingSet, InvalidComparisonError, ItemId, Ranking, intern_inputs

_CREDIT_CODE = {
    CreditFunction.INVERSE: K.CREDIT_INVERSE,
    CreditFunction.NEGATIVE_RANK: K.CREDIT_NEGATIVE_RANK,
    CreditFunction.PERSONALIZATION: K.CREDIT_PERSONALIZATION,
}


class Method(enum.Enum):
    TDM = "tdm"
    GOM = "gom"

    @classmethod
    def parse(cls, name: str) -> "Method":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown multileaving method {name!r} (expected tdm or gom)") from None


@dataclass(frozen=True)
class PositionWeight:
    """Click-probability weight per 1-based display position.

    The default is the reciprocal weight 1/i.  Custom weight functions must
    be positive and non-increasing in the position.
    """

    fn: Callable[[int], float] = field(default=lambda i: 1.0 / i)

    def weights(self, length: int) -> np.ndarray:
        w = np.array([float(self.fn(i)) for i in range(1, length + 1)], dtype=np.float64)
        if np.any(w <= 0.0):
            raise ValueError("position weights must be positive")
        if np.any(np.diff(w) > 0.0):
            raise ValueError("position weights must be non-increasing")
        return w


RECIPROCAL_WEIGHT = PositionWeight()


@dataclass(frozen=True)
class GomConfig:
    """Parameters of greedy-optimized multileaving."""

    output_length: int
    candidate_count: int = 10
    alpha: float = 0.0
    credit: CreditFunction = CreditFunction.PERSONALIZATION
    rng_seed: int = 0
    position_weight: PositionWeight = RECIPROCAL_WEIGHT

    def __post_init__(self):
        if self.output_length < 1:
            raise InvalidComparisonError("output length must be at least 1")
        if self.candidate_count < 1:
            raise ValueError("candidate count must be at least 1")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class MultileaveOutcome:
    """An output ranking plus provenance about how it was built."""

    output: Ranking
    method: Method
    team_map: dict[ItemId, int] | None = None
    objective_value: float | None = None
    candidate_count_evaluated: int | None = None


def _check_length(inputs: InputRankingSet, length: int) -> None:
    if length < 1:
        raise InvalidComparisonError("output length must be at least 1")
    union = len(inputs.union_items())
    if length > union:
        raise InvalidComparisonError(
            f"output length {length} exceeds the {union} distinct items available"
        )


def tdm_multileave(inputs: InputRankingSet, length: int, rng_seed: int = 0) -> MultileaveOutcome:
    """Team-draft multileaving.

    Rankers take turns in a fresh random order each round; each contributes
    its highest-ranked item not yet shown and owns clicks on it.
    """
    _check_length(inputs, length)
    interned = intern_inputs(inputs)
    n, size = interned.n, interned.size
    state = K.seed_state(rng_seed)
    out_idx = np.empty(length, dtype=np.int32)
    team_of_item = np.empty(size, dtype=np.int32)
    K.tdm_draft_into(
        interned.rank_mat,
        interned.lengths,
        length,
        state,
        np.empty(size, dtype=np.bool_),
        np.empty(n, dtype=np.int32),
        np.empty(n, dtype=np.int32),
        out_idx,
        team_of_item,
    )
    items = tuple(interned.universe[u] for u in out_idx)
    team_map = {interned.universe[u]: int(team_of_item[u]) for u in out_idx}
    return MultileaveOutcome(output=Ranking(items), method=Method.TDM, team_map=team_map)


def candidate_rankings(
    inputs: InputRankingSet, length: int, count: int, rng_seed: int = 0
) -> list[Ranking]:
    """Draft-style candidate pool for the greedy selection, deduplicated while
    preserving generation order."""
    _check_length(inputs, length)
    if count < 1:
        raise ValueError("candidate count must be at least 1")
    interned = intern_inputs(inputs)
    cands = _raw_candidates(interned, length, count, rng_seed)
    deduped = _dedupe_rows(cands)
    return [Ranking(tuple(interned.universe[u] for u in row)) for row in deduped]


def _raw_candidates(interned, length: int, count: int, rng_seed: int) -> np.ndarray:
    state = K.seed_state(rng_seed)
    cands = np.empty((count, length), dtype=np.int32)
    K.draft_candidates_into(
        interned.rank_mat,
        interned.lengths,
        length,
        state,
        np.empty(interned.size, dtype=np.bool_),
        np.empty(interned.n, dtype=np.int32),
        cands,
    )
    return cands


def _dedupe_rows(cands: np.ndarray) -> np.ndarray:
    seen: set[bytes] = set()
    keep: list[int] = []
    for k in range(cands.shape[0]):
        key = cands[k].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(k)
    return cands[keep]


def _delta_matrix(interned, credit: CreditFunction) -> np.ndarray:
    pos = np.empty((interned.n, interned.size), dtype=np.int32)
    K.positions_into(interned.rank_mat, interned.lengths, pos)
    delta = np.empty((interned.size, interned.n), dtype=np.float64)
    K.credit_matrix_into(pos, interned.lengths, _CREDIT_CODE[credit], delta)
    return delta


def _output_indices(interned, output: Ranking) -> np.ndarray:
    return np.array([interned.index[item] for item in output.items], dtype=np.int32)


def insensitivity(
    output: Ranking,
    inputs: InputRankingSet,
    credit: CreditFunction = CreditFunction.PERSONALIZATION,
    f: PositionWeight = RECIPROCAL_WEIGHT,
) -> float:
    """Spread of per-ranker weighted credit sums around their mean.

    Lower values mean the output discriminates rankers better.
    """
    s2, _mu = _insensitivity_parts(output, inputs, credit, f)
    return s2


def mean_weighted_credit(
    output: Ranking,
    inputs: InputRankingSet,
    credit: CreditFunction = CreditFunction.PERSONALIZATION,
    f: PositionWeight = RECIPROCAL_WEIGHT,
) -> float:
    """The mean over rankers of the weighted credit sum of ``output``."""
    _s2, mu = _insensitivity_parts(output, inputs, credit, f)
    return mu


def normalized_insensitivity(
    output: Ranking,
    inputs: InputRankingSet,
    credit: CreditFunction = CreditFunction.PERSONALIZATION,
    f: PositionWeight = RECIPROCAL_WEIGHT,
) -> float:
    """Insensitivity divided by the squared mean credit, the scale-free form
    used for reporting."""
    s2, mu = _insensitivity_parts(output, inputs, credit, f)
    return s2 / (mu * mu) if mu != 0.0 else 0.0


def _insensitivity_parts(output, inputs, credit, f) -> tuple[float, float]:
    interned = intern_inputs(inputs, extra_items=output.items)
    delta = _delta_matrix(interned, credit)
    out_idx = _output_indices(interned, output)
    sums = np.empty(interned.n, dtype=np.float64)
    s2, mu = K.weighted_sums_into(out_idx, delta, f.weights(len(output)), sums)
    return float(s2), float(mu)


def bias_profile(
    output: Ranking,
    inputs: InputRankingSet,
    credit: CreditFunction = CreditFunction.PERSONALIZATION,
) -> list[float]:
    """Worst-case pairwise gap of unweighted credit prefix sums, per depth."""
    interned = intern_inputs(inputs, extra_items=output.items)
    delta = _delta_matrix(interned, credit)
    out_idx = _output_indices(interned, output)
    lambdas = np.empty(len(output), dtype=np.float64)
    K.bias_lambdas_into(out_idx, delta, np.empty(interned.n, dtype=np.float64), lambdas)
    return [float(v) for v in lambdas]


def gom_multileave(inputs: InputRankingSet, config: GomConfig) -> MultileaveOutcome:
    """Greedy-optimized multileaving: draft a candidate pool and return the
    candidate minimizing alpha * sum_r lambda_r + sigma^2.

    Ties keep the earliest-generated candidate, so the result is a pure
    function of (inputs, config).
    """
    _check_length(inputs, config.output_length)
    interned = intern_inputs(inputs)
    cands = _dedupe_rows(
        _raw_candidates(interned, config.output_length, config.candidate_count, config.rng_seed)
    )
    delta = _delta_matrix(interned, config.credit)
    f = config.position_weight.weights(config.output_length)
    n = interned.n
    k, obj, _s2, _mu = K.select_best(
        cands,
        delta,
        f,
        float(config.alpha),
        np.empty(n, dtype=np.float64),
        np.empty(n, dtype=np.float64),
        np.empty(config.output_length, dtype=np.float64),
    )
    items = tuple(interned.universe[u] for u in cands[k])
    return MultileaveOutcome(
        output=Ranking(items),
        method=Method.GOM,
        objective_value=float(obj),
        candidate_count_evaluated=int(cands.shape[0]),
    )


def multileave(
    inputs: InputRankingSet,
    method: Method,
    length: int,
    rng_seed: int = 0,
    gom: GomConfig | None = None,
) -> MultileaveOutcome:
    """Uniform entry point used by the service layer."""
    if method is Method.TDM:
        return tdm_multileave(inputs, length, rng_seed)
    cfg = gom or GomConfig(output_length=length, rng_seed=rng_seed)
    if cfg.output_length != length or cfg.rng_seed != rng_seed:
        cfg = GomConfig(
            output_length=length,
            candidate_count=cfg.candidate_count,
            alpha=cfg.alpha,
            credit=cfg.credit,
            rng_seed=rng_seed,
            position_weight=cfg.position_weight,
        )
    return gom_multileave(inputs, cfg)


def prefix_property_holds(output: Sequence[ItemId], inputs: InputRankingSet) -> bool:
    """Check that every output position holds the top not-yet-used item of at
    least one input ranking (the invariant every construction must satisfy)."""
    used: set[ItemId] = set()
    for item in output:
        ok = False
        for ranking in inputs:
            top = next((x for x in ranking.items if x not in used), None)
            if top == item:
                ok = True
                break
        if not ok:
            return False
        used.add(item)
    return True
