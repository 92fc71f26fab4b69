"""Click-credit functions.

A credit function scores how well a clicked item's placement agrees with an
input ranking.  All three variants are total: an item missing from a ranking
of length L is treated as sitting at the virtual position L+1.
"""

from __future__ import annotations

import enum

from .rankings import InputRankingSet, ItemId, Ranking


class CreditFunction(enum.Enum):
    INVERSE = "inverse"
    NEGATIVE_RANK = "negative_rank"
    PERSONALIZATION = "personalization"

    @classmethod
    def parse(cls, name: str) -> "CreditFunction":
        try:
            return cls(name.strip().lower().replace("-", "_"))
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown credit function {name!r} (expected one of: {valid})") from None


def rank_of(item: ItemId, ranking: Ranking) -> int | None:
    """1-based position of ``item`` in ``ranking``, or None when absent."""
    try:
        return ranking.items.index(item) + 1
    except ValueError:
        return None


def effective_rank(item: ItemId, ranking: Ranking) -> int:
    """Rank with the absent case mapped to len(ranking) + 1."""
    r = rank_of(item, ranking)
    return len(ranking) + 1 if r is None else r


def inverse_credit(item: ItemId, ranking: Ranking) -> float:
    """Reciprocal-rank credit: 1/rank, or 1/(L+1) for an absent item."""
    return 1.0 / effective_rank(item, ranking)


def negative_rank_credit(item: ItemId, ranking: Ranking) -> int:
    """Negated-rank credit: -rank, or -(L+1) for an absent item."""
    return -effective_rank(item, ranking)


def personalization_credit(item: ItemId, target: Ranking, all_inputs: InputRankingSet) -> int:
    """Relative-order credit of ``item`` for ``target`` within ``all_inputs``.

    Counts how many input rankings place the item at least as high as the
    target does (the target itself always counts), negated.  An item absent
    from the target scores -(len(target)+1) outright; items absent from some
    other ranking enter the count at that ranking's virtual bottom position.
    """
    r_target = rank_of(item, target)
    if r_target is None:
        return -(len(target) + 1)
    count = sum(1 for other in all_inputs if effective_rank(item, other) <= r_target)
    return -count


def credit_value(
    fn: CreditFunction, item: ItemId, target: Ranking, all_inputs: InputRankingSet
) -> float:
    """Dispatch on the credit variant; personalization is the only one that
    looks beyond the target ranking."""
    if fn is CreditFunction.INVERSE:
        return inverse_credit(item, target)
    if fn is CreditFunction.NEGATIVE_RANK:
        return float(negative_rank_credit(item, target))
    return float(personalization_credit(item, target, all_inputs))
