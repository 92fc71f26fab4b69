from __future__ import annotations

import pytest

from multileave import InputRankingSet, Ranking


@pytest.fixture
def worked_example_inputs() -> InputRankingSet:
    """Three near-identical long rankings differing only in their tail order,
    the canonical scenario for the relative-order credit."""
    head = list(range(1, 100))
    return InputRankingSet(
        [
            Ranking(head + [100, 101, 102]),
            Ranking(head + [101, 102, 100]),
            Ranking(head + [102, 100, 101]),
        ]
    )


@pytest.fixture
def two_opposed() -> InputRankingSet:
    return InputRankingSet([Ranking([1, 2]), Ranking([2, 1])])
