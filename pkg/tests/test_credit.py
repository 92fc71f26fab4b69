from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multileave import (
    CreditFunction,
    InputRankingSet,
    Ranking,
    inverse_credit,
    negative_rank_credit,
    personalization_credit,
    rank_of,
)

ABC = Ranking([1, 2, 3])


class TestRankOf:
    def test_middle(self):
        assert rank_of(2, ABC) == 2

    def test_top(self):
        assert rank_of(1, ABC) == 1

    def test_absent(self):
        assert rank_of(99, ABC) is None


class TestInverseCredit:
    def test_worked_example(self, worked_example_inputs):
        i1, i2, i3 = worked_example_inputs
        assert inverse_credit(101, i1) == pytest.approx(1.0 / 101, rel=1e-12)
        assert inverse_credit(101, i2) == pytest.approx(1.0 / 100, rel=1e-12)
        assert inverse_credit(101, i3) == pytest.approx(1.0 / 102, rel=1e-12)

    def test_absent_uses_virtual_bottom(self):
        assert inverse_credit(99, ABC) == pytest.approx(0.25)

    def test_range_and_monotonicity(self):
        r = Ranking(list(range(10)))
        credits = [inverse_credit(i, r) for i in range(10)]
        assert all(0.0 < c <= 1.0 for c in credits)
        assert credits == sorted(credits, reverse=True)
        assert inverse_credit(999, r) < credits[-1]


class TestNegativeRankCredit:
    @pytest.mark.parametrize("item,expected", [(1, -1), (3, -3), (99, -4)])
    def test_examples(self, item, expected):
        assert negative_rank_credit(item, ABC) == expected

    def test_range(self):
        r = Ranking([5, 6, 7, 8])
        for item in [5, 6, 7, 8, 99]:
            assert -(len(r) + 1) <= negative_rank_credit(item, r) <= -1


class TestPersonalizationCredit:
    def test_worked_example(self, worked_example_inputs):
        inputs = worked_example_inputs
        i1, i2, i3 = inputs
        assert personalization_credit(101, i1, inputs) == -2
        assert personalization_credit(101, i2, inputs) == -1
        assert personalization_credit(101, i3, inputs) == -3

    def test_same_position_everywhere_scores_minus_n(self):
        inputs = InputRankingSet([Ranking([7, 1, 2]), Ranking([7, 2, 1]), Ranking([7, 3, 4])])
        for target in inputs:
            assert personalization_credit(7, target, inputs) == -3

    def test_absent_from_target(self):
        inputs = InputRankingSet([Ranking([1, 2, 3]), Ranking([4, 5])])
        assert personalization_credit(4, inputs[0], inputs) == -4
        assert personalization_credit(1, inputs[1], inputs) == -3

    def test_earliest_strict_holder_gets_minus_one(self):
        inputs = InputRankingSet([Ranking([9, 1, 2]), Ranking([1, 9, 2]), Ranking([1, 2, 9])])
        assert personalization_credit(9, inputs[0], inputs) == -1


def _permutations_of(items):
    return st.permutations(items).map(tuple)


@st.composite
def shuffled_input_sets(draw, max_items=6, max_rankers=4):
    size = draw(st.integers(min_value=2, max_value=max_items))
    n = draw(st.integers(min_value=2, max_value=max_rankers))
    items = list(range(size))
    rankings = [Ranking(draw(_permutations_of(items))) for _ in range(n)]
    return InputRankingSet(rankings)


@given(shuffled_input_sets())
@settings(max_examples=60, deadline=None)
def test_personalization_bounds_when_present(inputs):
    n = inputs.n
    for item in inputs.union_items():
        for target in inputs:
            c = personalization_credit(item, target, inputs)
            assert -n <= c <= -1


@given(shuffled_input_sets(), st.integers(min_value=1, max_value=4))
@settings(max_examples=40, deadline=None)
def test_personalization_rank_shift_invariance(inputs, k):
    """Prepending a common prefix to every input leaves all credits of the
    original items unchanged."""
    base = max(inputs.union_items()) + 1
    prefix = [base + i for i in range(k)]
    shifted = InputRankingSet([Ranking(prefix + list(r.items)) for r in inputs])
    for item in inputs.union_items():
        for j in range(inputs.n):
            assert personalization_credit(item, inputs[j], inputs) == personalization_credit(
                item, shifted[j], shifted
            )
    for p in prefix:
        for j in range(shifted.n):
            assert personalization_credit(p, shifted[j], shifted) == -shifted.n


@given(shuffled_input_sets())
@settings(max_examples=30, deadline=None)
def test_credit_functions_are_pure(inputs):
    item = inputs.union_items()[0]
    target = inputs[0]
    first = (
        inverse_credit(item, target),
        negative_rank_credit(item, target),
        personalization_credit(item, target, inputs),
    )
    again = (
        inverse_credit(item, target),
        negative_rank_credit(item, target),
        personalization_credit(item, target, inputs),
    )
    assert first == again


def test_credit_function_parse():
    assert CreditFunction.parse("Inverse") is CreditFunction.INVERSE
    assert CreditFunction.parse("negative-rank") is CreditFunction.NEGATIVE_RANK
    with pytest.raises(ValueError):
        CreditFunction.parse("nope")
