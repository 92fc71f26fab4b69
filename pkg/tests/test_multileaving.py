from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from multileave import (
    CreditFunction,
    GomConfig,
    InputRankingSet,
    InvalidComparisonError,
    InvalidRankingError,
    Method,
    PositionWeight,
    Ranking,
    bias_profile,
    candidate_rankings,
    gom_multileave,
    insensitivity,
    normalized_insensitivity,
    tdm_multileave,
)
from multileave.multileaving import prefix_property_holds

A, B, C, D = 1, 2, 3, 4
RECIP = PositionWeight()


def weights(length):
    return [1.0 / i for i in range(1, length + 1)]


class TestRankingValidation:
    def test_empty_rejected(self):
        with pytest.raises(InvalidRankingError):
            Ranking([])

    def test_duplicates_rejected(self):
        with pytest.raises(InvalidRankingError):
            Ranking([1, 2, 1])

    def test_single_ranker_rejected(self):
        with pytest.raises(InvalidComparisonError):
            InputRankingSet([Ranking([1, 2])])


class TestTdm:
    def test_identical_inputs_keep_common_order(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, B, C])])
        for seed in range(10):
            out = tdm_multileave(inputs, 3, rng_seed=seed)
            assert out.output.items == (A, B, C)

    def test_disjoint_pair_alternates(self):
        inputs = InputRankingSet([Ranking([A, B]), Ranking([C, D])])
        seen = set()
        for seed in range(32):
            out = tdm_multileave(inputs, 2, rng_seed=seed)
            seen.add(out.output.items)
            assert out.team_map == {A: 0, C: 1} or out.team_map == {C: 1, A: 0}
        assert seen == {(A, C), (C, A)}

    def test_shared_top_item_always_first(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, C, B])])
        for seed in range(32):
            out = tdm_multileave(inputs, 3, rng_seed=seed)
            assert out.output.items[0] == A

    def test_truncates_to_length(self):
        inputs = InputRankingSet([Ranking([A, B, C, D]), Ranking([A, B, C, D])])
        out = tdm_multileave(inputs, 2, rng_seed=5)
        assert out.output.items == (A, B)

    def test_team_map_covers_output(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([C, B, A])])
        out = tdm_multileave(inputs, 3, rng_seed=9)
        assert set(out.team_map) == set(out.output.items)

    def test_length_beyond_union_rejected(self):
        inputs = InputRankingSet([Ranking([A, B]), Ranking([B, A])])
        with pytest.raises(InvalidComparisonError):
            tdm_multileave(inputs, 3)


@st.composite
def permutation_input_sets(draw, min_items=2, max_items=6, max_rankers=4):
    size = draw(st.integers(min_value=min_items, max_value=max_items))
    n = draw(st.integers(min_value=2, max_value=max_rankers))
    items = list(range(size))
    rankings = [Ranking(draw(st.permutations(items))) for _ in range(n)]
    return InputRankingSet(rankings)


@st.composite
def ragged_input_sets(draw, universe=7, max_rankers=4):
    """Input sets with differing lengths and item membership."""
    n = draw(st.integers(min_value=2, max_value=max_rankers))
    rankings = []
    for _ in range(n):
        subset = draw(st.sets(st.integers(min_value=0, max_value=universe - 1), min_size=1))
        rankings.append(Ranking(draw(st.permutations(sorted(subset)))))
    return InputRankingSet(rankings)


@given(permutation_input_sets(), st.integers(min_value=0, max_value=2**32))
@settings(max_examples=40, deadline=None)
def test_tdm_invariants(inputs, seed):
    size = len(inputs.union_items())
    out = tdm_multileave(inputs, size, rng_seed=seed)
    items = out.output.items
    assert len(set(items)) == len(items) == size
    assert set(items) <= set(inputs.union_items())
    assert prefix_property_holds(items, inputs)
    # full construction over a common universe balances teams within one pick
    counts = [0] * inputs.n
    for j in out.team_map.values():
        counts[j] += 1
    assert max(counts) - min(counts) <= 1


@given(ragged_input_sets(), st.integers(min_value=0, max_value=2**32))
@settings(max_examples=40, deadline=None)
def test_constructions_respect_prefix_property_on_ragged_inputs(inputs, seed):
    length = len(inputs.union_items())
    out = tdm_multileave(inputs, length, rng_seed=seed)
    assert prefix_property_holds(out.output.items, inputs)
    gout = gom_multileave(inputs, GomConfig(output_length=length, rng_seed=seed))
    assert prefix_property_holds(gout.output.items, inputs)
    assert len(set(gout.output.items)) == length


class TestCandidates:
    def test_identical_inputs_dedupe_to_one(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, B, C])])
        cands = candidate_rankings(inputs, 3, count=16, rng_seed=3)
        assert len(cands) == 1
        assert cands[0].items == (A, B, C)

    def test_opposed_pair_saturates(self):
        inputs = InputRankingSet([Ranking([A, B]), Ranking([B, A])])
        cands = candidate_rankings(inputs, 2, count=64, rng_seed=0)
        assert {c.items for c in cands} == {(A, B), (B, A)}

    def test_disjoint_pair_candidate_space(self):
        inputs = InputRankingSet([Ranking([A, B]), Ranking([C, D])])
        cands = candidate_rankings(inputs, 2, count=64, rng_seed=1)
        assert {c.items for c in cands} <= {(A, B), (A, C), (C, A), (C, D)}

    def test_candidates_match_exhaustive_enumeration(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([C, A, B])])
        space = set(oracles.enumerate_prefix_rankings(inputs, 3))
        cands = {c.items for c in candidate_rankings(inputs, 3, count=256, rng_seed=7)}
        assert cands <= space
        assert cands == space  # 256 draws saturate this tiny pool


class TestInsensitivity:
    def test_hand_computed_example(self, two_opposed):
        out = Ranking([1, 2])
        s2 = insensitivity(out, two_opposed, CreditFunction.PERSONALIZATION, RECIP)
        assert s2 == pytest.approx(0.125, abs=1e-12)

    def test_identical_inputs_are_flat(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, B, C])])
        assert insensitivity(Ranking([A, B, C]), inputs) == pytest.approx(0.0, abs=1e-12)

    def test_normalized_form(self, two_opposed):
        val = normalized_insensitivity(Ranking([1, 2]), two_opposed)
        assert val == pytest.approx(0.125 / 5.0625, rel=1e-9)


class TestBiasProfile:
    def test_hand_computed_example(self, two_opposed):
        lam = bias_profile(Ranking([1, 2]), two_opposed, CreditFunction.PERSONALIZATION)
        assert lam == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_identical_inputs_zero_bias(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, B, C])])
        lam = bias_profile(Ranking([A, B, C]), inputs)
        assert lam == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_disjoint_inverse_bias_strictly_positive(self):
        inputs = InputRankingSet([Ranking([A, B]), Ranking([C, D])])
        lam = bias_profile(Ranking([A, B]), inputs, CreditFunction.INVERSE)
        assert all(v > 0.0 for v in lam)


@given(
    ragged_input_sets(),
    st.integers(min_value=0, max_value=2**32),
    st.sampled_from(list(CreditFunction)),
)
@settings(max_examples=60, deadline=None)
def test_kernel_matches_direct_summation_oracle(inputs, seed, credit):
    length = len(inputs.union_items())
    out = gom_multileave(
        inputs, GomConfig(output_length=length, rng_seed=seed, credit=credit)
    ).output
    w = weights(length)
    assert insensitivity(out, inputs, credit, RECIP) == pytest.approx(
        oracles.insensitivity(out.items, inputs, credit, w), abs=1e-9
    )
    assert bias_profile(out, inputs, credit) == pytest.approx(
        oracles.bias_profile(out.items, inputs, credit), abs=1e-9
    )


class TestGom:
    def test_identical_inputs_zero_objective(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, B, C])])
        out = gom_multileave(inputs, GomConfig(output_length=3, rng_seed=2))
        assert out.output.items == (A, B, C)
        assert out.objective_value == pytest.approx(0.0, abs=1e-12)
        assert out.candidate_count_evaluated == 1

    def test_opposed_pair_tie_keeps_generation_order(self, two_opposed):
        cfg = GomConfig(output_length=2, candidate_count=64, rng_seed=11)
        out = gom_multileave(two_opposed, cfg)
        first = candidate_rankings(two_opposed, 2, count=64, rng_seed=11)[0]
        assert out.objective_value == pytest.approx(0.125, abs=1e-12)
        assert out.output.items == first.items

    def test_symmetric_inputs_have_equal_sigma(self):
        inputs = InputRankingSet([Ranking([A, B, C]), Ranking([A, C, B])])
        w = weights(3)
        s_abc = oracles.insensitivity((A, B, C), inputs, CreditFunction.PERSONALIZATION, w)
        s_acb = oracles.insensitivity((A, C, B), inputs, CreditFunction.PERSONALIZATION, w)
        assert s_abc == pytest.approx(s_acb, abs=1e-12)
        for alpha in (0.0, 1000.0):
            cfg = GomConfig(output_length=3, candidate_count=64, rng_seed=5, alpha=alpha)
            out = gom_multileave(inputs, cfg)
            best, argmins = oracles.gom_minimum(
                inputs, 3, CreditFunction.PERSONALIZATION, w, alpha
            )
            assert out.objective_value == pytest.approx(best, abs=1e-9)
            assert out.output.items in argmins

    def test_deterministic_under_seed(self, two_opposed):
        cfg = GomConfig(output_length=2, candidate_count=16, rng_seed=99)
        a = gom_multileave(two_opposed, cfg)
        b = gom_multileave(two_opposed, cfg)
        assert a.output.items == b.output.items
        assert a.objective_value == b.objective_value

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            GomConfig(output_length=2, alpha=-1.0)


@given(
    permutation_input_sets(min_items=2, max_items=4, max_rankers=3),
    st.integers(min_value=0, max_value=2**32),
    st.sampled_from([CreditFunction.PERSONALIZATION, CreditFunction.INVERSE]),
    st.sampled_from([0.0, 1.0]),
)
@settings(max_examples=40, deadline=None)
def test_gom_matches_brute_force_when_pool_saturates(inputs, seed, credit, alpha):
    length = len(inputs.union_items())
    cfg = GomConfig(
        output_length=length, candidate_count=512, rng_seed=seed, credit=credit, alpha=alpha
    )
    out = gom_multileave(inputs, cfg)
    space = set(oracles.enumerate_prefix_rankings(inputs, length))
    pool = {c.items for c in candidate_rankings(inputs, length, count=512, rng_seed=seed)}
    if pool == space:
        best, _ = oracles.gom_minimum(inputs, length, credit, weights(length), alpha)
        assert out.objective_value == pytest.approx(best, abs=1e-9)


def test_position_weight_validation():
    with pytest.raises(ValueError):
        PositionWeight(lambda i: -1.0).weights(3)
    with pytest.raises(ValueError):
        PositionWeight(lambda i: float(i)).weights(3)
    assert PositionWeight(lambda i: 1.0).weights(2) == pytest.approx([1.0, 1.0])


def test_method_parse():
    assert Method.parse("TDM") is Method.TDM
    with pytest.raises(ValueError):
        Method.parse("om")
