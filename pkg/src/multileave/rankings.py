"""Ranking data model shared by every multileaving component.

Items are opaque integers at this level; string identifiers used at the
service boundary are interned to integers before they reach the core.
Positions are 1-based throughout (the top item of a ranking has rank 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

ItemId = int


class InvalidRankingError(ValueError):
    """A ranking violates its structural invariants (duplicates, empty, ...)."""


class InvalidComparisonError(ValueError):
    """An input ranking set cannot be multileaved (too few rankers, bad length, ...)."""


@dataclass(frozen=True)
class Ranking:
    """An ordered list of distinct items produced by one ranker."""

    items: tuple[ItemId, ...]

    def __init__(self, items: Iterable[ItemId]):
        object.__setattr__(self, "items", tuple(int(i) for i in items))
        if not self.items:
            raise InvalidRankingError("ranking must contain at least one item")
        if len(set(self.items)) != len(self.items):
            raise InvalidRankingError("ranking items must be distinct")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[ItemId]:
        return iter(self.items)

    def __getitem__(self, idx: int) -> ItemId:
        return self.items[idx]

    def __contains__(self, item: object) -> bool:
        return item in self.items


@dataclass(frozen=True)
class InputRankingSet:
    """The rankings under comparison, one per ranker (index = ranker identity)."""

    rankings: tuple[Ranking, ...]
    _union: tuple[ItemId, ...] = field(init=False, repr=False, compare=False)

    def __init__(self, rankings: Iterable[Ranking | Iterable[ItemId]]):
        rs = tuple(r if isinstance(r, Ranking) else Ranking(r) for r in rankings)
        if len(rs) < 2:
            raise InvalidComparisonError("a comparison needs at least two input rankings")
        object.__setattr__(self, "rankings", rs)
        seen: dict[ItemId, None] = {}
        for r in rs:
            for item in r.items:
                seen.setdefault(item, None)
        object.__setattr__(self, "_union", tuple(seen))

    @property
    def n(self) -> int:
        return len(self.rankings)

    def __len__(self) -> int:
        return len(self.rankings)

    def __iter__(self) -> Iterator[Ranking]:
        return iter(self.rankings)

    def __getitem__(self, j: int) -> Ranking:
        return self.rankings[j]

    def union_items(self) -> tuple[ItemId, ...]:
        """All distinct items across the inputs, in first-appearance order."""
        return self._union


@dataclass(frozen=True)
class InternedInputs:
    """Dense integer view of an input set, ready for the array kernels.

    ``universe`` lists the original item ids; index u in any kernel array
    refers to ``universe[u]``.  ``rank_mat[j, p]`` holds the universe index of
    the item at (0-based) position p of ranking j, padded with -1.
    """

    universe: tuple[ItemId, ...]
    index: dict[ItemId, int]
    rank_mat: np.ndarray
    lengths: np.ndarray

    @property
    def n(self) -> int:
        return int(self.rank_mat.shape[0])

    @property
    def size(self) -> int:
        return len(self.universe)


def intern_inputs(inputs: InputRankingSet, extra_items: Iterable[ItemId] = ()) -> InternedInputs:
    """Map an input set (plus any extra items) onto a dense 0..U-1 universe."""
    index: dict[ItemId, int] = {}
    for item in inputs.union_items():
        index.setdefault(item, len(index))
    for item in extra_items:
        index.setdefault(item, len(index))
    universe = tuple(index)
    n = inputs.n
    max_len = max(len(r) for r in inputs)
    rank_mat = np.full((n, max_len), -1, dtype=np.int32)
    lengths = np.empty(n, dtype=np.int32)
    for j, r in enumerate(inputs):
        lengths[j] = len(r)
        for p, item in enumerate(r.items):
            rank_mat[j, p] = index[item]
    return InternedInputs(universe=universe, index=index, rank_mat=rank_mat, lengths=lengths)
