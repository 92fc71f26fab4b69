"""Click-credit aggregation and significance machinery.

Credit aggregation turns clicks on a multileaved ranking into per-ranker
scores; the comparison machinery (paired/unpaired t-tests, bootstrap
subsampling over users) decides when observed differences are significant.
The t-distribution tail is evaluated with a continued-fraction regularized
incomplete beta, so the package needs no statistics dependency.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._kernels import derive_seed
from .credit import CreditFunction, credit_value
from .multileaving import Method, MultileaveOutcome
from .rankings import InputRankingSet

CreditVector = list[float]


@dataclass(frozen=True)
class ClickEvent:
    """A click on position ``position`` (1-based) of an output ranking."""

    round_id: str
    position: int
    timestamp_ms: int | None = None


def zero_credits(n: int) -> CreditVector:
    return [0.0] * n


def aggregate_click(
    outcome: MultileaveOutcome,
    inputs: InputRankingSet,
    credit: CreditFunction,
    click: ClickEvent,
    acc: CreditVector,
) -> CreditVector:
    """Fold one click into the accumulated per-ranker credit.

    Team-draft outcomes credit only the ranker owning the clicked item;
    otherwise every ranker receives its credit-function value for the item.
    Returns a new vector; the input is left untouched.
    """
    if not 1 <= click.position <= len(outcome.output):
        raise ValueError(
            f"click position {click.position} outside the output ranking "
            f"(1..{len(outcome.output)})"
        )
    if len(acc) != inputs.n:
        raise ValueError("credit vector length does not match the ranker count")
    item = outcome.output[click.position - 1]
    updated = list(acc)
    if outcome.method is Method.TDM:
        updated[outcome.team_map[item]] += 1.0
    else:
        for j, ranking in enumerate(inputs):
            updated[j] += credit_value(credit, item, ranking, inputs)
    return updated


@dataclass(frozen=True)
class WinnerSummary:
    """Rankers ordered by descending credit, plus how many rivals the
    designated ranker strictly beats (ties favour neither side)."""

    order: list[int]
    strict_wins: int


def winner_set(acc: CreditVector, preferred: int) -> WinnerSummary:
    order = sorted(range(len(acc)), key=lambda j: (-acc[j], j))
    wins = sum(1 for k, v in enumerate(acc) if k != preferred and acc[preferred] > v)
    return WinnerSummary(order=order, strict_wins=wins)


@dataclass(frozen=True)
class PairwiseDifferenceTable:
    """Antisymmetric matrix of credit-sum differences (row minus column)."""

    names: list[str]
    values: list[list[float]]

    @classmethod
    def from_credits(cls, acc: Sequence[float], names: Sequence[str] | None = None):
        n = len(acc)
        names = list(names) if names is not None else [f"ranker-{j}" for j in range(n)]
        if len(names) != n:
            raise ValueError("one name per ranker required")
        values = [[acc[p] - acc[q] for q in range(n)] for p in range(n)]
        return cls(names=names, values=values)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([""] + self.names)
            for name, row in zip(self.names, self.values):
                writer.writerow([name] + [repr(v) for v in row])


def pairwise_differences(
    acc: CreditVector, names: Sequence[str] | None = None
) -> PairwiseDifferenceTable:
    return PairwiseDifferenceTable.from_credits(acc, names)


# --- Student t machinery -----------------------------------------------------

_BETACF_EPS = 1e-15
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T_df| >= |t|) via I_x(df/2, 1/2) with x = df/(df + t^2)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value.

    Degenerate inputs resolve by the sign of the evidence: identical paired
    scores give p = 1, constant nonzero differences give p = 0.
    """
    if len(scores_a) != len(scores_b):
        raise ValueError("paired samples must have equal lengths")
    n = len(scores_a)
    if n < 2:
        raise ValueError("paired test needs at least two pairs")
    diffs = [float(a) - float(b) for a, b in zip(scores_a, scores_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / math.sqrt(var / n)
    return student_t_two_sided_p(t, n - 1)


def unpaired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Two-sided Welch t-test p-value (no equal-variance assumption)."""
    na, nb = len(scores_a), len(scores_b)
    if na < 2 or nb < 2:
        raise ValueError("unpaired test needs at least two observations per group")
    ma = sum(scores_a) / na
    mb = sum(scores_b) / nb
    va = sum((x - ma) ** 2 for x in scores_a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in scores_b) / (nb - 1)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        return 1.0 if ma == mb else 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (
        (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    )
    return student_t_two_sided_p(t, df)


# --- Bootstrap p-value curves -------------------------------------------------


@dataclass(frozen=True)
class PairedRecords:
    """Per-user scores for every algorithm (within-user comparison)."""

    scores: np.ndarray  # shape (users, algorithms)

    @property
    def users(self) -> int:
        return int(self.scores.shape[0])

    @property
    def algorithms(self) -> int:
        return int(self.scores.shape[1])


@dataclass(frozen=True)
class UnpairedRecords:
    """One algorithm assignment and score per user (between-group comparison)."""

    assignment: np.ndarray  # shape (users,)
    scores: np.ndarray  # shape (users,)

    @property
    def users(self) -> int:
        return int(self.scores.shape[0])

    @property
    def algorithms(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0


def bootstrap_pvalue_curve(
    records: PairedRecords | UnpairedRecords,
    user_counts: Sequence[int],
    subsample_size: int = 50,
    resamples: int = 1000,
    rng_seed: int = 0,
) -> list[tuple[int, float]]:
    """Mean t-test p-value over algorithm pairs at growing user-pool sizes.

    For each N the first N user records form the pool; ``resamples`` bootstrap
    subsamples of ``subsample_size`` users are drawn with replacement and the
    appropriate two-sided t-test (paired within users, Welch between assigned
    groups) is evaluated for every algorithm pair.  Returns (N, mean p) pairs
    in the order given.
    """
    paired = isinstance(records, PairedRecords)
    n_users = records.users
    n_algos = records.algorithms
    if n_algos < 2:
        raise ValueError("need at least two algorithms to compare")
    pairs = [(p, q) for p in range(n_algos) for q in range(p + 1, n_algos)]
    curve: list[tuple[int, float]] = []
    for count in user_counts:
        if count > n_users:
            raise ValueError(f"requested {count} users but only {n_users} records exist")
        if count < 1:
            raise ValueError("user counts must be positive")
        rng = np.random.default_rng(derive_seed(rng_seed, "bootstrap", int(count)))
        collected: list[float] = []
        for _ in range(resamples):
            idx = rng.integers(0, count, size=subsample_size)
            if paired:
                sub = records.scores[idx]
                for p, q in pairs:
                    collected.append(paired_t_test(sub[:, p], sub[:, q]))
            else:
                sub_assign = records.assignment[idx]
                sub_scores = records.scores[idx]
                for p, q in pairs:
                    ga = sub_scores[sub_assign == p]
                    gb = sub_scores[sub_assign == q]
                    if ga.size < 2 or gb.size < 2:
                        continue
                    collected.append(unpaired_t_test(ga.tolist(), gb.tolist()))
        curve.append((int(count), float(np.mean(collected)) if collected else math.nan))
    return curve


def crossing_point(curve: Iterable[tuple[int, float]], threshold: float = 0.05) -> float:
    """Smallest N whose mean p-value reaches the threshold, or +inf."""
    for count, p in curve:
        if p <= threshold:
            return float(count)
    return math.inf


def write_pvalue_curves_csv(curves: dict[str, list[tuple[int, float]]], path) -> None:
    """Emit p-value curves as rows of (N, method, mean_p)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["N", "method", "mean_p"])
        for method, curve in curves.items():
            for count, p in curve:
                writer.writerow([count, method, repr(float(p))])
