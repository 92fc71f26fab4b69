"""Personalized click simulation and the offline experiment sweeps.

Each evaluation round draws a preferred ranker, then for every simulated
click generates fresh input rankings as independent shuffles of an l-item
universe, multileaves them, and clicks an item from the top portion of the
preferred ranker's list.  A method is accurate when the accumulated credit
ranks the preferred ranker above the others.

Rounds consume an explicit per-run RNG stream, so results are reproducible
bit-for-bit for a given seed at any worker count: per-run partial results are
always reduced in run order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .credit import CreditFunction
from .multileaving import Method
from .stats import PairedRecords, UnpairedRecords

_CREDIT_CODE = {
    CreditFunction.INVERSE: K.CREDIT_INVERSE,
    CreditFunction.NEGATIVE_RANK: K.CREDIT_NEGATIVE_RANK,
    CreditFunction.PERSONALIZATION: K.CREDIT_PERSONALIZATION,
}
_METHOD_CODE = {Method.TDM: K.METHOD_TDM, Method.GOM: K.METHOD_GOM}

DEFAULT_RANKER_SWEEP = tuple(range(2, 21))
DEFAULT_LENGTH_SWEEP = tuple(range(5, 196, 10))
DEFAULT_ALPHAS = (0.0, 0.1, 1.0, 10.0, 1000.0)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated comparison experiment."""

    n: int = 5
    l: int = 10
    method: Method = Method.GOM
    credit: CreditFunction = CreditFunction.PERSONALIZATION
    numeval: int = 100
    numclick: int = 100
    click_bias_pct: int = 80
    candidate_count: int = 10
    alpha: float = 0.0
    runs: int = 100
    rng_seed: int = 0
    collect_stats: bool = True
    literal_win_rule: bool = False
    identical_inputs: bool = False  # test hook: all rankers share one shuffle
    threads: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two rankers")
        if self.l < 1:
            raise ValueError("ranking length must be positive")
        if not 0 < self.click_bias_pct <= 100:
            raise ValueError("click bias percentage must be in (0, 100]")
        if min(self.numeval, self.numclick, self.runs) < 1:
            raise ValueError("numeval, numclick and runs must be positive")

    @property
    def click_window(self) -> int:
        """Number of top positions of the preferred ranking eligible for a click."""
        return max(1, math.ceil(self.click_bias_pct * self.l / 100.0))


@dataclass(frozen=True)
class RunRecord:
    run: int
    accuracy: float
    insensitivity: float
    bias_mean: float
    bias_std: float
    seed: int


@dataclass(frozen=True)
class SimResult:
    accuracy: float
    insensitivity: float
    bias_mean: float
    bias_std: float
    per_run: tuple[RunRecord, ...] = field(repr=False)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.per_run]


@dataclass(frozen=True)
class ClickTrace:
    """What happened on one simulated click."""

    item: int
    position_in_output: int


def simulate_round(
    config: SimConfig, preferred: int, state: np.ndarray
) -> tuple[list[float], list[ClickTrace]]:
    """Run the inner click loop once and return per-ranker credit plus the
    click trace.  ``state`` is a splitmix64 state from kernels.seed_state and
    is advanced in place."""
    if not 0 <= preferred < config.n:
        raise ValueError("preferred ranker index out of range")
    credit = np.empty(config.n, dtype=np.float64)
    trace_items = np.empty(config.numclick, dtype=np.int32)
    trace_pos = np.empty(config.numclick, dtype=np.int32)
    _run_round_kernel(config, preferred, state, credit, trace_items, trace_pos)
    traces = [
        ClickTrace(item=int(i), position_in_output=int(p))
        for i, p in zip(trace_items, trace_pos)
    ]
    return credit.tolist(), traces


def _reciprocal_weights(length: int) -> np.ndarray:
    return 1.0 / np.arange(1, length + 1, dtype=np.float64)


def _run_round_kernel(config, preferred, state, credit, trace_items, trace_pos, f=None):
    if f is None:
        f = _reciprocal_weights(config.l)
    return K.simulate_round_into(
        config.n,
        config.l,
        config.numclick,
        config.candidate_count,
        preferred,
        config.click_window,
        _METHOD_CODE[config.method],
        _CREDIT_CODE[config.credit],
        float(config.alpha),
        f,
        config.collect_stats,
        config.identical_inputs,
        state,
        credit,
        trace_items,
        trace_pos,
    )


RoundCredits = Callable[[SimConfig, int, np.ndarray], Sequence[float]]


def _run_single(config: SimConfig, run: int, round_credits: RoundCredits | None) -> RunRecord:
    run_seed = K.derive_seed(config.rng_seed, "run", run)
    state = K.seed_state(run_seed)
    n = config.n
    credit = np.empty(n, dtype=np.float64)
    trace_items = np.empty(config.numclick, dtype=np.int32)
    trace_pos = np.empty(config.numclick, dtype=np.int32)
    f = _reciprocal_weights(config.l)
    win = 0
    insens_sum = 0.0
    insens_count = 0
    bias_sum = 0.0
    bias_sq_sum = 0.0
    bias_count = 0
    for _ in range(config.numeval):
        preferred = int(K.rand_below(state, n))
        if round_credits is None:
            stats = _run_round_kernel(config, preferred, state, credit, trace_items, trace_pos, f)
            insens_sum += stats[0]
            insens_count += stats[1]
            bias_sum += stats[2]
            bias_sq_sum += stats[3]
            bias_count += stats[4]
            vec = credit
        else:
            vec = np.asarray(round_credits(config, preferred, state), dtype=np.float64)
        if config.literal_win_rule:
            win += int(np.sum(vec > vec[preferred]))
        else:
            win += int(np.sum(vec[preferred] > np.delete(vec, preferred)))
    accuracy = win / (config.numeval * (n - 1))
    insens = insens_sum / insens_count if insens_count else 0.0
    bias_mean = bias_sum / bias_count if bias_count else 0.0
    if bias_count:
        var = max(bias_sq_sum / bias_count - bias_mean * bias_mean, 0.0)
        bias_std = math.sqrt(var)
    else:
        bias_std = 0.0
    return RunRecord(
        run=run,
        accuracy=accuracy,
        insensitivity=insens,
        bias_mean=bias_mean,
        bias_std=bias_std,
        seed=run_seed,
    )


def simulate_accuracy(config: SimConfig, round_credits: RoundCredits | None = None) -> SimResult:
    """Full experiment: ``runs`` independent repetitions of numeval rounds.

    ``round_credits`` replaces the simulated round for tests (it receives the
    config, the preferred ranker, and the RNG state, and returns a credit
    vector); the win accounting on top is identical either way.
    """
    workers = config.threads or 1
    runs = range(config.runs)
    if workers > 1 and round_credits is None and config.runs > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda r: _run_single(config, r, None), runs))
    else:
        records = [_run_single(config, r, round_credits) for r in runs]
    records.sort(key=lambda rec: rec.run)  # reduce in run order regardless of scheduling
    accuracy = sum(r.accuracy for r in records) / len(records)
    insens = sum(r.insensitivity for r in records) / len(records)
    bias_mean = sum(r.bias_mean for r in records) / len(records)
    bias_std = sum(r.bias_std for r in records) / len(records)
    return SimResult(
        accuracy=accuracy,
        insensitivity=insens,
        bias_mean=bias_mean,
        bias_std=bias_std,
        per_run=tuple(records),
    )


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """A plottable method line: construction plus evaluation credit."""

    method: Method
    credit: CreditFunction

    @property
    def label(self) -> str:
        if self.method is Method.TDM:
            return "TDM"
        prefix = {"inverse": "GOM-I", "personalization": "GOM-P", "negative_rank": "GOM-N"}
        return prefix[self.credit.value]

    @classmethod
    def parse(cls, label: str) -> "MethodSpec":
        table = {
            "tdm": cls(Method.TDM, CreditFunction.PERSONALIZATION),
            "gom-i": cls(Method.GOM, CreditFunction.INVERSE),
            "gom-p": cls(Method.GOM, CreditFunction.PERSONALIZATION),
            "gom-n": cls(Method.GOM, CreditFunction.NEGATIVE_RANK),
        }
        key = label.strip().lower()
        if key not in table:
            raise ValueError(f"unknown method label {label!r} (expected one of {sorted(table)})")
        return table[key]


DEFAULT_METHODS = (
    MethodSpec(Method.TDM, CreditFunction.PERSONALIZATION),
    MethodSpec(Method.GOM, CreditFunction.INVERSE),
    MethodSpec(Method.GOM, CreditFunction.PERSONALIZATION),
)


@dataclass(frozen=True)
class SweepPoint:
    label: str
    config: SimConfig
    result: SimResult


def _point_config(base: SimConfig, spec: MethodSpec, *, n: int, l: int, tag: str) -> SimConfig:
    seed = K.derive_seed(base.rng_seed, tag, spec.label, n, l)
    return replace(base, n=n, l=l, method=spec.method, credit=spec.credit, rng_seed=seed)


def sweep_rankers(
    base: SimConfig,
    n_values: Sequence[int] = DEFAULT_RANKER_SWEEP,
    length: int = 10,
    methods: Sequence[MethodSpec] = DEFAULT_METHODS,
) -> list[SweepPoint]:
    """Accuracy (and insensitivity) versus the number of rankers at fixed length."""
    points = []
    for spec in methods:
        for n in n_values:
            cfg = _point_config(base, spec, n=n, l=length, tag="rankers")
            points.append(SweepPoint(spec.label, cfg, simulate_accuracy(cfg)))
    return points


def sweep_length(
    base: SimConfig,
    l_values: Sequence[int] = DEFAULT_LENGTH_SWEEP,
    n: int = 3,
    methods: Sequence[MethodSpec] = DEFAULT_METHODS,
) -> list[SweepPoint]:
    """Accuracy (and insensitivity) versus the ranking length at fixed ranker count."""
    points = []
    for spec in methods:
        for l in l_values:
            cfg = _point_config(base, spec, n=n, l=l, tag="length")
            points.append(SweepPoint(spec.label, cfg, simulate_accuracy(cfg)))
    return points


def measure_bias_distribution(config: SimConfig, generations: int = 10_000) -> np.ndarray:
    """Bias statistic of freshly generated greedy-optimized rankings.

    Returns one sample per generation: mean over depths of the worst-case
    prefix-credit gap, scaled by 1/(n*l)."""
    samples = np.empty(generations, dtype=np.float64)
    state = K.seed_state(K.derive_seed(config.rng_seed, "bias", generations))
    f = _reciprocal_weights(config.l)
    K.bias_generation_into(
        config.n,
        config.l,
        config.candidate_count,
        _CREDIT_CODE[config.credit],
        float(config.alpha),
        f,
        config.identical_inputs,
        state,
        samples,
    )
    return samples


@dataclass(frozen=True)
class BiasSummary:
    mean: float
    std: float
    median: float
    samples: np.ndarray = field(repr=False)

    @property
    def bell_shaped(self) -> bool:
        """Coarse symmetry check: mean and median agree within a quarter sigma."""
        return abs(self.mean - self.median) < 0.25 * self.std

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "BiasSummary":
        return cls(
            mean=float(np.mean(samples)),
            std=float(np.std(samples)),
            median=float(np.median(samples)),
            samples=samples,
        )


def alpha_sensitivity(
    base: SimConfig,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    bias_generations: int = 10_000,
) -> list[tuple[float, SimResult, BiasSummary]]:
    """Re-run the default experiment per bias-weight value.

    Returns (alpha, accuracy/insensitivity result, bias distribution summary)
    rows; the same sub-seed is used for every alpha so rows differ only
    through the objective."""
    rows = []
    for alpha in alphas:
        cfg = replace(
            base,
            alpha=float(alpha),
            method=Method.GOM,
            rng_seed=K.derive_seed(base.rng_seed, "alpha-study"),
            collect_stats=True,
        )
        result = simulate_accuracy(cfg)
        summary = BiasSummary.from_samples(measure_bias_distribution(cfg, bias_generations))
        rows.append((float(alpha), result, summary))
    return rows


# --- synthetic user population for the p-value comparison ----------------------


@dataclass(frozen=True)
class PopulationConfig:
    """Synthetic user population with per-user activity heterogeneity.

    Scores model per-user mean credit per impression: a user-specific offset
    (between-user spread) plus the algorithm's true effect plus observation
    noise shrinking with the user's activity.  ``group_bias`` tilts the
    activity of users assigned to the middle algorithm, mimicking unlucky
    traffic splits that within-user comparison is immune to.
    """

    users: int = 500
    algorithms: int = 3
    effect_step: float = 0.6
    user_sigma: float = 0.75
    noise_sigma: float = 0.9
    activity_log_mean: float = 3.0
    activity_log_sigma: float = 0.8
    group_bias: float = 0.0
    rng_seed: int = 0


def synthesize_population(config: PopulationConfig) -> tuple[PairedRecords, UnpairedRecords]:
    """Draw one user population and expose it both ways: every algorithm
    scored per user (multileaving view) and one assigned algorithm per user
    (A/B view, round-robin so each arm gets ~users/algorithms)."""
    rng = np.random.default_rng(K.derive_seed(config.rng_seed, "population"))
    users = config.users
    algos = config.algorithms
    effects = config.effect_step * np.arange(algos)
    user_offset = rng.normal(0.0, config.user_sigma, size=users)
    activity = rng.lognormal(config.activity_log_mean, config.activity_log_sigma, size=users)
    assignment = rng.permutation(np.arange(users) % algos)
    if config.group_bias != 0.0 and algos >= 3:
        # depress the activity of one arm's users
        mid = algos // 2
        activity = np.where(assignment == mid, activity * (1.0 - config.group_bias), activity)
    noise_scale = config.noise_sigma / np.sqrt(np.maximum(activity, 1.0))
    noise = rng.normal(0.0, 1.0, size=(users, algos)) * noise_scale[:, None]
    paired_scores = user_offset[:, None] + effects[None, :] + noise
    unpaired_scores = paired_scores[np.arange(users), assignment]
    return (
        PairedRecords(scores=paired_scores),
        UnpairedRecords(assignment=assignment, scores=unpaired_scores),
    )
