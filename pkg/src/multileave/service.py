"""Session-based comparison engine with a durable append-only event log.

A session is one impression: callers submit per-request input rankings, get
back the multileaved ranking to display, and report clicks against it.
Credits accumulate per session and fold into per-experiment totals keyed by
ranker name.  Every state change is appended to a JSONL log before it is
acknowledged, so replaying the log reconstructs all credit vectors exactly.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ._kernels import derive_seed
from .credit import CreditFunction
from .multileaving import Method, MultileaveOutcome, multileave
from .rankings import InputRankingSet, Ranking
from .stats import ClickEvent, PairwiseDifferenceTable, aggregate_click, zero_credits

LOG_SCHEMA_VERSION = 1
DEFAULT_SESSION_TTL_S = 24 * 3600.0


class UnknownSessionError(KeyError):
    pass


class UnknownExperimentError(KeyError):
    pass


class ValidationFailure(ValueError):
    """Client-side error carrying the offending field for 400-class replies."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


@dataclass
class SessionState:
    session_id: str
    experiment_id: str
    ranker_names: list[str]
    item_names: list[str]  # universe index -> external item id
    inputs: InputRankingSet
    outcome: MultileaveOutcome
    credit: CreditFunction
    created_at: float
    last_touch: float
    credits: list[float] = field(default_factory=list)
    seen_keys: set[str] = field(default_factory=set)
    click_count: int = 0

    def output_items(self) -> list[str]:
        return [self.item_names[i] for i in self.outcome.output.items]


@dataclass
class ExperimentState:
    experiment_id: str
    ranker_order: list[str] = field(default_factory=list)
    totals: dict[str, float] = field(default_factory=dict)
    session_count: int = 0
    click_count: int = 0


@dataclass(frozen=True)
class SessionView:
    session_id: str
    experiment_id: str
    ranking: list[str]
    method: Method
    credits: list[float]


@dataclass(frozen=True)
class ExperimentResults:
    experiment_id: str
    ranker_names: list[str]
    totals: dict[str, float]
    session_count: int
    click_count: int
    pairwise: PairwiseDifferenceTable


def _validate_rankings(ranker_names, rankings) -> None:
    if len(ranker_names) < 2:
        raise ValidationFailure("ranker_names", "at least two rankers are required")
    if len(set(ranker_names)) != len(ranker_names):
        raise ValidationFailure("ranker_names", "ranker names must be distinct")
    if len(rankings) != len(ranker_names):
        raise ValidationFailure("rankings", "one ranking per ranker is required")
    for idx, items in enumerate(rankings):
        if not items:
            raise ValidationFailure(f"rankings[{idx}]", "ranking must not be empty")
        if len(set(items)) != len(items):
            raise ValidationFailure(f"rankings[{idx}]", "ranking items must be distinct")


class ComparisonService:
    """Thread-safe in-process engine behind the HTTP comparison service."""

    def __init__(
        self,
        log_path: str | os.PathLike,
        *,
        default_method: Method = Method.GOM,
        default_credit: CreditFunction = CreditFunction.PERSONALIZATION,
        candidate_count: int = 10,
        alpha: float = 0.0,
        session_ttl_s: float = DEFAULT_SESSION_TTL_S,
        base_seed: int | None = None,
        clock: Callable[[], float] = time.time,
        fsync: bool = False,
    ):
        self._log_path = os.fspath(log_path)
        self._default_method = default_method
        self._default_credit = default_credit
        self._candidate_count = candidate_count
        self._alpha = alpha
        self._ttl = session_ttl_s
        self._clock = clock
        self._fsync = fsync
        self._base_seed = base_seed if base_seed is not None else secrets.randbits(63)
        self._session_counter = 0
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, SessionState] = OrderedDict()
        self._experiments: dict[str, ExperimentState] = {}
        self._replay_existing_log()
        self._log = open(self._log_path, "a", encoding="utf-8")

    # --- lifecycle -------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if not self._log.closed:
                self._log.flush()
                self._log.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- public operations -------------------------------------------------

    def create_session(
        self,
        experiment_id: str,
        ranker_names: Sequence[str],
        rankings: Sequence[Sequence[str]],
        *,
        method: Method | str | None = None,
        credit: CreditFunction | str | None = None,
        length: int | None = None,
        seed: int | None = None,
    ) -> SessionView:
        ranker_names = list(ranker_names)
        rankings = [list(r) for r in rankings]
        _validate_rankings(ranker_names, rankings)
        try:
            method = (
                self._default_method
                if method is None
                else (method if isinstance(method, Method) else Method.parse(method))
            )
        except ValueError as exc:
            raise ValidationFailure("method", str(exc)) from None
        try:
            credit = (
                self._default_credit
                if credit is None
                else (credit if isinstance(credit, CreditFunction) else CreditFunction.parse(credit))
            )
        except ValueError as exc:
            raise ValidationFailure("credit", str(exc)) from None

        item_index: dict[str, int] = {}
        for items in rankings:
            for item in items:
                item_index.setdefault(str(item), len(item_index))
        item_names = list(item_index)
        inputs = InputRankingSet([[item_index[str(i)] for i in items] for items in rankings])
        union = len(item_names)
        if length is None:
            length = min(len(r) for r in rankings)
        if not 1 <= length <= union:
            raise ValidationFailure(
                "length", f"must be between 1 and the {union} distinct items supplied"
            )

        with self._lock:
            self._session_counter += 1
            counter = self._session_counter
        if seed is None:
            seed = derive_seed(self._base_seed, "session", counter)
        session_id = f"s-{counter:08d}-{secrets.token_hex(4)}"
        outcome = multileave(inputs, method, length, rng_seed=seed)

        now = self._clock()
        session = SessionState(
            session_id=session_id,
            experiment_id=experiment_id,
            ranker_names=ranker_names,
            item_names=item_names,
            inputs=inputs,
            outcome=outcome,
            credit=credit,
            created_at=now,
            last_touch=now,
            credits=zero_credits(inputs.n),
        )
        record = {
            "v": LOG_SCHEMA_VERSION,
            "type": "session_created",
            "ts": now,
            "eid": experiment_id,
            "sid": session_id,
            "ranker_names": ranker_names,
            "rankings": rankings,
            "method": method.value,
            "credit": credit.value,
            "length": length,
            "seed": seed,
            "output": session.output_items(),
            "team_map": (
                {item_names[i]: j for i, j in outcome.team_map.items()}
                if outcome.team_map is not None
                else None
            ),
            "objective": outcome.objective_value,
        }
        with self._lock:
            self._append(record)
            self._install_session(session)
            self._evict_stale_locked(now)
        return SessionView(
            session_id=session_id,
            experiment_id=experiment_id,
            ranking=session.output_items(),
            method=method,
            credits=list(session.credits),
        )

    def record_click(
        self, session_id: str, position: int, idempotency_key: str | None = None
    ) -> list[float]:
        now = self._clock()
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSessionError(session_id)
            if not 1 <= position <= len(session.outcome.output):
                raise ValidationFailure(
                    "position",
                    f"must be between 1 and {len(session.outcome.output)}",
                )
            if idempotency_key is not None and idempotency_key in session.seen_keys:
                return list(session.credits)
            self._append(
                {
                    "v": LOG_SCHEMA_VERSION,
                    "type": "click",
                    "ts": now,
                    "sid": session_id,
                    "position": position,
                    "key": idempotency_key,
                }
            )
            self._apply_click(session, position, idempotency_key, now)
            self._evict_stale_locked(now)
            return list(session.credits)

    def get_results(self, experiment_id: str) -> ExperimentResults:
        with self._lock:
            exp = self._experiments.get(experiment_id)
            if exp is None:
                raise UnknownExperimentError(experiment_id)
            names = list(exp.ranker_order)
            totals = {name: exp.totals.get(name, 0.0) for name in names}
            return ExperimentResults(
                experiment_id=experiment_id,
                ranker_names=names,
                totals=totals,
                session_count=exp.session_count,
                click_count=exp.click_count,
                pairwise=PairwiseDifferenceTable.from_credits(
                    [totals[name] for name in names], names
                ),
            )

    def session_count(self) -> int:
        with self._lock:
            return len(self._sessions)

    # --- internals -----------------------------------------------------------

    def _append(self, record: dict) -> None:
        self._log.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._log.flush()
        if self._fsync:
            os.fsync(self._log.fileno())

    def _install_session(self, session: SessionState) -> None:
        self._sessions[session.session_id] = session
        exp = self._experiments.setdefault(
            session.experiment_id, ExperimentState(experiment_id=session.experiment_id)
        )
        exp.session_count += 1
        for name in session.ranker_names:
            if name not in exp.totals:
                exp.totals[name] = 0.0
                exp.ranker_order.append(name)

    def _apply_click(
        self, session: SessionState, position: int, key: str | None, now: float
    ) -> None:
        before = session.credits
        session.credits = aggregate_click(
            session.outcome,
            session.inputs,
            session.credit,
            ClickEvent(session.session_id, position),
            before,
        )
        if key is not None:
            session.seen_keys.add(key)
        session.click_count += 1
        session.last_touch = now
        self._sessions.move_to_end(session.session_id)
        exp = self._experiments[session.experiment_id]
        exp.click_count += 1
        for name, delta in zip(
            session.ranker_names, (a - b for a, b in zip(session.credits, before))
        ):
            exp.totals[name] += delta

    def _evict_stale_locked(self, now: float) -> None:
        # credits already live in the experiment totals, so eviction only
        # drops per-session state
        while self._sessions:
            oldest = next(iter(self._sessions.values()))
            if now - oldest.last_touch <= self._ttl:
                break
            del self._sessions[oldest.session_id]

    def _replay_existing_log(self) -> None:
        if not os.path.exists(self._log_path):
            return
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record.get("v") != LOG_SCHEMA_VERSION:
                    raise ValueError(
                        f"unsupported log schema version {record.get('v')!r} in {self._log_path}"
                    )
                if record["type"] == "session_created":
                    self._replay_session(record)
                elif record["type"] == "click":
                    session = self._sessions.get(record["sid"])
                    if session is not None:
                        key = record.get("key")
                        if key is not None and key in session.seen_keys:
                            continue
                        self._apply_click(session, record["position"], key, record["ts"])

    def _replay_session(self, record: dict) -> None:
        rankings = record["rankings"]
        item_index: dict[str, int] = {}
        for items in rankings:
            for item in items:
                item_index.setdefault(str(item), len(item_index))
        item_names = list(item_index)
        inputs = InputRankingSet([[item_index[str(i)] for i in items] for items in rankings])
        method = Method(record["method"])
        output = Ranking([item_index[str(i)] for i in record["output"]])
        team_map = None
        if record.get("team_map") is not None:
            team_map = {item_index[str(k)]: int(v) for k, v in record["team_map"].items()}
        outcome = MultileaveOutcome(
            output=output,
            method=method,
            team_map=team_map,
            objective_value=record.get("objective"),
        )
        session = SessionState(
            session_id=record["sid"],
            experiment_id=record["eid"],
            ranker_names=list(record["ranker_names"]),
            item_names=item_names,
            inputs=inputs,
            outcome=outcome,
            credit=CreditFunction(record["credit"]),
            created_at=record["ts"],
            last_touch=record["ts"],
            credits=zero_credits(inputs.n),
        )
        self._install_session(session)
        self._session_counter = max(
            self._session_counter, int(record["sid"].split("-")[1])
        )
