"""Scheduling, per-topic outcomes, series tallies and the ranking.

Every (pair, topic) is played twice: once with ``model_a`` opening (the
home debate, ``AFirst``) and once with ``model_b`` opening (the away
debate, ``BFirst``).  A model takes the topic when it wins both debates, or
wins one while the other is judged a draw.  A pair's tally over all topics
is one cell of the win matrix; the ranking counts series won head to head.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    DuplicateSeries,
    DuplicateTopic,
    EmptyRoster,
    EmptyTopics,
    IncompleteSeriesSet,
    MissingTopic,
    MissingVerdict,
)
from .judge import JudgeVerdict, Winner
from .prompts import Topic

# Self-play diagonals with a larger home/away gap than this are flagged.
DEFAULT_MAX_SELF_PLAY_IMBALANCE = 3


class Order(str, enum.Enum):
    A_FIRST = "AFirst"
    B_FIRST = "BFirst"

    def flipped(self) -> "Order":
        return Order.B_FIRST if self is Order.A_FIRST else Order.A_FIRST


class Outcome(str, enum.Enum):
    WIN_A = "WinA"
    WIN_B = "WinB"
    TIE = "Tie"

    def flipped(self) -> "Outcome":
        if self is Outcome.WIN_A:
            return Outcome.WIN_B
        if self is Outcome.WIN_B:
            return Outcome.WIN_A
        return self


@dataclass(frozen=True)
class Pairing:
    model_a: str
    model_b: str
    topic: Topic
    order: Order

    @property
    def first_mover(self) -> str:
        return self.model_a if self.order is Order.A_FIRST else self.model_b

    @property
    def second_mover(self) -> str:
        return self.model_b if self.order is Order.A_FIRST else self.model_a

    @property
    def self_play(self) -> bool:
        return self.model_a == self.model_b

    def debate_id(self, run_id: str) -> str:
        return f"{run_id}|{self.model_a}|{self.model_b}|{self.topic.index}|{self.order.value}"

    def partner(self) -> "Pairing":
        """The other debate of the same (pair, topic)."""
        return Pairing(self.model_a, self.model_b, self.topic, self.order.flipped())


def schedule(models: Sequence[str], topics: Sequence[Topic], include_self_play: bool = False) -> list[Pairing]:
    """All debates of a round robin, ordered by pair index, topic index, then order.

    Pairs are taken in roster order with ``model_a`` earlier in the roster.
    """
    models = list(models)
    topics = list(topics)
    if not models:
        raise EmptyRoster("the roster is empty")
    if not topics:
        raise EmptyTopics("no topics to debate")
    if len(set(models)) != len(models):
        raise ConfigError("the roster lists a model more than once")
    for m in models:
        if not m or "|" in m:
            raise ConfigError(f"model name {m!r} must be non-empty and free of '|'")
    if len({t.index for t in topics}) != len(topics):
        raise DuplicateTopic("topic indices must be unique")
    out: list[Pairing] = []
    for a, b in combinations_with_replacement(models, 2):
        if a == b and not include_self_play:
            continue
        for topic in topics:
            out.append(Pairing(a, b, topic, Order.A_FIRST))
            out.append(Pairing(a, b, topic, Order.B_FIRST))
    return out


def _winner_of(verdict: JudgeVerdict | Winner | str | None, role: str) -> Winner:
    if verdict is None:
        raise MissingVerdict(f"the {role} verdict is missing")
    return Winner(getattr(verdict, "winner", verdict))


def _points_for_a(winner: Winner, order: Order) -> int:
    """+1 when model A won this debate, -1 when B won, 0 on a draw."""
    if winner is Winner.DRAW:
        return 0
    a_is_side1 = order is Order.A_FIRST
    a_won = (winner is Winner.SIDE1) == a_is_side1
    return 1 if a_won else -1


def decide_topic_outcome(
    home: JudgeVerdict | Winner | str | None,
    away: JudgeVerdict | Winner | str | None,
    home_order: Order = Order.A_FIRST,
) -> Outcome:
    """Combine the two verdicts of one (pair, topic).

    ``home_order`` is the role order of the ``home`` debate; the away debate
    always has the other order.  Verdict winners name sides, so they are
    mapped to models before the rule is applied.
    """
    home_order = Order(home_order)
    score = _points_for_a(_winner_of(home, "home"), home_order)
    score += _points_for_a(_winner_of(away, "away"), home_order.flipped())
    if score > 0:
        return Outcome.WIN_A
    if score < 0:
        return Outcome.WIN_B
    return Outcome.TIE


@dataclass(frozen=True)
class TopicOutcome:
    model_a: str
    model_b: str
    topic: Topic
    home: JudgeVerdict | None
    away: JudgeVerdict | None
    result: Outcome

    @property
    def pair(self) -> tuple[str, str]:
        return self.model_a, self.model_b

    @classmethod
    def decide(cls, model_a: str, model_b: str, topic: Topic, home, away) -> "TopicOutcome":
        """``home`` is the AFirst debate's verdict, ``away`` the BFirst one."""
        return cls(model_a, model_b, topic, home, away, decide_topic_outcome(home, away))

    def winner_name(self) -> str:
        if self.result is Outcome.WIN_A:
            return self.model_a
        if self.result is Outcome.WIN_B:
            return self.model_b
        return "Tie"


@dataclass(frozen=True)
class SeriesResult:
    model_a: str
    model_b: str
    wins_a: int
    wins_b: int
    ties: int
    provisional: bool = False

    def __post_init__(self) -> None:
        if min(self.wins_a, self.wins_b, self.ties) < 0:
            raise ValueError("series counts must be non-negative")

    @property
    def pair(self) -> tuple[str, str]:
        return self.model_a, self.model_b

    @property
    def topics(self) -> int:
        return self.wins_a + self.wins_b + self.ties

    @property
    def cell(self) -> str:
        return f"{self.wins_a}-{self.wins_b}"

    @property
    def self_play(self) -> bool:
        return self.model_a == self.model_b

    def swapped(self) -> "SeriesResult":
        return SeriesResult(self.model_b, self.model_a, self.wins_b, self.wins_a, self.ties, self.provisional)

    def wins_for(self, model: str) -> int:
        if model == self.model_a:
            return self.wins_a
        if model == self.model_b:
            return self.wins_b
        raise KeyError(model)

    def series_winner(self) -> str | None:
        """The model with strictly more topic wins, or None when level."""
        if self.self_play or self.wins_a == self.wins_b:
            return None
        return self.model_a if self.wins_a > self.wins_b else self.model_b


def aggregate_series(
    outcomes: Iterable[TopicOutcome],
    topics: Iterable[Topic] | None = None,
    *,
    pair: tuple[str, str] | None = None,
    provisional: bool = False,
) -> SeriesResult:
    """Tally the topic outcomes of one pair.

    When ``topics`` is given every one of them must have exactly one outcome.
    ``pair`` is only needed to name an empty series.
    """
    outcomes = list(outcomes)
    if pair is None:
        if not outcomes:
            raise ValueError("an empty series needs an explicit pair")
        pair = outcomes[0].pair
    seen: set[int] = set()
    counts: Counter[Outcome] = Counter()
    for o in outcomes:
        if o.pair != tuple(pair):
            raise ValueError(f"outcome for {o.pair} does not belong to series {tuple(pair)}")
        if o.topic.index in seen:
            raise DuplicateTopic(f"topic {o.topic.index} appears twice in series {tuple(pair)}")
        seen.add(o.topic.index)
        counts[o.result] += 1
    if topics is not None:
        expected = {t.index for t in topics}
        missing = sorted(expected - seen)
        if missing:
            raise MissingTopic(f"series {tuple(pair)} has no outcome for topics {missing}")
        extra = sorted(seen - expected)
        if extra:
            raise ValueError(f"series {tuple(pair)} has outcomes for unscheduled topics {extra}")
    return SeriesResult(
        pair[0], pair[1], counts[Outcome.WIN_A], counts[Outcome.WIN_B], counts[Outcome.TIE], provisional
    )


@dataclass(frozen=True)
class RankEntry:
    model: str
    series_wins: int
    total_topic_wins: int
    rank: int


@dataclass(frozen=True)
class Ranking:
    entries: tuple[RankEntry, ...]
    provisional: bool = False

    def models(self) -> list[str]:
        return [e.model for e in self.entries]

    def series_wins(self) -> list[int]:
        return [e.series_wins for e in self.entries]

    def entry(self, model: str) -> RankEntry:
        for e in self.entries:
            if e.model == model:
                return e
        raise KeyError(model)


def index_series(series: Iterable[SeriesResult]) -> dict[frozenset[str], SeriesResult]:
    """Key series by unordered pair; a pair may appear only once."""
    out: dict[frozenset[str], SeriesResult] = {}
    for s in series:
        key = frozenset(s.pair)
        if key in out:
            raise DuplicateSeries(f"series {s.pair} given more than once")
        out[key] = s
    return out


def compute_ranking(
    series: Iterable[SeriesResult],
    exclude_self: bool = True,
    roster: Sequence[str] | None = None,
) -> Ranking:
    """Rank models by head-to-head series wins.

    A series is won with strictly more topic wins.  Ties in series wins are
    broken by total topic wins, then by model name; models level on both
    numbers share the smaller rank.  Self-play never earns a series win, and
    its topic wins count toward the tie-break only when ``exclude_self`` is
    false.
    """
    series = list(series)
    indexed = index_series(series)
    if roster is None:
        roster = sorted({m for s in series for m in s.pair})
    roster = list(roster)
    if not roster:
        raise IncompleteSeriesSet("no series to rank")
    if len(set(roster)) != len(roster):
        raise ConfigError("the roster lists a model more than once")
    members = set(roster)
    for s in series:
        if not set(s.pair) <= members:
            raise IncompleteSeriesSet(f"series {s.pair} involves a model outside the roster")
    missing = [
        (a, b) for i, a in enumerate(roster) for b in roster[i + 1:] if frozenset((a, b)) not in indexed
    ]
    if missing:
        raise IncompleteSeriesSet(f"no series for pairs {missing}")

    series_wins = dict.fromkeys(roster, 0)
    topic_wins = dict.fromkeys(roster, 0)
    for s in series:
        if s.self_play:
            if not exclude_self:
                topic_wins[s.model_a] += s.wins_a + s.wins_b
            continue
        topic_wins[s.model_a] += s.wins_a
        topic_wins[s.model_b] += s.wins_b
        winner = s.series_winner()
        if winner is not None:
            series_wins[winner] += 1

    ordered = sorted(roster, key=lambda m: (-series_wins[m], -topic_wins[m], m))
    entries: list[RankEntry] = []
    for pos, model in enumerate(ordered, start=1):
        rank = pos
        if entries:
            prev = entries[-1]
            if (prev.series_wins, prev.total_topic_wins) == (series_wins[model], topic_wins[model]):
                rank = prev.rank
        entries.append(RankEntry(model, series_wins[model], topic_wins[model], rank))
    return Ranking(tuple(entries), any(s.provisional for s in series))


@dataclass(frozen=True)
class SanityFlag:
    model: str
    wins_home: int
    wins_away: int
    ties: int

    @property
    def imbalance(self) -> int:
        return abs(self.wins_home - self.wins_away)


def self_play_flags(
    series: Iterable[SeriesResult], max_imbalance: int = DEFAULT_MAX_SELF_PLAY_IMBALANCE
) -> list[SanityFlag]:
    """Self-play diagonals whose home/away tallies differ by more than ``max_imbalance``.

    In self-play "A" is whoever opened the home debate, so a lopsided
    diagonal points at a first-mover or side-label bias in the judge.
    """
    flags = []
    for s in series:
        if s.self_play and abs(s.wins_a - s.wins_b) > max_imbalance:
            flags.append(SanityFlag(s.model_a, s.wins_a, s.wins_b, s.ties))
    return sorted(flags, key=lambda f: f.model)


def collect_outcomes(
    run_id: str,
    pairings: Iterable[Pairing],
    verdicts: Mapping[str, JudgeVerdict],
) -> dict[tuple[str, str], list[TopicOutcome]]:
    """Decide every (pair, topic) whose home and away verdicts are both known.

    ``verdicts`` maps debate ids to the verdict of the judge being reported.
    Pairs are returned in first-seen order with their decided topics.
    """
    out: dict[tuple[str, str], list[TopicOutcome]] = {}
    for p in pairings:
        out.setdefault((p.model_a, p.model_b), [])
        if p.order is not Order.A_FIRST:
            continue
        home = verdicts.get(p.debate_id(run_id))
        away = verdicts.get(p.partner().debate_id(run_id))
        if home is None or away is None:
            continue
        out[(p.model_a, p.model_b)].append(TopicOutcome.decide(p.model_a, p.model_b, p.topic, home, away))
    return out


def series_from_verdicts(
    run_id: str,
    pairings: Sequence[Pairing],
    verdicts: Mapping[str, JudgeVerdict],
) -> list[SeriesResult]:
    """One SeriesResult per scheduled pair; pairs with undecided topics are provisional."""
    scheduled: dict[tuple[str, str], set[int]] = {}
    for p in pairings:
        scheduled.setdefault((p.model_a, p.model_b), set()).add(p.topic.index)
    out = []
    for pair, outcomes in collect_outcomes(run_id, pairings, verdicts).items():
        provisional = len(outcomes) < len(scheduled[pair])
        out.append(aggregate_series(outcomes, pair=pair, provisional=provisional))
    return out
