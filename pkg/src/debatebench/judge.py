"""Judge calls and verdict parsing.

Replies are first parsed strictly against the mandated format::

    side1: [[8]], side2: [[7]], winner: [[1]]

and, failing that, by a tolerant grammar that accepts casing and spacing
variations, missing or single brackets, ``side 1``/``Side1`` spellings and
draw tokens.  Scores are kept as integer tenths.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping

from .errors import (
    GatewayError,
    JudgeCallFailed,
    LenientParseError,
    StrictParseError,
    VerdictUnrecoverable,
)
from .gateway import CompletionRequest, Gateway
from .prompts import TemplateSet, Topic, render_judge_prompt, render_judge_system


class Winner(str, enum.Enum):
    SIDE1 = "1"
    SIDE2 = "2"
    DRAW = "draw"


class ParseMode(str, enum.Enum):
    STRICT = "strict"
    RECOVERED = "recovered"
    MANUAL = "manual"


_SCORE_TEXT = re.compile(r"^(\d{1,2})(?:\.(\d))?$")


def parse_score(text: str) -> int:
    """``"8.5"`` -> 85.  Raises ValueError outside [1, 10] or past one decimal."""
    m = _SCORE_TEXT.match(text.strip())
    if not m:
        raise ValueError(f"not a score: {text!r}")
    tenths = int(m.group(1)) * 10 + int(m.group(2) or 0)
    if not 10 <= tenths <= 100:
        raise ValueError(f"score {text!r} outside [1, 10]")
    return tenths


def format_score(tenths: int) -> str:
    whole, frac = divmod(tenths, 10)
    return str(whole) if frac == 0 else f"{whole}.{frac}"


def score_value(tenths: int) -> Decimal:
    return Decimal(tenths) / 10


@dataclass(frozen=True)
class ParsedVerdict:
    score1: int
    score2: int
    winner: Winner

    def as_strings(self) -> tuple[str, str, str]:
        return format_score(self.score1), format_score(self.score2), self.winner.value


def format_verdict(score1: int, score2: int, winner: Winner) -> str:
    """Canonical reply for tenths scores and a side winner."""
    return (
        f"side1: [[{format_score(score1)}]], side2: [[{format_score(score2)}]], "
        f"winner: [[{Winner(winner).value}]]"
    )


_STRICT = re.compile(r"side1: \[\[([^\[\]]*)\]\], side2: \[\[([^\[\]]*)\]\], winner: \[\[([^\[\]]*)\]\]")


def parse_verdict_strict(text: str) -> ParsedVerdict:
    matches = list(_STRICT.finditer(text))
    if not matches:
        raise StrictParseError("reply does not contain the verdict format")
    if len(matches) > 1:
        raise StrictParseError("verdict format appears more than once", matches[1].start())
    m = matches[0]
    scores = []
    for group in (1, 2):
        try:
            scores.append(parse_score(m.group(group)))
        except ValueError as exc:
            raise StrictParseError(str(exc), m.start(group)) from None
    token = m.group(3)
    if token not in ("1", "2"):
        raise StrictParseError(f"winner must be '1' or '2', got {token!r}", m.start(3))
    return ParsedVerdict(scores[0], scores[1], Winner(token))


_DECOR = r"[\s*_\"'`]*"
_LABEL1 = r"side[\s_-]*(?:1|one)(?!\.?\d)"
_LABEL2 = r"side[\s_-]*(?:2|two)(?!\.?\d)"
_AFTER_LABEL = _DECOR + r"(?:score)?" + _DECOR + r"[:=-]?" + _DECOR + r"\[*\s*"
_NUMBER = r"(\d+(?:\.\d+)?)(?:\s*/\s*10(?!\.?\d))?\s*\]*"
_WIN_TOKEN = r"(side[\s_-]*[12](?!\.?\d)|[12](?!\.?\d)|tie\b|draw\b)"
_WINNER = (
    r"winner" + _DECOR + r"(?:is)?" + _DECOR + r"[:=-]?" + _DECOR + r"\[*\s*[\"']?"
    + _WIN_TOKEN + r"[\"']?\s*\]*"
)
_GAP = r"[\s,;.*]*"

_SIDE1 = re.compile(_LABEL1 + _AFTER_LABEL + _NUMBER, re.I)
_SIDE2 = re.compile(_LABEL2 + _AFTER_LABEL + _NUMBER, re.I)
_WINNER_RE = re.compile(_WINNER, re.I)
_TRIPLE = re.compile(
    _LABEL1 + _AFTER_LABEL + _NUMBER + _GAP + _LABEL2 + _AFTER_LABEL + _NUMBER + _GAP + _WINNER,
    re.I,
)


def _winner_token(token: str) -> Winner:
    t = re.sub(r"[\s_-]", "", token.lower())
    if t in ("1", "side1"):
        return Winner.SIDE1
    if t in ("2", "side2"):
        return Winner.SIDE2
    if t in ("tie", "draw"):
        return Winner.DRAW
    raise ValueError(f"unrecognised winner {token!r}")


def _lenient_scores(s1: str, s2: str) -> tuple[int, int]:
    try:
        return parse_score(s1), parse_score(s2)
    except ValueError as exc:
        raise LenientParseError(str(exc)) from None


def parse_verdict_lenient(text: str) -> ParsedVerdict:
    """Tolerant parse; returns the strict result when the strict parse succeeds.

    When several full verdicts appear, the last one wins.  Otherwise each
    score is the first number directly attached to a side label and the
    winner is the last winner declaration.
    """
    try:
        return parse_verdict_strict(text)
    except StrictParseError:
        pass
    triples = list(_TRIPLE.finditer(text))
    if triples:
        m = triples[-1]
        s1, s2 = _lenient_scores(m.group(1), m.group(2))
        return ParsedVerdict(s1, s2, _winner_token(m.group(3)))
    m1, m2 = _SIDE1.search(text), _SIDE2.search(text)
    if not m1 or not m2:
        raise LenientParseError("scores for both sides are required")
    winners = list(_WINNER_RE.finditer(text))
    if not winners:
        raise LenientParseError("no winner declaration found")
    s1, s2 = _lenient_scores(m1.group(1), m2.group(1))
    return ParsedVerdict(s1, s2, _winner_token(winners[-1].group(1)))


@dataclass(frozen=True)
class JudgeVerdict:
    score1: int
    score2: int
    winner: Winner
    parse_mode: ParseMode
    judge_model: str
    raw_reply: str
    attempts: int = field(default=1, compare=False)
    latency: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        for s in (self.score1, self.score2):
            if not 10 <= s <= 100:
                raise ValueError(f"score {s / 10} outside [1, 10]")

    @property
    def consistent(self) -> bool:
        """Whether the declared winner agrees with the score comparison."""
        if self.score1 == self.score2:
            expected = Winner.DRAW
        else:
            expected = Winner.SIDE1 if self.score1 > self.score2 else Winner.SIDE2
        return self.winner is expected

    def to_dict(self) -> dict:
        return {
            "score1_tenths": self.score1,
            "score2_tenths": self.score2,
            "winner": self.winner.value,
            "parse_mode": self.parse_mode.value,
            "judge_model": self.judge_model,
            "raw_reply": self.raw_reply,
            "attempts": self.attempts,
            "latency": self.latency,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "JudgeVerdict":
        return cls(
            int(data["score1_tenths"]),
            int(data["score2_tenths"]),
            Winner(data["winner"]),
            ParseMode(data["parse_mode"]),
            data["judge_model"],
            data.get("raw_reply", ""),
            int(data.get("attempts", 1)),
            float(data.get("latency", 0.0)),
        )


def verdict_from_reply(reply: str, judge_model: str, attempts: int = 1, latency: float = 0.0) -> JudgeVerdict:
    try:
        parsed, mode = parse_verdict_strict(reply), ParseMode.STRICT
    except StrictParseError:
        try:
            parsed, mode = parse_verdict_lenient(reply), ParseMode.RECOVERED
        except LenientParseError as exc:
            raise VerdictUnrecoverable(reply, str(exc)) from exc
    return JudgeVerdict(parsed.score1, parsed.score2, parsed.winner, mode, judge_model, reply, attempts, latency)


def manual_verdict(score1: str | float, score2: str | float, winner: str, judge_model: str, note: str = "") -> JudgeVerdict:
    return JudgeVerdict(
        parse_score(str(score1)),
        parse_score(str(score2)),
        _winner_token(str(winner)),
        ParseMode.MANUAL,
        judge_model,
        note,
    )


def judge_request(transcript, topic: Topic, judge_model: str, templates: TemplateSet | None = None) -> CompletionRequest:
    return CompletionRequest(
        judge_model,
        render_judge_system(topic, templates),
        render_judge_prompt(transcript, templates),
    )


def evaluate(transcript, judge_model: str, gateway: Gateway, templates: TemplateSet | None = None) -> JudgeVerdict:
    """Ask ``judge_model`` to score a finished transcript.

    Raises JudgeCallFailed on gateway errors and VerdictUnrecoverable (with
    the raw reply attached) when neither parser finds a verdict.
    """
    templates = templates or getattr(transcript.spec, "templates", None)
    request = judge_request(transcript, transcript.spec.topic, judge_model, templates)
    try:
        result = gateway.complete(request)
    except GatewayError as exc:
        raise JudgeCallFailed(exc) from exc
    return verdict_from_reply(result.text, judge_model, result.attempts, result.latency)
