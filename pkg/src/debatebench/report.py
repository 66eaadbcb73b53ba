"""Render the win matrix, per-pair topic tables and the ranking.

Every number in a report is recomputed from the store (plus the manual
verdict file), so the same store bytes always give the same report bytes.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import IncompleteSeriesSet
from .judge import JudgeVerdict, ParseMode, Winner, format_score
from .store import RunManifest, RunStore, merged_verdicts
from .tournament import (
    DEFAULT_MAX_SELF_PLAY_IMBALANCE,
    Order,
    Pairing,
    Ranking,
    SeriesResult,
    TopicOutcome,
    compute_ranking,
    decide_topic_outcome,
    index_series,
    schedule,
    self_play_flags,
    series_from_verdicts,
)


def matrix_rows(series: Sequence[SeriesResult], roster: Sequence[str]) -> list[list[str]]:
    """Upper-triangular grid of "wA-wB" cells in roster order, header row first.

    Cells read from the row model's point of view.  The diagonal holds the
    self-play tally when one was played and is blank otherwise.
    """
    indexed = index_series(series)
    rows = [[""] + list(roster)]
    for i, a in enumerate(roster):
        row = [a]
        for j, b in enumerate(roster):
            if j < i:
                row.append("")
                continue
            s = indexed.get(frozenset((a, b)))
            if s is None:
                if a == b:
                    row.append("")
                    continue
                raise IncompleteSeriesSet(f"no series for ({a}, {b})")
            if s.model_a != a:
                s = s.swapped()
            row.append(s.cell)
        rows.append(row)
    return rows


def _markdown_table(rows: Sequence[Sequence[str]]) -> str:
    def line(cells):
        return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"

    out = [line(rows[0]), "|" + "---|" * len(rows[0])]
    out.extend(line(r) for r in rows[1:])
    return "\n".join(out) + "\n"


def _csv_table(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def render_matrix(series: Sequence[SeriesResult], roster: Sequence[str], fmt: str = "md") -> str:
    rows = matrix_rows(series, roster)
    if fmt == "csv":
        rows = [["model"] + rows[0][1:]] + rows[1:]
        return _csv_table(rows)
    if fmt != "md":
        raise ValueError(f"unknown format {fmt!r}")
    return _markdown_table(rows)


def render_ranking(ranking: Ranking, fmt: str = "md") -> str:
    rows = [["Rank", "Model", "Series wins", "Topic wins"]]
    rows += [[str(e.rank), e.model, str(e.series_wins), str(e.total_topic_wins)] for e in ranking.entries]
    return _csv_table(rows) if fmt == "csv" else _markdown_table(rows)


def _side_winner(verdict: JudgeVerdict | None, side1: str, side2: str) -> str:
    if verdict is None:
        return "-"
    if verdict.winner is Winner.DRAW:
        return "Draw"
    return side1 if verdict.winner is Winner.SIDE1 else side2


def _verdict_note(verdict: JudgeVerdict | None, where: str) -> list[str]:
    if verdict is None:
        return [f"{where} missing"]
    notes = []
    if verdict.parse_mode is not ParseMode.STRICT:
        notes.append(f"{where} {verdict.parse_mode.value}")
    if not verdict.consistent:
        notes.append(f"{where} winner disagrees with scores")
    return notes


def render_pair_table(
    model_a: str,
    model_b: str,
    pairings: Sequence[Pairing],
    run_id: str,
    verdicts: Mapping[str, JudgeVerdict],
) -> str:
    """Home/Away topic table for one pair.

    Home is the debate ``model_a`` opened, so its side 1 is ``model_a``;
    the away debate has the roles swapped.
    """
    header = [
        "Topic", "Home winner", "Home side 1", "Home side 2",
        "Away winner", "Away side 1", "Away side 2", "Overall", "Notes",
    ]
    rows = [header]
    tally = {model_a: 0, model_b: 0, "Tie": 0}
    pending = 0
    for p in pairings:
        if (p.model_a, p.model_b) != (model_a, model_b) or p.order is not Order.A_FIRST:
            continue
        home = verdicts.get(p.debate_id(run_id))
        away = verdicts.get(p.partner().debate_id(run_id))
        if home is not None and away is not None:
            outcome = TopicOutcome(model_a, model_b, p.topic, home, away, decide_topic_outcome(home, away))
            overall = outcome.winner_name()
            tally[overall] = tally.get(overall, 0) + 1
        else:
            overall = "pending"
            pending += 1
        scores = []
        for v in (home, away):
            scores += ["-", "-"] if v is None else [format_score(v.score1), format_score(v.score2)]
        rows.append([
            str(p.topic.index),
            _side_winner(home, model_a, model_b), scores[0], scores[1],
            _side_winner(away, model_b, model_a), scores[2], scores[3],
            overall,
            "; ".join(_verdict_note(home, "home") + _verdict_note(away, "away")),
        ])
    if model_a == model_b:
        summary = f"Home first mover wins {tally[model_a]}, ties {tally['Tie']}"
    else:
        summary = f"{model_a} wins {tally[model_a]}, {model_b} wins {tally[model_b]}, ties {tally['Tie']}"
    if pending:
        summary += f", pending {pending}"
    title = f"# {model_a} vs {model_b}\n\n"
    return title + _markdown_table(rows) + "\n" + summary + ".\n"


@dataclass(frozen=True)
class Agreement:
    judge1: str
    judge2: str
    common: int
    agree: int

    @property
    def rate(self) -> float:
        return self.agree / self.common if self.common else 0.0


def judge_agreement(
    verdicts1: Mapping[str, JudgeVerdict], verdicts2: Mapping[str, JudgeVerdict], judge1: str = "", judge2: str = ""
) -> Agreement:
    """Share of commonly judged debates where both judges named the same winner."""
    common = sorted(set(verdicts1) & set(verdicts2))
    agree = sum(verdicts1[d].winner is verdicts2[d].winner for d in common)
    return Agreement(judge1, judge2, len(common), agree)


def pair_filename(model_a: str, model_b: str) -> str:
    def safe(name: str) -> str:
        return re.sub(r"[^A-Za-z0-9._-]", "_", name)

    return f"{safe(model_a)}_vs_{safe(model_b)}.md"


@dataclass
class ReportBundle:
    judge_model: str
    matrix_md: str
    matrix_csv: str
    ranking_md: str
    pairs: dict[str, str] = field(default_factory=dict)
    annotations: list[str] = field(default_factory=list)
    series: list[SeriesResult] = field(default_factory=list)
    ranking: Ranking | None = None

    def files(self) -> dict[str, str]:
        out = {"matrix.md": self.matrix_md, "matrix.csv": self.matrix_csv, "ranking.md": self.ranking_md}
        out.update({f"pairs/{name}": text for name, text in self.pairs.items()})
        return out


def build_report(
    store: RunStore,
    judge_model: str | None = None,
    manual: Mapping[str, JudgeVerdict] | None = None,
    max_self_play_imbalance: int = DEFAULT_MAX_SELF_PLAY_IMBALANCE,
) -> ReportBundle:
    manifest: RunManifest | None = store.manifest
    if manifest is None:
        raise IncompleteSeriesSet(f"{store.path} has no manifest")
    judge_model = judge_model or manifest.judge_model
    manual = manual or {}
    verdicts = merged_verdicts(store, judge_model, manual)
    pairings = schedule(manifest.roster, manifest.topics, manifest.self_play)
    series = series_from_verdicts(manifest.run_id, pairings, verdicts)
    ranking = compute_ranking(series, roster=manifest.roster)

    annotations: list[str] = []
    provisional = [s for s in series if s.provisional]
    if provisional:
        annotations.append(
            f"Provisional: {len(provisional)} of {len(series)} series still have undecided topics."
        )
    for flag in self_play_flags(series, max_self_play_imbalance):
        annotations.append(
            f"Self-play imbalance for {flag.model}: home first mover {flag.wins_home}, "
            f"away first mover {flag.wins_away} (threshold {max_self_play_imbalance})."
        )
    counts = {mode: 0 for mode in ParseMode}
    inconsistent = 0
    for v in verdicts.values():
        counts[v.parse_mode] += 1
        inconsistent += not v.consistent
    annotations.append(
        f"Verdicts by {judge_model}: {counts[ParseMode.STRICT]} strict, "
        f"{counts[ParseMode.RECOVERED]} recovered, {counts[ParseMode.MANUAL]} manual; "
        f"{inconsistent} declare a winner that disagrees with the scores."
    )
    failed = sorted({f.debate_id for f in store.failures if f.judge_model in ("", judge_model)})
    unresolved = [d for d in failed if d not in verdicts]
    if unresolved:
        annotations.append(f"Unresolved failures: {len(unresolved)} debates ({', '.join(unresolved)}).")
    for other in store.judges():
        if other == judge_model:
            continue
        agreement = judge_agreement(verdicts, merged_verdicts(store, other, manual), judge_model, other)
        annotations.append(
            f"Agreement with {other}: {agreement.agree}/{agreement.common} debates name the same winner."
        )

    ranking_md = f"# Ranking (judge: {judge_model})\n\n" + render_ranking(ranking)
    ranking_md += "\n## Notes\n\n" + "".join(f"- {a}\n" for a in annotations)
    pairs = {
        pair_filename(s.model_a, s.model_b): render_pair_table(
            s.model_a, s.model_b, pairings, manifest.run_id, verdicts
        )
        for s in series
    }
    return ReportBundle(
        judge_model,
        render_matrix(series, manifest.roster, "md"),
        render_matrix(series, manifest.roster, "csv"),
        ranking_md,
        pairs,
        annotations,
        series,
        ranking,
    )


def write_reports(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for rel, text in bundle.files().items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
