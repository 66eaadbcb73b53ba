"""Drive a tournament or a re-judge pass against a run store.

Debates run on a thread pool but results are written in schedule order, so
the store is byte-identical for any worker count once the clock is fixed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, TypeVar

from .debate import DebateSpec, Transcript, run_debate, validate_rounds
from .errors import ConfigError, JudgeCallFailed, ManifestMismatch, TurnFailed, VerdictUnrecoverable
from .gateway import Clock, Gateway
from .judge import JudgeVerdict, evaluate
from .prompts import TemplateSet, Topic, default_templates
from .store import DebateRecord, FailureRecord, RunManifest, RunStore, VerdictRecord
from .tournament import Pairing, schedule

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def make_manifest(
    roster: Sequence[str],
    topics: Sequence[Topic],
    judge_model: str,
    gateway_digest: str,
    rounds: int = 4,
    self_play: bool = False,
    templates: TemplateSet | None = None,
    run_id: str | None = None,
    created_at: str = "",
) -> RunManifest:
    """Build a manifest; without ``run_id`` one is derived from the pinned inputs."""
    validate_rounds(rounds)
    templates = templates or default_templates()
    manifest = RunManifest(
        run_id or "pending",
        tuple(roster),
        tuple(topics),
        templates.digest(),
        judge_model,
        rounds,
        gateway_digest,
        self_play,
        created_at,
    )
    if run_id is None:
        digest = hashlib.sha256(json.dumps(manifest.pinned(), sort_keys=True).encode()).hexdigest()
        manifest = replace(manifest, run_id=f"run-{digest[:12]}")
    elif not run_id or "|" in run_id:
        raise ConfigError("run id must be non-empty and free of '|'")
    return manifest


def planned_pairings(manifest: RunManifest) -> list[Pairing]:
    return schedule(manifest.roster, manifest.topics, manifest.self_play)


def _ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> Iterable[R]:
    if workers <= 1 or len(items) <= 1:
        return map(fn, items)
    pool = ThreadPoolExecutor(max_workers=workers)
    results = pool.map(fn, items)

    def drain():
        try:
            yield from results
        finally:
            pool.shutdown(wait=True)

    return drain()


@dataclass
class _JobResult:
    pairing: Pairing
    transcript: Transcript | None
    new_transcript: bool
    verdict: JudgeVerdict | None = None
    failure: FailureRecord | None = None


@dataclass
class RunSummary:
    run_id: str
    scheduled: int
    attempted: int = 0
    debated: int = 0
    judged: int = 0
    failures: list[FailureRecord] = field(default_factory=list)
    remaining: int = 0

    @property
    def complete(self) -> bool:
        return self.remaining == 0


def _judge_job(
    transcript: Transcript, debate_id: str, judge_model: str, gateway: Gateway, templates: TemplateSet
) -> tuple[JudgeVerdict | None, FailureRecord | None]:
    try:
        return evaluate(transcript, judge_model, gateway, templates), None
    except JudgeCallFailed as exc:
        return None, FailureRecord(debate_id, "judge", str(exc), judge_model)
    except VerdictUnrecoverable as exc:
        return None, FailureRecord(debate_id, "judge", exc.reason, judge_model, exc.raw_reply)


def run_tournament(
    store: RunStore,
    gateway: Gateway,
    manifest: RunManifest,
    templates: TemplateSet | None = None,
    workers: int = 1,
    limit: int | None = None,
    settled: Iterable[str] = (),
    clock: Clock | None = None,
) -> RunSummary:
    """Play and judge every scheduled debate that still lacks a verdict.

    Transcripts already in the store are judged again instead of replayed.
    ``limit`` caps how many debates this call handles, which is how an
    interrupted run is simulated.  ``settled`` lists debate ids resolved by
    manual verdicts.
    """
    templates = templates or default_templates()
    if templates.digest() != manifest.templates_digest:
        raise ManifestMismatch("templates do not match the manifest")
    clock = clock or gateway.clock
    store.ensure_manifest(manifest)
    full = planned_pairings(manifest)
    plan = store.resume_plan(manifest, full, exclude=settled)
    if limit is not None:
        plan = plan[: max(limit, 0)]
    run_id = manifest.run_id
    judge_model = manifest.judge_model

    def job(p: Pairing) -> _JobResult:
        debate_id = p.debate_id(run_id)
        stored = store.debates.get(debate_id)
        if stored is not None:
            transcript, new = stored.transcript, False
        else:
            spec = DebateSpec(p.topic, p.first_mover, p.second_mover, manifest.rounds, templates)
            try:
                transcript, new = run_debate(spec, gateway, clock), True
            except TurnFailed as exc:
                return _JobResult(p, None, False, failure=FailureRecord(debate_id, "debate", str(exc)))
        verdict, failure = _judge_job(transcript, debate_id, judge_model, gateway, templates)
        return _JobResult(p, transcript, new, verdict, failure)

    summary = RunSummary(run_id, len(full))
    for result in _ordered_map(job, plan, workers):
        debate_id = result.pairing.debate_id(run_id)
        summary.attempted += 1
        if result.new_transcript:
            store.append(DebateRecord.for_pairing(result.pairing, run_id, result.transcript, clock.now()))
            summary.debated += 1
        if result.verdict is not None:
            store.append(VerdictRecord(debate_id, result.verdict, clock.now()))
            summary.judged += 1
        if result.failure is not None:
            failure = replace(result.failure, created_at=clock.now())
            store.append(failure)
            summary.failures.append(failure)
            logger.warning("%s: %s failed: %s", debate_id, failure.stage, failure.error)
    summary.remaining = len(store.resume_plan(manifest, full, exclude=settled))
    return summary


@dataclass
class RejudgeSummary:
    judge_model: str
    selected: int = 0
    judged: int = 0
    skipped: int = 0
    failures: list[FailureRecord] = field(default_factory=list)


def parse_pair_filter(text: str) -> frozenset[str]:
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"pair filter must look like 'model1:model2', got {text!r}")
    return frozenset(parts)


def rejudge(
    store: RunStore,
    gateway: Gateway,
    judge_model: str,
    templates: TemplateSet | None = None,
    pair: frozenset[str] | None = None,
    workers: int = 1,
    clock: Clock | None = None,
) -> RejudgeSummary:
    """Judge stored transcripts with ``judge_model``, appending parallel verdicts.

    Existing verdicts, including those of the same judge, are left alone.
    """
    if store.manifest is None:
        raise ConfigError(f"{store.path} has no manifest")
    templates = templates or default_templates()
    if templates.digest() != store.manifest.templates_digest:
        raise ManifestMismatch("templates do not match the manifest")
    clock = clock or gateway.clock
    summary = RejudgeSummary(judge_model)
    todo: list[DebateRecord] = []
    for rec in store.debates.values():
        if pair is not None and frozenset((rec.model_a, rec.model_b)) != pair:
            continue
        summary.selected += 1
        if (rec.debate_id, judge_model) in store.verdicts:
            summary.skipped += 1
            continue
        todo.append(rec)

    def job(rec: DebateRecord):
        return _judge_job(rec.transcript, rec.debate_id, judge_model, gateway, templates)

    for rec, (verdict, failure) in zip(todo, _ordered_map(job, todo, workers)):
        if verdict is not None:
            store.append(VerdictRecord(rec.debate_id, verdict, clock.now()))
            summary.judged += 1
        else:
            failure = replace(failure, created_at=clock.now())
            store.append(failure)
            summary.failures.append(failure)
    return summary
