"""Append-only JSON Lines store for one tournament run.

Each line is one self-describing record with a ``kind`` and a
``schema_version``:

* ``manifest``: the pinned run inputs, written once as the first line;
* ``debate``: a finished transcript, unique per debate id;
* ``verdict``: a judge verdict, unique per (debate id, judge model);
* ``failure``: a failed debate or judge call, kept for the audit trail.

A line is only trusted once its terminating newline is on disk, so a crash
mid-append leaves either the whole record or none of it.  The field layout
is described by ``schema/store-v1.json``.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .debate import Transcript
from .errors import DuplicateId, IncompleteTranscript, ManifestMismatch, StorageFailure
from .judge import JudgeVerdict, manual_verdict
from .prompts import TemplateSet, Topic, topics_digest
from .tournament import Order, Pairing

SCHEMA_VERSION = 1
STORE_FILE = "store.jsonl"
MANUAL_FILE = "manual_verdicts.json"

# Manifest fields that must not change between a run and its resumption.
PINNED_FIELDS = (
    "roster",
    "topics_digest",
    "templates_digest",
    "judge_model",
    "rounds",
    "gateway_digest",
    "self_play",
)


def dumps(obj: Mapping) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    roster: tuple[str, ...]
    topics: tuple[Topic, ...]
    templates_digest: str
    judge_model: str
    rounds: int
    gateway_digest: str
    self_play: bool = False
    created_at: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "roster", tuple(self.roster))
        object.__setattr__(self, "topics", tuple(self.topics))

    @property
    def topics_digest(self) -> str:
        return topics_digest(self.topics)

    def pinned(self) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in PINNED_FIELDS}

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "roster": list(self.roster),
            "topics": [t.to_dict() for t in self.topics],
            "topics_digest": self.topics_digest,
            "templates_digest": self.templates_digest,
            "judge_model": self.judge_model,
            "rounds": self.rounds,
            "gateway_digest": self.gateway_digest,
            "self_play": self.self_play,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunManifest":
        manifest = cls(
            data["run_id"],
            tuple(data["roster"]),
            tuple(Topic.from_dict(t) for t in data["topics"]),
            data["templates_digest"],
            data["judge_model"],
            int(data["rounds"]),
            data["gateway_digest"],
            bool(data.get("self_play", False)),
            data.get("created_at", ""),
        )
        if manifest.topics_digest != data.get("topics_digest", manifest.topics_digest):
            raise StorageFailure("manifest topics do not match their stored digest")
        return manifest


@dataclass(frozen=True)
class DebateRecord:
    debate_id: str
    model_a: str
    model_b: str
    topic_index: int
    order: Order
    transcript: Transcript
    created_at: str = ""

    @classmethod
    def for_pairing(cls, pairing: Pairing, run_id: str, transcript: Transcript, created_at: str = "") -> "DebateRecord":
        return cls(
            pairing.debate_id(run_id),
            pairing.model_a,
            pairing.model_b,
            pairing.topic.index,
            pairing.order,
            transcript,
            created_at,
        )

    def to_dict(self) -> dict:
        return {
            "kind": "debate",
            "debate_id": self.debate_id,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "topic_index": self.topic_index,
            "order": self.order.value,
            "transcript": self.transcript.to_dict(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping, templates: TemplateSet | None = None) -> "DebateRecord":
        return cls(
            data["debate_id"],
            data["model_a"],
            data["model_b"],
            int(data["topic_index"]),
            Order(data["order"]),
            Transcript.from_dict(data["transcript"], templates),
            data.get("created_at", ""),
        )


@dataclass(frozen=True)
class VerdictRecord:
    debate_id: str
    verdict: JudgeVerdict
    created_at: str = ""

    @property
    def judge_model(self) -> str:
        return self.verdict.judge_model

    @property
    def key(self) -> tuple[str, str]:
        return self.debate_id, self.judge_model

    def to_dict(self) -> dict:
        return {
            "kind": "verdict",
            "debate_id": self.debate_id,
            "verdict": self.verdict.to_dict(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "VerdictRecord":
        return cls(data["debate_id"], JudgeVerdict.from_dict(data["verdict"]), data.get("created_at", ""))


@dataclass(frozen=True)
class FailureRecord:
    debate_id: str
    stage: str  # "debate" or "judge"
    error: str
    judge_model: str = ""
    raw_reply: str = ""
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": "failure",
            "debate_id": self.debate_id,
            "stage": self.stage,
            "error": self.error,
            "judge_model": self.judge_model,
            "raw_reply": self.raw_reply,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FailureRecord":
        return cls(
            data["debate_id"],
            data["stage"],
            data["error"],
            data.get("judge_model", ""),
            data.get("raw_reply", ""),
            data.get("created_at", ""),
        )


class RunStore:
    """One JSON Lines file with in-memory indexes over its records.

    A single writer is assumed; appends are serialised with a lock so the
    runner's threads may share one instance.
    """

    def __init__(self, path: str | Path, durable: bool = True, templates: TemplateSet | None = None):
        self.path = Path(path)
        self.durable = durable
        self.templates = templates
        self.manifest: RunManifest | None = None
        self.debates: dict[str, DebateRecord] = {}
        self.verdicts: dict[tuple[str, str], VerdictRecord] = {}
        self.failures: list[FailureRecord] = []
        self._good_bytes = 0
        self._lock = threading.Lock()
        self._load()

    @classmethod
    def in_dir(cls, run_dir: str | Path, **kwargs) -> "RunStore":
        return cls(Path(run_dir) / STORE_FILE, **kwargs)

    # loading

    def _load(self) -> None:
        try:
            data = self.path.read_bytes()
        except FileNotFoundError:
            return
        except OSError as exc:
            raise StorageFailure(f"cannot read {self.path}: {exc}") from exc
        # Anything after the last newline is a torn append and is ignored.
        self._good_bytes = data.rfind(b"\n") + 1
        for lineno, raw in enumerate(data[: self._good_bytes].splitlines(), start=1):
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise StorageFailure(f"{self.path}:{lineno}: corrupt record: {exc}") from exc
            self._index(obj, lineno)

    def _index(self, obj: Mapping, lineno: int | None = None) -> None:
        where = f"{self.path}:{lineno}" if lineno else str(self.path)
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise StorageFailure(f"{where}: unsupported schema_version {version!r}")
        kind = obj.get("kind")
        if kind == "manifest":
            if self.manifest is not None:
                raise StorageFailure(f"{where}: second manifest record")
            self.manifest = RunManifest.from_dict(obj["manifest"])
        elif kind == "debate":
            rec = DebateRecord.from_dict(obj, self.templates)
            if rec.debate_id in self.debates:
                raise DuplicateId(f"{where}: debate {rec.debate_id} stored twice")
            self.debates[rec.debate_id] = rec
        elif kind == "verdict":
            rec = VerdictRecord.from_dict(obj)
            if rec.key in self.verdicts:
                raise DuplicateId(f"{where}: verdict {rec.key} stored twice")
            self.verdicts[rec.key] = rec
        elif kind == "failure":
            self.failures.append(FailureRecord.from_dict(obj))
        else:
            raise StorageFailure(f"{where}: unknown record kind {kind!r}")

    # writing

    def _write(self, obj: dict) -> None:
        obj = {**obj, "schema_version": SCHEMA_VERSION}
        line = (dumps(obj) + "\n").encode("utf-8")
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(self.path, os.O_WRONLY | os.O_CREAT, 0o644)
            try:
                # Drop a torn tail left by an earlier crash before appending.
                if os.fstat(fd).st_size != self._good_bytes:
                    os.ftruncate(fd, self._good_bytes)
                os.lseek(fd, self._good_bytes, os.SEEK_SET)
                view = memoryview(line)
                while view:
                    n = os.write(fd, view)
                    view = view[n:]
                if self.durable:
                    os.fsync(fd)
            finally:
                os.close(fd)
        except OSError as exc:
            raise StorageFailure(f"cannot append to {self.path}: {exc}") from exc
        self._good_bytes += len(line)

    def write_manifest(self, manifest: RunManifest) -> None:
        with self._lock:
            if self.manifest is not None:
                raise DuplicateId("the store already has a manifest")
            self._write({"kind": "manifest", "manifest": manifest.to_dict()})
            self.manifest = manifest

    def ensure_manifest(self, manifest: RunManifest) -> RunManifest:
        """Write ``manifest`` to a fresh store, or check it against the stored one."""
        if self.manifest is None:
            self.write_manifest(manifest)
        else:
            check_manifest(self.manifest, manifest)
        return self.manifest

    def append(self, record: DebateRecord | VerdictRecord | FailureRecord) -> None:
        with self._lock:
            if isinstance(record, DebateRecord):
                if record.debate_id in self.debates:
                    raise DuplicateId(f"debate {record.debate_id} is already stored")
                self._write(record.to_dict())
                self.debates[record.debate_id] = record
            elif isinstance(record, VerdictRecord):
                if record.key in self.verdicts:
                    raise DuplicateId(f"verdict {record.key} is already stored")
                if record.debate_id not in self.debates:
                    raise IncompleteTranscript(f"no stored transcript for {record.debate_id}")
                self._write(record.to_dict())
                self.verdicts[record.key] = record
            elif isinstance(record, FailureRecord):
                self._write(record.to_dict())
                self.failures.append(record)
            else:
                raise TypeError(f"cannot store {type(record).__name__}")

    # queries

    def verdicts_for(self, judge_model: str) -> dict[str, JudgeVerdict]:
        return {d: r.verdict for (d, j), r in self.verdicts.items() if j == judge_model}

    def judges(self) -> list[str]:
        return sorted({j for _, j in self.verdicts})

    def resume_plan(
        self,
        manifest: RunManifest,
        planned: Sequence[Pairing],
        exclude: Iterable[str] = (),
    ) -> list[Pairing]:
        """Scheduled pairings that still lack a verdict from the run's judge.

        ``exclude`` lists debate ids settled some other way (manual entries).
        """
        if self.manifest is not None:
            check_manifest(self.manifest, manifest)
        done = {d for (d, j) in self.verdicts if j == manifest.judge_model}
        done.update(exclude)
        return [p for p in planned if p.debate_id(manifest.run_id) not in done]


def check_manifest(stored: RunManifest, current: RunManifest) -> None:
    if stored.run_id != current.run_id:
        raise ManifestMismatch(f"store belongs to run {stored.run_id!r}, not {current.run_id!r}")
    a, b = stored.pinned(), current.pinned()
    changed = sorted(k for k in PINNED_FIELDS if a[k] != b[k])
    if changed:
        raise ManifestMismatch(f"configuration changed since the run began: {', '.join(changed)}")


# manual verdicts


def load_manual_entries(path: str | Path) -> dict[str, dict]:
    path = Path(path)
    if not path.exists():
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StorageFailure(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise StorageFailure(f"{path}: expected an object keyed by debate id")
    return data


def load_manual_verdicts(path: str | Path, default_judge: str = "") -> dict[str, JudgeVerdict]:
    """Manual entries as verdicts with ``parse_mode=manual``."""
    out = {}
    for debate_id, entry in load_manual_entries(path).items():
        try:
            out[debate_id] = manual_verdict(
                entry["score1"],
                entry["score2"],
                entry["winner"],
                entry.get("judge_model", default_judge),
                entry.get("note", ""),
            )
        except (KeyError, ValueError) as exc:
            raise StorageFailure(f"{path}: bad manual entry for {debate_id}: {exc}") from exc
    return out


def set_manual_verdict(
    path: str | Path,
    debate_id: str,
    score1: str,
    score2: str,
    winner: str,
    judge_model: str,
    note: str = "",
) -> JudgeVerdict:
    """Validate and record one manual verdict, replacing any earlier entry for the id."""
    verdict = manual_verdict(score1, score2, winner, judge_model, note)
    path = Path(path)
    entries = load_manual_entries(path)
    entries[debate_id] = {
        "judge_model": judge_model,
        "score1": str(score1),
        "score2": str(score2),
        "winner": verdict.winner.value,
        "note": note,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(entries, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return verdict


def merged_verdicts(store: RunStore, judge_model: str, manual: Mapping[str, JudgeVerdict]) -> dict[str, JudgeVerdict]:
    """Stored verdicts of ``judge_model`` with manual entries for that judge laid over them."""
    out = store.verdicts_for(judge_model)
    for debate_id, verdict in manual.items():
        if verdict.judge_model == judge_model and debate_id in store.debates:
            out[debate_id] = verdict
    return out
