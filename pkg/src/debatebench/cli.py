"""Command-line front end.

Exit codes: 0 on success, 1 when some debates or verdicts are still
missing, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DebateBenchError, ManifestMismatch
from .gateway import Clock, FixedClock, Gateway, config_digest
from .prompts import TemplateSet, default_templates, load_topics
from .report import build_report, judge_agreement, render_ranking, write_reports
from .runner import make_manifest, parse_pair_filter, rejudge, run_tournament
from .store import MANUAL_FILE, RunStore, load_manual_verdicts, merged_verdicts, set_manual_verdict

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def load_config(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _clock(config: dict) -> Clock:
    stamp = config.get("fixed_clock")
    return FixedClock(stamp) if stamp else Clock()


def _templates(path: str | None) -> TemplateSet:
    return TemplateSet.from_directory(path) if path else default_templates()


def _gateway(config: dict) -> Gateway:
    return Gateway.from_config(config, clock=_clock(config))


def _roster(args, config: dict) -> list[str]:
    if args.roster:
        roster = [m.strip() for m in args.roster.split(",") if m.strip()]
    else:
        roster = list(config.get("roster") or [])
    if not roster:
        raise ConfigError("no roster: pass --roster or set 'roster' in the config")
    return roster


def _open_store(run_dir: str, templates: TemplateSet | None = None) -> RunStore:
    store = RunStore.in_dir(run_dir, templates=templates)
    if store.manifest is None:
        raise ConfigError(f"{run_dir} holds no run")
    return store


def _manual(run_dir: str, store: RunStore):
    return load_manual_verdicts(Path(run_dir) / MANUAL_FILE, store.manifest.judge_model)


def cmd_run(args) -> int:
    config = load_config(args.config)
    gateway = _gateway(config)
    templates = _templates(args.templates)
    topics = load_topics(args.topics)
    roster = _roster(args, config)
    judge = args.judge or config.get("judge")
    if not judge:
        raise ConfigError("no judge: pass --judge or set 'judge' in the config")
    for model in [*roster, judge]:
        gateway.resolve(model)
    rounds = args.rounds if args.rounds is not None else int(config.get("rounds", 4))
    self_play = args.self_play or bool(config.get("self_play", False))
    workers = args.workers if args.workers is not None else int(config.get("workers", 1))
    manifest = make_manifest(
        roster, topics, judge, config_digest(config), rounds, self_play, templates,
        args.run_id, gateway.clock.now(),
    )
    store = RunStore.in_dir(args.run_dir, templates=templates)
    if store.manifest is not None and not args.resume:
        raise ConfigError(f"{args.run_dir} already holds run {store.manifest.run_id}; pass --resume to continue it")
    if store.manifest is not None and args.run_id is None:
        # Keep the stored id so a changed input reports which field moved.
        manifest = make_manifest(
            roster, topics, judge, config_digest(config), rounds, self_play, templates,
            store.manifest.run_id, store.manifest.created_at,
        )
    manual = load_manual_verdicts(Path(args.run_dir) / MANUAL_FILE, judge)
    settled = [d for d, v in manual.items() if v.judge_model == judge and d in store.debates]
    summary = run_tournament(
        store, gateway, manifest, templates, workers=workers, limit=args.max_debates, settled=settled
    )
    bundle = build_report(store, judge, manual)
    write_reports(bundle, args.run_dir)
    print(f"run {summary.run_id}: {summary.debated} debates played, {summary.judged} verdicts this session")
    print(bundle.matrix_md, end="")
    if summary.complete:
        return EXIT_OK
    print(f"{summary.remaining} of {summary.scheduled} debates still lack a verdict", file=sys.stderr)
    for f in summary.failures:
        print(f"  {f.debate_id}: {f.stage} failed: {f.error}", file=sys.stderr)
    return EXIT_PARTIAL


def cmd_rejudge(args) -> int:
    config = load_config(args.config)
    gateway = _gateway(config)
    gateway.resolve(args.judge)
    templates = _templates(args.templates)
    store = _open_store(args.run_dir, templates)
    pair = parse_pair_filter(args.pair) if args.pair else None
    summary = rejudge(store, gateway, args.judge, templates, pair, workers=args.workers)
    print(
        f"re-judged {summary.judged} of {summary.selected} debates with {args.judge} "
        f"({summary.skipped} already had a verdict, {len(summary.failures)} failed)"
    )
    manual = _manual(args.run_dir, store)
    original = merged_verdicts(store, store.manifest.judge_model, manual)
    new = merged_verdicts(store, args.judge, manual)
    agreement = judge_agreement(original, new)
    print(f"agreement with {store.manifest.judge_model}: {agreement.agree}/{agreement.common}")
    for f in summary.failures:
        print(f"  {f.debate_id}: {f.error}", file=sys.stderr)
    return EXIT_PARTIAL if summary.failures else EXIT_OK


def cmd_rank(args) -> int:
    store = _open_store(args.run_dir)
    bundle = build_report(store, args.judge, _manual(args.run_dir, store))
    print(render_ranking(bundle.ranking), end="")
    if bundle.ranking.provisional:
        print("(provisional: some topics are undecided)")
    return EXIT_OK


def cmd_report(args) -> int:
    store = _open_store(args.run_dir)
    bundle = build_report(store, args.judge, _manual(args.run_dir, store))
    out = args.out
    if out is None:
        out = args.run_dir
        if bundle.judge_model != store.manifest.judge_model:
            out = str(Path(args.run_dir) / "judges" / bundle.judge_model.replace("/", "_"))
    for path in write_reports(bundle, out):
        print(path)
    return EXIT_OK


def cmd_verdict_set(args) -> int:
    store = _open_store(args.run_dir)
    if args.debate_id not in store.debates:
        raise ConfigError(f"no stored transcript for {args.debate_id}")
    judge = args.judge or store.manifest.judge_model
    try:
        verdict = set_manual_verdict(
            Path(args.run_dir) / MANUAL_FILE, args.debate_id, args.s1, args.s2, args.winner, judge, args.note
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"{args.debate_id}: manual verdict {args.s1}-{args.s2}, winner {verdict.winner.value} ({judge})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debatebench", description="Rank language models by debating them.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log retries and failures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="play and judge a tournament")
    p.add_argument("--config", required=True, help="JSON file with backends, models and defaults")
    p.add_argument("--run-dir", required=True, help="directory for the store and reports")
    p.add_argument("--topics", help="topic file (default: the 25 bundled topics)")
    p.add_argument("--roster", help="comma-separated model names")
    p.add_argument("--rounds", type=int, help="turns per debate, even (default 4)")
    p.add_argument("--judge", help="judge model name")
    p.add_argument("--self-play", action="store_true", help="also schedule each model against itself")
    p.add_argument("--workers", type=int, help="debates in flight at once")
    p.add_argument("--resume", action="store_true", help="continue the run stored in --run-dir")
    p.add_argument("--run-id", help="explicit run id (default: derived from the inputs)")
    p.add_argument("--max-debates", type=int, help="stop after this many debates")
    p.add_argument("--templates", help="directory of template files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rejudge", help="judge stored transcripts with another model")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--judge", required=True)
    p.add_argument("--pair", help="only this pair, as 'model1:model2'")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--templates")
    p.set_defaults(func=cmd_rejudge)

    p = sub.add_parser("rank", help="print the ranking")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--judge", help="judge whose verdicts to use (default: the run's judge)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("report", help="write matrix, ranking and pair tables")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--judge")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verdict", help="manual verdict entry")
    vsub = p.add_subparsers(dest="verdict_command", required=True)
    q = vsub.add_parser("set", help="record a verdict for a debate the judge reply could not settle")
    q.add_argument("debate_id")
    q.add_argument("--run-dir", required=True)
    q.add_argument("--s1", required=True, help="side 1 score, 1 to 10")
    q.add_argument("--s2", required=True, help="side 2 score, 1 to 10")
    q.add_argument("--winner", required=True, help="1, 2 or draw")
    q.add_argument("--judge", help="judge the entry stands in for (default: the run's judge)")
    q.add_argument("--note", default="", help="why the entry was made")
    q.set_defaults(func=cmd_verdict_set)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ManifestMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DebateBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
