from __future__ import annotations

import pytest

from conftest import STAMP, make_topics, scripted_gateway
from debatebench.errors import GatewayTimeout, ManifestMismatch
from debatebench.gateway import FixedClock, Gateway, RetryPolicy, synthetic_debater, synthetic_judge
from debatebench.judge import ParseMode
from debatebench.prompts import TemplateSet, default_templates
from debatebench.report import build_report
from debatebench.runner import make_manifest, parse_pair_filter, rejudge, run_tournament
from debatebench.store import RunStore
from debatebench.errors import ConfigError

MODELS = ("m1", "m2", "m3")


def manifest(n_topics=5, **kw):
    return make_manifest(list(MODELS), make_topics(n_topics), "J", "0" * 64, created_at=STAMP, **kw)


def counters(gw: Gateway) -> int:
    return sum(entry.backend.calls for entry in gw.backends.values())


def test_full_run_counts(tmp_path):
    gw = scripted_gateway()
    store = RunStore(tmp_path / "store.jsonl")
    summary = run_tournament(store, gw, manifest(), workers=4)
    assert summary.complete and summary.scheduled == 30
    assert (summary.debated, summary.judged) == (30, 30)
    assert gw.backends["debaters"].backend.calls == 120
    assert gw.backends["judges"].backend.calls == 30


def test_rerunning_a_finished_run_makes_no_calls(tmp_path):
    store = RunStore(tmp_path / "store.jsonl")
    run_tournament(store, scripted_gateway(), manifest())
    before = (tmp_path / "store.jsonl").read_bytes()
    gw = scripted_gateway()
    summary = run_tournament(RunStore(tmp_path / "store.jsonl"), gw, manifest())
    assert summary.attempted == 0 and counters(gw) == 0
    assert (tmp_path / "store.jsonl").read_bytes() == before


def test_run_id_is_derived_from_inputs():
    assert manifest().run_id == manifest().run_id
    assert manifest().run_id != manifest(rounds=6).run_id
    with pytest.raises(ConfigError):
        make_manifest(["a", "b"], make_topics(1), "J", "0" * 64, run_id="bad|id")


class FailingDebater:
    """Times out on every call for one model; otherwise synthetic."""

    def __init__(self, bad_model):
        self.bad_model = bad_model
        self.calls = 0

    def send(self, request, temperature, max_tokens):
        self.calls += 1
        if request.model == self.bad_model:
            raise GatewayTimeout("down")
        return synthetic_debater(request)


def test_failed_debates_are_recorded_and_retried_on_resume(tmp_path):
    gw = Gateway(clock=FixedClock(STAMP), sleep=lambda _s: None)
    gw.add_backend("d", FailingDebater("m3"), policy=RetryPolicy(max_attempts=2))
    gw.register_script("j", {}, synthetic_judge)
    for m in MODELS:
        gw.add_model(m, "d")
    gw.add_model("J", "j")
    store = RunStore(tmp_path / "store.jsonl")
    summary = run_tournament(store, gw, manifest(2))
    assert not summary.complete
    assert summary.remaining == 8 and len(summary.failures) == 8
    assert all(f.stage == "debate" and "turn" in f.error for f in summary.failures)

    fixed = scripted_gateway()
    summary = run_tournament(RunStore(tmp_path / "store.jsonl"), fixed, manifest(2))
    assert summary.complete and summary.debated == 8


def test_stored_transcripts_are_judged_without_replaying(tmp_path):
    gw = Gateway(clock=FixedClock(STAMP))
    gw.register_script("d", {}, synthetic_debater)
    gw.register_script("j", {}, lambda _r: "no verdict here")
    for m in MODELS:
        gw.add_model(m, "d")
    gw.add_model("J", "j")
    store = RunStore(tmp_path / "store.jsonl")
    summary = run_tournament(store, gw, manifest(1))
    assert summary.debated == 6 and summary.judged == 0
    assert all(f.stage == "judge" and f.raw_reply == "no verdict here" for f in summary.failures)

    good = scripted_gateway()
    summary = run_tournament(RunStore(tmp_path / "store.jsonl"), good, manifest(1))
    assert summary.complete and summary.debated == 0 and summary.judged == 6
    assert good.backends["debaters"].backend.calls == 0


def test_changed_templates_are_rejected(tmp_path):
    src = default_templates()
    for name in TemplateSet.field_names():
        (tmp_path / f"{name}.txt").write_text(getattr(src, name), encoding="utf-8")
    (tmp_path / "debater_opening_prompt.txt").write_text("Go.", encoding="utf-8")
    edited = TemplateSet.from_directory(tmp_path)
    with pytest.raises(ManifestMismatch):
        run_tournament(RunStore(tmp_path / "s.jsonl"), scripted_gateway(), manifest(), templates=edited)


def test_rejudge_appends_parallel_verdicts(tmp_path):
    path = tmp_path / "store.jsonl"
    run_tournament(RunStore(path), scripted_gateway(judges=("J", "J2")), manifest(2))
    before = path.read_bytes()
    gw = scripted_gateway(judges=("J", "J2"))
    summary = rejudge(RunStore(path), gw, "J2", pair=parse_pair_filter("m3:m1"))
    assert (summary.selected, summary.judged) == (4, 4)
    assert gw.backends["debaters"].backend.calls == 0
    after = path.read_bytes()
    assert after.startswith(before)
    store = RunStore(path)
    assert len(store.verdicts_for("J2")) == 4
    assert len(store.verdicts_for("J")) == 12

    again = rejudge(store, scripted_gateway(judges=("J", "J2")), "J2", pair=frozenset({"m1", "m3"}))
    assert again.judged == 0 and again.skipped == 4


def test_rejudge_report_agreement(tmp_path):
    path = tmp_path / "store.jsonl"
    run_tournament(RunStore(path), scripted_gateway(judges=("J", "J2")), manifest(2))
    rejudge(RunStore(path), scripted_gateway(judges=("J", "J2")), "J2")
    bundle = build_report(RunStore(path))
    assert "Agreement with J2: 12/12 debates name the same winner." in bundle.annotations
    j2 = build_report(RunStore(path), "J2")
    assert j2.matrix_md == bundle.matrix_md


def test_pair_filter_syntax():
    assert parse_pair_filter("a:b") == frozenset({"a", "b"})
    for bad in ("a", "a:", "a:b:c"):
        with pytest.raises(ConfigError):
            parse_pair_filter(bad)


def test_recovered_verdicts_are_marked(tmp_path):
    gw = Gateway(clock=FixedClock(STAMP))
    gw.register_script("d", {}, synthetic_debater)
    gw.register_script("j", {}, lambda _r: "Side 1: 8, Side 2: 8. Winner: tie")
    for m in MODELS:
        gw.add_model(m, "d")
    gw.add_model("J", "j")
    store = RunStore(tmp_path / "s.jsonl")
    run_tournament(store, gw, manifest(1))
    assert {v.parse_mode for v in store.verdicts_for("J").values()} == {ParseMode.RECOVERED}
    bundle = build_report(store)
    assert bundle.matrix_md.count("0-0") == 3
