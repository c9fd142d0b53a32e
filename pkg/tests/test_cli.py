import hashlib
import io
import json
import subprocess
import sys

import pytest

from asrcorrect.cli import EMBED_ENDPOINT_ENV, RunConfig, main
from asrcorrect.retrieval import TaskEntry
from asrcorrect.augment import write_catalog
from conftest import DATA
from golden import CORPUS, EXPECTED_REPORT, EXPECTED_REPORT_ALT
from http_stub import json_service
from test_evaluation import flatten

CATALOG = str(DATA / "tasks.jsonl")


@pytest.fixture
def small_catalog(tmp_path):
    path = tmp_path / "tasks.jsonl"
    write_catalog(
        [
            TaskEntry("faucet", "how to fix a bathroom faucet"),
            TaskEntry("guitar", "tune an electric guitar"),
            TaskEntry("carpet", "how to clean carpets"),
        ],
        path,
    )
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_defaults():
    cfg = RunConfig()
    assert (cfg.fuzzy_min, cfg.cosine_min, cfg.alpha, cfg.range_ratio, cfg.min_coverage) == (96, 0.8, 0.5, 1.5, 0.8)


def test_build_index(capsys, tmp_path, small_catalog):
    out_path = tmp_path / "idx.bin"
    code, out, _ = run(capsys, "build-index", "--catalog", small_catalog, "--index", str(out_path))
    assert code == 0 and out_path.exists()
    summary = json.loads(out)
    assert summary["entries"] == 3 and summary["surface_forms"] == 3 and summary["dim"] == 256
    assert summary["sha256"] == hashlib.sha256(out_path.read_bytes()).hexdigest()


def test_rebuild_gives_the_same_digest(capsys, tmp_path):
    digests = []
    for name in ("a.bin", "b.bin"):
        run(capsys, "build-index", "--catalog", CATALOG, "--index", str(tmp_path / name), "--seed", "7")
        digests.append(hashlib.sha256((tmp_path / name).read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_missing_catalog(capsys, tmp_path):
    code, _, err = run(capsys, "build-index", "--catalog", str(tmp_path / "nope.jsonl"), "--index", str(tmp_path / "i.bin"))
    assert code == 2 and "nope.jsonl" in err


def test_bad_threshold_is_an_input_error(capsys):
    code, _, err = run(capsys, "correct", "--catalog", CATALOG, "--nbest", "x", "--fuzzy-min", "120")
    assert code == 2 and "fuzzy_min" in err


def test_correct_faucet(capsys, tmp_path, small_catalog):
    idx = str(tmp_path / "idx.bin")
    run(capsys, "build-index", "--catalog", small_catalog, "--index", idx)
    code, out, _ = run(capsys, "correct", "--index", idx, "--nbest", "how can i fix a leaky bathroom for sit")
    got = json.loads(out)
    assert code == 0
    assert got["kind"] == "corrected" and got["method"] == "phonetic"
    assert got["text"] == "how can i fix a leaky bathroom faucet"
    assert got["prompt"] == "Did you mean how can i fix a leaky bathroom faucet?"


def test_correct_option_as_spoken(capsys):
    code, out, _ = run(
        capsys, "correct", "--catalog", CATALOG, "--state", "Selecting",
        "--option", "how to water indoor plants", "--option", "how to care for indoor plants",
        "--nbest", "how to water indoor plants",
    )
    assert code == 0 and json.loads(out)["kind"] == "no-correction-needed"


def test_correct_after_the_session_ended(capsys):
    code, out, _ = run(capsys, "correct", "--catalog", CATALOG, "--state", "Ended", "--nbest", "how to fix a faucet")
    assert code == 0 and json.loads(out)["kind"] == "no-trigger"


def test_correct_reads_stdin_and_writes_a_trace(capsys, monkeypatch, tmp_path):
    monkeypatch.setattr(sys, "stdin", io.StringIO("go pack\ngo back\n"))
    trace = tmp_path / "trace.jsonl"
    code, out, _ = run(capsys, "correct", "--catalog", CATALOG, "--state", "Executing", "--active-task", "wh-26",
                       "--intent", "Command", "--trace", str(trace))
    assert code == 0 and json.loads(out)["text"] == "go back"
    rec = json.loads(trace.read_text())
    assert rec["state"] == "Executing" and rec["nbest"] == ["go pack", "go back"] and rec["outcome"]["kind"] == "corrected"


def test_correct_needs_an_index_or_catalog(capsys):
    code, _, err = run(capsys, "correct", "--nbest", "x")
    assert code == 2 and "--index" in err


def test_eval_golden_corpus(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--corpus", str(CORPUS), "--catalog", CATALOG, "--report", str(report))
    assert code == 0
    got, want = flatten(json.loads(report.read_text())), flatten(json.loads(EXPECTED_REPORT.read_text()))
    assert got == pytest.approx(want, abs=1e-12)
    assert "Prec  Rec   F1   FPR" in out


def test_eval_alternate_convention(capsys, tmp_path):
    report = tmp_path / "report.json"
    run(capsys, "eval", "--corpus", str(CORPUS), "--catalog", CATALOG, "--report", str(report), "--fpr-convention", "alternate")
    got = json.loads(report.read_text())
    want = json.loads(EXPECTED_REPORT_ALT.read_text())
    assert got["groups"]["combined"]["counts"] == want["groups"]["combined"]["counts"] == {"tp": 8, "fp": 1, "fn": 3, "tn": 8}


def test_eval_empty_corpus(capsys, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run(capsys, "eval", "--corpus", str(empty), "--catalog", CATALOG)
    assert code == 2 and "empty" in err


def test_gen_corpus_then_eval_is_deterministic(capsys, tmp_path):
    corpus = tmp_path / "c.jsonl"
    assert run(capsys, "gen-corpus", "--catalog", CATALOG, "--corpus", str(corpus), "--n-turns", "40", "--seed", "3")[0] == 0
    reports = []
    for i, workers in enumerate(("1", "3")):
        path = tmp_path / f"r{i}.json"
        run(capsys, "eval", "--corpus", str(corpus), "--catalog", CATALOG, "--report", str(path), "--workers", workers)
        reports.append(path.read_bytes())
    assert reports[0] == reports[1]


def test_commands_leave_inputs_alone(capsys, tmp_path):
    before = {p: p.read_bytes() for p in (CORPUS, DATA / "tasks.jsonl")}
    run(capsys, "eval", "--corpus", str(CORPUS), "--catalog", CATALOG)
    run(capsys, "augment", "--catalog", CATALOG, "--public", str(CORPUS), "--out", str(tmp_path / "aug.jsonl"),
        "--n-clusters", "1", "-k", "1")
    assert {p: p.read_bytes() for p in before} == before


def test_augment_with_table(capsys, tmp_path):
    public = tmp_path / "public.txt"
    public.write_text("how to start a computer\n")
    out = tmp_path / "aug.jsonl"
    code, stdout, _ = run(capsys, "augment", "--catalog", CATALOG, "--public", str(public), "--out", str(out),
                          "--generator", "table", "--table", str(DATA / "variations.tsv"), "--n-clusters", "1", "-k", "2")
    assert code == 0
    summary = json.loads(stdout)
    # the table holds one paraphrase for this task, so one of the two is dropped
    assert summary["counts"]["generated"] == 1 and summary["dropped"] == 1
    forms = {f for line in out.read_text().splitlines() for f in json.loads(line)["surface_forms"]}
    assert "boot up computer" in forms


def test_augment_http_without_endpoint(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("ASRCORRECT_GENERATOR_ENDPOINT", raising=False)
    public = tmp_path / "public.txt"
    public.write_text("how to start a computer\n")
    code, _, err = run(capsys, "augment", "--catalog", CATALOG, "--public", str(public), "--out", str(tmp_path / "o"),
                       "--generator", "http")
    assert code == 2 and "endpoint" in err


def test_embedding_endpoint_from_environment(capsys, monkeypatch, tmp_path, small_catalog):
    with json_service(lambda req: (200, {"vectors": [[1.0, float(len(t)), 0.5] for t in req["texts"]]})) as (url, calls):
        monkeypatch.setenv(EMBED_ENDPOINT_ENV, url)
        code, out, _ = run(capsys, "build-index", "--catalog", small_catalog, "--index", str(tmp_path / "i.bin"), "--embed-dim", "3")
    assert code == 0 and json.loads(out)["dim"] == 3 and calls


def test_embedding_service_down_is_an_internal_failure(capsys, monkeypatch, tmp_path, small_catalog):
    monkeypatch.setenv(EMBED_ENDPOINT_ENV, "http://127.0.0.1:9/")
    code, _, err = run(capsys, "build-index", "--catalog", small_catalog, "--index", str(tmp_path / "i.bin"), "--embed-dim", "3")
    assert code == 1 and "embedding service" in err


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "asrcorrect", "correct", "--catalog", CATALOG, "--nbest", "cartoon electric guitar"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["text"] == "tune an electric guitar"


def test_argument_errors_exit_2():
    proc = subprocess.run([sys.executable, "-m", "asrcorrect", "eval"], capture_output=True, text=True)
    assert proc.returncode == 2
