import json

import pytest

import orsim.cli as cli
from orsim.records import load_corpus


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])  # --case is required
    assert exc.value.code == 2


def test_gen_cases_writes_a_corpus(tmp_path, capsys):
    out = tmp_path / "corpus"
    code = cli.main(
        [
            "gen-cases",
            "--count",
            "8",
            "--seed",
            "4",
            "--out",
            str(out),
            "--mix",
            "D1=5,D2=2,D3=1",
        ]
    )
    assert code == 0
    assert "wrote 8 cases" in capsys.readouterr().out
    corpus = load_corpus(out)
    assert len(corpus.bundles) == 8
    codes = sorted(b.case.disease_label.code for b in corpus.bundles)
    assert codes == ["D1"] * 5 + ["D2"] * 2 + ["D3"]


def test_gen_cases_rejects_bad_mix(tmp_path, capsys):
    code = cli.main(
        ["gen-cases", "--count", "4", "--out", str(tmp_path / "x"), "--mix", "D1"]
    )
    assert code == 1
    assert "error [InvalidMix]" in capsys.readouterr().err


def test_run_writes_transcript_and_report(tmp_path, capsys, fixtures_dir):
    out = tmp_path / "run1"
    code = cli.main(
        [
            "run",
            "--case",
            str(fixtures_dir / "case01.json"),
            "--seed",
            "7",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "utterances" in printed and "route=" in printed
    assert (out / "transcript.jsonl").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["format_version"] == "report/1"
    assert report["chosen_route"]


def test_run_missing_case_file_is_exit_1(tmp_path, capsys):
    code = cli.main(["run", "--case", str(tmp_path / "ghost.json")])
    assert code == 1
    assert "error [io]" in capsys.readouterr().err


def test_run_cleans_partial_output_on_failure(tmp_path, capsys, fixtures_dir, monkeypatch):
    def boom(report, path):
        raise OSError("disk full")

    monkeypatch.setattr(cli, "save_report", boom)
    out = tmp_path / "run2"
    code = cli.main(
        ["run", "--case", str(fixtures_dir / "case01.json"), "--out", str(out)]
    )
    assert code == 1
    # the already-written transcript must not be left behind
    assert not (out / "transcript.jsonl").exists()
    assert not (out / "report.json").exists()


def test_eval_prints_table_and_writes_json(tmp_path, capsys):
    out = tmp_path / "eval.json"
    code = cli.main(
        [
            "eval",
            "--count",
            "3",
            "--seed",
            "2",
            "--labels",
            "full,rag_off",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:2] == ["config", "fingerprint"]
    assert any(line.startswith("full") for line in lines)
    assert any(line.startswith("rag_off") for line in lines)
    payload = json.loads(out.read_text())
    assert {run["label"] for run in payload} == {"full", "rag_off"}
    assert payload[0]["summary"]["n_cases"] == 3


def test_eval_rejects_unknown_label(capsys):
    code = cli.main(["eval", "--count", "2", "--labels", "warp_drive"])
    assert code == 1
    assert "error [InvalidConfig]" in capsys.readouterr().err


def test_eval_reads_saved_corpus(tmp_path, capsys):
    corpus_dir = tmp_path / "corpus"
    assert cli.main(["gen-cases", "--count", "2", "--out", str(corpus_dir)]) == 0
    capsys.readouterr()
    code = cli.main(["eval", "--corpus", str(corpus_dir)])
    assert code == 0
    assert "full" in capsys.readouterr().out


def test_ingest_reports_chunks(tmp_path, capsys, fixtures_dir):
    out = tmp_path / "chunks.jsonl"
    code = cli.main(
        ["ingest", "--docs", str(fixtures_dir / "knowledge"), "--out", str(out)]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "route-selection-guide" in printed
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert all({"chunk_id", "doc_id", "start", "end", "text"} <= set(x) for x in lines)


def test_ingest_requires_markdown_files(tmp_path, capsys):
    code = cli.main(["ingest", "--docs", str(tmp_path)])
    assert code == 1
    assert "error [ParseError]" in capsys.readouterr().err


def test_replay_renders_phases_and_speakers(tmp_path, capsys, fixtures_dir):
    out = tmp_path / "run3"
    assert (
        cli.main(
            ["run", "--case", str(fixtures_dir / "case01.json"), "--out", str(out)]
        )
        == 0
    )
    capsys.readouterr()
    code = cli.main(["replay", "--transcript", str(out / "transcript.jsonl")])
    assert code == 0
    printed = capsys.readouterr().out
    assert "== patient_transfer ==" in printed
    assert "== postoperative_care ==" in printed
    assert "<select_route>" in printed
    assert "[  0]" in printed


def test_run_flags_reach_the_simulation(tmp_path, capsys, fixtures_dir):
    out = tmp_path / "run4"
    code = cli.main(
        [
            "run",
            "--case",
            str(fixtures_dir / "case01.json"),
            "--out",
            str(out),
            "--no-copilot",
            "--no-react",
            "--turn-budget",
            "12",
        ]
    )
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["copilot_on"] is False
    assert report["config"]["react_on"] is False
    assert report["config"]["turn_budget"] == 12
    speakers = {u["speaker"] for u in report["transcript"]}
    assert "surgery_copilot" not in speakers
