"""CLI surface: bench, ask, export, replay against an on-disk corpus."""

from __future__ import annotations

import json

import pytest

from dossier.cli import main
from test_bench import ANSWERS, bench_corpus, bench_tasks


@pytest.fixture
def corpus_file(tmp_path):
    corpus = bench_corpus()
    path = tmp_path / "corpus.json"
    path.write_text(
        json.dumps(
            {
                "format": "fixture-corpus",
                "version": 1,
                "searches": corpus.searches,
                "pages": corpus.pages,
                "scripts": corpus.scripts,
            }
        ),
        encoding="utf-8",
    )
    return path


@pytest.fixture
def task_file(tmp_path):
    path = tmp_path / "tasks.jsonl"
    lines = [
        json.dumps(
            {"id": t.id, "question": t.question, "answer": t.answer, "grader": t.grader}
        )
        for t in bench_tasks()
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestBenchCommand:
    def test_fixture_bench_succeeds(self, tmp_path, corpus_file, task_file, capsys):
        out = tmp_path / "out"
        code = main(
            ["bench", "--tasks", str(task_file), "--corpus", str(corpus_file), "--out", str(out)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "pass rate: 3/3" in printed
        assert (out / "report.json").exists()
        assert (out / "report.csv").exists()
        assert (out / "figures" / "task_counts.png").exists()
        assert (out / "runs" / "t1" / "events.jsonl").exists()

    def test_exit_code_nonzero_on_task_error(self, tmp_path, corpus_file, task_file):
        corpus = json.loads(corpus_file.read_text())
        del corpus["scripts"]["t2"]
        corpus_file.write_text(json.dumps(corpus), encoding="utf-8")
        code = main(
            ["bench", "--tasks", str(task_file), "--corpus", str(corpus_file),
             "--out", str(tmp_path / "out"), "--no-figures"]
        )
        assert code == 1

    def test_corpus_required_for_fixture_backend(self, task_file, tmp_path):
        with pytest.raises(SystemExit):
            main(["bench", "--tasks", str(task_file), "--out", str(tmp_path / "o")])


class TestAskCommand:
    def test_ask_prints_answer(self, tmp_path, corpus_file, capsys):
        code = main(
            ["ask", "what is the answer to t1?", "--corpus", str(corpus_file),
             "--key", "t1", "--out", str(tmp_path / "ask")]
        )
        assert code == 0
        assert ANSWERS["t1"] in capsys.readouterr().out


class TestExportAndReplay:
    def test_export_and_replay_from_run_dir(self, tmp_path, corpus_file, task_file, capsys):
        out = tmp_path / "out"
        main(["bench", "--tasks", str(task_file), "--corpus", str(corpus_file),
              "--out", str(out), "--no-figures"])
        capsys.readouterr()
        run_dir = out / "runs" / "t1"

        assert main(["export", str(run_dir)]) == 0
        document = capsys.readouterr().out
        assert ANSWERS["t1"] in document

        assert main(["replay", str(run_dir)]) == 0
        summary = capsys.readouterr().out
        assert "status: finished" in summary
        assert "actions: 5" in summary
