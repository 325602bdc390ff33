"""Headless benchmark harness: run question sets end to end, no intervention.

Tasks come from a JSONL file (one object per line: id, question, optional
answer and grader). Each task is an independent run; failures are recorded,
never abort the batch. The report is written as report.json + report.csv with
summary figures rendered alongside, and per-task archives land in
<out>/runs/<task_id>/.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .model import RunStatus
from .runtime import LogicalClock, RunConfig, RunEngine, ScriptedDecisions
from .storage import RunArchive, canonical_json, terminal_summary_note
from .tools import FixtureCorpus, ToolSet

GRADERS = ("exact_match", "contains_all", "external")


@dataclass
class BenchTask:
    id: str
    question: str
    answer: Optional[Any] = None  # str for exact_match, list[str] for contains_all
    grader: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BenchTask":
        grader = d.get("grader")
        if grader is not None and grader not in GRADERS:
            raise ValueError(f"unknown grader {grader!r} for task {d.get('id')!r}")
        return cls(id=str(d["id"]), question=d["question"], answer=d.get("answer"), grader=grader)


def load_tasks(path: str | Path) -> list[BenchTask]:
    tasks = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                tasks.append(BenchTask.from_dict(json.loads(line)))
    return tasks


def grade(task: BenchTask, answer: Optional[str]) -> Optional[bool]:
    """True/False for gradable tasks, None when ungradable."""
    if answer is None or task.grader in (None, "external") or task.answer is None:
        return None
    if task.grader == "exact_match":
        return answer.strip() == str(task.answer).strip()
    if task.grader == "contains_all":
        required = task.answer if isinstance(task.answer, list) else [task.answer]
        return all(str(fragment) in answer for fragment in required)
    return None


@dataclass
class TaskResult:
    task_id: str
    answer: Optional[str] = None
    passed: Optional[bool] = None
    error: Optional[str] = None
    status: str = ""
    action_count: int = 0
    unit_count: int = 0
    peak_context_estimate: int = 0
    minimized_units: int = 0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "answer": self.answer,
            "passed": self.passed,
            "error": self.error,
            "status": self.status,
            "action_count": self.action_count,
            "unit_count": self.unit_count,
            "peak_context_estimate": self.peak_context_estimate,
            "minimized_units": self.minimized_units,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class BenchReport:
    results: list[TaskResult] = field(default_factory=list)

    @property
    def aggregates(self) -> dict[str, Any]:
        graded = [r for r in self.results if r.passed is not None]
        passed = [r for r in graded if r.passed]
        errored = [r for r in self.results if r.error]
        return {
            "tasks": len(self.results),
            "graded": len(graded),
            "passed": len(passed),
            "pass_rate": (len(passed) / len(graded)) if graded else None,
            "errors": len(errored),
        }

    def to_dict(self) -> dict[str, Any]:
        return {"results": [r.to_dict() for r in self.results], "aggregates": self.aggregates}

    def to_csv(self) -> str:
        out = io.StringIO()
        fields = [
            "task_id", "answer", "passed", "error", "status", "action_count",
            "unit_count", "peak_context_estimate", "minimized_units", "wall_time_s",
        ]
        writer = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in self.results:
            writer.writerow(r.to_dict())
        return out.getvalue()

    def summary_table(self) -> str:
        lines = [f"{'task':<16} {'pass':<6} {'actions':>7} {'units':>6} {'peak ctx':>9} {'time':>8}"]
        for r in self.results:
            verdict = "ERROR" if r.error else ("-" if r.passed is None else ("ok" if r.passed else "FAIL"))
            lines.append(
                f"{r.task_id:<16} {verdict:<6} {r.action_count:>7} {r.unit_count:>6} "
                f"{r.peak_context_estimate:>9} {r.wall_time_s:>8.2f}"
            )
        agg = self.aggregates
        rate = "n/a" if agg["pass_rate"] is None else f"{agg['passed']}/{agg['graded']}"
        lines.append(f"pass rate: {rate}   errors: {agg['errors']}")
        return "\n".join(lines)


def fixture_engine_factory(
    corpus: FixtureCorpus, config: RunConfig, runs_dir: Optional[Path] = None
) -> Callable[[str, str], RunEngine]:
    """Engines whose decisions come from the corpus script keyed by task id."""

    def factory(run_id: str, script_key: str) -> RunEngine:
        directory = runs_dir / run_id if runs_dir else None
        archive = RunArchive(run_id, config=config.to_dict(), directory=directory)
        decisions = ScriptedDecisions(list(corpus.script(script_key)))
        return RunEngine(
            run_id=run_id,
            decision_fn=decisions,
            tools=ToolSet.fixture(corpus),
            archive=archive,
            config=config,
        )

    return factory


def run_task(
    task: BenchTask,
    engine_factory: Callable[[str, str], RunEngine],
    max_steps: int,
) -> TaskResult:
    result = TaskResult(task_id=task.id)
    started = time.monotonic()
    try:
        engine = engine_factory(task.id, task.id)
        engine.user_message(task.question)
        engine.run(max_steps=max_steps)
        state = engine.state
        result.status = state.status.value
        result.action_count = len(state.actions)
        result.unit_count = len(state.units)
        result.peak_context_estimate = engine.stats.peak_context_estimate
        result.minimized_units = sum(1 for u in state.units if u.minimized)
        if isinstance(engine.clock, LogicalClock):
            result.wall_time_s = float(engine.clock.ticks)
        else:
            result.wall_time_s = round(time.monotonic() - started, 3)
        if state.status is RunStatus.FINISHED:
            note = terminal_summary_note(state)
            result.answer = note.body if note else None
        else:
            result.error = f"run did not finish (status {state.status.value})"
        result.passed = grade(task, result.answer)
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_bench(
    tasks: list[BenchTask],
    engine_factory: Callable[[str, str], RunEngine],
    out_dir: str | Path,
    max_steps: int = 64,
    concurrency: int = 1,
    figures: bool = True,
) -> BenchReport:
    """Execute every task headlessly and write the report artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = BenchReport()
    if concurrency <= 1:
        results = [run_task(t, engine_factory, max_steps) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(lambda t: run_task(t, engine_factory, max_steps), tasks))
    report.results = results

    (out_dir / "report.json").write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if figures and report.results:
        from . import plots

        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        records = [r.to_dict() for r in report.results]
        plots.plot_task_counts(records, fig_dir / "task_counts.png")
        plots.plot_context_footprint(records, fig_dir / "context_footprint.png")
    return report
