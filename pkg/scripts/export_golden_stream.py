"""Regenerate the frontend's golden protocol fixture from a deterministic run.

Usage: python3 scripts/export_golden_stream.py [out_path]

Drives a scripted multi-session run (searches, scrapes, cited notes, an
interrupt + steering message, a finish, then a backtrace) through the service
layer and captures the full message stream, the focus bundle for every action,
and the exported report. The frontend replays this file in its view-model
tests; it must be regenerated whenever the protocol changes.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

from starlette.testclient import TestClient

from dossier.protocol import validate_message
from dossier.runtime import RunConfig, RunEngine, ScriptedDecisions
from dossier.service import RunManager, create_app
from dossier.storage import RunArchive
from dossier.tools import FixtureCorpus, ToolSet

FACT = "The clinic startup was founded by Christina Huang in the winter batch."

CORPUS = FixtureCorpus(
    {
        "searches": {
            "winter batch founders": [
                {"title": "Company Launch Tracker", "url": "http://tracker.example/launch",
                 "snippet": "profiles of the winter batch"},
                {"title": "Batch directory", "url": "http://directory.example/w",
                 "snippet": "full company list"},
            ]
        },
        "pages": {
            "http://tracker.example/launch": {"text": f"Launch tracker. {FACT} More founder profiles below."},
            "http://directory.example/w": {"error": "404 file not found"},
        },
    }
)

SCRIPT = [
    {"kind": "web_search", "parameters": {"query": "winter batch founders"},
     "narration_before": "Searching for winter batch founder profiles."},
    {"kind": "scrape_webpage", "parameters": {"url": "http://directory.example/w"},
     "narration_before": "Trying the batch directory first.",
     "narration_for_previous": "Two promising sources found."},
    {"kind": "scrape_webpage", "parameters": {"url": "http://tracker.example/launch"},
     "narration_before": "Directory is gone; reading the launch tracker.",
     "narration_for_previous": "The directory returned a 404."},
    {"kind": "create_note",
     "parameters": {"title": "founder evidence", "body": f"{FACT}[^I3]", "input_unit_ids": [3]},
     "narration_before": "Recording the founder evidence.",
     "narration_for_previous": "The tracker names the founder."},
    {"kind": "create_note",
     "parameters": {"title": "progress so far", "body": f"Verified founder via the tracker. {FACT}[^I4]",
                    "input_unit_ids": [4], "progress_summary": True},
     "narration_before": "Summarizing progress.",
     "narration_for_previous": "Evidence note stored."},
    # the steering message arrives here (session boundary), then:
    {"kind": "create_note",
     "parameters": {"title": "final report", "body": f"Final answer. {FACT}[^I4]",
                    "input_unit_ids": [4], "progress_summary": True},
     "narration_before": "Writing the final report.",
     "narration_for_previous": "Instruction received."},
    {"kind": "finish", "parameters": {}, "narration_before": "Done.",
     "narration_for_previous": "Report complete."},
]


def main(out_path: str) -> None:
    def factory(run_id: str) -> RunEngine:
        config = RunConfig(clock_mode="logical")
        return RunEngine(
            run_id=run_id,
            decision_fn=ScriptedDecisions(list(SCRIPT)),
            tools=ToolSet.fixture(CORPUS),
            archive=RunArchive(run_id, config=config.to_dict()),
            config=config,
        )

    manager = RunManager(engine_factory=factory, step_limit=5)
    with TestClient(create_app(manager)) as client:
        run_id = client.post("/runs", json={"text": "Who founded the clinic startup?"}).json()["run_id"]
        _wait(client, run_id, "awaiting_user")
        run = manager.get(run_id)
        run.step_limit = None
        # steer with a quoted reference into the evidence note (unit 4)
        client.post(f"/runs/{run_id}/message",
                    json={"text": "Good, finish with that founder.", "refs": [[4, 0, len(FACT)]]})
        _wait(client, run_id, "finished")
        engine = run.engine
        note = next(u for u in engine.state.units if u.title == "final report")
        at = note.body.find(FACT)
        client.post(f"/runs/{run_id}/trace",
                    json={"unit_id": note.id, "start": at, "end": at + len(FACT)})
        deadline = time.time() + 5
        while time.time() < deadline:
            if any(m["kind"] == "TraceResult" for m in run.log):
                break
            time.sleep(0.02)
        stream = list(run.log)
        for message in stream:
            validate_message(message)
        bundles = {
            str(action.id): client.get(f"/runs/{run_id}/focus/{action.id}").json()
            for action in engine.state.actions
        }
        report = client.get(f"/runs/{run_id}/report").text

    fixture = {"run_id": run_id, "stream": stream, "focus_bundles": bundles, "report": report}
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out_path}: {len(stream)} messages, {len(bundles)} focus bundles")


def _wait(client, run_id: str, status: str, timeout: float = 10.0) -> None:
    deadline = time.time() + timeout
    while time.time() < deadline:
        runs = {r["run_id"]: r for r in client.get("/runs").json()["runs"]}
        if runs.get(run_id, {}).get("status") == status:
            return
        time.sleep(0.02)
    raise RuntimeError(f"run never reached {status}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "frontend/test/fixtures/golden_stream.json")
