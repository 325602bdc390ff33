"""Streaming session service: run lifecycle, live event stream, navigation.

One WebSocket channel per run carries the ordered server->client message
stream and accepts client commands; REST mirrors exist for each command and
query. Per-run mutations are serialized onto a single worker task (the run's
command queue); subscribers replay history from any sequence number and then
follow live.
"""

from __future__ import annotations

import asyncio
import threading
from typing import Any, Callable, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from .backtrace import EvidenceJudge, make_trace_request, substring_judge
from .model import ModelError, RunStatus, UnknownAction, UnknownUnit
from .protocol import PROTOCOL_VERSION, envelope, focus_bundle
from .reduction import read_information
from .runtime import RunEngine
from .storage import export_report

SUBSCRIBER_LAG_LIMIT = 10_000  # messages a subscriber may fall behind before being dropped


class ServiceError(Exception):
    def __init__(self, code: str, message: str, http_status: int = 400) -> None:
        super().__init__(message)
        self.code = code
        self.http_status = http_status


class UnknownRun(ServiceError):
    def __init__(self, run_id: str) -> None:
        super().__init__("UnknownRun", f"no run {run_id!r}", http_status=404)


class ManagedRun:
    """One engine plus its message log, subscribers, and command worker."""

    def __init__(
        self,
        run_id: str,
        engine: RunEngine,
        judge: EvidenceJudge,
        step_limit: Optional[int] = None,
    ) -> None:
        self.run_id = run_id
        self.engine = engine
        self.judge = judge
        self.step_limit = step_limit
        self.steps_taken = 0
        self.log: list[dict[str, Any]] = []
        self._log_lock = threading.Lock()
        self.queue: asyncio.Queue = asyncio.Queue()
        self.new_message = asyncio.Event()
        self.loop = asyncio.get_running_loop()
        self.worker: Optional[asyncio.Task] = None
        engine.listeners.append(self._on_engine_message)

    @property
    def finished(self) -> bool:
        return self.engine.state.status is RunStatus.FINISHED

    def _on_engine_message(self, kind: str, payload: dict[str, Any]) -> None:
        with self._log_lock:
            msg = envelope(self.run_id, kind, payload, seq=len(self.log))
            self.log.append(msg)
        self.loop.call_soon_threadsafe(self._wake)

    def _wake(self) -> None:
        self.new_message.set()

    def start(self) -> None:
        self.worker = asyncio.create_task(self._work())

    async def _work(self) -> None:
        while True:
            cmd: Optional[Callable[[], Any]] = None
            try:
                cmd = self.queue.get_nowait()
            except asyncio.QueueEmpty:
                cmd = None
            if cmd is None:
                state = self.engine.state
                if self.engine.interrupt_requested or state.status is RunStatus.RUNNING:
                    await asyncio.to_thread(self._advance)
                    continue
                cmd = await self.queue.get()
            await asyncio.to_thread(self._run_command, cmd)

    def _advance(self) -> None:
        try:
            if self.engine.interrupt_requested:
                self.engine.materialize_interrupt()
            elif self.engine.state.status is RunStatus.RUNNING:
                if self.step_limit is not None and self.steps_taken >= self.step_limit:
                    self.engine._set_status(RunStatus.AWAITING_USER)
                    return
                self.engine.step()
                self.steps_taken += 1
        except Exception as exc:
            self.engine.emit("Error", {"code": type(exc).__name__, "message": str(exc)})
            self.engine._set_status(RunStatus.AWAITING_USER)

    def _run_command(self, cmd: Callable[[], Any]) -> None:
        try:
            cmd()
        except ModelError as exc:
            self.engine.emit("Error", {"code": type(exc).__name__, "message": str(exc)})
        except Exception as exc:
            self.engine.emit("Error", {"code": "InternalError", "message": str(exc)})

    async def call(self, fn: Callable[[], Any]) -> Any:
        """Run fn on the command queue and await its result (serialized access)."""
        fut: asyncio.Future = self.loop.create_future()

        def wrapped() -> None:
            try:
                result = fn()
            except Exception as exc:  # delivered to the caller, not the stream
                self.loop.call_soon_threadsafe(fut.set_exception, exc)
                return
            self.loop.call_soon_threadsafe(fut.set_result, result)

        await self.queue.put(wrapped)
        return await fut

    async def stream(self, from_seq: int = 0):
        """Yield messages from from_seq, then follow live; ends when finished."""
        cursor = from_seq
        while True:
            with self._log_lock:
                available = len(self.log)
            if available - cursor > SUBSCRIBER_LAG_LIMIT:
                raise ServiceError("SubscriberLagging", "subscriber dropped; resubscribe from last seq")
            while cursor < available:
                yield self.log[cursor]
                cursor += 1
            if self.finished and self.queue.empty():
                with self._log_lock:
                    if cursor >= len(self.log):
                        return
                continue
            self.new_message.clear()
            with self._log_lock:
                if cursor < len(self.log):
                    continue
            try:
                await asyncio.wait_for(self.new_message.wait(), timeout=0.5)
            except asyncio.TimeoutError:
                pass


class RunManager:
    """Owns all runs; enforces capacity; builds engines through the factory."""

    def __init__(
        self,
        engine_factory: Callable[[str], RunEngine],
        judge: Optional[EvidenceJudge] = None,
        capacity: int = 16,
        step_limit: Optional[int] = None,
    ) -> None:
        self.engine_factory = engine_factory
        self.judge = judge or substring_judge
        self.capacity = capacity
        self.step_limit = step_limit
        self.runs: dict[str, ManagedRun] = {}
        self._counter = 0

    def get(self, run_id: str) -> ManagedRun:
        run = self.runs.get(run_id)
        if run is None:
            raise UnknownRun(run_id)
        return run

    async def start_run(self, text: str) -> str:
        if not text or not text.strip():
            raise ServiceError("InvalidRequest", "initial message text must be non-empty")
        active = sum(1 for r in self.runs.values() if not r.finished)
        if active >= self.capacity:
            raise ServiceError("EngineBusy", "run capacity reached", http_status=503)
        run_id = f"run-{self._counter:04d}"
        self._counter += 1
        engine = self.engine_factory(run_id)
        run = ManagedRun(run_id, engine, self.judge, step_limit=self.step_limit)
        self.runs[run_id] = run
        run.start()
        await run.queue.put(lambda: engine.user_message(text))
        return run_id


def _dispatch_command(run: ManagedRun, kind: str, payload: dict[str, Any]) -> Optional[dict[str, Any]]:
    """Execute one client command synchronously (already on the command queue).

    Returns a direct-reply envelope for query kinds, None for fire-and-forget.
    """
    engine = run.engine
    if kind == "Interrupt":
        engine.interrupt()
        return envelope(run.run_id, "Ack", {"command": "Interrupt"})
    if kind == "UserMessage":
        engine.user_message(payload["text"], [tuple(r) for r in payload.get("refs", [])])
        return envelope(run.run_id, "Ack", {"command": "UserMessage"})
    if kind == "TraceRequest":
        request = make_trace_request(engine.state, payload["unit_id"], payload["start"], payload["end"])
        engine.request_trace(request, run.judge)
        return envelope(run.run_id, "Ack", {"command": "TraceRequest"})
    if kind == "FocusQuery":
        bundle = focus_bundle(engine.state, payload["action_id"])
        return envelope(run.run_id, "FocusBundle", bundle)
    if kind == "InfoQuery":
        unit_id = payload["unit_id"]
        body = read_information(engine.state, unit_id)
        return envelope(run.run_id, "InfoBody", {"unit_id": unit_id, "body": body})
    if kind == "Export":
        document = export_report(engine.archive, engine.state)
        return envelope(run.run_id, "ReportDocument", {"document": document})
    raise ServiceError("UnknownCommand", f"unsupported message kind {kind!r}")


def create_app(manager: RunManager) -> FastAPI:
    app = FastAPI(title="dossier", version=str(PROTOCOL_VERSION))
    app.state.manager = manager

    @app.exception_handler(ServiceError)
    async def _service_error(_, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status, content={"code": exc.code, "message": str(exc)}
        )

    @app.post("/runs")
    async def start_run(body: dict):
        run_id = await manager.start_run(body.get("text", ""))
        return {"run_id": run_id}

    @app.get("/runs")
    async def list_runs():
        return {
            "runs": [
                {"run_id": r.run_id, "status": r.engine.state.status.value, "messages": len(r.log)}
                for r in manager.runs.values()
            ]
        }

    @app.post("/runs/{run_id}/interrupt")
    async def interrupt(run_id: str):
        run = manager.get(run_id)
        try:
            run.engine.interrupt()  # sets a flag; safe without queueing
        except ModelError as exc:
            raise ServiceError(type(exc).__name__, str(exc), http_status=409)
        return {"ok": True}

    @app.post("/runs/{run_id}/message")
    async def message(run_id: str, body: dict):
        run = manager.get(run_id)
        await run.queue.put(
            lambda: _dispatch_command(run, "UserMessage", body)
        )
        return JSONResponse(status_code=202, content={"queued": True})

    @app.post("/runs/{run_id}/trace")
    async def trace_cmd(run_id: str, body: dict):
        run = manager.get(run_id)
        await run.queue.put(lambda: _dispatch_command(run, "TraceRequest", body))
        return JSONResponse(status_code=202, content={"queued": True})

    @app.get("/runs/{run_id}/focus/{action_id}")
    async def focus(run_id: str, action_id: int):
        run = manager.get(run_id)
        try:
            return await run.call(lambda: focus_bundle(run.engine.state, action_id))
        except UnknownAction as exc:
            raise ServiceError("UnknownAction", str(exc), http_status=404)

    @app.get("/runs/{run_id}/info/{unit_id}")
    async def info(run_id: str, unit_id: int):
        run = manager.get(run_id)
        try:
            body = await run.call(lambda: read_information(run.engine.state, unit_id))
        except UnknownUnit as exc:
            raise ServiceError("UnknownUnit", str(exc), http_status=404)
        return {"unit_id": unit_id, "body": body}

    @app.get("/runs/{run_id}/report")
    async def report(run_id: str):
        run = manager.get(run_id)
        try:
            document = await run.call(lambda: export_report(run.engine.archive, run.engine.state))
        except ModelError as exc:
            raise ServiceError(type(exc).__name__, str(exc), http_status=409)
        except Exception as exc:
            raise ServiceError(type(exc).__name__, str(exc), http_status=409)
        return PlainTextResponse(document)

    @app.websocket("/runs/{run_id}/stream")
    async def stream(websocket: WebSocket, run_id: str, from_seq: int = 0):
        try:
            run = manager.get(run_id)
        except UnknownRun:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        send_lock = asyncio.Lock()
        in_flight = {"commands": 0}

        async def pump_commands() -> None:
            while True:
                try:
                    message = await websocket.receive_json()
                except WebSocketDisconnect:
                    return
                in_flight["commands"] += 1
                try:
                    kind = message.get("kind", "")
                    payload = message.get("payload", {})
                    try:
                        if kind == "Interrupt":
                            reply = envelope(run.run_id, "Ack", {"command": "Interrupt"})
                            run.engine.interrupt()
                        else:
                            reply = await run.call(lambda: _dispatch_command(run, kind, payload))
                    except Exception as exc:
                        reply = envelope(
                            run.run_id, "Error", {"code": type(exc).__name__, "message": str(exc)}
                        )
                    if reply is not None:
                        async with send_lock:
                            await websocket.send_json(reply)
                finally:
                    in_flight["commands"] -= 1

        pump = asyncio.create_task(pump_commands())
        try:
            async for msg in run.stream(from_seq):
                async with send_lock:
                    await websocket.send_json(msg)
            # stream ended (run finished): give in-flight command replies a
            # moment to flush before closing the channel
            deadline = asyncio.get_running_loop().time() + 0.5
            while asyncio.get_running_loop().time() < deadline:
                await asyncio.sleep(0.05)
                if not in_flight["commands"]:
                    break
        except (WebSocketDisconnect, RuntimeError):
            pass
        except ServiceError as exc:
            async with send_lock:
                await websocket.send_json(envelope(run.run_id, "Error", {"code": exc.code, "message": str(exc)}))
        finally:
            pump.cancel()
            try:
                await websocket.close()
            except Exception:
                pass

    return app
