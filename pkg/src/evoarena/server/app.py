"""HTTP layer over `SessionManager`.

All routes live under ``/api``.  ``/api/sessions/{id}/events`` serves the
same event feed two ways: server-sent events over a plain GET, or JSON
messages over a websocket upgrade of the same URL.  When a static
directory is supplied the built web UI is served from ``/``.
"""

from __future__ import annotations

import json
import queue
from pathlib import Path

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from starlette.concurrency import run_in_threadpool

from .. import __version__
from .schemas import (
    ParamsOut,
    ParamsPatch,
    RecordOut,
    ResultIn,
    ResultOut,
    SessionCreate,
    SessionInfo,
    TaskOut,
)
from .sessions import ProtocolError, SessionManager

SSE_KEEPALIVE_SECONDS = 2.0


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _poll(sub, timeout: float):
    try:
        return sub.queue.get(timeout=timeout)
    except queue.Empty:
        return None


def create_app(data_dir, static_dir=None) -> FastAPI:
    """Build the service around a data directory.

    Sessions already journaled under ``data_dir`` are restored before the
    first request is served.
    """
    manager = SessionManager(data_dir)
    app = FastAPI(title="evoarena", version=__version__)
    app.state.manager = manager

    @app.exception_handler(ProtocolError)
    async def _protocol_error(request: Request, exc: ProtocolError):
        return JSONResponse(
            status_code=exc.status,
            content={"detail": {"reason": exc.reason, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()))
        message = f"{where}: {first.get('msg', 'invalid request')}" if where else "invalid request"
        return JSONResponse(
            status_code=422,
            content={"detail": {"reason": "invalid-params", "message": message}},
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/api/sessions", response_model=SessionInfo, status_code=201)
    def create_session(body: SessionCreate):
        session = manager.create_session(
            kind=body.kind,
            params=body.params,
            seed=body.seed,
            lease_seconds=body.lease_seconds,
            verify_fraction=body.verify_fraction,
            strict_digest=body.strict_digest,
        )
        return session.info()

    @app.get("/api/sessions", response_model=list[SessionInfo])
    def list_sessions():
        return [session.info() for session in manager.list_sessions()]

    @app.get("/api/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str):
        return manager.get(session_id).info()

    @app.post("/api/sessions/{session_id}/close", response_model=SessionInfo)
    def close_session(session_id: str):
        session = manager.get(session_id)
        session.close()
        return session.info()

    @app.get("/api/sessions/{session_id}/task", response_model=TaskOut)
    def next_task(session_id: str, worker: str):
        return manager.get(session_id).next_task(worker)

    @app.post("/api/sessions/{session_id}/results", response_model=ResultOut)
    def submit_result(session_id: str, body: ResultIn):
        return manager.get(session_id).submit_result(
            task_id=body.task_id,
            worker_id=body.worker_id,
            fitness=body.fitness,
            log_digest=body.log_digest,
            diverged=body.diverged,
        )

    @app.patch("/api/sessions/{session_id}/params", response_model=ParamsOut)
    def patch_params(session_id: str, body: ParamsPatch):
        updated = manager.get(session_id).update_params(body.changes())
        return updated.to_dict()

    @app.get("/api/sessions/{session_id}/history", response_model=list[RecordOut])
    def history(session_id: str, since: int = 0):
        return manager.get(session_id).history(since=since)

    @app.get("/api/sessions/{session_id}/best", response_model=RecordOut | None)
    def best(session_id: str):
        return manager.get(session_id).best()

    @app.get("/api/sessions/{session_id}/logs/{eval_index}")
    def get_log(session_id: str, eval_index: int):
        text = manager.get(session_id).get_log(eval_index)
        return PlainTextResponse(
            text,
            media_type="application/x-ndjson",
            headers={
                "Content-Disposition": f'inline; filename="eval-{eval_index:06d}.simlog"'
            },
        )

    @app.get("/api/sessions/{session_id}/events")
    def events_sse(session_id: str):
        session = manager.get(session_id)
        sub = session.subscribe()

        def generate():
            for event in session.stream_events(sub, poll_seconds=SSE_KEEPALIVE_SECONDS):
                if event is None:
                    yield ": keepalive\n\n"
                else:
                    yield f"data: {_dumps(event)}\n\n"

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.websocket("/api/sessions/{session_id}/events")
    async def events_ws(websocket: WebSocket, session_id: str):
        try:
            session = manager.get(session_id)
        except ProtocolError:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        sub = session.subscribe()
        try:
            while True:
                event = await run_in_threadpool(_poll, sub, 1.0)
                if event is None:
                    if sub.lagged:
                        await websocket.send_text(_dumps({"event": "lagged"}))
                        break
                    continue
                await websocket.send_text(_dumps(event))
                if event.get("event") == "session-closed":
                    break
                if sub.lagged and sub.queue.empty():
                    await websocket.send_text(_dumps({"event": "lagged"}))
                    break
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.unsubscribe(sub)

    if static_dir is not None:
        static_path = Path(static_dir)
        if static_path.is_dir():
            app.mount("/", StaticFiles(directory=static_path, html=True), name="webui")

    return app
