"""HTTP service exposing restoration sessions, images, events, and human
override. JSON over HTTP under /v1; images travel as PNG; event streams are
server-sent events that replay history then follow live appends.

Persistence is a flat content-addressed blob directory plus per-session
JSON Lines event logs; restarting the service reconstructs every session
projection from the logs.
"""

from __future__ import annotations

import argparse
import json
import threading
from pathlib import Path
from queue import Empty
from typing import Any

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import codecs
from .agents import (
    AgentSuite,
    OracleFeedbackBackend,
    OracleSlowBackend,
    RemoteFastBackend,
    RemoteFeedbackBackend,
    RemoteSlowBackend,
    RuleFastBackend,
    StubFeedbackBackend,
    StubSlowBackend,
)
from .config import Config
from .domain import DomainError, ImageState
from .orchestrator import (
    ACTION_CONTINUE,
    ACTION_STOP_ACCEPT,
    Event,
    InvalidStatus,
    OrchestratorConfig,
    OverrideCapReached,
    SessionError,
    SessionManager,
    load_events,
    project,
)
from .storage import BlobCorrupt, BlobMissing, BlobStore
from .tools import RemoteToolClient, classical_registry, remote_registry, simulated_registry

DEFAULT_MAX_UPLOAD_MB = 32


_PROFILE_DEFAULTS = {
    # profile -> (fast, slow, feedback) backend names
    "rule": ("rule", "oracle", "oracle"),
    "oracle": ("rule", "oracle", "oracle"),
    "stub": ("rule", "stub", "oracle"),
    "remote": ("remote", "remote", "remote"),
}


def build_suite(cfg: Config) -> AgentSuite:
    """Agent trio from config: ``backends.profile`` sets defaults, and
    ``agents.<name>.backend`` (rule|oracle|stub|remote) overrides per agent."""
    profile = str(cfg.get("backends.profile", "rule"))
    if profile not in _PROFILE_DEFAULTS:
        raise DomainError(f"unknown backend profile {profile!r}")
    default_fast, default_slow, default_feedback = _PROFILE_DEFAULTS[profile]
    vote_k = cfg.get_int("agents.vote.k", 5)
    remote_base = str(cfg.get("agents.remote.base_url", "http://localhost:9100"))

    fast_name = str(cfg.get("agents.fast.backend", default_fast))
    if fast_name == "remote":
        fast = RemoteFastBackend(remote_base, threshold=cfg.get_float("agents.fast.threshold", 0.8))
    else:
        fast = RuleFastBackend()  # rule/oracle: the service has no tag corpus

    slow_name = str(cfg.get("agents.slow.backend", default_slow))
    if slow_name == "stub":
        slow = StubSlowBackend(cfg.get_float("agents.slow.stub.p", 0.6))
    elif slow_name == "remote":
        slow = RemoteSlowBackend(remote_base)
    else:
        slow = OracleSlowBackend()

    feedback_name = str(cfg.get("agents.feedback.backend", default_feedback))
    if feedback_name == "stub":
        feedback = StubFeedbackBackend(always_clean=False)
    elif feedback_name == "remote":
        feedback = RemoteFeedbackBackend(remote_base)
    else:
        feedback = OracleFeedbackBackend()

    label = f"{profile}(fast={fast_name},slow={slow_name},feedback={feedback_name})"
    return AgentSuite(fast=fast, slow=slow, feedback=feedback, vote_k=vote_k, label=label)


def build_manager(cfg: Config, root_dir: str | Path | None = None) -> SessionManager:
    provider = codecs.provider_from_config(cfg, use_stub_fallback=cfg.get_bool("codecs.use_stub_fallback", True))
    registry_name = str(cfg.get("tools.registry", "simulated"))
    if registry_name == "classical":
        registry = classical_registry(provider=provider)
    elif registry_name == "remote":
        client = RemoteToolClient(
            base_url=str(cfg.get("tools.remote.base_url", "http://localhost:9000")),
            timeout_ms=cfg.get_float("tools.remote.timeout_ms", 10_000),
            max_attempts=cfg.get_int("tools.remote.max_attempts", 3),
        )
        registry = remote_registry(client)
    else:
        registry = simulated_registry(provider=provider)
    orch = OrchestratorConfig(
        vote_k=cfg.get_int("agents.vote.k", 5),
        max_steps=cfg.get_int("orchestrator.max_steps", 5),
        fast_feedback=cfg.get_bool("orchestrator.fast_feedback", False),
        await_human=cfg.get_bool("orchestrator.await_human", False),
        step_delay_ms=cfg.get_float("orchestrator.step_delay_ms", 0.0),
    )
    store = BlobStore(Path(root_dir) / "blobs" if root_dir is not None else None)
    return SessionManager(build_suite(cfg), registry, orch, store=store, root_dir=root_dir)


def _sse(event: Event) -> str:
    return f"id: {event.seq}\nevent: {event.type}\ndata: {json.dumps(event.to_json(), sort_keys=True)}\n\n"


_TERMINAL_EVENTS = ("done", "failed")


class Gateway:
    """Application state: the live session manager plus sessions recovered
    from event logs after a restart."""

    def __init__(self, manager: SessionManager, root_dir: str | Path | None = None, max_upload_mb: float = DEFAULT_MAX_UPLOAD_MB):
        self.manager = manager
        self.root_dir = Path(root_dir) if root_dir is not None else None
        self.max_upload_bytes = int(max_upload_mb * 1024 * 1024)
        self.recovered: dict[str, list[Event]] = {}
        self._scheduled: set[str] = set()
        self._lock = threading.Lock()
        if self.root_dir is not None:
            self._recover()

    def _recover(self) -> None:
        sessions_dir = self.root_dir / "sessions"
        if not sessions_dir.is_dir():
            return
        for log in sorted(sessions_dir.glob("*/events.jsonl")):
            sid = log.parent.name
            self.recovered[sid] = load_events(log)

    def events_for(self, session_id: str) -> list[Event] | None:
        try:
            return self.manager.get(session_id).events
        except SessionError:
            return self.recovered.get(session_id)

    def projection_for(self, session_id: str) -> dict[str, Any] | None:
        events = self.events_for(session_id)
        return project(events) if events is not None else None

    def is_live(self, session_id: str) -> bool:
        try:
            self.manager.get(session_id)
            return True
        except SessionError:
            return False

    def schedule(self, session_id: str) -> None:
        # at-most-once background execution per session, client retries included
        with self._lock:
            if session_id in self._scheduled:
                return
            self._scheduled.add(session_id)
        thread = threading.Thread(target=self._run, args=(session_id,), daemon=True)
        thread.start()

    def _run(self, session_id: str) -> None:
        try:
            self.manager.run_to_completion(session_id)
        except SessionError:
            pass  # terminal state is visible in the event log
        finally:
            with self._lock:
                self._scheduled.discard(session_id)  # a later continue may re-arm


def create_app(
    gateway: Gateway | None = None,
    cfg: Config | None = None,
    root_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    cfg = cfg or Config()
    if gateway is None:
        manager = build_manager(cfg, root_dir)
        gateway = Gateway(manager, root_dir, max_upload_mb=cfg.get_float("server.max_upload_mb", DEFAULT_MAX_UPLOAD_MB))
    app = FastAPI(title="restokit gateway", version="1")
    app.state.gateway = gateway

    if static_dir is not None and Path(static_dir).is_dir():
        # the browser console: a static bundle served from the same origin
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(static_dir), html=True), name="console")

    def error(status: int, code: str, detail: str = "") -> JSONResponse:
        return JSONResponse(status_code=status, content={"code": code, "detail": detail})

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        form = await request.form()
        prompt = str(form.get("prompt") or "")
        upload = form.get("image")
        if not prompt.strip():
            return error(400, "empty_prompt", "prompt must be non-empty")
        if upload is None:
            return error(400, "invalid_image", "image file missing")
        data = await upload.read()
        if len(data) > gateway.max_upload_bytes:
            return error(413, "too_large", f"upload exceeds {gateway.max_upload_bytes} bytes")
        try:
            image = ImageState.from_png_bytes(data)
        except Exception as exc:
            return error(400, "invalid_image", str(exc))
        overrides = form.get("config")
        config = None
        if overrides:
            try:
                raw = json.loads(str(overrides))
                config = OrchestratorConfig(**raw)
            except (ValueError, TypeError) as exc:
                return error(400, "invalid_config", str(exc))
        try:
            session = gateway.manager.start(image, prompt, config=config)
        except SessionError as exc:
            return error(400, "session_error", str(exc))
        gateway.schedule(session.id)
        return gateway.manager.projection(session.id)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        proj = gateway.projection_for(session_id)
        if proj is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return proj

    @app.get("/v1/sessions/{session_id}/events")
    def get_events(session_id: str):
        if gateway.is_live(session_id):
            def stream_live():
                queue = gateway.manager.subscribe(session_id)
                try:
                    while True:
                        try:
                            event = queue.get(timeout=1.0)
                        except Empty:
                            yield ": keepalive\n\n"
                            continue
                        yield _sse(event)
                        if event.type in _TERMINAL_EVENTS:
                            break
                finally:
                    gateway.manager.unsubscribe(session_id, queue)

            return StreamingResponse(stream_live(), media_type="text/event-stream")
        events = gateway.recovered.get(session_id)
        if events is None:
            raise HTTPException(status_code=404, detail="unknown session")

        def stream_replay():
            for event in events:
                yield _sse(event)

        return StreamingResponse(stream_replay(), media_type="text/event-stream")

    @app.get("/v1/images/{ref}")
    def get_image(ref: str):
        try:
            data = gateway.manager.store.get_bytes(ref)
        except BlobMissing:
            raise HTTPException(status_code=404, detail="unknown image")
        except BlobCorrupt:
            return error(500, "blob_corrupt", "stored bytes fail their integrity re-hash")
        return Response(content=data, media_type="image/png")

    @app.post("/v1/sessions/{session_id}/override")
    async def override(session_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "invalid_body", "expected JSON body")
        action = body.get("action")
        if action not in (ACTION_STOP_ACCEPT, ACTION_CONTINUE):
            return error(400, "unknown_action", f"unsupported action {action!r}")
        if not gateway.is_live(session_id):
            if session_id in gateway.recovered:
                return error(409, "not_resumable", "session predates this process")
            raise HTTPException(status_code=404, detail="unknown session")
        try:
            gateway.manager.human_override(session_id, action)
        except OverrideCapReached as exc:
            return error(409, "override_cap", str(exc))
        except InvalidStatus as exc:
            return error(409, "wrong_status", str(exc))
        if action == ACTION_CONTINUE:
            gateway.schedule(session_id)
        return gateway.manager.projection(session_id)

    return app


def main(argv: list[str] | None = None) -> None:
    import uvicorn

    parser = argparse.ArgumentParser(description="restoration session gateway")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--root", default="gateway-data", help="persistence directory")
    parser.add_argument("--bind", default=None, help="host:port (overrides config server.bind)")
    parser.add_argument("--console", default="frontend", help="console static dir (mounted at /console when present)")
    args = parser.parse_args(argv)
    cfg = Config.from_toml(args.config) if args.config else Config()
    bind = args.bind or str(cfg.get("server.bind", "127.0.0.1:8000"))
    host, _, port = bind.partition(":")
    app = create_app(cfg=cfg, root_dir=args.root, static_dir=args.console)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    main()
