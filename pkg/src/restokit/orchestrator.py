"""The restoration session state machine.

Routing: a new session is unrouted; the FastAgent sends direct prompts down
the fast route (one tool call, done) and everything else down the slow route,
an identify -> restore -> assess loop that ends on a clean verdict, the step
budget, or a stall. Humans may stop a running session and accept the current
result, or force it to continue past a clean verdict.

Sessions are event-sourced: every observable change appends one immutable
event, the event log persists as JSON Lines, and replaying a log rebuilds
the session projection exactly.
"""

from __future__ import annotations

import json
import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from queue import SimpleQueue
from typing import Any, Iterable

from . import metrics
from .agents import (
    AgentSuite,
    FeedbackVerdict,
    PromptClassification,
    VoteSet,
    fast_classify,
    slow_identify,
)
from .domain import DomainError, ImageState, ToolId, tool_for_kind
from .rng import derive_seed
from .storage import BlobStore
from .tools import ToolRegistry

STATUS_RUNNING = "running"
STATUS_AWAITING_HUMAN = "awaiting_human"
STATUS_DONE = "done"
STATUS_FAILED = "failed"
STATUS_ABORTED = "aborted"

ROUTE_UNROUTED = "unrouted"
ROUTE_FAST = "fast"
ROUTE_SLOW = "slow"

ACTION_STOP_ACCEPT = "stop_accept"
ACTION_CONTINUE = "continue"

# improvement proxy threshold in dB for the stall guard
IMPROVEMENT_EPS_DB = 0.01


class SessionError(DomainError):
    pass


class InvalidStatus(SessionError):
    pass


class DuplicateSession(SessionError):
    pass


class OverrideCapReached(SessionError):
    pass


@dataclass(frozen=True)
class OrchestratorConfig:
    vote_k: int = 5
    max_steps: int = 5
    fast_feedback: bool = False
    fast_route_enabled: bool = True
    await_human: bool = False
    max_overrides: int = 2
    step_delay_ms: float = 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "vote_k": self.vote_k,
            "max_steps": self.max_steps,
            "fast_feedback": self.fast_feedback,
            "fast_route_enabled": self.fast_route_enabled,
            "await_human": self.await_human,
            "max_overrides": self.max_overrides,
        }


@dataclass(frozen=True)
class Event:
    seq: int
    type: str
    payload: dict[str, Any]
    ts: float

    def to_json(self) -> dict[str, Any]:
        return {"seq": self.seq, "type": self.type, "payload": self.payload, "ts": self.ts}

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Event":
        return Event(seq=obj["seq"], type=obj["type"], payload=obj["payload"], ts=obj["ts"])


@dataclass
class StepRecord:
    index: int
    source: str  # fast | slow | stall_guard
    tool: ToolId | None
    votes: VoteSet | None = None
    pre_ref: str = ""
    post_ref: str | None = None
    feedback: FeedbackVerdict | None = None
    agent_ms: float = 0.0
    tool_ms: float = 0.0
    feedback_ms: float = 0.0
    psnr_db: float | None = None
    ssim: float | None = None
    improved: bool | None = None
    failed: bool = False
    error: str | None = None


@dataclass
class Session:
    id: str
    prompt: str
    input_ref: str
    config: OrchestratorConfig
    current: ImageState
    route: str = ROUTE_UNROUTED
    status: str = STATUS_RUNNING
    steps: list[StepRecord] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    classification: PromptClassification | None = None
    routing_ms: float = 0.0
    continue_overrides: int = 0
    forced_hybrid: bool = False
    consecutive_failures: int = 0
    final_ref: str | None = None
    done_reason: str | None = None

    def tool_history(self) -> list[ToolId]:
        return [s.tool for s in self.steps if s.tool is not None and not s.failed]

    def agent_call_count(self) -> int:
        calls = 1 if self.classification is not None else 0
        calls += sum(1 for s in self.steps if s.votes is not None)
        calls += sum(1 for s in self.steps if s.feedback is not None)
        return calls

    def ait_ms(self) -> float:
        return self.routing_ms + sum(s.agent_ms + s.feedback_ms for s in self.steps)

    def max_allowed_steps(self) -> int:
        return self.config.max_steps + self.continue_overrides


def _step_payload(step: StepRecord) -> dict[str, Any]:
    return {
        "index": step.index,
        "source": step.source,
        "tool": step.tool.value if step.tool else None,
        "votes": step.votes.to_json() if step.votes else None,
        "pre_ref": step.pre_ref,
        "post_ref": step.post_ref,
        "clean": step.feedback.clean if step.feedback else None,
        "agent_ms": step.agent_ms,
        "tool_ms": step.tool_ms,
        "feedback_ms": step.feedback_ms,
        "psnr_db": metrics.serialize_metric(step.psnr_db) if step.psnr_db is not None else None,
        "ssim": step.ssim,
        "improved": step.improved,
        "failed": step.failed,
        "error": step.error,
    }


def project(events: Iterable[Event | dict[str, Any]]) -> dict[str, Any]:
    """Fold an event log into the wire-facing session projection."""
    proj: dict[str, Any] = {
        "id": None,
        "status": STATUS_RUNNING,
        "route": ROUTE_UNROUTED,
        "prompt": None,
        "input_ref": None,
        "config": None,
        "steps": [],
        "final_ref": None,
        "done_reason": None,
        "overrides_used": 0,
        "pending_human": False,
        "agent_calls": 0,
        "ait_ms": 0.0,
        "events_count": 0,
    }
    for raw in events:
        ev = raw if isinstance(raw, Event) else Event.from_json(raw)
        proj["events_count"] += 1
        p = ev.payload
        if ev.type == "received":
            proj["id"] = p["session_id"]
            proj["prompt"] = p["prompt"]
            proj["input_ref"] = p["input_ref"]
            proj["config"] = p["config"]
        elif ev.type == "routed":
            proj["route"] = p["route"]
            if p.get("agent_call"):
                proj["agent_calls"] += 1
            proj["ait_ms"] += p.get("agent_ms", 0.0)
        elif ev.type == "step":
            proj["steps"].append(p)
            if p.get("votes") is not None:
                proj["agent_calls"] += 1
            if p.get("clean") is not None:
                proj["agent_calls"] += 1
            proj["ait_ms"] += p.get("agent_ms", 0.0) + p.get("feedback_ms", 0.0)
        elif ev.type == "route_demoted":
            proj["route"] = ROUTE_SLOW
        elif ev.type == "await_human":
            proj["status"] = STATUS_AWAITING_HUMAN
            proj["pending_human"] = True
        elif ev.type == "override":
            proj["overrides_used"] = p.get("overrides_used", proj["overrides_used"])
            if p["action"] == ACTION_CONTINUE:
                proj["status"] = STATUS_RUNNING
                proj["pending_human"] = False
                proj["route"] = ROUTE_SLOW
        elif ev.type == "done":
            proj["status"] = STATUS_DONE
            proj["final_ref"] = p.get("final_ref")
            proj["done_reason"] = p.get("reason")
            proj["pending_human"] = False
        elif ev.type == "failed":
            proj["status"] = STATUS_FAILED
            proj["pending_human"] = False
    return proj


class SessionManager:
    """Owns sessions, their per-session exclusion, events, and persistence."""

    def __init__(
        self,
        agents: AgentSuite,
        registry: ToolRegistry,
        config: OrchestratorConfig | None = None,
        store: BlobStore | None = None,
        root_dir: str | Path | None = None,
    ):
        self.agents = agents
        self.registry = registry
        self.config = config or OrchestratorConfig()
        self.store = store or BlobStore(None)
        self.root_dir = Path(root_dir) if root_dir is not None else None
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._subscribers: dict[str, list[SimpleQueue]] = {}
        self._global = threading.Lock()

    # -- lifecycle ----------------------------------------------------------

    def start(
        self,
        image: ImageState,
        prompt: str,
        session_id: str | None = None,
        config: OrchestratorConfig | None = None,
    ) -> Session:
        if not prompt or not prompt.strip():
            raise SessionError("prompt must be non-empty")
        sid = session_id or uuid.uuid4().hex
        cfg = config or self.config
        with self._global:
            if sid in self._sessions:
                raise DuplicateSession(f"session {sid!r} already exists")
            input_ref = self.store.put(image)
            session = Session(id=sid, prompt=prompt, input_ref=input_ref, config=cfg, current=image)
            self._sessions[sid] = session
            self._locks[sid] = threading.RLock()
            self._subscribers[sid] = []
        self._emit(
            session,
            "received",
            {
                "session_id": sid,
                "prompt": prompt,
                "input_ref": input_ref,
                "config": cfg.to_json(),
                "registry": self.registry.label,
                "agents": self.agents.label,
            },
        )
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionError(f"unknown session {session_id!r}") from None

    def session_ids(self) -> list[str]:
        return list(self._sessions)

    def lock(self, session_id: str) -> threading.RLock:
        return self._locks[session_id]

    # -- events -------------------------------------------------------------

    def _emit(self, session: Session, type_: str, payload: dict[str, Any]) -> Event:
        event = Event(seq=len(session.events) + 1, type=type_, payload=payload, ts=time.time())
        session.events.append(event)
        if self.root_dir is not None:
            path = self.root_dir / "sessions" / session.id
            path.mkdir(parents=True, exist_ok=True)
            with open(path / "events.jsonl", "a") as fh:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
        for queue in self._subscribers.get(session.id, []):
            queue.put(event)
        return event

    def subscribe(self, session_id: str) -> SimpleQueue:
        """Queue that replays the session's history, then follows live appends."""
        session = self.get(session_id)
        with self._locks[session_id]:
            queue: SimpleQueue = SimpleQueue()
            for event in session.events:
                queue.put(event)
            self._subscribers[session_id].append(queue)
            return queue

    def unsubscribe(self, session_id: str, queue: SimpleQueue) -> None:
        with self._locks[session_id]:
            subs = self._subscribers.get(session_id, [])
            if queue in subs:
                subs.remove(queue)

    def projection(self, session_id: str) -> dict[str, Any]:
        return project(self.get(session_id).events)

    # -- state machine ------------------------------------------------------

    def advance(self, session_id: str, expected_steps: int | None = None) -> Session:
        with self._locks[session_id]:
            session = self.get(session_id)
            if expected_steps is not None and len(session.steps) != expected_steps:
                return session  # another executor already took this step
            if session.status != STATUS_RUNNING:
                raise InvalidStatus(f"cannot advance a session in status {session.status!r}")
            if session.route == ROUTE_UNROUTED:
                self._transition_route(session)
            elif session.route == ROUTE_FAST:
                self._transition_fast(session)
            elif session.route == ROUTE_SLOW:
                self._transition_slow(session)
            return session

    def run_to_completion(self, session_id: str) -> Session:
        session = self.get(session_id)
        guard = session.config.max_steps + session.config.max_overrides + 4
        for _ in range(guard):
            if session.status != STATUS_RUNNING:
                break
            self.advance(session_id)
            if session.config.step_delay_ms:
                time.sleep(session.config.step_delay_ms / 1000.0)
        if session.status == STATUS_RUNNING:  # pragma: no cover - bounded by construction
            raise SessionError(f"session {session_id} failed to terminate within its budget")
        return session

    def human_override(self, session_id: str, action: str) -> Session:
        with self._locks[session_id]:
            session = self.get(session_id)
            if action not in (ACTION_STOP_ACCEPT, ACTION_CONTINUE):
                raise SessionError(f"unknown override action {action!r}")
            if session.status not in (STATUS_RUNNING, STATUS_AWAITING_HUMAN):
                raise InvalidStatus(f"cannot override a session in status {session.status!r}")
            if action == ACTION_STOP_ACCEPT:
                self._emit(session, "override", {"action": action, "overrides_used": session.continue_overrides})
                self._emit(session, "human_accept", {})
                self._finish(session, "human_accept")
            else:
                if session.continue_overrides >= session.config.max_overrides:
                    self._emit(session, "override_cap", {"cap": session.config.max_overrides})
                    raise OverrideCapReached(f"continue override cap ({session.config.max_overrides}) reached")
                session.continue_overrides += 1
                # any clean verdict on the current step no longer terminates
                session.status = STATUS_RUNNING
                session.route = ROUTE_SLOW
                self._emit(session, "override", {"action": action, "overrides_used": session.continue_overrides})
            return session

    # -- transitions ---------------------------------------------------------

    def _transition_route(self, session: Session) -> None:
        if not session.config.fast_route_enabled:
            session.route = ROUTE_SLOW
            self._emit(session, "routed", {"route": ROUTE_SLOW, "outcome": "fast_route_disabled", "agent_call": False, "agent_ms": 0.0})
            return
        t0 = time.perf_counter()
        cls = fast_classify(session.prompt, self.agents.fast)
        ms = (time.perf_counter() - t0) * 1000.0
        session.classification = cls
        session.routing_ms = ms
        session.route = ROUTE_FAST if cls.direct else ROUTE_SLOW
        self._emit(
            session,
            "routed",
            {
                "route": session.route,
                "outcome": cls.outcome,
                "tool": cls.tool.value if cls.tool else None,
                "confidence": cls.confidence,
                "rationale": cls.rationale,
                "agent_call": True,
                "agent_ms": ms,
            },
        )

    def _invoke_tool(self, session: Session, step: StepRecord) -> bool:
        """Run the tool, fill in the step record; False on failure."""
        pre = session.current
        step.pre_ref = pre.content_ref
        t0 = time.perf_counter()
        try:
            post = self.registry.invoke(step.tool, pre)
        except DomainError as exc:
            step.tool_ms = (time.perf_counter() - t0) * 1000.0
            step.failed = True
            step.error = str(exc)
            return False
        step.tool_ms = (time.perf_counter() - t0) * 1000.0
        step.post_ref = self.store.put(post)
        clean_px = pre.clean_pixels
        if clean_px is not None:
            before = metrics.psnr(pre.pixels, clean_px)
            after = metrics.psnr(post.pixels, clean_px)
            step.psnr_db = after
            step.ssim = metrics.ssim(post.pixels, clean_px)
            if math.isinf(before) and math.isinf(after):
                step.improved = False
            else:
                step.improved = after > before + IMPROVEMENT_EPS_DB
        session.current = post
        return True

    def _record_step(self, session: Session, step: StepRecord) -> None:
        session.steps.append(step)
        self._emit(session, "step", _step_payload(step))
        if step.failed:
            session.consecutive_failures += 1
            if session.consecutive_failures >= 2:
                self._emit(session, "failed", {"error": step.error or "unknown"})
                session.status = STATUS_FAILED
        else:
            session.consecutive_failures = 0

    def _transition_fast(self, session: Session) -> None:
        assert session.classification is not None and session.classification.tool is not None
        step = StepRecord(index=len(session.steps) + 1, source="fast", tool=session.classification.tool)
        ok = self._invoke_tool(session, step)
        if ok and session.config.fast_feedback:
            verdict, ms = self._assess(session, step.tool)
            step.feedback = verdict
            step.feedback_ms = ms
        self._record_step(session, step)
        if session.status == STATUS_FAILED:
            return
        if not ok:
            session.route = ROUTE_SLOW  # fail over to the slow loop
            self._emit(session, "route_demoted", {"reason": "fast step failed"})
            return
        if not session.config.fast_feedback:
            self._finish(session, "fast_direct")
        elif step.feedback is not None and step.feedback.clean:
            self._finish(session, "clean")
        else:
            session.route = ROUTE_SLOW
            self._emit(session, "route_demoted", {"reason": "fast result not clean"})

    def _assess(self, session: Session, current_tool: ToolId | None = None) -> tuple[FeedbackVerdict, float]:
        # history seen by the reviewer covers steps 1..n including the step
        # under assessment
        history = session.tool_history()
        if current_tool is not None:
            history.append(current_tool)
        t0 = time.perf_counter()
        verdict = self.agents.feedback.assess(session.current, history)
        return verdict, (time.perf_counter() - t0) * 1000.0

    def _stall_condition(self, session: Session) -> bool:
        slow_steps = [s for s in session.steps if s.source in ("slow", "stall_guard") and not s.failed]
        if len(slow_steps) < 2:
            return False
        a, b = slow_steps[-2], slow_steps[-1]
        return a.tool == b.tool and not a.improved and not b.improved

    def _transition_slow(self, session: Session) -> None:
        index = len(session.steps) + 1
        step = StepRecord(index=index, source="slow", tool=None)
        if self._stall_condition(session):
            if session.forced_hybrid:
                self._emit(session, "stalled", {"after_steps": len(session.steps)})
                self._finish(session, "stalled")
                return
            session.forced_hybrid = True
            self._emit(session, "stall_guard", {"step": index})
            step.source = "stall_guard"
            step.tool = ToolId.DE_HYBRID
        else:
            t0 = time.perf_counter()
            try:
                votes = slow_identify(
                    session.current,
                    session.config.vote_k,
                    self.agents.slow,
                    seed=derive_seed(session.id, "identify", index),
                )
            except DomainError as exc:
                step.agent_ms = (time.perf_counter() - t0) * 1000.0
                step.failed = True
                step.error = str(exc)
                self._record_step(session, step)
                if session.status != STATUS_FAILED and len(session.steps) >= session.max_allowed_steps():
                    self._emit(session, "budget_exhausted", {"max_steps": session.max_allowed_steps()})
                    self._finish(session, "budget_exhausted")
                return
            step.agent_ms = (time.perf_counter() - t0) * 1000.0
            step.votes = votes
            step.tool = tool_for_kind(votes.winner)
        ok = self._invoke_tool(session, step)
        if ok:
            verdict, ms = self._assess(session, step.tool)
            step.feedback = verdict
            step.feedback_ms = ms
        self._record_step(session, step)
        if session.status == STATUS_FAILED:
            return
        if ok and step.feedback is not None and step.feedback.clean:
            if session.config.await_human:
                session.status = STATUS_AWAITING_HUMAN
                self._emit(session, "await_human", {"step": step.index})
            else:
                self._finish(session, "clean")
            return
        if len(session.steps) >= session.max_allowed_steps():
            self._emit(session, "budget_exhausted", {"max_steps": session.max_allowed_steps()})
            self._finish(session, "budget_exhausted")

    def _finish(self, session: Session, reason: str) -> None:
        session.status = STATUS_DONE
        session.done_reason = reason
        session.final_ref = session.current.content_ref
        self.store.put(session.current)
        self._emit(
            session,
            "done",
            {
                "reason": reason,
                "final_ref": session.final_ref,
                "steps": len(session.steps),
                "ait_ms": session.ait_ms(),
                "agent_calls": session.agent_call_count(),
            },
        )


def load_events(path: str | Path) -> list[Event]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(Event.from_json(json.loads(line)))
    return events
