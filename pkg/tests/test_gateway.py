from __future__ import annotations

import hashlib
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from restokit import degrade
from restokit.agents import AgentSuite
from restokit.config import Config
from restokit.degrade import sample_instance
from restokit.domain import DistortionKind
from restokit.gateway import Gateway, create_app
from restokit.orchestrator import OrchestratorConfig, SessionManager, project
from restokit.rng import derive_seed
from restokit.storage import BlobStore

from .conftest import smooth_image

K = DistortionKind

DIRECT = "Please remove the grain from this image."
AMBIGUOUS = "Please fix this image."


def noisy_png(seed=0, side=48) -> bytes:
    img = degrade.apply(smooth_image(derive_seed("gw", seed), side=side), sample_instance(K.NOISE, seed))
    return img.png_bytes()


def make_gateway(sim_registry, root=None, **cfg) -> Gateway:
    manager = SessionManager(
        AgentSuite.rule(),
        sim_registry,
        OrchestratorConfig(**cfg),
        store=BlobStore(root / "blobs" if root else None),
        root_dir=root,
    )
    return Gateway(manager, root_dir=root)


@pytest.fixture()
def client(sim_registry):
    return TestClient(create_app(make_gateway(sim_registry)))


def submit(client, prompt=DIRECT, png=None, config=None, seed=0):
    files = {"image": ("input.png", png or noisy_png(seed), "image/png")}
    data = {"prompt": prompt}
    if config:
        data["config"] = json.dumps(config)
    return client.post("/v1/sessions", files=files, data=data)


def wait_done(client, sid, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        proj = client.get(f"/v1/sessions/{sid}").json()
        if proj["status"] in ("done", "failed", "awaiting_human"):
            return proj
        time.sleep(0.02)
    raise AssertionError("session did not settle in time")


# ---------------------------------------------------------------------------
# session creation


def test_create_and_complete_session(client):
    resp = submit(client)
    assert resp.status_code == 201
    sid = resp.json()["id"]
    proj = wait_done(client, sid)
    assert proj["status"] == "done"
    assert proj["route"] == "fast"
    assert len(proj["steps"]) == 1
    assert proj["final_ref"]


def test_empty_prompt_rejected(client):
    resp = submit(client, prompt="   ")
    assert resp.status_code == 400
    assert resp.json()["code"] == "empty_prompt"


def test_invalid_image_rejected(client):
    resp = submit(client, png=b"not a png at all")
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_image"


def test_oversized_upload_rejected(sim_registry):
    gateway = make_gateway(sim_registry)
    gateway.max_upload_bytes = 1000
    client = TestClient(create_app(gateway))
    resp = submit(client)
    assert resp.status_code == 413
    assert resp.json()["code"] == "too_large"


def test_unknown_session_404(client):
    assert client.get("/v1/sessions/nope").status_code == 404
    assert client.post("/v1/sessions/nope/override", json={"action": "stop_accept"}).status_code == 404


# ---------------------------------------------------------------------------
# images


def test_image_bytes_rehash_to_address(client):
    sid = submit(client).json()["id"]
    proj = wait_done(client, sid)
    for ref in (proj["input_ref"], proj["final_ref"]):
        resp = client.get(f"/v1/images/{ref}")
        assert resp.status_code == 200
        assert hashlib.sha256(resp.content).hexdigest() == ref
    assert client.get(f"/v1/images/{'0'*64}").status_code == 404


def test_corrupt_blob_returns_500(sim_registry, tmp_path):
    gateway = make_gateway(sim_registry, root=tmp_path)
    client = TestClient(create_app(gateway))
    sid = submit(client).json()["id"]
    proj = wait_done(client, sid)
    ref = proj["input_ref"]
    (tmp_path / "blobs" / f"{ref}.png").write_bytes(b"garbage")
    resp = client.get(f"/v1/images/{ref}")
    assert resp.status_code == 500
    assert resp.json()["code"] == "blob_corrupt"


# ---------------------------------------------------------------------------
# events (SSE)


def _read_sse_events(client, sid):
    events = []
    with client.stream("GET", f"/v1/sessions/{sid}/events") as resp:
        assert resp.headers["content-type"].startswith("text/event-stream")
        for line in resp.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: ") :]))
    return events


def test_events_replay_then_end(client):
    sid = submit(client).json()["id"]
    wait_done(client, sid)
    events = _read_sse_events(client, sid)
    assert events[0]["type"] == "received"
    assert events[-1]["type"] == "done"
    seqs = [e["seq"] for e in events]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    # replaying the stream reconstructs the projection exactly
    proj = client.get(f"/v1/sessions/{sid}").json()
    assert project(events) == proj


def test_events_stream_follows_live_session(sim_registry):
    client = TestClient(create_app(make_gateway(sim_registry)))
    resp = submit(client, config={"step_delay_ms": 120})
    sid = resp.json()["id"]
    events = _read_sse_events(client, sid)  # connects early, follows to done
    assert events[-1]["type"] == "done"


# ---------------------------------------------------------------------------
# override


def test_override_accept_on_awaiting_session(sim_registry):
    client = TestClient(create_app(make_gateway(sim_registry)))
    resp = submit(client, prompt=AMBIGUOUS, config={"await_human": True}, seed=3)
    sid = resp.json()["id"]
    proj = wait_done(client, sid)
    assert proj["status"] == "awaiting_human"
    out = client.post(f"/v1/sessions/{sid}/override", json={"action": "stop_accept"})
    assert out.status_code == 200
    assert out.json()["status"] == "done"
    assert out.json()["done_reason"] == "human_accept"


def test_override_continue_runs_another_step(sim_registry):
    client = TestClient(create_app(make_gateway(sim_registry)))
    sid = submit(client, prompt=AMBIGUOUS, config={"await_human": True}, seed=4).json()["id"]
    proj = wait_done(client, sid)
    steps_before = len(proj["steps"])
    out = client.post(f"/v1/sessions/{sid}/override", json={"action": "continue"})
    assert out.status_code == 200
    proj = wait_done(client, sid)
    assert len(proj["steps"]) == steps_before + 1


def test_override_on_done_409(client):
    sid = submit(client).json()["id"]
    wait_done(client, sid)
    resp = client.post(f"/v1/sessions/{sid}/override", json={"action": "continue"})
    assert resp.status_code == 409
    assert resp.json()["code"] == "wrong_status"


def test_override_unknown_action_400(client):
    sid = submit(client).json()["id"]
    resp = client.post(f"/v1/sessions/{sid}/override", json={"action": "retry"})
    assert resp.status_code == 400
    assert resp.json()["code"] == "unknown_action"


# ---------------------------------------------------------------------------
# crash recovery


def test_restart_reconstructs_projections(sim_registry, tmp_path):
    gateway = make_gateway(sim_registry, root=tmp_path)
    client = TestClient(create_app(gateway))
    sids = [submit(client, seed=i).json()["id"] for i in range(3)]
    before = {sid: wait_done(client, sid) for sid in sids}

    fresh_manager = SessionManager(
        AgentSuite.rule(), sim_registry, OrchestratorConfig(), store=BlobStore(tmp_path / "blobs"), root_dir=tmp_path
    )
    revived = TestClient(create_app(Gateway(fresh_manager, root_dir=tmp_path)))
    for sid in sids:
        resp = revived.get(f"/v1/sessions/{sid}")
        assert resp.status_code == 200
        assert resp.json() == before[sid]
        # blobs survive and verify
        ref = before[sid]["final_ref"]
        data = revived.get(f"/v1/images/{ref}")
        assert data.status_code == 200
        assert hashlib.sha256(data.content).hexdigest() == ref
        # recovered event stream replays then ends
        events = _read_sse_events(revived, sid)
        assert events[-1]["type"] == "done"
        # recovered sessions are read-only
        out = revived.post(f"/v1/sessions/{sid}/override", json={"action": "continue"})
        assert out.status_code == 409
        assert out.json()["code"] == "not_resumable"


def test_build_suite_per_agent_config():
    from restokit.agents import OracleSlowBackend, RemoteFeedbackBackend, StubSlowBackend
    from restokit.gateway import build_suite

    suite = build_suite(Config({"backends.profile": "stub", "agents.slow.stub.p": 0.7, "agents.vote.k": 3}))
    assert isinstance(suite.slow, StubSlowBackend)
    assert suite.slow.p == 0.7
    assert suite.vote_k == 3

    mixed = build_suite(Config({"agents.feedback.backend": "remote", "agents.remote.base_url": "http://models:9"}))
    assert isinstance(mixed.slow, OracleSlowBackend)
    assert isinstance(mixed.feedback, RemoteFeedbackBackend)
    assert mixed.feedback.base_url == "http://models:9"


def test_schedule_is_at_most_once(sim_registry):
    gateway = make_gateway(sim_registry)
    client = TestClient(create_app(gateway))
    sid = submit(client, prompt=AMBIGUOUS, seed=9).json()["id"]
    for _ in range(5):
        gateway.schedule(sid)  # client retries must not double-run steps
    proj = wait_done(client, sid)
    indexes = [s["index"] for s in proj["steps"]]
    assert indexes == list(range(1, len(indexes) + 1))
