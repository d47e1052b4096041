"""Talk to the HTTP gateway like the console does: upload an image with a
prompt, follow the server-sent event stream, fetch result pixels by content
hash, and steer a session with a human override.

Runs the service in-process; the same requests work against a live server
started with `restokit-serve`.

Run:  python demos/05_gateway_client.py
"""

import json
import tempfile

from fastapi.testclient import TestClient

from restokit import degrade
from restokit.datagen import synthetic_pool
from restokit.degrade import sample_instance
from restokit.domain import DistortionKind as K
from restokit.gateway import create_app
from restokit.orchestrator import project

with tempfile.TemporaryDirectory() as root:
    client = TestClient(create_app(root_dir=root))

    clean = synthetic_pool(1, seed=2, side_range=(96, 96))[0]
    noisy = degrade.apply(clean, sample_instance(K.NOISE, seed=3))

    print("POST /v1/sessions (multipart image + prompt)")
    resp = client.post(
        "/v1/sessions",
        files={"image": ("input.png", noisy.png_bytes(), "image/png")},
        data={"prompt": "Please remove the grain from this image."},
    )
    session = resp.json()
    sid = session["id"]
    print(f"  -> {resp.status_code}  id={sid}  status={session['status']}\n")

    print(f"GET /v1/sessions/{sid}/events (SSE replay-then-follow)")
    events = []
    with client.stream("GET", f"/v1/sessions/{sid}/events") as stream:
        for line in stream.iter_lines():
            if line.startswith("data: "):
                event = json.loads(line[len("data: "):])
                events.append(event)
                print(f"  [{event['seq']:2d}] {event['type']:14s} "
                      + (f"tool={event['payload'].get('tool')}" if event["type"] == "step" else ""))

    final = client.get(f"/v1/sessions/{sid}").json()
    print(f"\nfinal: status={final['status']} reason={final['done_reason']} steps={len(final['steps'])}")
    print("projection == event replay:", final == project(events))

    png = client.get(f"/v1/images/{final['final_ref']}")
    print(f"GET /v1/images/{final['final_ref'][:12]}…  -> {png.status_code}, {len(png.content)} bytes")

    print("\nhuman override on a fresh session (await_human mode):")
    resp = client.post(
        "/v1/sessions",
        files={"image": ("input.png", noisy.png_bytes(), "image/png")},
        data={"prompt": "Please fix this image.", "config": json.dumps({"await_human": True})},
    )
    sid2 = resp.json()["id"]
    import time

    for _ in range(100):
        proj = client.get(f"/v1/sessions/{sid2}").json()
        if proj["status"] != "running":
            break
        time.sleep(0.02)
    print(f"  session parked at status={proj['status']}")
    out = client.post(f"/v1/sessions/{sid2}/override", json={"action": "stop_accept"})
    print(f"  stop_accept -> {out.status_code}, status={out.json()['status']}, reason={out.json()['done_reason']}")
