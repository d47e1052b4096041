"""Record gateway event-log fixtures for the console's hermetic UI tests.

Regenerate with:  python frontend/fixtures/record.py
"""

import json
from pathlib import Path

from restokit import degrade
from restokit.agents import AgentSuite, MODE_SINGLE_ONLY
from restokit.datagen import synthetic_pool
from restokit.degrade import sample_instance
from restokit.domain import DistortionKind as K
from restokit.orchestrator import ACTION_CONTINUE, ACTION_STOP_ACCEPT, OrchestratorConfig, SessionManager
from restokit.rng import derive_seed
from restokit.tools import simulated_registry

OUT = Path(__file__).parent


def freeze(events, name):
    # pin wall-clock fields so snapshots are stable across recordings
    rows = []
    t0 = events[0].ts
    for ev in events:
        row = ev.to_json()
        row["ts"] = round(row["ts"] - t0, 4)
        payload = dict(row["payload"])
        for key in ("agent_ms", "tool_ms", "feedback_ms", "ait_ms"):
            if key in payload and payload[key] is not None:
                payload[key] = round(float(payload[key]), 1)
        row["payload"] = payload
        rows.append(row)
    (OUT / name).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    print(f"wrote {name}: {len(rows)} events")


clean = synthetic_pool(1, seed=8, side_range=(64, 64))[0]
registry = simulated_registry()

# 1) fast route: direct prompt, one tool call, done
mgr = SessionManager(AgentSuite.rule(), registry)
noisy = degrade.apply(clean, sample_instance(K.NOISE, seed=1))
s = mgr.start(noisy, "Please remove the grain from this image.", session_id="fx-fast")
mgr.run_to_completion(s.id)
freeze(s.events, "fast.json")

# 2) slow route, three single-tool steps
mgr = SessionManager(AgentSuite.oracle(slow_mode=MODE_SINGLE_ONLY), registry)
img = clean
for i, kind in enumerate((K.BLUR, K.NOISE, K.JPEG)):
    img = degrade.apply(img, sample_instance(kind, derive_seed("fx", i)))
s = mgr.start(img, "Please fix this image.", session_id="fx-slow3")
mgr.run_to_completion(s.id)
assert len(s.steps) == 3
freeze(s.events, "slow3.json")

# 3) human override: awaiting -> continue -> awaiting -> accept
mgr = SessionManager(AgentSuite.rule(), registry, OrchestratorConfig(await_human=True))
noisy = degrade.apply(clean, sample_instance(K.NOISE, seed=2))
s = mgr.start(noisy, "Please fix this image.", session_id="fx-override")
mgr.advance(s.id)
mgr.advance(s.id)
mgr.human_override(s.id, ACTION_CONTINUE)
mgr.advance(s.id)
mgr.human_override(s.id, ACTION_STOP_ACCEPT)
freeze(s.events, "override.json")
