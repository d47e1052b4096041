"""Drive restoration sessions through the routing state machine.

A direct prompt rides the fast route (one classification, one tool call); a
vague prompt goes through the slow identify -> restore -> assess loop with
majority voting.

Run:  python demos/02_restoration_session.py
"""

from restokit import degrade
from restokit.agents import AgentSuite
from restokit.datagen import synthetic_pool
from restokit.degrade import plan_from_kinds, sample_instance
from restokit.domain import DistortionKind as K
from restokit.metrics import serialize_metric
from restokit.orchestrator import OrchestratorConfig, SessionManager
from restokit.tools import simulated_registry


def show(session):
    print(f"  route={session.route}  status={session.status}  reason={session.done_reason}")
    for step in session.steps:
        votes = f" votes={[v.value for v in step.votes.votes]}" if step.votes else ""
        clean = "" if step.feedback is None else f" clean={step.feedback.clean}"
        psnr = "" if step.psnr_db is None else f" psnr={serialize_metric(round(step.psnr_db, 2) if step.psnr_db != float('inf') else step.psnr_db)}"
        print(f"  step {step.index}: [{step.source}] {step.tool.value}{votes}{clean}{psnr}")
    print(f"  agent calls: {session.agent_call_count()}   A.I.T.: {session.ait_ms():.2f} ms\n")


clean = synthetic_pool(1, seed=1, side_range=(96, 96))[0]
manager = SessionManager(AgentSuite.rule(), simulated_registry(), OrchestratorConfig(vote_k=5))

print("1) direct prompt on a noisy image -> fast route")
noisy = degrade.apply(clean, sample_instance(K.NOISE, seed=5))
s = manager.start(noisy, "Please remove the grain from this image.", session_id="demo-fast")
manager.run_to_completion(s.id)
show(s)

print("2) vague prompt on a blur+noise+jpeg mixture -> slow route, mixed tool")
mixed = degrade.render(clean, plan_from_kinds([K.BLUR, K.NOISE, K.JPEG], seed=9))
s = manager.start(mixed, "Please fix this image.", session_id="demo-slow")
manager.run_to_completion(s.id)
show(s)

print("3) event log replay reconstructs the session projection")
from restokit.orchestrator import project

assert manager.projection("demo-slow") == project(s.events)
print("  replay exact: True")
