/**
 * The single reducer all UI state flows through. Folding a recorded event
 * log through `reduceAll` reconstructs exactly what a live subscription
 * would have shown, which is what makes the snapshot tests hermetic.
 */

import type { ApiSession, GatewayEvent, SessionView, StepPayload } from "./types.js";

export const initialView = (): SessionView => ({
  id: null,
  prompt: null,
  status: "running",
  route: "unrouted",
  inputRef: null,
  finalRef: null,
  doneReason: null,
  overridesUsed: 0,
  pendingHuman: false,
  steps: [],
  firstTs: null,
  lastTs: null,
  aitMs: 0,
  terminal: false,
  stallGuardFired: false,
  budgetExhausted: false,
  overrideCapReached: false,
  lastError: null,
});

export function reduce(view: SessionView, event: GatewayEvent): SessionView {
  if (view.terminal) {
    return view; // the timeline is frozen once a terminal event arrived
  }
  const next: SessionView = { ...view, steps: [...view.steps] };
  next.firstTs = view.firstTs ?? event.ts;
  next.lastTs = event.ts;
  const p = event.payload as Record<string, any>;
  switch (event.type) {
    case "received":
      next.id = p.session_id ?? null;
      next.prompt = p.prompt ?? null;
      next.inputRef = p.input_ref ?? null;
      break;
    case "routed":
      next.route = p.route;
      next.aitMs += Number(p.agent_ms ?? 0);
      break;
    case "step": {
      const step = p as StepPayload;
      next.steps.push(step);
      next.aitMs += Number(step.agent_ms ?? 0) + Number(step.feedback_ms ?? 0);
      if (step.failed && step.error) {
        next.lastError = step.error;
      }
      break;
    }
    case "route_demoted":
      next.route = "slow";
      break;
    case "await_human":
      next.status = "awaiting_human";
      next.pendingHuman = true;
      break;
    case "override":
      next.overridesUsed = Number(p.overrides_used ?? next.overridesUsed);
      if (p.action === "continue") {
        next.status = "running";
        next.pendingHuman = false;
        next.route = "slow";
      }
      break;
    case "override_cap":
      next.overrideCapReached = true;
      break;
    case "stall_guard":
      next.stallGuardFired = true;
      break;
    case "budget_exhausted":
      next.budgetExhausted = true;
      break;
    case "done":
      next.status = "done";
      next.doneReason = p.reason ?? null;
      next.finalRef = p.final_ref ?? null;
      next.pendingHuman = false;
      next.terminal = true;
      break;
    case "failed":
      next.status = "failed";
      next.lastError = p.error ?? next.lastError;
      next.pendingHuman = false;
      next.terminal = true;
      break;
    default:
      break; // unknown event types render nothing rather than guesses
  }
  return next;
}

export function reduceAll(events: GatewayEvent[]): SessionView {
  return events.reduce(reduce, initialView());
}

/** Authoritative refresh from GET /v1/sessions/{id} (e.g. after a 409). */
export function fromProjection(projection: ApiSession, previous?: SessionView): SessionView {
  const base = previous ?? initialView();
  return {
    ...base,
    id: projection.id,
    prompt: projection.prompt,
    status: projection.status,
    route: projection.route,
    inputRef: projection.input_ref,
    finalRef: projection.final_ref,
    doneReason: projection.done_reason,
    overridesUsed: projection.overrides_used,
    pendingHuman: projection.pending_human,
    steps: projection.steps,
    aitMs: projection.ait_ms,
    terminal: projection.status === "done" || projection.status === "failed",
  };
}
