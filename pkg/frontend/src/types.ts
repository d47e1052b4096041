/** Wire types mirrored from the gateway's /v1 surface. */

export interface GatewayEvent {
  seq: number;
  type: string;
  ts: number;
  payload: Record<string, unknown>;
}

export interface VotePayload {
  k: number;
  votes: string[];
  winner: string;
  tie_broken: boolean;
}

export interface StepPayload {
  index: number;
  source: string;
  tool: string | null;
  votes: VotePayload | null;
  pre_ref: string | null;
  post_ref: string | null;
  clean: boolean | null;
  agent_ms: number;
  tool_ms: number;
  feedback_ms: number;
  psnr_db: number | string | null;
  ssim: number | null;
  improved: boolean | null;
  failed: boolean;
  error: string | null;
}

/** ApiSession: the session projection served by GET /v1/sessions/{id}. */
export interface ApiSession {
  id: string | null;
  status: string;
  route: string;
  prompt: string | null;
  input_ref: string | null;
  steps: StepPayload[];
  final_ref: string | null;
  done_reason: string | null;
  overrides_used: number;
  pending_human: boolean;
  agent_calls: number;
  ait_ms: number;
  events_count: number;
}

export const OVERRIDE_CAP = 2;

/**
 * Client-side session view: everything above plus fields derived purely
 * from received events (badges, verdict chips, elapsed timers). Never
 * fabricates verdicts; every field traces back to /v1 data.
 */
export interface SessionView {
  id: string | null;
  prompt: string | null;
  status: string;
  route: string;
  inputRef: string | null;
  finalRef: string | null;
  doneReason: string | null;
  overridesUsed: number;
  pendingHuman: boolean;
  steps: StepPayload[];
  firstTs: number | null;
  lastTs: number | null;
  aitMs: number;
  terminal: boolean;
  stallGuardFired: boolean;
  budgetExhausted: boolean;
  overrideCapReached: boolean;
  lastError: string | null;
}

/** Transient UI state kept outside the event-sourced view. */
export interface UiState {
  compareStep: number | null;
  dividerPct: number;
  errorCode: string | null;
  errorDetail: string | null;
  missingBlobs: string[];
}

export const initialUi = (): UiState => ({
  compareStep: null,
  dividerPct: 50,
  errorCode: null,
  errorDetail: null,
  missingBlobs: [],
});
