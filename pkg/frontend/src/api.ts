/**
 * The console's only contact with the world: the gateway's /v1 endpoints.
 * Everything is injected through this interface so tests can run without a
 * server or a DOM.
 */

import type { ApiSession, GatewayEvent } from "./types.js";

export interface ApiError {
  status: number;
  code: string;
  detail?: string;
}

export interface EventStreamHandle {
  close(): void;
}

export interface ApiClient {
  createSession(image: Blob, prompt: string, config?: Record<string, unknown>): Promise<ApiSession | ApiError>;
  getSession(id: string): Promise<ApiSession | ApiError>;
  override(id: string, action: "stop_accept" | "continue"): Promise<ApiSession | ApiError>;
  /** SSE subscription; replays history then follows. Reconnects transparently
   * (a replayed history is idempotent for the reducer). */
  subscribe(id: string, onEvent: (event: GatewayEvent) => void, onEnd: () => void): EventStreamHandle;
}

export const isApiError = (value: ApiSession | ApiError): value is ApiError =>
  (value as ApiError).code !== undefined && (value as ApiError).status !== undefined;

export class HttpApiClient implements ApiClient {
  constructor(private base: string = "") {}

  private async parse(resp: Response): Promise<ApiSession | ApiError> {
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      return { status: resp.status, code: body.code ?? `http_${resp.status}`, detail: body.detail };
    }
    return body as ApiSession;
  }

  async createSession(image: Blob, prompt: string, config?: Record<string, unknown>) {
    const form = new FormData();
    form.append("image", image, "input.png");
    form.append("prompt", prompt);
    if (config) form.append("config", JSON.stringify(config));
    const resp = await fetch(`${this.base}/v1/sessions`, { method: "POST", body: form });
    return this.parse(resp);
  }

  async getSession(id: string) {
    return this.parse(await fetch(`${this.base}/v1/sessions/${id}`));
  }

  async override(id: string, action: "stop_accept" | "continue") {
    const resp = await fetch(`${this.base}/v1/sessions/${id}/override`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action }),
    });
    return this.parse(resp);
  }

  subscribe(id: string, onEvent: (event: GatewayEvent) => void, onEnd: () => void): EventStreamHandle {
    // EventSource reconnects by itself after network loss; the server then
    // replays the whole history, which the reducer renders idempotently.
    const source = new EventSource(`${this.base}/v1/sessions/${id}/events`);
    const handler = (raw: MessageEvent) => {
      const event = JSON.parse(raw.data) as GatewayEvent;
      onEvent(event);
      if (event.type === "done" || event.type === "failed") {
        source.close();
        onEnd();
      }
    };
    for (const type of [
      "received",
      "routed",
      "step",
      "route_demoted",
      "await_human",
      "override",
      "override_cap",
      "stall_guard",
      "budget_exhausted",
      "stalled",
      "human_accept",
      "done",
      "failed",
    ]) {
      source.addEventListener(type, handler as EventListener);
    }
    return { close: () => source.close() };
  }
}
