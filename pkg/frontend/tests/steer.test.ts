import { describe, expect, it } from "vitest";

import type { ApiClient, ApiError, EventStreamHandle } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import type { ApiSession, GatewayEvent } from "../src/types.js";

import overrideEvents from "../fixtures/override.json";

const override = overrideEvents as GatewayEvent[];

function doneProjection(id: string): ApiSession {
  return {
    id,
    status: "done",
    route: "slow",
    prompt: "Please fix this image.",
    input_ref: "ref-in",
    steps: [],
    final_ref: "ref-final",
    done_reason: "human_accept",
    overrides_used: 0,
    pending_human: false,
    agent_calls: 2,
    ait_ms: 1.0,
    events_count: 6,
  };
}

class FakeApi implements ApiClient {
  overridePosts: Array<{ id: string; action: string }> = [];
  getCalls = 0;
  closed = false;
  overrideResult: ApiSession | ApiError;
  private onEvent: ((event: GatewayEvent) => void) | null = null;

  constructor(result?: ApiSession | ApiError) {
    this.overrideResult = result ?? doneProjection("s1");
  }

  async createSession(): Promise<ApiSession | ApiError> {
    return doneProjection("s1");
  }

  async getSession(id: string): Promise<ApiSession | ApiError> {
    this.getCalls += 1;
    return doneProjection(id);
  }

  async override(id: string, action: "stop_accept" | "continue"): Promise<ApiSession | ApiError> {
    this.overridePosts.push({ id, action });
    return this.overrideResult;
  }

  subscribe(_id: string, onEvent: (event: GatewayEvent) => void): EventStreamHandle {
    this.onEvent = onEvent;
    return { close: () => (this.closed = true) };
  }

  push(event: GatewayEvent): void {
    this.onEvent?.(event);
  }
}

describe("steering", () => {
  it("accept issues exactly one override POST and freezes the timeline", async () => {
    const api = new FakeApi();
    const renders: string[] = [];
    const controller = new SessionController(api, (html) => renders.push(html));
    controller.attach("s1");
    for (const event of override.slice(0, 4)) api.push(event); // up to awaiting_human

    await controller.steer("stop_accept");

    expect(api.overridePosts).toEqual([{ id: "s1", action: "stop_accept" }]);
    expect(api.closed).toBe(true); // subscription closed: no further live updates
    expect(controller.streaming).toBe(false);
    const frozen = renders.at(-1)!;
    expect(frozen).toContain("status-done");
    expect(frozen).not.toContain("steer-accept");

    // a straggler event must not change the rendered timeline
    api.push({ seq: 99, type: "step", ts: 9, payload: { index: 9, agent_ms: 0, feedback_ms: 0 } });
    expect(renders.at(-1)).toBe(frozen);
  });

  it("continue issues exactly one override POST", async () => {
    const running: ApiSession = { ...doneProjection("s1"), status: "running", done_reason: null };
    const api = new FakeApi(running);
    const controller = new SessionController(api, () => {});
    controller.attach("s1");

    await controller.steer("continue");
    await controller.steer("continue");

    expect(api.overridePosts).toEqual([
      { id: "s1", action: "continue" },
      { id: "s1", action: "continue" },
    ]);
    expect(api.closed).toBe(false); // still live
  });

  it("renders a 409 as a status refresh, not an error banner", async () => {
    const conflict: ApiError = { status: 409, code: "wrong_status", detail: "already done" };
    const api = new FakeApi(conflict);
    const renders: string[] = [];
    const controller = new SessionController(api, (html) => renders.push(html));
    controller.attach("s1");

    await controller.steer("continue");

    expect(api.getCalls).toBe(1); // refreshed the projection
    expect(renders.at(-1)).not.toContain("error-banner");
    expect(renders.at(-1)).toContain("status-done");
  });

  it("surfaces submit failures inline with the machine-readable code", async () => {
    const api = new FakeApi();
    api.createSession = async () => ({ status: 400, code: "empty_prompt", detail: "prompt must be non-empty" });
    const renders: string[] = [];
    const controller = new SessionController(api, (html) => renders.push(html));

    const ok = await controller.submit(new Blob([""]), "   ");

    expect(ok).toBe(false);
    expect(renders.at(-1)).toContain("error-banner");
    expect(renders.at(-1)).toContain("empty_prompt");
  });
});
