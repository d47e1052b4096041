/**
 * Session controller: owns one event subscription per open session view,
 * funnels every update through the reducer, and re-renders. Steering posts
 * overrides; a 409 means the session moved on, so the projection is
 * re-fetched instead of surfacing an error toast.
 */

import { isApiError, type ApiClient, type EventStreamHandle } from "./api.js";
import { fromProjection, initialView, reduce } from "./reducer.js";
import type { GatewayEvent, SessionView, UiState } from "./types.js";
import { initialUi } from "./types.js";
import { render } from "./view.js";

export class SessionController {
  view: SessionView = initialView();
  ui: UiState = initialUi();
  private stream: EventStreamHandle | null = null;
  private sessionId: string | null = null;

  constructor(
    private api: ApiClient,
    private onRender: (html: string) => void = () => {},
  ) {}

  private paint(): void {
    this.onRender(render(this.view, this.ui));
  }

  handleEvent = (event: GatewayEvent): void => {
    this.view = reduce(this.view, event);
    this.paint();
  };

  private endStream = (): void => {
    this.stream = null;
  };

  attach(sessionId: string): void {
    this.sessionId = sessionId;
    this.stream?.close();
    this.view = initialView();
    this.stream = this.api.subscribe(sessionId, this.handleEvent, this.endStream);
  }

  async submit(image: Blob, prompt: string, config?: Record<string, unknown>): Promise<boolean> {
    const result = await this.api.createSession(image, prompt, config);
    if (isApiError(result)) {
      this.ui = { ...this.ui, errorCode: result.code, errorDetail: result.detail ?? null };
      this.paint();
      return false;
    }
    this.ui = initialUi();
    if (result.id) this.attach(result.id);
    this.paint();
    return true;
  }

  /** One override POST per call; terminal outcomes freeze the timeline. */
  async steer(action: "stop_accept" | "continue"): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.api.override(this.sessionId, action);
    if (isApiError(result)) {
      if (result.status === 409) {
        await this.refresh(); // stale button state, not an error
      } else {
        this.ui = { ...this.ui, errorCode: result.code, errorDetail: result.detail ?? null };
        this.paint();
      }
      return;
    }
    this.view = fromProjection(result, this.view);
    if (this.view.terminal) {
      this.stream?.close();
      this.stream = null;
    }
    this.paint();
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.api.getSession(this.sessionId);
    if (!isApiError(result)) {
      this.view = fromProjection(result, this.view);
      this.paint();
    }
  }

  compare(stepIndex: number): void {
    this.ui = { ...this.ui, compareStep: stepIndex, dividerPct: 50 };
    this.paint();
  }

  setDivider(pct: number): void {
    this.ui = { ...this.ui, dividerPct: Math.max(0, Math.min(100, pct)) };
    this.paint();
  }

  markBlobMissing(ref: string): void {
    if (!this.ui.missingBlobs.includes(ref)) {
      this.ui = { ...this.ui, missingBlobs: [...this.ui.missingBlobs, ref] };
      this.paint();
    }
  }

  retryBlob(): void {
    this.ui = { ...this.ui, missingBlobs: [] };
    this.paint();
  }

  get streaming(): boolean {
    return this.stream !== null;
  }
}
