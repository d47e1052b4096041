/**
 * Pure HTML rendering: (SessionView, UiState) -> string. No DOM access, no
 * clocks, no randomness, so identical inputs always yield identical markup.
 * Elapsed timers derive from event timestamps, not the wall clock.
 */

import type { SessionView, StepPayload, UiState } from "./types.js";
import { OVERRIDE_CAP, initialUi } from "./types.js";

const esc = (value: unknown): string =>
  String(value ?? "")
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

export const imageUrl = (ref: string): string => `/v1/images/${ref}`;

const fmtMs = (ms: number): string => `${ms.toFixed(1)} ms`;

const fmtPsnr = (value: number | string | null): string =>
  value === null ? "" : value === "inf" ? "∞ dB" : `${Number(value).toFixed(2)} dB`;

function routeBadge(view: SessionView): string {
  const label = view.route === "fast" ? "Fast" : view.route === "slow" ? "Slow" : "Unrouted";
  return `<span class="badge route-${esc(view.route)}">${label}</span>`;
}

function statusChip(view: SessionView): string {
  const extra = view.doneReason ? ` (${esc(view.doneReason)})` : "";
  return `<span class="chip status-${esc(view.status)}">${esc(view.status)}${extra}</span>`;
}

function verdictChip(step: StepPayload): string {
  if (step.failed) return `<span class="chip verdict-failed">failed</span>`;
  if (step.clean === null) return `<span class="chip verdict-none">no verdict</span>`;
  return step.clean
    ? `<span class="chip verdict-clean">clean</span>`
    : `<span class="chip verdict-notclean">not clean</span>`;
}

function votesPopover(step: StepPayload): string {
  if (!step.votes) return "";
  const items = step.votes.votes.map((v) => `<li>${esc(v)}</li>`).join("");
  const tie = step.votes.tie_broken ? " (tie broken canonically)" : "";
  return `<details class="votes"><summary>${step.votes.k} votes → ${esc(step.votes.winner)}${tie}</summary><ol>${items}</ol></details>`;
}

function stepRow(step: StepPayload, view: SessionView): string {
  const pair =
    step.pre_ref && step.post_ref
      ? `<span class="pair"><img class="thumb" alt="before step ${step.index}" src="${imageUrl(step.pre_ref)}"><img class="thumb" alt="after step ${step.index}" src="${imageUrl(step.post_ref)}"></span>`
      : "";
  const compare =
    step.pre_ref && step.post_ref
      ? `<button class="compare-btn" data-step="${step.index}">compare</button>`
      : "";
  const metrics = step.psnr_db !== null ? `<span class="step-metrics">${fmtPsnr(step.psnr_db)}${step.ssim !== null ? ` / ${step.ssim.toFixed(4)}` : ""}</span>` : "";
  const error = step.failed && step.error ? `<span class="step-error">${esc(step.error)}</span>` : "";
  const timing = `<span class="timers">agent ${fmtMs(step.agent_ms)} · tool ${fmtMs(step.tool_ms)} · feedback ${fmtMs(step.feedback_ms)}</span>`;
  return `<li class="step" data-index="${step.index}">
    <span class="step-head">#${step.index} <span class="badge source-${esc(step.source)}">${esc(step.source)}</span> <code>${esc(step.tool ?? "—")}</code> ${verdictChip(step)}</span>
    ${votesPopover(step)}
    ${pair}${metrics}${timing}${error}${compare}
  </li>`;
}

function comparePanel(view: SessionView, ui: UiState): string {
  if (ui.compareStep === null) return "";
  const step = view.steps.find((s) => s.index === ui.compareStep);
  if (!step || !step.pre_ref || !step.post_ref) return "";
  const missing = ui.missingBlobs.includes(step.pre_ref) || ui.missingBlobs.includes(step.post_ref);
  if (missing) {
    return `<section class="compare"><p class="placeholder">image unavailable <button class="retry-btn" data-step="${step.index}">retry</button></p></section>`;
  }
  // overlay only when ground truth produced metrics; hidden, never zeroed
  const overlay =
    step.psnr_db !== null
      ? `<div class="overlay">PSNR ${fmtPsnr(step.psnr_db)}${step.ssim !== null ? ` · SSIM ${step.ssim.toFixed(4)}` : ""}</div>`
      : "";
  const pct = Math.max(0, Math.min(100, ui.dividerPct));
  return `<section class="compare" data-step="${step.index}">
    <div class="swipe" data-divider="${pct}">
      <img class="after" alt="after" src="${imageUrl(step.post_ref)}">
      <div class="before-clip" style="width:${pct}%"><img class="before" alt="before" src="${imageUrl(step.pre_ref)}"></div>
      <div class="divider" style="left:${pct}%"></div>
    </div>
    ${overlay}
    <button class="zoom-btn" data-step="${step.index}">1:1</button>
  </section>`;
}

function steerButtons(view: SessionView): string {
  if (view.terminal) return ""; // accept hidden once done
  const accept = `<button class="steer-accept" data-action="stop_accept">accept result</button>`;
  const continueAllowed = view.overridesUsed < OVERRIDE_CAP && !view.overrideCapReached;
  const cont = continueAllowed
    ? `<button class="steer-continue" data-action="continue">continue restoring</button>`
    : `<button class="steer-continue" data-action="continue" disabled title="override cap reached">continue restoring</button>`;
  return `<div class="steer">${accept}${cont}</div>`;
}

export function render(view: SessionView, ui: UiState = initialUi()): string {
  const elapsed = view.firstTs !== null && view.lastTs !== null ? `${(view.lastTs - view.firstTs).toFixed(1)} s` : "—";
  const banner = ui.errorCode
    ? `<div class="error-banner"><code>${esc(ui.errorCode)}</code> ${esc(ui.errorDetail ?? "")}</div>`
    : "";
  const notes = [
    view.stallGuardFired ? `<span class="note">stall guard forced de-hybrid</span>` : "",
    view.budgetExhausted ? `<span class="note">step budget exhausted</span>` : "",
    view.pendingHuman ? `<span class="note">waiting for your decision</span>` : "",
  ].join("");
  const final =
    view.finalRef && view.terminal
      ? `<figure class="final"><img alt="final result" src="${imageUrl(view.finalRef)}"><figcaption>final result</figcaption></figure>`
      : "";
  return `<article class="session" data-id="${esc(view.id ?? "")}">
  ${banner}
  <header>
    ${routeBadge(view)} ${statusChip(view)}
    <span class="prompt">${esc(view.prompt ?? "")}</span>
    <span class="elapsed">elapsed ${elapsed}</span>
    <span class="ait">A.I.T. ${fmtMs(view.aitMs)}</span>
    ${notes}
  </header>
  <ol class="timeline">${view.steps.map((s) => stepRow(s, view)).join("")}</ol>
  ${comparePanel(view, ui)}
  ${steerButtons(view)}
  ${final}
</article>`;
}
