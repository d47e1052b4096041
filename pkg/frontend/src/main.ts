/** Browser bootstrap: form wiring, render mounting, swipe-divider drags. */

import { HttpApiClient } from "./api.js";
import { SessionController } from "./controller.js";

const mount = document.getElementById("session")!;
const form = document.getElementById("submit-form") as HTMLFormElement;
const fileInput = document.getElementById("image") as HTMLInputElement;
const promptInput = document.getElementById("prompt") as HTMLInputElement;

const controller = new SessionController(new HttpApiClient(), (html) => {
  mount.innerHTML = html;
});

form.addEventListener("submit", async (ev) => {
  ev.preventDefault();
  const file = fileInput.files?.[0];
  const prompt = promptInput.value;
  if (!file || !prompt.trim()) return;
  await controller.submit(file, prompt);
});

let dragging = false;

mount.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const stepAttr = target.getAttribute("data-step");
  if (target.classList.contains("compare-btn") && stepAttr) {
    controller.compare(Number(stepAttr));
  } else if (target.classList.contains("retry-btn")) {
    controller.retryBlob();
  } else if (target.classList.contains("steer-accept")) {
    void controller.steer("stop_accept");
  } else if (target.classList.contains("steer-continue") && !(target as HTMLButtonElement).disabled) {
    void controller.steer("continue");
  } else if (target.classList.contains("zoom-btn")) {
    document.querySelector(".compare")?.classList.toggle("zoom-1x");
  }
});

mount.addEventListener("pointerdown", (ev) => {
  if ((ev.target as HTMLElement).closest(".swipe")) {
    dragging = true;
  }
});

window.addEventListener("pointerup", () => {
  dragging = false;
});

window.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const swipe = document.querySelector(".swipe");
  if (!swipe) return;
  const rect = swipe.getBoundingClientRect();
  controller.setDivider(((ev.clientX - rect.left) / rect.width) * 100);
});

mount.addEventListener(
  "error",
  (ev) => {
    const target = ev.target as HTMLElement;
    if (target.tagName === "IMG") {
      const src = (target as HTMLImageElement).src;
      const ref = src.split("/v1/images/")[1];
      if (ref) controller.markBlobMissing(ref);
    }
  },
  true,
);
