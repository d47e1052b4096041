"""Restoration tools: the registry plus its three implementation families.

* ``simulated`` — the degradation-stack simulator, the desk-scale stand-in
  for trained restoration models. It edits the image's provenance stack and
  re-renders from the clean reference, charging quality penalties that model
  distortion entanglement: removing one distortion from a stack that still
  holds others leaves a gaussian residual layer, wrong tools inject artifact
  layers, and the mixed-removal tool clears the whole stack for a single
  small flat residual.
* ``classical`` — demo-grade pixel algorithms (bilateral denoise, unsharp
  deblur, dark-channel dehaze, gain+gamma low-light inversion, deblock) so
  the console shows real pixel changes without any trained model.
* ``remote`` — HTTP clients for real model servers (PNG in, PNG out).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable

import cv2
import httpx
import numpy as np

from . import codecs as codecs_mod
from .codecs import CodecProvider
from .degrade import replay, to_u8
from .domain import (
    DistortionInstance,
    DistortionKind,
    DomainError,
    ImageState,
    ToolId,
)
from .rng import derive_seed

FAMILY_CLASSICAL = "classical"
FAMILY_SIMULATED = "simulated"
FAMILY_REMOTE = "remote"


class ToolError(DomainError):
    """Base class for tool invocation failures."""


class ToolUnavailable(ToolError):
    pass


class RemoteToolError(ToolError):
    def __init__(self, message: str, tool: ToolId, attempts: int):
        super().__init__(message)
        self.tool = tool
        self.attempts = attempts


@dataclass(frozen=True)
class SimulatorConfig:
    """Quality model constants for the stack simulator.

    ``eta_single`` is the residual noise charged per distortion still
    entangled with the one being removed; ``eta_hybrid`` is the flat residual
    of the mixed-removal tool; ``sigma_artifact`` is the damage of invoking a
    tool whose distortion is absent. Haze/low-light stacks are modeled as
    especially fragile: any other single tool touching them injects an
    artifact scaled by ``weather_factor`` (a labeled modeling knob).
    """

    eta_single: float = 2.0
    eta_hybrid: float = 1.0
    sigma_artifact: float = 4.0
    weather_sensitive: bool = True
    weather_factor: float = 2.0

    def __post_init__(self) -> None:
        if not (0 < self.eta_hybrid < self.eta_single <= self.sigma_artifact):
            raise DomainError("simulator constants must satisfy 0 < eta_hybrid < eta_single <= sigma_artifact")

    def fingerprint(self) -> str:
        return (
            f"sim(eta_single={self.eta_single},eta_hybrid={self.eta_hybrid},"
            f"sigma_artifact={self.sigma_artifact},weather={self.weather_sensitive}:{self.weather_factor})"
        )


_FRAGILE = (DistortionKind.HAZE, DistortionKind.LOWLIGHT)


def simulated_step_semantics(
    stack: tuple[DistortionInstance, ...],
    tool: ToolId,
    cfg: SimulatorConfig,
    seed: int,
) -> tuple[DistortionInstance, ...]:
    """Pure stack transform for one simulated tool invocation.

    Originals only ever decrease; residual/artifact layers only ever get
    appended. Residual layers from successive steps are independent, so their
    variances accumulate in quadrature.
    """
    originals = [d for d in stack if d.kind not in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT)]
    internals = [d for d in stack if d.kind in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT)]

    def layer(kind: DistortionKind, sigma: float, label: str) -> DistortionInstance:
        return DistortionInstance.make(kind, seed=derive_seed(seed, label), sigma=sigma)

    if tool is ToolId.DE_HYBRID:
        # mixed removal clears every original in one shot for a small flat cost
        new_internals = internals + [layer(DistortionKind.RESIDUAL, cfg.eta_hybrid, "hybrid")]
        return tuple(new_internals)

    kind = tool.kind
    fragile_present = any(d.kind in _FRAGILE and d.kind is not kind for d in originals)
    appended: list[DistortionInstance] = []
    matched = next((d for d in originals if d.kind is kind), None)
    if matched is not None:
        remaining = [d for d in originals if d is not matched]
        if remaining:
            appended.append(layer(DistortionKind.RESIDUAL, cfg.eta_single * len(remaining), "residual"))
    else:
        remaining = originals
        if not (cfg.weather_sensitive and fragile_present):
            appended.append(layer(DistortionKind.ARTIFACT, cfg.sigma_artifact, "artifact"))
    if cfg.weather_sensitive and fragile_present:
        appended.append(layer(DistortionKind.ARTIFACT, cfg.sigma_artifact * cfg.weather_factor, "fragile"))
    return tuple(remaining) + tuple(internals) + tuple(appended)


class SimulatedTool:
    def __init__(self, tool: ToolId, cfg: SimulatorConfig, provider: CodecProvider | None = None):
        self.tool = tool
        self.cfg = cfg
        self.provider = provider

    def __call__(self, image: ImageState) -> ImageState:
        prov = image.provenance
        if prov is None:
            raise ToolError(f"simulated {self.tool.value} needs an image with degradation provenance")
        seed = derive_seed("sim", self.tool.value, prov.clean_ref, len(prov.stack), *(d.seed for d in prov.stack))
        new_stack = simulated_step_semantics(prov.stack, self.tool, self.cfg, seed)
        provider = self.provider or codecs_mod.get_provider()
        pixels = replay(prov.clean, new_stack, provider)
        return image.with_pixels(pixels, new_stack)


# ---------------------------------------------------------------------------
# classical baselines (demo-grade; no provenance bookkeeping survives them)


def _classical_denoise(px: np.ndarray) -> np.ndarray:
    return cv2.bilateralFilter(px, d=5, sigmaColor=25, sigmaSpace=5)


def _classical_deblur(px: np.ndarray) -> np.ndarray:
    blurred = cv2.GaussianBlur(px.astype(np.float64), (0, 0), 1.5)
    return to_u8(px.astype(np.float64) + 0.8 * (px.astype(np.float64) - blurred))


def _classical_dejpeg(px: np.ndarray) -> np.ndarray:
    return cv2.bilateralFilter(px, d=5, sigmaColor=15, sigmaSpace=3)


def _classical_dehaze(px: np.ndarray) -> np.ndarray:
    # dark channel prior with a global transmission estimate
    img = px.astype(np.float64)
    patch = 15
    dark = cv2.erode(img.min(axis=2), np.ones((patch, patch)))
    flat = dark.ravel()
    count = max(1, flat.size // 1000)
    idx = np.argsort(flat)[-count:]
    airlight = img.reshape(-1, 3)[idx].mean(axis=0)
    airlight = np.maximum(airlight, 1.0)
    norm_dark = cv2.erode((img / airlight).min(axis=2), np.ones((patch, patch)))
    transmission = np.maximum(1.0 - 0.95 * norm_dark, 0.1)
    recovered = (img - airlight) / transmission[..., None] + airlight
    return to_u8(recovered)


def _classical_delowlight(px: np.ndarray) -> np.ndarray:
    # blind gain+gamma inversion: normalize the bright tail, undo a mid-range gamma
    img = px.astype(np.float64)
    hi = max(np.percentile(img, 99.5), 1.0)
    norm = np.clip(img / hi, 0.0, 1.0)
    return to_u8(255.0 * np.power(norm, 1.0 / 2.0))


_CLASSICAL: dict[ToolId, Callable[[np.ndarray], np.ndarray]] = {
    ToolId.DE_NOISE: _classical_denoise,
    ToolId.DE_BLUR: _classical_deblur,
    ToolId.DE_JPEG: _classical_dejpeg,
    ToolId.DE_HAZE: _classical_dehaze,
    ToolId.DE_LOWLIGHT: _classical_delowlight,
}


class ClassicalTool:
    def __init__(self, tool: ToolId):
        if tool not in _CLASSICAL:
            raise ToolUnavailable(f"no classical baseline for {tool.value}")
        self.tool = tool

    def __call__(self, image: ImageState) -> ImageState:
        out = _CLASSICAL[self.tool](image.pixels)
        # classical outputs cannot keep a truthful degradation stack
        return ImageState(pixels=out, provenance=None)


def classical_baseline(tool: ToolId, image: ImageState) -> ImageState:
    return ClassicalTool(tool)(image)


# ---------------------------------------------------------------------------
# remote family


class RemoteToolClient:
    """POSTs PNG bodies to ``{base_url}/restore/{tool}`` with retry/backoff."""

    def __init__(
        self,
        base_url: str,
        timeout_ms: float = 10_000,
        max_attempts: int = 3,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_s: float = 0.05,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_ms / 1000.0
        self.max_attempts = max(1, int(max_attempts))
        self._client = client or httpx.Client(timeout=self.timeout_s)
        self._sleep = sleep
        self._backoff_s = backoff_s

    def restore(self, tool: ToolId, image: ImageState) -> ImageState:
        url = f"{self.base_url}/restore/{tool.value}"
        body = image.png_bytes()
        last_error = "unknown"
        attempts = 0
        for attempt in range(self.max_attempts):
            attempts = attempt + 1
            try:
                resp = self._client.post(url, content=body, headers={"content-type": "image/png"}, timeout=self.timeout_s)
            except httpx.TimeoutException:
                last_error = "timeout"
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code >= 500:
                    last_error = f"status {resp.status_code}"
                elif resp.status_code != 200:
                    raise RemoteToolError(f"{tool.value}: server returned {resp.status_code}", tool, attempts)
                else:
                    out = ImageState.from_png_bytes(resp.content)
                    if (out.width, out.height) != (image.width, image.height):
                        raise RemoteToolError(
                            f"{tool.value}: dimension mismatch {out.width}x{out.height} != {image.width}x{image.height}",
                            tool,
                            attempts,
                        )
                    return out
            if attempt < self.max_attempts - 1:
                self._sleep(self._backoff_s * (2**attempt))
        raise RemoteToolError(f"{tool.value}: {last_error} after {attempts} attempts", tool, attempts)


class RemoteTool:
    def __init__(self, tool: ToolId, client: RemoteToolClient):
        self.tool = tool
        self.client = client

    def __call__(self, image: ImageState) -> ImageState:
        return self.client.restore(self.tool, image)


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ToolEntry:
    tool: ToolId
    family: str
    impl: Callable[[ImageState], ImageState]
    available: bool = True


class ToolRegistry:
    """Total mapping from every ToolId to an implementation."""

    def __init__(self, entries: dict[ToolId, ToolEntry], label: str):
        missing = [t.value for t in ToolId if t not in entries]
        if missing:
            raise DomainError(f"registry must cover all tools; missing {missing}")
        self._entries = dict(entries)
        self.label = label

    def entry(self, tool: ToolId) -> ToolEntry:
        return self._entries[tool]

    def family(self, tool: ToolId) -> str:
        return self._entries[tool].family

    def available(self, tool: ToolId) -> bool:
        return self._entries[tool].available

    def invoke(self, tool: ToolId, image: ImageState) -> ImageState:
        entry = self._entries[tool]
        if not entry.available:
            raise ToolUnavailable(f"{tool.value} is disabled in registry {self.label!r}")
        return entry.impl(image)

    def restricted(self, exclude: set[ToolId], label: str | None = None) -> "ToolRegistry":
        entries = {
            t: (replace(e, available=False) if t in exclude else e) for t, e in self._entries.items()
        }
        return ToolRegistry(entries, label or f"{self.label}-restricted")

    def fingerprint(self) -> str:
        fams = ",".join(f"{t.value}:{e.family}{'' if e.available else '!'}" for t, e in sorted(self._entries.items()))
        return f"{self.label}[{fams}]"


def simulated_registry(cfg: SimulatorConfig | None = None, provider: CodecProvider | None = None) -> ToolRegistry:
    cfg = cfg or SimulatorConfig()
    entries = {t: ToolEntry(t, FAMILY_SIMULATED, SimulatedTool(t, cfg, provider)) for t in ToolId}
    return ToolRegistry(entries, label=f"simulated|{cfg.fingerprint()}")


def classical_registry(cfg: SimulatorConfig | None = None, provider: CodecProvider | None = None) -> ToolRegistry:
    """Classical algorithms where they exist, simulated fallback elsewhere."""
    cfg = cfg or SimulatorConfig()
    entries: dict[ToolId, ToolEntry] = {}
    for t in ToolId:
        if t in _CLASSICAL:
            entries[t] = ToolEntry(t, FAMILY_CLASSICAL, ClassicalTool(t))
        else:
            entries[t] = ToolEntry(t, FAMILY_SIMULATED, SimulatedTool(t, cfg, provider))
    return ToolRegistry(entries, label="classical+simulated")


def remote_registry(client: RemoteToolClient) -> ToolRegistry:
    entries = {t: ToolEntry(t, FAMILY_REMOTE, RemoteTool(t, client)) for t in ToolId}
    return ToolRegistry(entries, label=f"remote|{client.base_url}")
