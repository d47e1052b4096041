"""Core value types shared by every other module: the distortion taxonomy,
tool identifiers, image states with degradation provenance, and quality
reports.

All types here are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Iterator, Mapping

import numpy as np
from PIL import Image, PngImagePlugin

MIN_SIDE = 32

PROVENANCE_PNG_KEY = "restokit-provenance"


class DomainError(ValueError):
    """Base class for domain validation failures."""


class DistortionKind(str, Enum):
    """The distortion taxonomy.

    The declaration order is the canonical order used for deterministic
    tie-breaking everywhere.  ``RESIDUAL`` and ``ARTIFACT`` are internal to
    the restoration simulator (imperfect-removal and wrong-tool damage
    layers) and never appear as user-facing distortions.
    """

    NOISE = "noise"
    BLUR = "blur"
    MOTIONBLUR = "motionblur"
    JPEG = "jpeg"
    HEVC = "hevc"
    VVC = "vvc"
    RAINSTREAK = "rainstreak"
    RAINDROP = "raindrop"
    HAZE = "haze"
    LOWLIGHT = "lowlight"
    HYBRID = "hybrid"
    RESIDUAL = "residual"
    ARTIFACT = "artifact"

    @property
    def order(self) -> int:
        return _CANONICAL_ORDER[self]

    @property
    def user_facing(self) -> bool:
        return self not in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT)

    def __str__(self) -> str:  # serializes as the bare lowercase name
        return self.value


_CANONICAL_ORDER: dict[DistortionKind, int] = {k: i for i, k in enumerate(DistortionKind)}

#: The 10 single user-facing kinds, canonical order.
SINGLE_KINDS: tuple[DistortionKind, ...] = tuple(
    k for k in DistortionKind if k.user_facing and k is not DistortionKind.HYBRID
)

#: All 11 user-facing kinds (singles + hybrid), canonical order.
USER_KINDS: tuple[DistortionKind, ...] = tuple(k for k in DistortionKind if k.user_facing)

#: Kinds the simulator appends internally.
INTERNAL_KINDS: tuple[DistortionKind, ...] = (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT)

#: Weather/light kinds: intrinsically real-world distortions that only ever
#: combine with noise/jpeg in hybrid plans.
WEATHER_KINDS: tuple[DistortionKind, ...] = (
    DistortionKind.RAINSTREAK,
    DistortionKind.RAINDROP,
    DistortionKind.HAZE,
    DistortionKind.LOWLIGHT,
)


def canonical_min(kinds: Iterator[DistortionKind] | list[DistortionKind]) -> DistortionKind:
    """First kind in canonical order; the deterministic tie-break rule."""
    return min(kinds, key=lambda k: k.order)


class ToolId(str, Enum):
    """Restoration tool identifiers, one per user-facing kind (``de-<kind>``)."""

    DE_NOISE = "de-noise"
    DE_BLUR = "de-blur"
    DE_MOTIONBLUR = "de-motionblur"
    DE_JPEG = "de-jpeg"
    DE_HEVC = "de-hevc"
    DE_VVC = "de-vvc"
    DE_RAINSTREAK = "de-rainstreak"
    DE_RAINDROP = "de-raindrop"
    DE_HAZE = "de-haze"
    DE_LOWLIGHT = "de-lowlight"
    DE_HYBRID = "de-hybrid"

    def __str__(self) -> str:
        return self.value

    @property
    def kind(self) -> DistortionKind:
        """The distortion kind this tool removes."""
        return DistortionKind(self.value[3:])


SINGLE_TOOLS: tuple[ToolId, ...] = tuple(t for t in ToolId if t is not ToolId.DE_HYBRID)


def tool_for_kind(kind: DistortionKind) -> ToolId:
    """Map a user-facing distortion kind to its restoration tool id."""
    if not kind.user_facing:
        raise DomainError(f"no tool exists for simulator-internal kind {kind.value!r}")
    return ToolId(f"de-{kind.value}")


def parse_tool(name: str) -> ToolId:
    try:
        return ToolId(name)
    except ValueError:
        raise DomainError(f"unknown tool id {name!r}") from None


@dataclass(frozen=True)
class DistortionInstance:
    """One concrete degradation: a kind, its recipe parameters, and the seed
    that makes its rendering bit-reproducible.
    """

    kind: DistortionKind
    params: tuple[tuple[str, float], ...]
    seed: int = 0

    @staticmethod
    def make(kind: DistortionKind, seed: int = 0, **params: float) -> "DistortionInstance":
        return DistortionInstance(kind=kind, params=tuple(sorted(params.items())), seed=int(seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def params_dict(self) -> dict[str, float]:
        return dict(self.params)

    def param(self, name: str) -> float:
        for key, value in self.params:
            if key == name:
                return value
        raise KeyError(f"{self.kind.value} instance has no parameter {name!r}")

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": self.params_dict, "seed": self.seed}

    @staticmethod
    def from_json(obj: Mapping[str, Any]) -> "DistortionInstance":
        return DistortionInstance.make(DistortionKind(obj["kind"]), seed=int(obj.get("seed", 0)), **obj.get("params", {}))

    def __repr__(self) -> str:
        ps = ", ".join(f"{k}={v:g}" for k, v in self.params)
        return f"<{self.kind.value}({ps}) seed={self.seed}>"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.uint8)
    out.flags.writeable = False
    return out


def pixel_hash(pixels: np.ndarray) -> str:
    """Content hash of a raw RGB buffer (dimension-aware, codec-independent)."""
    h = hashlib.sha256()
    h.update(b"rgb8")
    h.update(np.array(pixels.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(pixels).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class Provenance:
    """Ground truth carried by synthesized images: the clean reference pixels
    and the ordered degradation stack that produced the current buffer.
    """

    clean: np.ndarray
    stack: tuple[DistortionInstance, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "clean", _freeze(self.clean))

    @cached_property
    def clean_ref(self) -> str:
        return pixel_hash(self.clean)

    def originals(self) -> tuple[DistortionInstance, ...]:
        """Stack entries that are source degradations (not simulator layers)."""
        return tuple(d for d in self.stack if d.kind not in INTERNAL_KINDS)

    def to_json(self, embed_clean: bool = True) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "version": 1,
            "clean_ref": self.clean_ref,
            "stack": [d.to_json() for d in self.stack],
        }
        if embed_clean:
            buf = io.BytesIO()
            Image.fromarray(self.clean).save(buf, format="PNG")
            obj["clean_png"] = base64.b64encode(buf.getvalue()).decode("ascii")
        return obj

    @staticmethod
    def from_json(obj: Mapping[str, Any]) -> "Provenance":
        if "clean_png" not in obj:
            raise DomainError("provenance record does not embed its clean reference")
        clean = np.asarray(Image.open(io.BytesIO(base64.b64decode(obj["clean_png"]))).convert("RGB"))
        prov = Provenance(clean=clean, stack=tuple(DistortionInstance.from_json(d) for d in obj["stack"]))
        want = obj.get("clean_ref")
        if want and prov.clean_ref != want:
            raise DomainError("provenance clean reference hash mismatch")
        return prov


@dataclass(frozen=True)
class ImageState:
    """An 8-bit RGB image, optionally carrying its degradation provenance."""

    pixels: np.ndarray
    provenance: Provenance | None = None

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise DomainError(f"expected HxWx3 RGB buffer, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise DomainError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise DomainError(f"image sides must be >= {MIN_SIDE}, got {px.shape[1]}x{px.shape[0]}")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def stack(self) -> tuple[DistortionInstance, ...]:
        return self.provenance.stack if self.provenance is not None else ()

    def originals(self) -> tuple[DistortionInstance, ...]:
        return self.provenance.originals() if self.provenance is not None else ()

    @property
    def clean_pixels(self) -> np.ndarray | None:
        return self.provenance.clean if self.provenance is not None else None

    @cached_property
    def content_ref(self) -> str:
        """Content address: sha256 of the canonical PNG encoding."""
        return hashlib.sha256(self.png_bytes()).hexdigest()

    def png_bytes(self, embed_provenance: bool = True) -> bytes:
        """Canonical PNG encoding; provenance rides along in a text chunk so a
        saved image round-trips with its ground truth intact."""
        cached = self.__dict__.get("_png_cache")
        if cached is not None and cached[0] == embed_provenance:
            return cached[1]
        buf = io.BytesIO()
        info = PngImagePlugin.PngInfo()
        if embed_provenance and self.provenance is not None:
            info.add_text(PROVENANCE_PNG_KEY, json.dumps(self.provenance.to_json(), sort_keys=True))
        Image.fromarray(self.pixels).save(buf, format="PNG", pnginfo=info)
        data = buf.getvalue()
        self.__dict__["_png_cache"] = (embed_provenance, data)
        return data

    @staticmethod
    def from_png_bytes(data: bytes) -> "ImageState":
        img = Image.open(io.BytesIO(data))
        text = getattr(img, "text", {}) or {}
        pixels = np.asarray(img.convert("RGB"))
        prov = None
        if PROVENANCE_PNG_KEY in text:
            prov = Provenance.from_json(json.loads(text[PROVENANCE_PNG_KEY]))
        return ImageState(pixels=pixels, provenance=prov)

    def save_png(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.png_bytes())

    @staticmethod
    def load_png(path: str) -> "ImageState":
        with open(path, "rb") as fh:
            return ImageState.from_png_bytes(fh.read())

    def with_pixels(self, pixels: np.ndarray, stack: tuple[DistortionInstance, ...]) -> "ImageState":
        """New state sharing this image's clean reference but a fresh buffer/stack."""
        clean = self.clean_pixels if self.provenance is not None else self.pixels
        return ImageState(pixels=pixels, provenance=Provenance(clean=clean, stack=stack))


@dataclass(frozen=True)
class QualityReport:
    """Full-reference quality numbers for one restored/clean pair."""

    psnr_db: float
    ssim: float
    steps: int = 0
    wall_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.steps < 0 or self.wall_ms < 0:
            raise DomainError("steps and wall_ms must be non-negative")

    def to_json(self) -> dict[str, Any]:
        return {
            "psnr_db": "inf" if math.isinf(self.psnr_db) else round(self.psnr_db, 6),
            "ssim": round(self.ssim, 6),
            "steps": self.steps,
            "wall_ms": self.wall_ms,
        }
