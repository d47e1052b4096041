"""Deterministic degradation synthesis.

Six parametric recipes (gaussian noise/blur, motion blur, JPEG, HEVC, VVC)
plus parametric stand-ins for the four dataset-sourced distortions
(rainstreak, raindrop, haze, low light), and the hybrid composition pipeline
that chains them. Every rendering is a pure function of
``(input pixels, kind, params, seed)``.

Numeric bounds for the rain/drop/haze/low-light stand-ins and for motion
blur are artifact choices (the real-world counterparts come from paired
datasets that are not redistributed here); the other bounds follow the
recipe ranges used to train against these degradations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import cv2
import numpy as np
from PIL import Image
import io

from . import codecs as codecs_mod
from .codecs import CodecProvider, VALID_QP
from .domain import (
    DistortionInstance,
    DistortionKind,
    DomainError,
    ImageState,
    WEATHER_KINDS,
)
from .rng import derive_seed

PLAN_GENERAL = "general"
PLAN_WEATHER = "weather+"


class ValidationError(DomainError):
    """Recipe parameters outside their allowed range."""


def to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def additive_gaussian(pixels: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add zero-mean gaussian noise so that the realized integer-valued noise
    has variance sigma^2.

    Rounding to uint8 adds ~1/12 quantization variance on top of the draw, so
    we draw with sqrt(sigma^2 - 1/12) (Sheppard's correction); the periodic
    correction terms are negligible for sigma >= ~0.8."""
    if sigma <= 0:
        return pixels.copy()
    var = sigma * sigma - 1.0 / 12.0
    eff = math.sqrt(var) if var > 0 else sigma
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, eff, size=pixels.shape)
    return to_u8(pixels.astype(np.float64) + noise)


# ---------------------------------------------------------------------------
# recipe ranges


@dataclass(frozen=True)
class RecipeRange:
    """Sampling bounds for one distortion kind.

    ``real`` entries sample uniformly in [lo, hi]; ``ints`` uniformly over
    the integer interval; ``choices`` uniformly over a discrete set.
    """

    kind: DistortionKind
    real: tuple[tuple[str, float, float], ...] = ()
    ints: tuple[tuple[str, int, int], ...] = ()
    choices: tuple[tuple[str, tuple[int, ...]], ...] = ()
    # params whose validation lower bound relaxes to 0 (degenerate identity
    # renders are legal even though sampling never produces them)
    zero_ok: tuple[str, ...] = ()

    def sample(self, seed: int) -> DistortionInstance:
        rng = np.random.default_rng(seed)
        params: dict[str, float] = {}
        for name, lo, hi in sorted(self.real):
            params[name] = float(rng.uniform(lo, hi))
        for name, lo, hi in sorted(self.ints):
            params[name] = int(rng.integers(lo, hi + 1))
        for name, options in sorted(self.choices):
            params[name] = int(rng.choice(list(options)))
        return DistortionInstance.make(self.kind, seed=seed, **params)

    def validate(self, inst: DistortionInstance) -> None:
        given = inst.params_dict
        expected = {n for n, *_ in self.real} | {n for n, *_ in self.ints} | {n for n, _ in self.choices}
        missing = expected - set(given)
        extra = set(given) - expected
        if missing or extra:
            raise ValidationError(
                f"{self.kind.value}: bad parameter set (missing {sorted(missing)}, unexpected {sorted(extra)})"
            )
        for name, lo, hi in self.real:
            v = given[name]
            if name in self.zero_ok and v == 0:
                continue
            if not (lo <= v <= hi) and not (name == "angle" and lo <= v < hi):
                raise ValidationError(f"{self.kind.value}.{name}={v} outside [{lo}, {hi}]")
        for name, lo, hi in self.ints:
            v = given[name]
            if v != int(v) or not (lo <= v <= hi):
                raise ValidationError(f"{self.kind.value}.{name}={v} outside integer [{lo}, {hi}]")
        for name, options in self.choices:
            if int(given[name]) not in options:
                raise ValidationError(f"{self.kind.value}.{name}={given[name]} not in {options}")


RECIPES: dict[DistortionKind, RecipeRange] = {
    DistortionKind.NOISE: RecipeRange(DistortionKind.NOISE, real=(("sigma", 15.0, 50.0),), zero_ok=("sigma",)),
    DistortionKind.BLUR: RecipeRange(DistortionKind.BLUR, real=(("sigma", 0.2, 4.0),)),
    DistortionKind.MOTIONBLUR: RecipeRange(
        DistortionKind.MOTIONBLUR, real=(("angle", 0.0, 180.0),), ints=(("length", 7, 21),)
    ),
    DistortionKind.JPEG: RecipeRange(DistortionKind.JPEG, ints=(("quality", 10, 40),)),
    DistortionKind.HEVC: RecipeRange(DistortionKind.HEVC, choices=(("qp", VALID_QP),)),
    DistortionKind.VVC: RecipeRange(DistortionKind.VVC, choices=(("qp", VALID_QP),)),
    DistortionKind.RAINSTREAK: RecipeRange(
        DistortionKind.RAINSTREAK, real=(("density", 0.1, 0.5), ("length", 20.0, 60.0))
    ),
    DistortionKind.RAINDROP: RecipeRange(
        DistortionKind.RAINDROP, real=(("radius", 4.0, 16.0),), ints=(("count", 5, 30),)
    ),
    DistortionKind.HAZE: RecipeRange(
        DistortionKind.HAZE, real=(("transmission", 0.3, 0.8), ("airlight", 180.0, 255.0))
    ),
    DistortionKind.LOWLIGHT: RecipeRange(
        DistortionKind.LOWLIGHT, real=(("gain", 0.1, 0.4), ("gamma", 1.5, 3.0))
    ),
}


def sample_instance(kind: DistortionKind, seed: int) -> DistortionInstance:
    """Draw recipe parameters uniformly within the bounds for ``kind``."""
    try:
        return RECIPES[kind].sample(seed)
    except KeyError:
        raise ValidationError(f"{kind.value} has no sampling recipe") from None


def validate_instance(inst: DistortionInstance) -> None:
    if inst.kind in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT):
        if inst.param("sigma") < 0:
            raise ValidationError(f"{inst.kind.value}.sigma must be >= 0")
        return
    recipe = RECIPES.get(inst.kind)
    if recipe is None:
        raise ValidationError(f"{inst.kind.value} cannot be rendered")
    recipe.validate(inst)


# ---------------------------------------------------------------------------
# per-kind renderers


def _noise(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    return additive_gaussian(px, inst.param("sigma"), derive_seed(inst.seed, "noise"))


def _blur(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    out = np.empty_like(px, dtype=np.float64)
    for c in range(3):
        out[..., c] = gaussian_filter(px[..., c].astype(np.float64), inst.param("sigma"), mode="reflect")
    return to_u8(out)


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Linear motion PSF: a bilinearly-splatted line of the given pixel length
    through the kernel center at the given angle, normalized to sum 1."""
    length = int(length)
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    center = (size - 1) / 2.0
    theta = math.radians(angle_deg)
    dx, dy = math.cos(theta), -math.sin(theta)  # y axis points down in images
    n = max(2 * length, 2)
    ts = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, n)
    xs = center + ts * dx
    ys = center + ts * dy
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    for ox, oy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        gx = np.clip(x0 + ox, 0, size - 1)
        gy = np.clip(y0 + oy, 0, size - 1)
        np.add.at(kernel, (gy, gx), w)
    return kernel / kernel.sum()


def _motionblur(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    kernel = motion_kernel(int(inst.param("length")), inst.param("angle"))
    out = cv2.filter2D(px, ddepth=cv2.CV_64F, kernel=kernel, borderType=cv2.BORDER_REFLECT)
    return to_u8(out)


def _jpeg(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    buf = io.BytesIO()
    Image.fromarray(px).save(buf, format="JPEG", quality=int(inst.param("quality")))
    buf.seek(0)
    return np.asarray(Image.open(buf).convert("RGB"))


def _codec(px: np.ndarray, inst: DistortionInstance, provider: CodecProvider) -> np.ndarray:
    return provider.roundtrip(inst.kind, px, int(inst.param("qp")))


def _rainstreak(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    h, w = px.shape[:2]
    rng = np.random.default_rng(derive_seed(inst.seed, "rainstreak"))
    density = inst.param("density")
    length = inst.param("length")
    count = max(1, int(round(density * h * w / 400.0)))
    base_angle = rng.uniform(75.0, 105.0)  # rain falls roughly downward
    alpha = np.zeros((h, w), dtype=np.float64)
    for _ in range(count):
        x = rng.uniform(0, w)
        y = rng.uniform(0, h)
        ang = math.radians(base_angle + rng.uniform(-4.0, 4.0))
        streak_len = length * rng.uniform(0.7, 1.0)
        strength = rng.uniform(0.3, 0.7)
        n = max(int(streak_len * 2), 2)
        ts = np.linspace(0.0, streak_len, n)
        xs = np.clip(x + ts * math.cos(ang), 0, w - 1).astype(int)
        ys = np.clip(y + ts * math.sin(ang), 0, h - 1).astype(int)
        np.maximum.at(alpha, (ys, xs), strength)
    out = px.astype(np.float64) * (1.0 - alpha[..., None]) + 255.0 * alpha[..., None]
    return to_u8(out)


def _raindrop(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    h, w = px.shape[:2]
    rng = np.random.default_rng(derive_seed(inst.seed, "raindrop"))
    count = int(inst.param("count"))
    base_radius = inst.param("radius")
    out = px.astype(np.float64)
    for _ in range(count):
        r = base_radius * rng.uniform(0.6, 1.0)
        cx = rng.uniform(r, max(r + 1, w - r))
        cy = rng.uniform(r, max(r + 1, h - r))
        x0, x1 = int(max(0, cx - r - 1)), int(min(w, cx + r + 2))
        y0, y1 = int(max(0, cy - r - 1)), int(min(h, cy + r + 2))
        ys, xs = np.mgrid[y0:y1, x0:x1]
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        mask = np.clip(1.0 - d2 / (r * r), 0.0, 1.0)  # soft-edged disc
        alpha = 0.35 * mask
        region = out[y0:y1, x0:x1]
        region *= 1.0 - alpha[..., None]
        region += alpha[..., None] * region.mean(axis=(0, 1)) * 0.45
    return to_u8(out)


def _haze(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    # single-scattering model: observed = scene * t + airlight * (1 - t)
    t = inst.param("transmission")
    a = inst.param("airlight")
    return to_u8(px.astype(np.float64) * t + a * (1.0 - t))


def _lowlight(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    gain = inst.param("gain")
    gamma = inst.param("gamma")
    norm = px.astype(np.float64) / 255.0
    return to_u8(255.0 * gain * np.power(norm, gamma))


def _internal_layer(px: np.ndarray, inst: DistortionInstance) -> np.ndarray:
    return additive_gaussian(px, inst.param("sigma"), derive_seed(inst.seed, inst.kind.value))


def render_pixels(px: np.ndarray, inst: DistortionInstance, provider: CodecProvider | None = None) -> np.ndarray:
    """Render one distortion onto a raw pixel buffer (no provenance update)."""
    validate_instance(inst)
    kind = inst.kind
    if kind is DistortionKind.NOISE:
        return _noise(px, inst)
    if kind is DistortionKind.BLUR:
        return _blur(px, inst)
    if kind is DistortionKind.MOTIONBLUR:
        return _motionblur(px, inst)
    if kind is DistortionKind.JPEG:
        return _jpeg(px, inst)
    if kind in (DistortionKind.HEVC, DistortionKind.VVC):
        return _codec(px, inst, provider or codecs_mod.get_provider())
    if kind is DistortionKind.RAINSTREAK:
        return _rainstreak(px, inst)
    if kind is DistortionKind.RAINDROP:
        return _raindrop(px, inst)
    if kind is DistortionKind.HAZE:
        return _haze(px, inst)
    if kind is DistortionKind.LOWLIGHT:
        return _lowlight(px, inst)
    if kind in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT):
        return _internal_layer(px, inst)
    raise ValidationError(f"{kind.value} cannot be rendered")


def apply(image: ImageState, inst: DistortionInstance, provider: CodecProvider | None = None) -> ImageState:
    """Degrade ``image`` with ``inst``; the provenance stack grows by one."""
    out = render_pixels(image.pixels, inst, provider)
    return image.with_pixels(out, image.stack + (inst,))


def replay(clean_pixels: np.ndarray, stack: Sequence[DistortionInstance], provider: CodecProvider | None = None) -> np.ndarray:
    """Re-render a degradation stack from its clean reference."""
    px = np.asarray(clean_pixels)
    for inst in stack:
        px = render_pixels(px, inst, provider)
    return px


def verify_provenance(image: ImageState, provider: CodecProvider | None = None) -> bool:
    """True when replaying the stack from the clean reference reproduces the
    stored pixels bit-exactly."""
    if image.provenance is None:
        raise DomainError("image carries no provenance")
    replayed = replay(image.provenance.clean, image.stack, provider)
    return bool(np.array_equal(replayed, image.pixels))


# ---------------------------------------------------------------------------
# hybrid plans

_BLUR_FAMILY = (DistortionKind.BLUR, DistortionKind.MOTIONBLUR)
_NOISE_FAMILY = (DistortionKind.NOISE,)
_COMPRESSION_FAMILY = (DistortionKind.JPEG, DistortionKind.HEVC, DistortionKind.VVC)


@dataclass(frozen=True)
class HybridPlan:
    """An ordered multi-distortion recipe.

    ``general`` plans draw from the six synthetic kinds with the staged
    blur-family -> noise-family -> compression-family ordering; ``weather+``
    plans put exactly one rain/drop/haze/low-light distortion first and only
    ever add noise and/or JPEG on top.
    """

    stages: tuple[DistortionInstance, ...]
    klass: str = PLAN_GENERAL

    def __post_init__(self) -> None:
        if len(self.stages) < 2:
            raise DomainError("hybrid plans need at least two stages")
        kinds = [s.kind for s in self.stages]
        weather = [k for k in kinds if k in WEATHER_KINDS]
        if self.klass == PLAN_WEATHER:
            if len(weather) != 1 or kinds[0] not in WEATHER_KINDS:
                raise DomainError("weather+ plans start with exactly one weather/light distortion")
            companions = set(kinds[1:])
            if not companions <= {DistortionKind.NOISE, DistortionKind.JPEG}:
                raise DomainError("weather+ plans only add noise/jpeg companions")
        elif self.klass == PLAN_GENERAL:
            if weather:
                raise DomainError("general plans never contain weather/light distortions")
        else:
            raise DomainError(f"unknown plan class {self.klass!r}")

    @property
    def kinds(self) -> tuple[DistortionKind, ...]:
        return tuple(s.kind for s in self.stages)

    def to_json(self) -> dict[str, Any]:
        return {"class": self.klass, "stages": [s.to_json() for s in self.stages]}

    @staticmethod
    def from_json(obj: Mapping[str, Any]) -> "HybridPlan":
        return HybridPlan(
            stages=tuple(DistortionInstance.from_json(s) for s in obj["stages"]),
            klass=obj.get("class", PLAN_GENERAL),
        )


def plan_from_kinds(kinds: Sequence[DistortionKind], seed: int, klass: str | None = None) -> HybridPlan:
    """Plan with sampled parameters for an explicit kind sequence."""
    stages = tuple(sample_instance(k, derive_seed(seed, "stage", i, k.value)) for i, k in enumerate(kinds))
    if klass is None:
        klass = PLAN_WEATHER if any(k in WEATHER_KINDS for k in kinds) else PLAN_GENERAL
    return HybridPlan(stages=stages, klass=klass)


def sample_hybrid_plan(seed: int, klass: str = PLAN_GENERAL, include_codecs: bool = False) -> HybridPlan:
    """Draw a hybrid plan; identical seeds give identical plans."""
    rng = np.random.default_rng(derive_seed(seed, "plan", klass))
    if klass == PLAN_GENERAL:
        compression = _COMPRESSION_FAMILY if include_codecs else (DistortionKind.JPEG,)
        families = {
            "blur": _BLUR_FAMILY,
            "noise": _NOISE_FAMILY,
            "compression": compression,
        }
        subsets = (("blur", "noise"), ("blur", "compression"), ("noise", "compression"), ("blur", "noise", "compression"))
        chosen = subsets[int(rng.integers(len(subsets)))]
        kinds = [families[f][int(rng.integers(len(families[f])))] for f in chosen]
    elif klass == PLAN_WEATHER:
        weather = WEATHER_KINDS[int(rng.integers(len(WEATHER_KINDS)))]
        companion_sets = ((DistortionKind.NOISE,), (DistortionKind.JPEG,), (DistortionKind.NOISE, DistortionKind.JPEG))
        kinds = [weather, *companion_sets[int(rng.integers(len(companion_sets)))]]
    else:
        raise DomainError(f"unknown plan class {klass!r}")
    return plan_from_kinds(kinds, seed, klass)


def render(clean: ImageState, plan: HybridPlan, provider: CodecProvider | None = None) -> ImageState:
    """Fold the plan's stages over a clean image."""
    if clean.stack:
        raise DomainError("render expects a clean image with an empty stack")
    state = clean
    for inst in plan.stages:
        state = apply(state, inst, provider)
    return state
