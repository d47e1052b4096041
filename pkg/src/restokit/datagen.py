"""Builders for the identification and feedback instruction corpora and the
user-prompt corpus.

All emitted text is byte-exact against the templates in :mod:`agents`; counts
scale linearly from the full-size corpus layout (5k records per single
distortion + 20k hybrid for identification; 30k clean + 33k not-clean for
feedback; 220 prompts). Images are synthesized on the fly from a clean pool
with square crops between 224 and 784 px and rotation/flip augmentation, and
every output PNG embeds its degradation provenance for label auditing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import cv2
import numpy as np

from . import degrade
from .agents import (
    QUESTION_BANK,
    render_feedback_assistant,
    render_feedback_user,
    render_slow_assistant,
    render_slow_user,
)
from .codecs import CodecProvider
from .degrade import PLAN_GENERAL, PLAN_WEATHER, plan_from_kinds, sample_hybrid_plan, sample_instance
from .domain import (
    SINGLE_KINDS,
    WEATHER_KINDS,
    DistortionKind,
    DomainError,
    ImageState,
    ToolId,
    tool_for_kind,
)
from .rng import derive_seed
from .tools import ToolRegistry

MIN_CROP = 224
MAX_CROP = 784

# full-scale corpus layout
SLOW_SINGLE_COUNT = 5000
SLOW_WEATHER_HYBRID_COUNT = 2000  # per weather kind
SLOW_GENERAL_HYBRID_COUNT = 12000
FEEDBACK_CLEAN_CORRECT = 2500  # per single kind
FEEDBACK_CLEAN_HYBRID_TOOL = 2500
FEEDBACK_CLEAN_SINGLE_BY_HYBRID = 2500
FEEDBACK_NOTCLEAN_WRONG_TOOL = 8000
FEEDBACK_NOTCLEAN_PARTIAL = 2500  # per single tool

PROMPTS_PER_KIND = 20
AMBIGUOUS_PROMPTS = 20


class PoolError(DomainError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    scale: float = 1.0
    seed: int = 0
    out_dir: str = "corpus"
    min_crop: int = MIN_CROP
    max_crop: int = MAX_CROP
    augment: bool = True
    include_codecs: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.scale <= 1.0:
            raise DomainError("scale must lie in (0, 1]")

    def count(self, full: int) -> int:
        return max(1, round(full * self.scale))


@dataclass(frozen=True)
class InstructionRecord:
    image_path: str
    user_text: str
    assistant_text: str
    category: str
    seed: int

    def to_json(self) -> dict[str, Any]:
        return {
            "image_path": self.image_path,
            "user_text": self.user_text,
            "assistant_text": self.assistant_text,
            "category": self.category,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# clean pools


def synthetic_pool(n: int, seed: int = 0, side_range: tuple[int, int] = (256, 320)) -> list[ImageState]:
    """Smooth, mid-range synthetic clean images (low-frequency color fields).

    Pixel values stay inside [40, 215] so additive layers in later stages
    rarely clip.
    """
    images = []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(seed, "pool", i))
        side = int(rng.integers(side_range[0], side_range[1] + 1))
        coarse = rng.uniform(0.0, 1.0, size=(6, 6, 3))
        img = cv2.resize(coarse, (side, side), interpolation=cv2.INTER_CUBIC)
        yy, xx = np.mgrid[0:side, 0:side] / side
        img[..., 0] += 0.25 * xx
        img[..., 1] += 0.25 * yy
        img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
        images.append(ImageState((40 + img * 175).astype(np.uint8)))
    return images


def load_pool(directory: str | Path) -> list[ImageState]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise PoolError(f"no PNG images found in {directory}")
    return [ImageState.load_png(str(p)) for p in paths]


def _pick(pool: Sequence[ImageState], i: int, total: int) -> ImageState:
    """Even sampling: a linear map from record index onto the pool, reusing
    images (with distinct seeds) when the pool is smaller than the quota."""
    return pool[(i * len(pool)) // max(total, 1)]


def _crop_augment(image: ImageState, spec: CorpusSpec, seed: int) -> ImageState:
    rng = np.random.default_rng(seed)
    h, w = image.height, image.width
    max_side = min(spec.max_crop, h, w)
    if max_side < spec.min_crop:
        raise PoolError(f"pool image {w}x{h} smaller than the minimum crop {spec.min_crop}")
    side = int(rng.integers(spec.min_crop, max_side + 1))
    y0 = int(rng.integers(0, h - side + 1))
    x0 = int(rng.integers(0, w - side + 1))
    out = image.pixels[y0 : y0 + side, x0 : x0 + side]
    if spec.augment:
        out = np.rot90(out, k=int(rng.integers(4)))
        if rng.random() < 0.5:
            out = out[:, ::-1]
        if rng.random() < 0.5:
            out = out[::-1, :]
    return ImageState(np.ascontiguousarray(out))


# ---------------------------------------------------------------------------
# identification corpus


def _write_image(image: ImageState, out: Path) -> str:
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rel = f"images/{image.content_ref}.png"
    path = out / rel
    if not path.exists():
        with open(path, "wb") as fh:
            fh.write(image.png_bytes())
    return rel


def _write_manifest(records: Iterable[InstructionRecord], path: Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def _question_for(seed: int) -> str:
    rng = np.random.default_rng(derive_seed(seed, "question"))
    return QUESTION_BANK[int(rng.integers(len(QUESTION_BANK)))]


def build_slowagent_corpus(
    spec: CorpusSpec,
    pool: Sequence[ImageState],
    provider: CodecProvider | None = None,
) -> list[InstructionRecord]:
    """Identification corpus: per-kind singles plus weather and general hybrids."""
    if not pool:
        raise PoolError("clean pool is empty")
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records: list[InstructionRecord] = []

    def add(category: str, index: int, plan_kinds: list[DistortionKind] | None, klass: str | None, label_kind: DistortionKind) -> None:
        seed = derive_seed(spec.seed, "slow", category, index)
        base = _crop_augment(_pick(pool, index, _category_total(category)), spec, derive_seed(seed, "crop"))
        if plan_kinds is None:
            plan = sample_hybrid_plan(seed, PLAN_GENERAL, include_codecs=spec.include_codecs)
            degraded = degrade.render(base, plan, provider)
        elif len(plan_kinds) == 1:
            degraded = degrade.apply(base, sample_instance(plan_kinds[0], derive_seed(seed, "inst")), provider)
        else:
            degraded = degrade.render(base, plan_from_kinds(plan_kinds, seed, klass), provider)
        records.append(
            InstructionRecord(
                image_path=_write_image(degraded, out),
                user_text=render_slow_user(_question_for(seed)),
                assistant_text=render_slow_assistant(label_kind),
                category=category,
                seed=seed,
            )
        )

    def _category_total(category: str) -> int:
        if category.startswith("single/"):
            return spec.count(SLOW_SINGLE_COUNT)
        if category.startswith("hybrid/general"):
            return spec.count(SLOW_GENERAL_HYBRID_COUNT)
        return spec.count(SLOW_WEATHER_HYBRID_COUNT)

    for kind in SINGLE_KINDS:
        for i in range(spec.count(SLOW_SINGLE_COUNT)):
            add(f"single/{kind.value}", i, [kind], None, kind)

    companions = ((DistortionKind.NOISE,), (DistortionKind.JPEG,), (DistortionKind.NOISE, DistortionKind.JPEG))
    for weather in WEATHER_KINDS:
        for i in range(spec.count(SLOW_WEATHER_HYBRID_COUNT)):
            seed = derive_seed(spec.seed, "slow", f"hybrid/{weather.value}", i, "companions")
            rng = np.random.default_rng(seed)
            kinds = [weather, *companions[int(rng.integers(len(companions)))]]
            add(f"hybrid/{weather.value}", i, kinds, PLAN_WEATHER, DistortionKind.HYBRID)

    for i in range(spec.count(SLOW_GENERAL_HYBRID_COUNT)):
        add("hybrid/general", i, None, None, DistortionKind.HYBRID)

    _write_manifest(records, out / "slowagent.jsonl")
    return records


# ---------------------------------------------------------------------------
# feedback corpus


def build_feedback_corpus(
    spec: CorpusSpec,
    pool: Sequence[ImageState],
    registry: ToolRegistry,
    provider: CodecProvider | None = None,
) -> list[InstructionRecord]:
    """Clean / not-clean verdict corpus.

    Restored images are produced by actually invoking registry tools per the
    five case definitions: clean = correctly restored single, hybrid restored
    by the mixed tool, or single restored by the mixed tool; not clean =
    single restored by a wrong tool, or hybrid restored by a single tool.
    """
    if not pool:
        raise PoolError("clean pool is empty")
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records: list[InstructionRecord] = []

    def make_single(seed: int, kind: DistortionKind, index: int, total: int) -> ImageState:
        base = _crop_augment(_pick(pool, index, total), spec, derive_seed(seed, "crop"))
        return degrade.apply(base, sample_instance(kind, derive_seed(seed, "inst")), provider)

    def make_hybrid(seed: int, index: int, total: int) -> ImageState:
        base = _crop_augment(_pick(pool, index, total), spec, derive_seed(seed, "crop"))
        rng = np.random.default_rng(derive_seed(seed, "klass"))
        klass = PLAN_WEATHER if rng.random() < 0.5 else PLAN_GENERAL
        plan = sample_hybrid_plan(seed, klass, include_codecs=spec.include_codecs)
        return degrade.render(base, plan, provider)

    def add(category: str, restored: ImageState, tool: ToolId, clean: bool, seed: int) -> None:
        records.append(
            InstructionRecord(
                image_path=_write_image(restored, out),
                user_text=render_feedback_user([tool]),
                assistant_text=render_feedback_assistant(clean),
                category=category,
                seed=seed,
            )
        )

    # clean (i): single distortion restored by its correct tool
    n = spec.count(FEEDBACK_CLEAN_CORRECT)
    for kind in SINGLE_KINDS:
        for i in range(n):
            seed = derive_seed(spec.seed, "fb", "clean_correct", kind.value, i)
            tool = tool_for_kind(kind)
            restored = registry.invoke(tool, make_single(seed, kind, i, n))
            add(f"clean_correct/{kind.value}", restored, tool, True, seed)

    # clean (ii): hybrid restored by the mixed-removal tool
    n = spec.count(FEEDBACK_CLEAN_HYBRID_TOOL)
    for i in range(n):
        seed = derive_seed(spec.seed, "fb", "clean_hybrid_tool", i)
        restored = registry.invoke(ToolId.DE_HYBRID, make_hybrid(seed, i, n))
        add("clean_hybrid_tool", restored, ToolId.DE_HYBRID, True, seed)

    # clean (iii): single distortion restored by the mixed-removal tool
    n = spec.count(FEEDBACK_CLEAN_SINGLE_BY_HYBRID)
    for i in range(n):
        seed = derive_seed(spec.seed, "fb", "clean_single_by_hybrid", i)
        kind = SINGLE_KINDS[int(np.random.default_rng(seed).integers(len(SINGLE_KINDS)))]
        restored = registry.invoke(ToolId.DE_HYBRID, make_single(seed, kind, i, n))
        add("clean_single_by_hybrid", restored, ToolId.DE_HYBRID, True, seed)

    # not clean (i): single distortion restored with an incorrect single tool
    n = spec.count(FEEDBACK_NOTCLEAN_WRONG_TOOL)
    for i in range(n):
        seed = derive_seed(spec.seed, "fb", "notclean_wrong_tool", i)
        rng = np.random.default_rng(seed)
        kind = SINGLE_KINDS[int(rng.integers(len(SINGLE_KINDS)))]
        wrong_choices = [t for t in map(tool_for_kind, SINGLE_KINDS) if t.kind is not kind]
        tool = wrong_choices[int(rng.integers(len(wrong_choices)))]
        restored = registry.invoke(tool, make_single(seed, kind, i, n))
        add("notclean_wrong_tool", restored, tool, False, seed)

    # not clean (ii): hybrid restored with a single tool, per tool
    n = spec.count(FEEDBACK_NOTCLEAN_PARTIAL)
    for kind in SINGLE_KINDS:
        tool = tool_for_kind(kind)
        for i in range(n):
            seed = derive_seed(spec.seed, "fb", "notclean_partial", kind.value, i)
            restored = registry.invoke(tool, make_hybrid(seed, i, n))
            add(f"notclean_partial/{tool.value}", restored, tool, False, seed)

    _write_manifest(records, out / "feedback.jsonl")
    return records


# ---------------------------------------------------------------------------
# user prompt corpus

# verbatim examples from the published prompt table (typographic apostrophes
# normalized to ASCII)
_VERBATIM_DIRECT: dict[DistortionKind, tuple[str, ...]] = {
    DistortionKind.NOISE: (
        "Please remove the grain from this image.",
        "The speckles in this photo need to be cleared up.",
        "Please fix the random spots in this image.",
    ),
    DistortionKind.HEVC: (
        "Can you reduce the H.265 artifacts to improve the picture's clarity?",
        "The HM compression makes the image look rough; can you fix it?",
        "Can you remove the HEVC artifacts for a clearer image?",
    ),
    DistortionKind.HAZE: (
        "Please reduce the haze that blurs the scene.",
        "I'd prefer the photo to be haze-free for better contrast.",
        "I'd like the image to look vibrant, free from the dull haze.",
    ),
}

_VERBATIM_AMBIGUOUS: tuple[str, ...] = (
    "Please fix this image.",
    "This image does not look good, please help me.",
    "Can you help me enhance this image?",
)

_DIRECT_TEMPLATES: tuple[str, ...] = (
    "Please remove the {x} from this image.",
    "Could you clean up the {x} in this photo?",
    "This picture suffers from {x}; can you restore it?",
    "Get rid of the {x} so the image looks natural again.",
    "I need the {x} removed from this shot.",
    "Would you mind clearing the {x} out of this image?",
    "The {x} is ruining this photo; please address exactly that.",
    "Help me eliminate the {x} in this picture.",
    "Can you suppress the {x} here?",
    "There is obvious {x} in this image. Please remove it.",
)

_KIND_PHRASES: dict[DistortionKind, tuple[str, ...]] = {
    DistortionKind.NOISE: ("grain", "speckles", "sensor noise"),
    DistortionKind.BLUR: ("gaussian blur", "out of focus softness", "blurry smearing"),
    DistortionKind.MOTIONBLUR: ("motion blur", "camera shake", "motion streaks"),
    DistortionKind.JPEG: ("jpeg artifacts", "blocky compression", "jpg artifacts"),
    DistortionKind.HEVC: ("hevc artifacts", "h.265 blocking", "hm compression artifacts"),
    DistortionKind.VVC: ("vvc artifacts", "h.266 blocking", "vtm compression artifacts"),
    DistortionKind.RAINSTREAK: ("rain streaks", "streaks of rain", "rain lines"),
    DistortionKind.RAINDROP: ("raindrops", "water drops", "droplets"),
    DistortionKind.HAZE: ("haze", "dull haze", "mist"),
    DistortionKind.LOWLIGHT: ("low light", "underexposed darkness", "dim exposure"),
}

_AMBIGUOUS_FILLERS: tuple[str, ...] = (
    "Make this picture look better.",
    "Something is wrong with this photo; please restore it.",
    "Improve the overall quality of this image.",
    "This shot came out badly. Can you repair it?",
    "Please make this image presentable.",
    "Clean this picture up for me.",
    "I am not happy with how this image looks.",
    "Could you touch this photo up?",
    "Restore this image to a better state.",
    "Give this picture a quality boost.",
    "Help, this image turned out poorly.",
    "Do whatever it takes to make this image look right.",
    "The quality of this photo bothers me. Please sort it out.",
    "Can this image be salvaged?",
    "Please process this image so it looks acceptable.",
    "Make it look the way it should.",
    "This photo needs work. Please handle it.",
)


@dataclass(frozen=True)
class PromptRecord:
    text: str
    label: str  # direct | ambiguous
    tool: ToolId | None
    kind: DistortionKind | None

    def to_json(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "label": self.label,
            "tool": self.tool.value if self.tool else None,
            "kind": self.kind.value if self.kind else None,
        }


def build_prompt_corpus(seed: int = 0) -> list[PromptRecord]:
    """220 tagged user prompts: 20 direct per single kind + 20 ambiguous."""
    records: list[PromptRecord] = []
    for kind in SINGLE_KINDS:
        texts: list[str] = list(_VERBATIM_DIRECT.get(kind, ()))
        candidates = [t.format(x=p) for p in _KIND_PHRASES[kind] for t in _DIRECT_TEMPLATES]
        rng = np.random.default_rng(derive_seed(seed, "prompts", kind.value))
        order = rng.permutation(len(candidates))
        for idx in order:
            if len(texts) >= PROMPTS_PER_KIND:
                break
            if candidates[idx] not in texts:
                texts.append(candidates[idx])
        if len(texts) != PROMPTS_PER_KIND:
            raise DomainError(f"could not assemble {PROMPTS_PER_KIND} prompts for {kind.value}")
        tool = tool_for_kind(kind)
        records.extend(PromptRecord(t, "direct", tool, kind) for t in texts)
    ambiguous = list(_VERBATIM_AMBIGUOUS) + list(_AMBIGUOUS_FILLERS)
    if len(ambiguous) != AMBIGUOUS_PROMPTS:
        raise DomainError("ambiguous prompt list must have exactly 20 entries")
    records.extend(PromptRecord(t, "ambiguous", None, None) for t in ambiguous)
    return records


def write_prompt_corpus(records: Sequence[PromptRecord], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "prompts.jsonl"
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    return path


def prompt_tags(records: Sequence[PromptRecord]) -> dict[str, ToolId | None]:
    """Ground-truth map used by the oracle FastAgent backend."""
    return {r.text: r.tool for r in records}


# ---------------------------------------------------------------------------
# byte-exactness audit

_QUESTION_ALT = "|".join(re.escape(q) for q in QUESTION_BANK)
SLOW_USER_RE = re.compile(r"^\[User: (?:" + _QUESTION_ALT + r")<image>\.\]$")
SLOW_ASSISTANT_RE = re.compile(
    r"^\[Assistant: DISTORTION: (noise|blur|motionblur|jpeg|hevc|vvc|rainstreak|raindrop|haze|lowlight|hybrid)\. "
    r"CALL: de-\1 tool\.\]$"
)
FEEDBACK_USER_RE = re.compile(
    r"^\[User: This is a restored image\.<image> RESTORATION HISTORY: "
    r"(none|de-[a-z]+(?:, de-[a-z]+)*)\. Is it clean now\?\]$"
)
FEEDBACK_ASSISTANT_RE = re.compile(r"^\[Assistant: (Yes\. CALL: END|No\. CALL: SlowAgent)\.\]$")


def audit_records(records: Sequence[InstructionRecord], corpus: str) -> list[str]:
    """Return descriptions of any template violations (empty = fully exact)."""
    user_re = SLOW_USER_RE if corpus == "slow" else FEEDBACK_USER_RE
    assistant_re = SLOW_ASSISTANT_RE if corpus == "slow" else FEEDBACK_ASSISTANT_RE
    problems = []
    for i, rec in enumerate(records):
        if not user_re.match(rec.user_text):
            problems.append(f"record {i}: user text off-template: {rec.user_text!r}")
        if not assistant_re.match(rec.assistant_text):
            problems.append(f"record {i}: assistant text off-template: {rec.assistant_text!r}")
    return problems
