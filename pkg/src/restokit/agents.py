"""The three agent contracts and their backends.

* FastAgent: prompt triage — direct requests name a removable distortion and
  map straight to a tool; everything else is ambiguous and falls through to
  the slow route. Backends: rule lexicon, oracle (ground-truth tags), remote.
* SlowAgent: distortion identification with majority voting over k candidate
  decisions. Backends: oracle (reads provenance), stochastic stub (for
  voting statistics), remote.
* FeedbackAgent: clean/not-clean verdicts with the restoration history as
  context. Backends: oracle, stub, remote.

Every error path fails safe: classification errors become Ambiguous and
feedback errors become not-clean, never a fabricated Direct/clean.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .domain import (
    USER_KINDS,
    DistortionKind,
    DomainError,
    ImageState,
    ToolId,
    canonical_min,
    tool_for_kind,
)
from .rng import derive_seed

# ---------------------------------------------------------------------------
# instruction text templates (byte-exact contract with the dataset builders)

SLOWAGENT_USER = "[User: {question}<image>.]"
SLOWAGENT_ASSISTANT = "[Assistant: DISTORTION: {type}. CALL: de-{type} tool.]"
FEEDBACK_USER = "[User: This is a restored image.<image> RESTORATION HISTORY: {history}. Is it clean now?]"
FEEDBACK_YES = "[Assistant: Yes. CALL: END.]"
FEEDBACK_NO = "[Assistant: No. CALL: SlowAgent.]"

QUESTION_BANK: tuple[str, ...] = (
    "What is the distortion type of this image?",
    "What kind of distortion is present in this image?",
    "What type of image distortion can be observed here?",
    "What distortion effect is visible in this image?",
    "Can you identify the distortion in this image?",
    "What is the nature of the distortion in this image?",
    "What type of distortion has affected this image?",
    "What form of distortion is evident in this image?",
    "How is this image distorted?",
    "What kind of image distortion does this show?",
    "What kind of visual distortion is in this image?",
    "What distortion does this image exhibit?",
    "What is the specific distortion type in this image?",
    "How is this image distorted visually?",
    "What kind of alteration or distortion appears in this image?",
    "What type of distortion can be seen in this image?",
    "What image distortion effect is noticeable here?",
    "What is the distortion pattern in this image?",
    "Can you describe the distortion present in this image?",
    "What distortion characteristic is evident in this image?",
)


def render_slow_user(question: str) -> str:
    return SLOWAGENT_USER.format(question=question)


def render_slow_assistant(kind: DistortionKind) -> str:
    return SLOWAGENT_ASSISTANT.format(type=kind.value)


def render_history(history: Sequence[ToolId]) -> str:
    return ", ".join(t.value for t in history) if history else "none"


def render_feedback_user(history: Sequence[ToolId]) -> str:
    return FEEDBACK_USER.format(history=render_history(history))


def render_feedback_assistant(clean: bool) -> str:
    return FEEDBACK_YES if clean else FEEDBACK_NO


# ---------------------------------------------------------------------------
# decision types

OUTCOME_DIRECT = "direct"
OUTCOME_AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class PromptClassification:
    outcome: str
    tool: ToolId | None = None
    confidence: float = 1.0
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.outcome not in (OUTCOME_DIRECT, OUTCOME_AMBIGUOUS):
            raise DomainError(f"bad outcome {self.outcome!r}")
        if self.outcome == OUTCOME_DIRECT and self.tool is None:
            raise DomainError("direct classification must carry a tool")
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError("confidence must lie in [0, 1]")

    @property
    def direct(self) -> bool:
        return self.outcome == OUTCOME_DIRECT

    @staticmethod
    def direct_to(tool: ToolId, confidence: float = 1.0, rationale: str = "") -> "PromptClassification":
        return PromptClassification(OUTCOME_DIRECT, tool, confidence, rationale)

    @staticmethod
    def ambiguous(rationale: str = "", confidence: float = 1.0) -> "PromptClassification":
        return PromptClassification(OUTCOME_AMBIGUOUS, None, confidence, rationale)


def majority(votes: Sequence[DistortionKind]) -> tuple[DistortionKind, bool]:
    """Most frequent kind; ties broken by canonical order."""
    counts = Counter(votes)
    top = max(counts.values())
    leaders = [k for k, c in counts.items() if c == top]
    return canonical_min(leaders), len(leaders) > 1


@dataclass(frozen=True)
class VoteSet:
    k: int
    votes: tuple[DistortionKind, ...]
    winner: DistortionKind
    tie_broken: bool

    def __post_init__(self) -> None:
        if self.k < 1 or self.k % 2 == 0:
            raise DomainError("vote count k must be odd and >= 1")
        if len(self.votes) != self.k:
            raise DomainError(f"expected exactly {self.k} votes, got {len(self.votes)}")
        winner, tie = majority(self.votes)
        if winner is not self.winner or tie != self.tie_broken:
            raise DomainError("winner/tie flag inconsistent with votes")

    @staticmethod
    def from_votes(votes: Sequence[DistortionKind]) -> "VoteSet":
        winner, tie = majority(votes)
        return VoteSet(k=len(votes), votes=tuple(votes), winner=winner, tie_broken=tie)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "votes": [v.value for v in self.votes],
            "winner": self.winner.value,
            "tie_broken": self.tie_broken,
        }


NEXT_END = "END"
NEXT_SLOWAGENT = "CALL_SLOWAGENT"


@dataclass(frozen=True)
class FeedbackVerdict:
    clean: bool
    history_seen: tuple[ToolId, ...] = ()
    rationale: str = ""

    @property
    def next(self) -> str:
        return NEXT_END if self.clean else NEXT_SLOWAGENT

    def to_json(self) -> dict:
        return {
            "clean": self.clean,
            "next": self.next,
            "history": [t.value for t in self.history_seen],
        }


class IdentificationError(DomainError):
    """SlowAgent could not gather a usable majority of votes."""


# ---------------------------------------------------------------------------
# FastAgent backends

# Phrase lexicon for the rule backend. Longest phrases are matched (and
# blanked) first so e.g. "motion blur" never double-counts as "blur";
# matches respect word boundaries so "blurs the scene" does not hit "blur".
LEXICON: dict[DistortionKind, tuple[str, ...]] = {
    DistortionKind.NOISE: ("grain", "grainy", "speckles", "random spots", "noise", "noisy"),
    DistortionKind.BLUR: ("gaussian blur", "out of focus", "defocus", "blurry", "blurred", "blur", "unsharp", "soft focus"),
    DistortionKind.MOTIONBLUR: ("motion blur", "camera shake", "motion streaks", "shaky", "smeared by movement", "ghosting trails", "moving camera"),
    DistortionKind.JPEG: ("jpeg", "jpg", "blocky", "block artifacts", "compression blocks", "8x8 blocks"),
    DistortionKind.HEVC: ("hevc", "h.265", "h265", "hm compression", "hm encoder"),
    DistortionKind.VVC: ("vvc", "h.266", "h266", "vtm compression", "vtm encoder", "versatile video coding"),
    DistortionKind.RAINSTREAK: ("rain streaks", "rainstreak", "streaks of rain", "rain lines", "rainy streaks", "rain"),
    DistortionKind.RAINDROP: ("raindrops", "raindrop", "droplets", "water drops", "drops on the lens", "water beads"),
    DistortionKind.HAZE: ("haze", "hazy", "fog", "foggy", "mist", "smog", "haze-free"),
    DistortionKind.LOWLIGHT: ("low light", "low-light", "underexposed", "too dark", "dim", "brighten", "night shot", "poorly lit"),
    DistortionKind.HYBRID: ("hybrid distortion", "mixed distortions", "multiple distortions", "several distortions"),
}

_PHRASES: list[tuple[str, DistortionKind]] = sorted(
    ((phrase, kind) for kind, phrases in LEXICON.items() for phrase in phrases),
    key=lambda pk: -len(pk[0]),
)


class FastBackend(Protocol):
    def classify(self, prompt: str) -> PromptClassification: ...


class RuleFastBackend:
    """Curated keyword/phrase lexicon; a unique lexicon hit is Direct."""

    def classify(self, prompt: str) -> PromptClassification:
        text = prompt.lower()
        hits: list[DistortionKind] = []
        for phrase, kind in _PHRASES:
            pattern = r"(?<!\w)" + re.escape(phrase) + r"(?!\w)"
            if re.search(pattern, text):
                text = re.sub(pattern, " ", text)
                if kind not in hits:
                    hits.append(kind)
        if len(hits) == 1:
            return PromptClassification.direct_to(tool_for_kind(hits[0]), rationale=f"lexicon: {hits[0].value}")
        if not hits:
            return PromptClassification.ambiguous(rationale="no lexicon match")
        return PromptClassification.ambiguous(rationale=f"multiple kinds matched: {[k.value for k in hits]}")


class OracleFastBackend:
    """Classification by ground-truth tags attached to a prompt corpus."""

    def __init__(self, tags: dict[str, ToolId | None]):
        self._tags = dict(tags)

    def classify(self, prompt: str) -> PromptClassification:
        if prompt not in self._tags:
            return PromptClassification.ambiguous(rationale="prompt not in oracle corpus")
        tool = self._tags[prompt]
        if tool is None:
            return PromptClassification.ambiguous(rationale="tagged ambiguous")
        return PromptClassification.direct_to(tool, rationale="oracle tag")


class RemoteFastBackend:
    def __init__(self, base_url: str, client: httpx.Client | None = None, threshold: float = 0.8, timeout_s: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.threshold = threshold
        self._client = client or httpx.Client(timeout=timeout_s)

    def classify(self, prompt: str) -> PromptClassification:
        try:
            resp = self._client.post(f"{self.base_url}/agent/fast", json={"prompt": prompt})
            resp.raise_for_status()
            data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            return PromptClassification.ambiguous(rationale=f"backend error: {exc}")
        confidence = float(data.get("confidence", 1.0))
        tool_name = data.get("tool")
        if not tool_name and "text" in data:
            # completion-style reply: scan for a de-<type> token
            match = re.search(r"\bde-[a-z]+\b", str(data["text"]))
            if match:
                tool_name = match.group(0)
                data.setdefault("outcome", OUTCOME_DIRECT)
        if data.get("outcome") == OUTCOME_DIRECT and tool_name and confidence >= self.threshold:
            try:
                return PromptClassification.direct_to(ToolId(tool_name), confidence, rationale="remote")
            except ValueError:
                return PromptClassification.ambiguous(rationale=f"remote returned unknown tool {tool_name!r}")
        return PromptClassification.ambiguous(confidence=confidence, rationale="remote")


def fast_classify(prompt: str, backend: FastBackend) -> PromptClassification:
    if not prompt or not prompt.strip():
        raise DomainError("prompt must be non-empty")
    return backend.classify(prompt)


# ---------------------------------------------------------------------------
# SlowAgent backends

MODE_FULL = "full"
MODE_SINGLE_ONLY = "single_only"


def true_kind(image: ImageState, mode: str = MODE_FULL) -> DistortionKind:
    """Ground-truth identification from provenance.

    ``full``: two or more source distortions read as the mixed kind.
    ``single_only``: name the most recently applied source distortion, so
    repeated calls peel a stack in reverse application order.
    """
    originals = image.originals()
    if not originals:
        # nothing identifiable; only reachable with adversarial feedback
        return DistortionKind.HYBRID if mode == MODE_FULL else DistortionKind.NOISE
    if mode == MODE_SINGLE_ONLY:
        return originals[-1].kind
    return DistortionKind.HYBRID if len(originals) >= 2 else originals[0].kind


class SlowBackend(Protocol):
    def votes(self, image: ImageState, k: int, seed: int) -> list[DistortionKind]: ...


class OracleSlowBackend:
    def __init__(self, mode: str = MODE_FULL):
        if mode not in (MODE_FULL, MODE_SINGLE_ONLY):
            raise DomainError(f"unknown oracle mode {mode!r}")
        self.mode = mode

    def votes(self, image: ImageState, k: int, seed: int) -> list[DistortionKind]:
        if image.provenance is None:
            raise IdentificationError("oracle identification needs provenance")
        return [true_kind(image, self.mode)] * k

    def identify(self, image: ImageState) -> DistortionKind:
        return true_kind(image, self.mode)


class StubSlowBackend:
    """Returns the true kind with probability p, otherwise a per-query
    confusion kind drawn uniformly from the other user-facing kinds (a
    consistent mistake, the way a misled identifier repeats itself)."""

    def __init__(self, p: float, mode: str = MODE_FULL):
        if not 0.0 <= p <= 1.0:
            raise DomainError("stub accuracy p must lie in [0, 1]")
        self.p = p
        self.mode = mode

    def votes(self, image: ImageState, k: int, seed: int) -> list[DistortionKind]:
        truth = true_kind(image, self.mode)
        rng = np.random.default_rng(derive_seed(seed, "stub-votes"))
        others = [kind for kind in USER_KINDS if kind is not truth]
        confusion = others[int(rng.integers(len(others)))]
        return [truth if rng.random() < self.p else confusion for _ in range(k)]


class RemoteSlowBackend:
    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout_s: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout_s)

    def _one_vote(self, image_ref: str) -> DistortionKind | None:
        for _ in range(2):  # one retry per sample, then the sample is dropped
            try:
                resp = self._client.post(f"{self.base_url}/agent/slow", json={"image_ref": image_ref})
                resp.raise_for_status()
                return DistortionKind(resp.json()["kind"])
            except (httpx.HTTPError, ValueError, KeyError):
                continue
        return None

    def votes(self, image: ImageState, k: int, seed: int) -> list[DistortionKind]:
        collected = [v for v in (self._one_vote(image.content_ref) for _ in range(k)) if v is not None]
        if len(collected) < (k + 1) // 2:
            raise IdentificationError(f"only {len(collected)}/{k} identification samples obtained")
        return collected


def slow_identify(image: ImageState, k: int, backend: SlowBackend, seed: int = 0) -> VoteSet:
    if k < 1 or k % 2 == 0:
        raise DomainError("vote count k must be odd and >= 1")
    votes = backend.votes(image, k, seed)
    return VoteSet.from_votes(votes)


# ---------------------------------------------------------------------------
# FeedbackAgent backends


class FeedbackBackend(Protocol):
    def assess(self, image: ImageState, history: Sequence[ToolId]) -> FeedbackVerdict: ...


class OracleFeedbackBackend:
    """Clean iff no source degradations remain; residual layers are the
    "relatively clean" allowance and are ignored."""

    def assess(self, image: ImageState, history: Sequence[ToolId]) -> FeedbackVerdict:
        if image.provenance is None:
            return FeedbackVerdict(clean=False, history_seen=tuple(history), rationale="no provenance; fail-safe not-clean")
        clean = not image.originals()
        return FeedbackVerdict(clean=clean, history_seen=tuple(history), rationale="oracle stack inspection")


class StubFeedbackBackend:
    """Fixed or probabilistic verdicts; ``always_clean=False`` is the
    adversarial never-terminating reviewer used in safety tests."""

    def __init__(self, always_clean: bool | None = None, clean_prob: float | None = None, seed: int = 0):
        self.always_clean = always_clean
        self.clean_prob = clean_prob
        self.seed = seed
        self._calls = 0

    def assess(self, image: ImageState, history: Sequence[ToolId]) -> FeedbackVerdict:
        if self.always_clean is not None:
            return FeedbackVerdict(clean=self.always_clean, history_seen=tuple(history), rationale="stub fixed")
        self._calls += 1
        rng = np.random.default_rng(derive_seed(self.seed, "stub-feedback", self._calls))
        return FeedbackVerdict(clean=bool(rng.random() < (self.clean_prob or 0.0)), history_seen=tuple(history), rationale="stub random")


class RemoteFeedbackBackend:
    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout_s: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout_s)

    def assess(self, image: ImageState, history: Sequence[ToolId]) -> FeedbackVerdict:
        payload = {
            "image_ref": image.content_ref,
            "history": [t.value for t in history],
            "prompt": render_feedback_user(list(history)),
        }
        try:
            resp = self._client.post(f"{self.base_url}/agent/feedback", json=payload)
            resp.raise_for_status()
            data = resp.json()
            if "clean" in data:
                clean = bool(data["clean"])
            else:
                text = str(data.get("text", ""))
                if text.startswith("[Assistant: Yes"):
                    clean = True
                elif text.startswith("[Assistant: No"):
                    clean = False
                else:
                    raise ValueError(f"unparseable feedback reply {text!r}")
        except (httpx.HTTPError, ValueError) as exc:
            # fail safe: keep restoring (bounded by the orchestrator's max_steps)
            return FeedbackVerdict(clean=False, history_seen=tuple(history), rationale=f"backend error: {exc}")
        return FeedbackVerdict(clean=clean, history_seen=tuple(history), rationale="remote")


def feedback_assess(image: ImageState, history: Sequence[ToolId], backend: FeedbackBackend) -> FeedbackVerdict:
    return backend.assess(image, history)


# ---------------------------------------------------------------------------
# suite wiring


@dataclass
class AgentSuite:
    """The agent trio an orchestrator runs against."""

    fast: FastBackend
    slow: SlowBackend
    feedback: FeedbackBackend
    vote_k: int = 5
    label: str = "custom"

    @staticmethod
    def oracle(prompt_tags: dict[str, ToolId | None] | None = None, vote_k: int = 5, slow_mode: str = MODE_FULL) -> "AgentSuite":
        fast: FastBackend = OracleFastBackend(prompt_tags) if prompt_tags is not None else RuleFastBackend()
        return AgentSuite(
            fast=fast,
            slow=OracleSlowBackend(slow_mode),
            feedback=OracleFeedbackBackend(),
            vote_k=vote_k,
            label=f"oracle/{slow_mode}",
        )

    @staticmethod
    def rule(vote_k: int = 5) -> "AgentSuite":
        return AgentSuite(
            fast=RuleFastBackend(),
            slow=OracleSlowBackend(MODE_FULL),
            feedback=OracleFeedbackBackend(),
            vote_k=vote_k,
            label="rule",
        )
