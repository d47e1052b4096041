from __future__ import annotations

import collections
import hashlib
import json
from pathlib import Path

import pytest

from restokit import datagen
from restokit.agents import RuleFastBackend
from restokit.datagen import (
    CorpusSpec,
    PoolError,
    audit_records,
    build_feedback_corpus,
    build_prompt_corpus,
    build_slowagent_corpus,
    prompt_tags,
    write_prompt_corpus,
)
from restokit.domain import SINGLE_KINDS, DistortionKind, DomainError, ImageState, ToolId

K = DistortionKind

SCALE = 0.002  # desk-scale corpus for module tests; 0.01 runs in acceptance


@pytest.fixture(scope="module")
def small_spec(tmp_path_factory):
    return CorpusSpec(scale=SCALE, seed=7, out_dir=str(tmp_path_factory.mktemp("corpus")))


@pytest.fixture(scope="module")
def corpus_pool():
    return datagen.synthetic_pool(5, seed=2, side_range=(236, 260))


@pytest.fixture(scope="module")
def slow_records(small_spec, corpus_pool, request):
    provider = request.getfixturevalue("stub_provider")
    return build_slowagent_corpus(small_spec, corpus_pool, provider=provider)


def expected_slow_total(scale: float) -> int:
    single = max(1, round(5000 * scale)) * 10
    weather = max(1, round(2000 * scale)) * 4
    general = max(1, round(12000 * scale))
    return single + weather + general


def expected_feedback_totals(scale: float) -> tuple[int, int]:
    clean = max(1, round(2500 * scale)) * 10 + 2 * max(1, round(2500 * scale))
    notclean = max(1, round(8000 * scale)) + max(1, round(2500 * scale)) * 10
    return clean, notclean


def test_slow_corpus_counts(slow_records):
    assert len(slow_records) == expected_slow_total(SCALE)
    by_cat = collections.Counter(r.category for r in slow_records)
    for kind in SINGLE_KINDS:
        assert by_cat[f"single/{kind.value}"] == max(1, round(5000 * SCALE))
    assert by_cat["hybrid/general"] == max(1, round(12000 * SCALE))


def test_slow_corpus_templates_byte_exact(slow_records):
    assert audit_records(slow_records, "slow") == []


def test_slow_corpus_crops_square_within_bounds(small_spec, slow_records):
    out = Path(small_spec.out_dir)
    for rec in slow_records[:: max(1, len(slow_records) // 25)]:
        img = ImageState.load_png(str(out / rec.image_path))
        assert img.width == img.height
        assert 224 <= img.width <= 784


def test_slow_corpus_label_soundness(small_spec, slow_records):
    out = Path(small_spec.out_dir)
    for rec in slow_records[:: max(1, len(slow_records) // 30)]:
        img = ImageState.load_png(str(out / rec.image_path))
        originals = img.originals()
        if rec.category.startswith("single/"):
            kind = rec.category.split("/", 1)[1]
            assert len(originals) == 1 and originals[0].kind.value == kind
            assert f"DISTORTION: {kind}." in rec.assistant_text
        else:
            assert len(originals) >= 2
            assert "DISTORTION: hybrid." in rec.assistant_text


def test_slow_corpus_weather_hybrids_follow_constraint(small_spec, slow_records):
    out = Path(small_spec.out_dir)
    weather_cats = [r for r in slow_records if r.category.startswith("hybrid/") and not r.category.endswith("general")]
    assert weather_cats
    for rec in weather_cats:
        img = ImageState.load_png(str(out / rec.image_path))
        kinds = [d.kind for d in img.originals()]
        assert kinds[0].value == rec.category.split("/", 1)[1]
        assert set(kinds[1:]) <= {K.NOISE, K.JPEG}


def test_feedback_corpus_counts_and_labels(small_spec, corpus_pool, sim_registry, stub_provider, tmp_path):
    spec = CorpusSpec(scale=SCALE, seed=9, out_dir=str(tmp_path / "fb"))
    records = build_feedback_corpus(spec, corpus_pool, sim_registry, provider=stub_provider)
    clean_expected, notclean_expected = expected_feedback_totals(SCALE)
    yes = [r for r in records if r.assistant_text == "[Assistant: Yes. CALL: END.]"]
    no = [r for r in records if r.assistant_text == "[Assistant: No. CALL: SlowAgent.]"]
    assert len(yes) == clean_expected
    assert len(no) == notclean_expected
    assert audit_records(records, "feedback") == []
    # label soundness: clean records carry no remaining source distortions
    out = Path(spec.out_dir)
    for rec in records[:: max(1, len(records) // 30)]:
        img = ImageState.load_png(str(out / rec.image_path))
        if rec.assistant_text.startswith("[Assistant: Yes"):
            assert img.originals() == ()
        else:
            assert len(img.originals()) >= 1


def test_feedback_wrong_tool_cases(small_spec, corpus_pool, sim_registry, stub_provider, tmp_path):
    spec = CorpusSpec(scale=0.0004, seed=11, out_dir=str(tmp_path / "fb2"))
    records = build_feedback_corpus(spec, corpus_pool, sim_registry, provider=stub_provider)
    partial = [r for r in records if r.category.startswith("notclean_partial/")]
    assert {r.category.split("/", 1)[1] for r in partial} == {t.value for t in ToolId if t is not ToolId.DE_HYBRID}
    hybrid_clean = [r for r in records if r.category == "clean_single_by_hybrid"]
    assert all("de-hybrid" in r.user_text for r in hybrid_clean)


def test_corpus_determinism(corpus_pool, stub_provider, tmp_path):
    digests = []
    for run in ("one", "two"):
        spec = CorpusSpec(scale=0.0004, seed=13, out_dir=str(tmp_path / run))
        records = build_slowagent_corpus(spec, corpus_pool, provider=stub_provider)
        manifest = (tmp_path / run / "slowagent.jsonl").read_bytes()
        image_hashes = sorted(p.name for p in (tmp_path / run / "images").glob("*.png"))
        image_bytes = hashlib.sha256(b"".join((tmp_path / run / "images" / n).read_bytes() for n in image_hashes))
        digests.append((hashlib.sha256(manifest).hexdigest(), image_hashes, image_bytes.hexdigest()))
    assert digests[0] == digests[1]


def test_pool_too_small_for_crop(stub_provider, tmp_path):
    tiny_pool = datagen.synthetic_pool(2, seed=1, side_range=(128, 128))
    spec = CorpusSpec(scale=0.0002, seed=1, out_dir=str(tmp_path))
    with pytest.raises(PoolError):
        build_slowagent_corpus(spec, tiny_pool, provider=stub_provider)


def test_scale_validation():
    with pytest.raises(DomainError):
        CorpusSpec(scale=0.0)
    with pytest.raises(DomainError):
        CorpusSpec(scale=1.5)


# ---------------------------------------------------------------------------
# prompt corpus


def test_prompt_corpus_exact_counts(prompt_corpus):
    assert len(prompt_corpus) == 220
    assert sum(1 for p in prompt_corpus if p.label == "ambiguous") == 20
    by_kind = collections.Counter(p.kind for p in prompt_corpus if p.kind)
    assert all(by_kind[k] == 20 for k in SINGLE_KINDS)
    assert len({p.text for p in prompt_corpus}) == 220  # all distinct


def test_prompt_corpus_contains_published_examples(prompt_corpus):
    tags = prompt_tags(prompt_corpus)
    assert tags["The HM compression makes the image look rough; can you fix it?"] is ToolId.DE_HEVC
    assert tags["Please remove the grain from this image."] is ToolId.DE_NOISE
    assert tags["Please fix this image."] is None


def test_prompt_corpus_agrees_with_rule_lexicon(prompt_corpus):
    rule = RuleFastBackend()
    for p in prompt_corpus:
        c = rule.classify(p.text)
        if p.label == "direct":
            assert c.direct and c.tool is p.tool, p.text
        else:
            assert not c.direct, p.text


def test_prompt_corpus_deterministic_and_writable(tmp_path):
    a = build_prompt_corpus(seed=5)
    b = build_prompt_corpus(seed=5)
    assert a == b
    path = write_prompt_corpus(a, tmp_path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 220
    assert {"text", "label", "tool", "kind"} <= set(lines[0])
