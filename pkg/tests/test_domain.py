from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from restokit.domain import (
    SINGLE_KINDS,
    USER_KINDS,
    DistortionInstance,
    DistortionKind,
    DomainError,
    ImageState,
    Provenance,
    QualityReport,
    ToolId,
    canonical_min,
    parse_tool,
    tool_for_kind,
)


def test_taxonomy_layout():
    assert len(list(DistortionKind)) == 13
    assert len(USER_KINDS) == 11
    assert len(SINGLE_KINDS) == 10
    assert DistortionKind.HYBRID in USER_KINDS
    assert not DistortionKind.RESIDUAL.user_facing
    assert not DistortionKind.ARTIFACT.user_facing


def test_tool_mapping_round_trip():
    for kind in USER_KINDS:
        tool = tool_for_kind(kind)
        assert tool.value == f"de-{kind.value}"
        assert tool.kind is kind
    assert tool_for_kind(DistortionKind.NOISE) is ToolId.DE_NOISE
    assert tool_for_kind(DistortionKind.HYBRID) is ToolId.DE_HYBRID
    assert len(list(ToolId)) == 11


def test_tool_mapping_rejects_internal_kinds():
    for kind in (DistortionKind.RESIDUAL, DistortionKind.ARTIFACT):
        with pytest.raises(DomainError):
            tool_for_kind(kind)
    with pytest.raises(DomainError):
        parse_tool("de-unknown")


def test_canonical_order_is_total_and_transitive():
    kinds = list(DistortionKind)
    orders = [k.order for k in kinds]
    assert sorted(orders) == list(range(len(kinds)))  # total, antisymmetric
    for a in kinds:
        for b in kinds:
            for c in kinds:
                if a.order <= b.order and b.order <= c.order:
                    assert a.order <= c.order
    assert kinds[0] is DistortionKind.NOISE  # noise is the canonical minimum


@given(st.lists(st.sampled_from(list(USER_KINDS)), min_size=1, max_size=8))
def test_canonical_min_permutation_invariant(kinds):
    base = canonical_min(kinds)
    assert canonical_min(list(reversed(kinds))) is base
    assert base in kinds


def test_instance_json_round_trip():
    inst = DistortionInstance.make(DistortionKind.HAZE, seed=42, transmission=0.5, airlight=200.0)
    back = DistortionInstance.from_json(inst.to_json())
    assert back == inst
    assert back.param("transmission") == 0.5
    with pytest.raises(KeyError):
        back.param("sigma")


def test_image_state_validation():
    with pytest.raises(DomainError):
        ImageState(np.zeros((16, 64, 3), dtype=np.uint8))  # below minimum side
    with pytest.raises(DomainError):
        ImageState(np.zeros((64, 64), dtype=np.uint8))
    with pytest.raises(DomainError):
        ImageState(np.zeros((64, 64, 3), dtype=np.float32))
    img = ImageState(np.zeros((32, 32, 3), dtype=np.uint8))
    assert img.width == img.height == 32
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1  # buffers are frozen


def test_png_round_trip_preserves_provenance(clean64):
    inst = DistortionInstance.make(DistortionKind.NOISE, seed=9, sigma=20.0)
    state = ImageState(
        pixels=clean64.pixels,
        provenance=Provenance(clean=clean64.pixels, stack=(inst,)),
    )
    back = ImageState.from_png_bytes(state.png_bytes())
    assert np.array_equal(back.pixels, state.pixels)
    assert back.provenance is not None
    assert back.provenance.stack == (inst,)
    assert back.provenance.clean_ref == state.provenance.clean_ref
    assert np.array_equal(back.provenance.clean, clean64.pixels)


def test_png_round_trip_without_provenance(clean64):
    back = ImageState.from_png_bytes(clean64.png_bytes())
    assert back.provenance is None
    assert np.array_equal(back.pixels, clean64.pixels)


def test_content_ref_stable(clean64):
    assert clean64.content_ref == clean64.content_ref
    other = ImageState(np.ascontiguousarray(clean64.pixels))
    assert other.content_ref == clean64.content_ref


def test_quality_report_serialization():
    rep = QualityReport(psnr_db=float("inf"), ssim=1.0, steps=2, wall_ms=3.5)
    assert rep.to_json()["psnr_db"] == "inf"
    with pytest.raises(DomainError):
        QualityReport(psnr_db=30.0, ssim=0.9, steps=-1)
