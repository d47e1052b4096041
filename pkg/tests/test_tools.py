from __future__ import annotations

import math

import httpx
import numpy as np
import pytest

from restokit import degrade
from restokit.degrade import plan_from_kinds, sample_instance
from restokit.domain import (
    DistortionInstance,
    DistortionKind,
    DomainError,
    ImageState,
    ToolId,
    tool_for_kind,
)
from restokit.metrics import psnr
from restokit.rng import derive_seed
from restokit.tools import (
    FAMILY_CLASSICAL,
    FAMILY_SIMULATED,
    RemoteToolClient,
    RemoteToolError,
    SimulatorConfig,
    ToolError,
    ToolUnavailable,
    classical_baseline,
    classical_registry,
    remote_registry,
    simulated_step_semantics,
)

from .conftest import smooth_image

K = DistortionKind
CFG = SimulatorConfig()


def sigmas(stack, kind):
    return [d.param("sigma") for d in stack if d.kind is kind]


# ---------------------------------------------------------------------------
# simulator stack semantics (pure)


def test_full_peel_residual_quadrature():
    stack = plan_from_kinds([K.BLUR, K.NOISE, K.JPEG], seed=1).stages
    for tool in (ToolId.DE_JPEG, ToolId.DE_NOISE, ToolId.DE_BLUR):
        stack = simulated_step_semantics(stack, tool, CFG, seed=7)
    assert [d.kind for d in stack] == [K.RESIDUAL, K.RESIDUAL]
    assert sigmas(stack, K.RESIDUAL) == [4.0, 2.0]
    total = math.sqrt(sum(s * s for s in sigmas(stack, K.RESIDUAL)))
    assert total == pytest.approx(2 * math.sqrt(5))


def test_de_hybrid_clears_stack():
    stack = plan_from_kinds([K.BLUR, K.NOISE, K.JPEG], seed=2).stages
    out = simulated_step_semantics(stack, ToolId.DE_HYBRID, CFG, seed=3)
    assert [d.kind for d in out] == [K.RESIDUAL]
    assert out[0].param("sigma") == CFG.eta_hybrid


def test_de_hybrid_on_single_stack():
    # the mixed tool also handles single distortions, at its flat cost
    stack = (sample_instance(K.NOISE, 5),)
    out = simulated_step_semantics(stack, ToolId.DE_HYBRID, CFG, seed=5)
    assert [d.kind for d in out] == [K.RESIDUAL]
    assert out[0].param("sigma") == CFG.eta_hybrid


def test_wrong_tool_appends_artifact():
    stack = (sample_instance(K.BLUR, 6),)
    out = simulated_step_semantics(stack, ToolId.DE_NOISE, CFG, seed=6)
    assert [d.kind for d in out] == [K.BLUR, K.ARTIFACT]
    assert out[1].param("sigma") == CFG.sigma_artifact


def test_last_single_step_is_penalty_free():
    stack = (sample_instance(K.NOISE, 8),)
    out = simulated_step_semantics(stack, ToolId.DE_NOISE, CFG, seed=8)
    assert out == ()


def test_fragile_stack_doubled_artifact():
    # a non-matching single tool touching a haze/low-light stack hurts extra
    stack = plan_from_kinds([K.HAZE, K.NOISE], seed=9, klass="weather+").stages
    out = simulated_step_semantics(stack, ToolId.DE_NOISE, CFG, seed=9)
    assert [d.kind for d in out] == [K.HAZE, K.RESIDUAL, K.ARTIFACT]
    assert sigmas(out, K.ARTIFACT) == [CFG.sigma_artifact * CFG.weather_factor]
    # the weather tool itself is matching: no artifact
    out2 = simulated_step_semantics(out, ToolId.DE_HAZE, CFG, seed=10)
    assert [d.kind for d in out2] == [K.RESIDUAL, K.ARTIFACT]


def test_conservation_originals_decrease_internals_append():
    rng = np.random.default_rng(0)
    stack = plan_from_kinds([K.BLUR, K.NOISE, K.JPEG], seed=11).stages
    tools = list(ToolId)
    for i in range(30):
        tool = tools[int(rng.integers(len(tools)))]
        new = simulated_step_semantics(stack, tool, CFG, seed=i)
        old_originals = [d for d in stack if d.kind.user_facing]
        new_originals = [d for d in new if d.kind.user_facing]
        old_internal = [d for d in stack if not d.kind.user_facing]
        new_internal = [d for d in new if not d.kind.user_facing]
        assert set(new_originals) <= set(old_originals)
        assert new_internal[: len(old_internal)] == old_internal  # append-only
        stack = new


def test_simulator_config_invariants():
    with pytest.raises(DomainError):
        SimulatorConfig(eta_single=1.0, eta_hybrid=2.0)
    with pytest.raises(DomainError):
        SimulatorConfig(eta_single=5.0, sigma_artifact=4.0)


# ---------------------------------------------------------------------------
# simulated tools on rendered pixels


def test_simulated_correct_tool_restores_exactly(clean64, sim_registry):
    degraded = degrade.apply(clean64, sample_instance(K.NOISE, 21))
    out = sim_registry.invoke(ToolId.DE_NOISE, degraded)
    assert np.array_equal(out.pixels, clean64.pixels)
    assert out.stack == ()


def test_simulated_psnr_closed_forms(clean96, sim_registry):
    degraded = degrade.render(clean96, plan_from_kinds([K.BLUR, K.NOISE, K.JPEG], seed=22))
    img = degraded
    for tool in (ToolId.DE_JPEG, ToolId.DE_NOISE, ToolId.DE_BLUR):
        img = sim_registry.invoke(tool, img)
    # E[MSE] = eta^2 * (2^2 + 1^2) = 20
    assert psnr(img.pixels, clean96.pixels) == pytest.approx(35.12, abs=0.2)
    hybrid = sim_registry.invoke(ToolId.DE_HYBRID, degraded)
    assert psnr(hybrid.pixels, clean96.pixels) == pytest.approx(48.13, abs=0.2)


def test_wrong_tool_never_improves(clean64, sim_registry):
    for i, kind in enumerate((K.NOISE, K.HAZE, K.JPEG)):
        degraded = degrade.apply(clean64, sample_instance(kind, 30 + i))
        wrong = ToolId.DE_MOTIONBLUR if kind is not K.MOTIONBLUR else ToolId.DE_NOISE
        out = sim_registry.invoke(wrong, degraded)
        assert psnr(out.pixels, clean64.pixels) <= psnr(degraded.pixels, clean64.pixels)


def test_entanglement_ordering_monte_carlo(clean64, sim_registry):
    # mixed removal beats every full single-tool peel on stacks of >= 2
    rng = np.random.default_rng(77)
    single_means, hybrid_means = [], []
    for trial in range(220):
        kinds = [K.BLUR, K.NOISE] if trial % 2 else [K.MOTIONBLUR, K.NOISE, K.JPEG]
        degraded = degrade.render(clean64, plan_from_kinds(kinds, derive_seed("ord", trial)))
        img = degraded
        for kind in reversed(kinds):
            img = sim_registry.invoke(tool_for_kind(kind), img)
        single_means.append(psnr(img.pixels, clean64.pixels))
        hybrid = sim_registry.invoke(ToolId.DE_HYBRID, degraded)
        hybrid_means.append(psnr(hybrid.pixels, clean64.pixels))
    assert np.mean(hybrid_means) > np.mean(single_means)


def test_simulated_requires_provenance(clean64, sim_registry):
    bare = ImageState(clean64.pixels)
    with pytest.raises(ToolError):
        sim_registry.invoke(ToolId.DE_NOISE, bare)


def test_simulated_invocation_deterministic(clean64, sim_registry):
    degraded = degrade.render(clean64, plan_from_kinds([K.BLUR, K.NOISE], seed=41))
    a = sim_registry.invoke(ToolId.DE_NOISE, degraded)
    b = sim_registry.invoke(ToolId.DE_NOISE, degraded)
    assert np.array_equal(a.pixels, b.pixels)


# ---------------------------------------------------------------------------
# registry


def test_registry_totality(sim_registry):
    degraded = degrade.apply(smooth_image(1, 40), sample_instance(K.NOISE, 1))
    for tool in ToolId:
        assert sim_registry.available(tool)
        sim_registry.invoke(tool, degraded)  # must not raise


def test_classical_falls_back_to_simulated(stub_provider):
    reg = classical_registry(provider=stub_provider)
    assert reg.family(ToolId.DE_NOISE) == FAMILY_CLASSICAL
    assert reg.family(ToolId.DE_HYBRID) == FAMILY_SIMULATED
    assert reg.family(ToolId.DE_RAINSTREAK) == FAMILY_SIMULATED


def test_restricted_registry_disables_tool(sim_registry, clean64):
    restricted = sim_registry.restricted({ToolId.DE_HYBRID})
    degraded = degrade.apply(clean64, sample_instance(K.NOISE, 50))
    with pytest.raises(ToolUnavailable):
        restricted.invoke(ToolId.DE_HYBRID, degraded)
    restricted.invoke(ToolId.DE_NOISE, degraded)  # others unaffected
    sim_registry.invoke(ToolId.DE_HYBRID, degraded)  # original untouched


# ---------------------------------------------------------------------------
# classical baselines


def test_classical_denoise_near_identity_on_clean(clean96):
    out = classical_baseline(ToolId.DE_NOISE, clean96)
    assert psnr(out.pixels, clean96.pixels) >= 40.0


def test_classical_dehaze_improves():
    gains = []
    for i in range(6):
        img = smooth_image(400 + i, side=96, lo=30, hi=225)
        hazed = degrade.apply(img, DistortionInstance.make(K.HAZE, seed=i, transmission=0.5, airlight=255.0))
        out = classical_baseline(ToolId.DE_HAZE, hazed)
        gains.append(psnr(out.pixels, img.pixels) - psnr(hazed.pixels, img.pixels))
    assert np.mean(gains) >= 3.0


def test_classical_delowlight_improves():
    improvements = []
    for i in range(20):
        img = smooth_image(500 + i, side=64, lo=30, hi=235)
        dark = degrade.apply(img, sample_instance(K.LOWLIGHT, derive_seed("ll", i)))
        out = classical_baseline(ToolId.DE_LOWLIGHT, dark)
        improvements.append(psnr(out.pixels, img.pixels) - psnr(dark.pixels, img.pixels))
    assert min(improvements) > 0
    assert np.mean(improvements) >= 3.0


def test_classical_unsupported_tool():
    with pytest.raises(ToolUnavailable):
        classical_baseline(ToolId.DE_VVC, smooth_image(1, 40))


# ---------------------------------------------------------------------------
# remote family


def _client_with(handler, **kwargs) -> RemoteToolClient:
    transport = httpx.MockTransport(handler)
    return RemoteToolClient(
        "http://tools.test",
        client=httpx.Client(transport=transport),
        sleep=lambda s: None,
        **kwargs,
    )


def test_remote_echo_round_trip(clean64):
    def handler(request):
        assert request.url.path == "/restore/de-noise"
        return httpx.Response(200, content=request.content, headers={"content-type": "image/png"})

    client = _client_with(handler)
    out = client.restore(ToolId.DE_NOISE, clean64)
    assert np.array_equal(out.pixels, clean64.pixels)


def test_remote_dimension_mismatch(clean64):
    wrong = smooth_image(9, side=48)

    def handler(request):
        return httpx.Response(200, content=wrong.png_bytes())

    with pytest.raises(RemoteToolError) as err:
        _client_with(handler).restore(ToolId.DE_BLUR, clean64)
    assert "dimension mismatch" in str(err.value)


def test_remote_retries_then_succeeds(clean64):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            return httpx.Response(503)
        return httpx.Response(200, content=request.content)

    out = _client_with(handler, max_attempts=3).restore(ToolId.DE_JPEG, clean64)
    assert calls["n"] == 3
    assert np.array_equal(out.pixels, clean64.pixels)


def test_remote_exhausts_attempts(clean64):
    def handler(request):
        raise httpx.ConnectTimeout("slow backend")

    with pytest.raises(RemoteToolError) as err:
        _client_with(handler, max_attempts=3).restore(ToolId.DE_HAZE, clean64)
    assert err.value.attempts == 3


def test_remote_registry_wiring(clean64):
    def handler(request):
        return httpx.Response(200, content=request.content)

    registry = remote_registry(_client_with(handler))
    out = registry.invoke(ToolId.DE_HEVC, clean64)
    assert np.array_equal(out.pixels, clean64.pixels)
