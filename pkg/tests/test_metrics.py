from __future__ import annotations

import math

import numpy as np
import pytest

from restokit.domain import DomainError, ToolId
from restokit.metrics import DEFAULT_METRICS, psnr, serialize_metric, ssim, success_rate

from .conftest import smooth_image
from .oracles import psnr_scalar, ssim_scalar

# analytic: MSE=1 for a uniform +1 offset -> 10*log10(255^2) dB
OFFSET_ONE_PSNR = 48.1308


def test_psnr_identical_is_infinite(clean64):
    assert psnr(clean64, clean64) == math.inf
    assert serialize_metric(psnr(clean64, clean64)) == "inf"


def test_psnr_offset_one_analytic():
    base = smooth_image(21, side=48, lo=40, hi=200)
    shifted = base.pixels.astype(np.int16) + 1  # stays below 255, no clipping
    assert shifted.max() <= 255
    value = psnr(base.pixels, shifted.astype(np.uint8))
    assert value == pytest.approx(OFFSET_ONE_PSNR, abs=1e-3)


def test_psnr_gaussian_noise_monte_carlo():
    rng = np.random.default_rng(7)
    base = rng.integers(60, 196, size=(256, 256, 3)).astype(np.uint8)
    noisy = np.clip(np.rint(base.astype(np.float64) + rng.normal(0, 10, base.shape)), 0, 255).astype(np.uint8)
    # E[MSE] = sigma^2 (+1/12 rounding variance, inside the tolerance)
    assert psnr(base, noisy) == pytest.approx(28.13, abs=0.15)


def test_psnr_matches_scalar_oracle():
    a = smooth_image(31, side=32)
    b = smooth_image(32, side=32)
    assert psnr(a.pixels, b.pixels) == pytest.approx(psnr_scalar(a.pixels, b.pixels), abs=1e-9)


def test_psnr_strictly_decreases_with_offset():
    base = smooth_image(22, side=48, lo=40, hi=180)
    values = []
    for offset in range(1, 51):
        shifted = (base.pixels.astype(np.int16) + offset).astype(np.uint8)
        values.append(psnr(base.pixels, shifted))
    assert all(values[i] > values[i + 1] for i in range(len(values) - 1))


def test_metric_symmetry(clean64):
    other = smooth_image(99, side=64)
    assert psnr(clean64, other) == psnr(other, clean64)
    assert ssim(clean64, other) == ssim(other, clean64)


def test_ssim_identity_is_exactly_one(clean64):
    assert ssim(clean64, clean64) == 1.0


def test_ssim_inverted_high_variance_below_half():
    img = smooth_image(41, side=64, lo=10, hi=245)
    inverted = (255 - img.pixels.astype(np.int16)).astype(np.uint8)
    fast = ssim(img.pixels, inverted)
    assert fast < 0.5
    assert fast == pytest.approx(ssim_scalar(img.pixels, inverted), abs=1e-6)


def test_ssim_matches_scalar_oracle_on_random_pairs():
    rng = np.random.default_rng(17)
    for trial in range(6):  # the full 50-pair sweep runs in the acceptance suite
        a = rng.integers(0, 256, size=(24, 24, 3)).astype(np.uint8)
        b = np.clip(a.astype(np.int16) + rng.integers(-40, 41, a.shape), 0, 255).astype(np.uint8)
        assert ssim(a, b) == pytest.approx(ssim_scalar(a, b), abs=1e-6)


def test_ssim_window_preconditions():
    tiny = np.zeros((32, 32, 3), dtype=np.uint8)
    ok = np.zeros((32, 32, 3), dtype=np.uint8)
    assert ssim(tiny, ok) == 1.0
    with pytest.raises(DomainError):
        psnr(np.zeros((32, 32, 3), dtype=np.uint8), np.zeros((32, 48, 3), dtype=np.uint8))
    with pytest.raises(DomainError):
        ssim(np.zeros((32, 32, 3), dtype=np.uint8), np.zeros((32, 48, 3), dtype=np.uint8))


def test_success_rate_cases():
    assert success_rate([(ToolId.DE_NOISE, ToolId.DE_NOISE)] * 4) == 1.0
    assert success_rate([(ToolId.DE_NOISE, ToolId.DE_BLUR), (ToolId.DE_BLUR, ToolId.DE_BLUR)]) == 0.5
    # a classifier that lands 729 of 1000 invocations reports 0.729
    pairs = [(ToolId.DE_NOISE, ToolId.DE_NOISE)] * 729 + [(ToolId.DE_BLUR, ToolId.DE_NOISE)] * 271
    assert success_rate(pairs) == pytest.approx(0.729)
    with pytest.raises(DomainError):
        success_rate([])


def test_fingerprint_is_stable():
    assert DEFAULT_METRICS.fingerprint() == DEFAULT_METRICS.fingerprint()
    assert len(DEFAULT_METRICS.fingerprint()) == 16
