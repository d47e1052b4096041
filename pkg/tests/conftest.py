from __future__ import annotations

import numpy as np
import pytest

from restokit import bench, codecs, datagen
from restokit.domain import ImageState
from restokit.tools import SimulatorConfig, simulated_registry


def smooth_image(seed: int, side: int = 64, lo: int = 40, hi: int = 215) -> ImageState:
    """Low-frequency clean test image with pixel values away from the u8
    bounds, so additive layers do not clip."""
    import cv2

    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(5, 5, 3))
    img = cv2.resize(coarse, (side, side), interpolation=cv2.INTER_CUBIC)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return ImageState((lo + img * (hi - lo)).astype(np.uint8))


@pytest.fixture(scope="session")
def stub_provider():
    return codecs.stub_provider()


@pytest.fixture(scope="session")
def sim_registry(stub_provider):
    return simulated_registry(SimulatorConfig(), provider=stub_provider)


@pytest.fixture(scope="session")
def clean64():
    return smooth_image(11, side=64)


@pytest.fixture(scope="session")
def clean96():
    return smooth_image(12, side=96)


@pytest.fixture(scope="session")
def pool96():
    return datagen.synthetic_pool(24, seed=3, side_range=(96, 96))


@pytest.fixture(scope="session")
def pool_small():
    # identification testsets: minimum legal image size keeps things fast
    return datagen.synthetic_pool(16, seed=4, side_range=(32, 40))


@pytest.fixture(scope="session")
def prompt_corpus():
    return datagen.build_prompt_corpus(seed=0)


@pytest.fixture(scope="session")
def hybrid_testset(pool96, stub_provider):
    return bench.build_hybrid_testset(pool96, seed=5, provider=stub_provider)


@pytest.fixture(scope="session")
def single_vs_both_report(hybrid_testset, sim_registry):
    return bench.run_single_vs_both(hybrid_testset, sim_registry, seed=5)


@pytest.fixture(scope="session")
def fast_vs_slow_report(prompt_corpus, pool96, sim_registry, stub_provider):
    return bench.run_fast_vs_slow(prompt_corpus, pool96, sim_registry, seed=1, provider=stub_provider)
