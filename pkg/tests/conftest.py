import numpy as np
import pytest

from lpclip.toyworld import (
    ToyDatasetSpec,
    ToyEncoderSpec,
    build_class_prompt_bank,
    encode_weak,
    gen_dataset,
)
from lpclip.zeroshot import ensemble_class_embeddings


class DefaultToyWorld:
    """Default-config toy world, generated once per test session."""

    def __init__(self) -> None:
        self.spec = ToyDatasetSpec()
        self.enc = ToyEncoderSpec()
        self.train_images, self.train_labels = gen_dataset(self.spec, "train")
        self.test_images, self.test_labels = gen_dataset(self.spec, "test")
        self.weak_train = encode_weak(self.train_images, self.enc)
        self.weak_test = encode_weak(self.test_images, self.enc)
        self.bank = build_class_prompt_bank(self.spec, self.enc, 4, 1)
        self.anchors = ensemble_class_embeddings(self.bank, "single", prompt_index=0)


@pytest.fixture(scope="session")
def toy_world() -> DefaultToyWorld:
    return DefaultToyWorld()


@pytest.fixture(scope="session")
def rng_pool():
    return np.random.default_rng(2024)
