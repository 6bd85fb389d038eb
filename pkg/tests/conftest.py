import numpy as np
import pytest

from mfpaths import backend
from mfpaths.datasets import (GaussianStream, GaussianTaskSpec,
                              LabeledDataset, dataset_from_stream)


class FixedStream:
    """Serves the same (x, y) arrays on every call; for full-batch tests."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)

    def next_batch(self, m):
        if m != len(self.x):
            raise ValueError(f"fixed stream holds {len(self.x)} samples")
        return self.x.copy(), self.y.copy()


@pytest.fixture
def small_ds() -> LabeledDataset:
    stream = GaussianStream(GaussianTaskSpec(d=6, delta=0.5, seed=321))
    return dataset_from_stream(stream, 200)


@pytest.fixture(params=["numpy", "numba"])
def both_backends(request):
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend("auto")


@pytest.fixture(autouse=True)
def _reset_backend():
    yield
    backend.set_backend("auto")
