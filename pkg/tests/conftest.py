import numpy as np
import pytest

from floodsim import _backend


def make_stream(seed: int, key: tuple = ()):
    from floodsim.core import RawStream

    return RawStream(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@pytest.fixture
def kernel():
    kern = _backend.kernel_module()
    if kern is None:
        pytest.skip("compiled kernel not built")
    return kern
