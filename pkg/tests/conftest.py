import numpy as np
import pytest

from disorder_unet.unet import ModelConfig


def fd_gradient(f, arr, h=1e-5):
    """Central finite differences of scalar ``f()`` wrt every entry of ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def rel_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


@pytest.fixture
def toy_config():
    return ModelConfig(input_dim=16, filters_per_level=(8, 16, 16), dropout_rate=0.0, max_len=1024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
