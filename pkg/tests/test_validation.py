import numpy as np
import pytest

from seaspot.validation import (
    check_block,
    check_epsilon,
    check_kernel_size,
    check_quantile,
    resolve_channel_subset,
)


def test_check_block_promotes_2d():
    block = check_block(np.zeros((4, 5)))
    assert block.shape == (1, 4, 5)
    assert block.dtype == np.float32


def test_check_block_rejects_bad_shapes():
    with pytest.raises(ValueError):
        check_block(np.zeros(3))
    with pytest.raises(ValueError):
        check_block(np.zeros((2, 0, 4)))


def test_kernel_and_epsilon_checks():
    assert check_kernel_size(31) == 31
    for bad in (2, 4, 1, -3):
        with pytest.raises(ValueError):
            check_kernel_size(bad)
    with pytest.raises(ValueError):
        check_epsilon(0.0)
    for bad_q in (0.0, 1.0, -1.0):
        with pytest.raises(ValueError):
            check_quantile(bad_q)


def test_channel_subset_resolution():
    assert resolve_channel_subset(None, 4) == [0, 1, 2, 3]
    assert resolve_channel_subset([2, 0], 4) == [2, 0]
    # "rgb" preset: sensor-specific indices when known, first three otherwise
    assert resolve_channel_subset("rgb", 8, rgb_indices=[4, 2, 1]) == [4, 2, 1]
    assert resolve_channel_subset("rgb", 8) == [0, 1, 2]
    assert resolve_channel_subset("rgb", 2) == [0, 1]
    with pytest.raises(ValueError):
        resolve_channel_subset([5], 3)
    with pytest.raises(ValueError):
        resolve_channel_subset([], 3)
    with pytest.raises(ValueError):
        resolve_channel_subset("bgr", 3)
