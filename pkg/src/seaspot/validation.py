"""Input validation helpers shared by the estimators and the pipeline."""

from __future__ import annotations

import numpy as np


def check_block(X, *, name: str = "X") -> np.ndarray:
    """Coerce an image block to a channel-major float32 array.

    Accepts a 2D (H, W) or 3D (C, H, W) array; 2D input is promoted to a
    single-channel block. NaN samples are treated as invalid pixels by the
    standardizers, so they pass through unchanged here.
    """
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[np.newaxis, :, :]
    if X.ndim != 3:
        raise ValueError(f"{name} must be 2D (H, W) or 3D (C, H, W), got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1 or X.shape[2] < 1:
        raise ValueError(f"{name} has an empty dimension: shape {X.shape}")
    return np.ascontiguousarray(X, dtype=np.float32)


def check_kernel_size(k: int) -> int:
    k = int(k)
    if k < 3 or k % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 3, got {k}")
    return k


def check_chunk_size(s: int) -> int:
    s = int(s)
    if s < 1:
        raise ValueError(f"chunk size must be >= 1, got {s}")
    return s


def check_epsilon(eps: float) -> float:
    eps = float(eps)
    if not eps > 0:
        raise ValueError(f"epsilon must be > 0, got {eps}")
    return eps


def check_quantile(q: float) -> float:
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in the open interval (0, 1), got {q}")
    return q


def check_mask(mask, shape, *, name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise ValueError(f"{name} shape {mask.shape} does not match expected {tuple(shape)}")
    return mask


def resolve_channel_subset(subset, n_channels: int, rgb_indices=None) -> list[int]:
    """Resolve a channel subset spec to concrete indices.

    ``None`` selects all channels, ``"rgb"`` selects the sensor's RGB band
    indices (default: the first three bands), and an explicit sequence is
    validated against the channel count.
    """
    if subset is None:
        return list(range(n_channels))
    if isinstance(subset, str):
        if subset.lower() != "rgb":
            raise ValueError(f"unknown channel subset preset {subset!r}")
        if rgb_indices is not None:
            idx = list(rgb_indices)
        else:
            idx = list(range(min(3, n_channels)))
    else:
        idx = [int(i) for i in subset]
    if len(idx) == 0:
        raise ValueError("channel subset must not be empty")
    for i in idx:
        if not 0 <= i < n_channels:
            raise ValueError(f"channel index {i} out of range for {n_channels} channels")
    return idx
