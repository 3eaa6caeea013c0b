"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError
from .fno import IN_CHANNELS


def check_inputs(X, *, n_channels: int = IN_CHANNELS, grid_shape=None) -> np.ndarray:
    """Validate a batch of encoded inputs ``(n, channels, nx, nt)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected inputs of shape (n, {n_channels}, nx, nt), got {X.shape}")
    if X.shape[1] != n_channels:
        raise ValueError(f"expected {n_channels} input channels, got {X.shape[1]}")
    if X.shape[0] == 0:
        raise ValueError("empty input batch")
    if grid_shape is not None and X.shape[2:] != tuple(grid_shape):
        raise ValueError(f"input grid {X.shape[2:]} does not match fitted grid {tuple(grid_shape)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain NaN or inf")
    return X


def check_targets(y, n_samples: int, grid_shape, u_max: float) -> np.ndarray:
    """Validate density targets ``(n, nx, nt)`` in ``[0, u_max]``."""
    y = np.asarray(y, dtype=np.float64)
    expected = (n_samples,) + tuple(grid_shape)
    if y.shape != expected:
        raise ValueError(f"expected targets of shape {expected}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain NaN or inf")
    tol = 1e-9 * u_max
    if y.min() < -tol or y.max() > u_max + tol:
        raise DomainError(f"target densities outside [0, {u_max}]: [{y.min()}, {y.max()}]")
    return y


def check_inputs_targets(X, y, u_max: float):
    X = check_inputs(X)
    return X, check_targets(y, X.shape[0], X.shape[2:], u_max)
