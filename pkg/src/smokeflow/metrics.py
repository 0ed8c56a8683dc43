"""Image, volume and velocity error metrics."""

from __future__ import annotations

import numpy as np


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse_image(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def rmse_volume(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def rmse_velocity(u, u_ref) -> float:
    """Component-wise RMSE of two velocity fields."""
    u, u_ref = _pair(u, u_ref)
    return float(np.sqrt(np.mean((u - u_ref) ** 2)))


def epe(u, u_ref, mask=None, threshold=1e-3) -> float:
    """Mean endpoint error, optionally only over cells where ``mask > threshold``."""
    u, u_ref = _pair(u, u_ref)
    err = np.linalg.norm(u - u_ref, axis=-1)
    if mask is None:
        return float(err.mean())
    mask = np.asarray(mask)
    if mask.shape != err.shape:
        raise ValueError(f"mask shape {mask.shape} does not match field {err.shape}")
    keep = mask > threshold
    if not keep.any():
        return 0.0
    return float(err[keep].mean())


def depth_centroid_deviation(rho, c_z=None, axis=0) -> float:
    """Density-weighted mean distance of cell centers from the plane ``c_z``."""
    n = rho.shape[axis]
    c_z = n / 2.0 if c_z is None else c_z
    view = [1, 1, 1]
    view[axis] = n
    dist = np.abs(np.arange(n) + 0.5 - c_z).reshape(view)
    mass = float(rho.sum())
    return float((rho * dist).sum() / mass) if mass > 0 else 0.0


def boundary_roughness(u, factor=2) -> float:
    """Largest absolute second difference of any velocity component taken
    across the boundaries of the coarse cells ``u`` was upsampled from.

    Along each axis, the fine cells ``factor*j - 1`` and ``factor*j`` sit on
    either side of a coarse boundary; both are used as stencil centers. The
    outermost coarse cells are left out, so edge clamping does not count.
    """
    u = np.asarray(u, dtype=np.float64)
    worst = 0.0
    for ax in range(3):
        n = u.shape[ax]
        centers = [c for j in range(2, n // factor - 1) for c in (factor * j - 1, factor * j)]
        if not centers:
            continue
        c = np.array(centers)
        d2 = (np.take(u, c - 1, axis=ax) - 2.0 * np.take(u, c, axis=ax)
              + np.take(u, c + 1, axis=ax))
        # keep the other axes away from the clamped edges as well
        sl = [slice(factor, -factor)] * 3 + [slice(None)] * (u.ndim - 3)
        sl[ax] = slice(None)
        worst = max(worst, float(np.max(np.abs(d2[tuple(sl)]))))
    return worst
