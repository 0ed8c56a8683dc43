"""Field containers, trilinear sampling and the pinhole camera.

Layout conventions used throughout the package:

* scalar fields are arrays of shape ``(nz, ny, nx)``;
* vector fields are arrays of shape ``(nz, ny, nx, 3)`` whose last axis holds
  the ``(x, y, z)`` components;
* continuous grid coordinates are ``(x, y, z)`` triples, and the value of cell
  ``(i, j, k)`` lives at ``(i + 0.5, j + 0.5, k + 0.5)``. One cell is one world
  unit, so world and grid coordinates coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ScalarGrid:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"scalar grid needs a 3D array, got shape {self.data.shape}")

    @property
    def res(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def channels(self) -> int:
        return 1


@dataclass
class VectorGrid:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4 or self.data.shape[-1] != 3:
            raise ValueError(f"vector grid needs shape (nz, ny, nx, 3), got {self.data.shape}")

    @property
    def res(self) -> tuple[int, int, int]:
        nz, ny, nx, _ = self.data.shape
        return nx, ny, nz

    @property
    def channels(self) -> int:
        return 3


def cell_centers(shape) -> np.ndarray:
    """Coordinates of all cell centers, shape ``(nz, ny, nx, 3)`` in (x, y, z) order."""
    nz, ny, nx = shape[:3]
    z, y, x = np.meshgrid(
        np.arange(nz) + 0.5, np.arange(ny) + 0.5, np.arange(nx) + 0.5, indexing="ij"
    )
    return np.stack([x, y, z], axis=-1)


def _axis_lookup(c, n):
    # c: continuous coordinate along one axis, n: cells along that axis
    t = c - 0.5
    clamped = np.clip(t, 0.0, n - 1.0)
    # derivative of the clamped coordinate; ties count as inside
    inside = (t >= 0.0) & (t <= n - 1.0)
    if n == 1:
        i0 = np.zeros(np.shape(c), dtype=np.int64)
        return i0, i0, np.zeros(np.shape(c)), np.zeros(np.shape(c))
    i0 = np.minimum(np.floor(clamped).astype(np.int64), n - 2)
    f = clamped - i0
    return i0, i0 + 1, f, inside.astype(np.float64)


class Trilinear:
    """Precomputed trilinear lookups of a set of points into a grid.

    Holds the 8 corner indices and weights per point so that a forward
    sample, its transpose (scatter) and the derivative with respect to the
    point position can all be evaluated without redoing the lookup.
    """

    def __init__(self, shape, pos):
        nz, ny, nx = shape[:3]
        self.shape = (nz, ny, nx)
        self.size = nx * ny * nz
        pos = np.asarray(pos, dtype=np.float64)
        self.batch = pos.shape[:-1]
        x0, x1, fx, mx = _axis_lookup(pos[..., 0], nx)
        y0, y1, fy, my = _axis_lookup(pos[..., 1], ny)
        z0, z1, fz, mz = _axis_lookup(pos[..., 2], nz)
        # corner k = 4*dz + 2*dy + dx
        zi = np.stack([z0, z1], axis=-1)[..., :, None, None]
        yi = np.stack([y0, y1], axis=-1)[..., None, :, None]
        xi = np.stack([x0, x1], axis=-1)[..., None, None, :]
        self.idx = ((zi * ny + yi) * nx + xi).reshape(self.batch + (8,))
        self._wx = np.stack([1.0 - fx, fx], axis=-1)
        self._wy = np.stack([1.0 - fy, fy], axis=-1)
        self._wz = np.stack([1.0 - fz, fz], axis=-1)
        self.w = (
            self._wz[..., :, None, None] * self._wy[..., None, :, None] * self._wx[..., None, None, :]
        ).reshape(self.batch + (8,))
        self._m = (mx, my, mz)

    def corners(self, data) -> np.ndarray:
        """Corner values, shape ``(..., 8)`` for scalars or ``(..., 8, C)``."""
        flat = data.reshape(self.size, -1) if data.ndim == 4 else data.reshape(-1)
        return flat[self.idx]

    def sample(self, data) -> np.ndarray:
        v = self.corners(data)
        if data.ndim == 4:
            return np.einsum("...k,...kc->...c", self.w, v)
        return np.einsum("...k,...k->...", self.w, v)

    def grad_pos(self, data) -> np.ndarray:
        """d sample / d position for a scalar field, shape ``(..., 3)``."""
        v = self.corners(data).reshape(self.batch + (2, 2, 2))
        wx, wy, wz = self._wx, self._wy, self._wz
        mx, my, mz = self._m
        ddx = v[..., 1] - v[..., 0]  # (..., z, y)
        gx = np.einsum("...zy,...z,...y->...", ddx, wz, wy)
        ddy = v[..., 1, :] - v[..., 0, :]  # (..., z, x)
        gy = np.einsum("...zx,...z,...x->...", ddy, wz, wx)
        ddz = v[..., 1, :, :] - v[..., 0, :, :]  # (..., y, x)
        gz = np.einsum("...yx,...y,...x->...", ddz, wy, wx)
        return np.stack([gx * mx, gy * my, gz * mz], axis=-1)

    def scatter(self, g) -> np.ndarray:
        """Transpose of :meth:`sample` for scalar fields: accumulate ``g`` into a grid."""
        vals = (self.w * np.asarray(g)[..., None]).ravel()
        out = np.bincount(self.idx.ravel(), weights=vals, minlength=self.size)
        return out.reshape(self.shape)

    def scatter_weights(self) -> np.ndarray:
        return np.bincount(self.idx.ravel(), weights=self.w.ravel(), minlength=self.size).reshape(
            self.shape
        )


def sample_trilinear(data, p) -> np.ndarray:
    """Trilinear interpolation of a scalar or vector grid at coordinates ``p``.

    Points outside the domain are clamped to the nearest boundary cell center.
    """
    data = np.asarray(data, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("sample position must be finite")
    return Trilinear(data.shape, p).sample(data)


def inset_box(shape) -> tuple[np.ndarray, np.ndarray]:
    """Box spanned by the outermost cell centers, as (lo, hi) in (x, y, z)."""
    nz, ny, nx = shape[:3]
    lo = np.array([0.5, 0.5, 0.5])
    hi = np.array([nx - 0.5, ny - 0.5, nz - 0.5])
    return lo, hi


@dataclass
class Camera:
    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov_y: float
    image_res: tuple[int, int]  # (w, h)
    near: float
    far: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.forward, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        self.forward = fwd / np.linalg.norm(fwd)
        self.up = up / np.linalg.norm(up)
        self.image_res = (int(self.image_res[0]), int(self.image_res[1]))
        self.fov_y = float(self.fov_y)
        self.near = float(self.near)
        self.far = float(self.far)
        if abs(float(self.forward @ self.up)) > 1e-9:
            raise ValueError("camera forward and up must be orthogonal")
        if not 0.0 < self.fov_y < 180.0:
            raise ValueError(f"fov_y must be in (0, 180), got {self.fov_y}")
        if not self.near < self.far:
            raise ValueError("camera near must be smaller than far")
        if min(self.image_res) < 1:
            raise ValueError("image_res must be positive")

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.forward, self.up)

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            position=d["position"],
            forward=d["forward"],
            up=d["up"],
            fov_y=d["fov_y"],
            image_res=tuple(d["image_res"]),
            near=d["near"],
            far=d["far"],
        )

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "forward": self.forward.tolist(),
            "up": self.up.tolist(),
            "fov_y": self.fov_y,
            "image_res": list(self.image_res),
            "near": self.near,
            "far": self.far,
        }

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions for every pixel, shape ``(h, w, 3)``."""
        w, h = self.image_res
        px, py = np.meshgrid(np.arange(w), np.arange(h))
        return pixel_ray(self, (px, py))


def pixel_ray(cam: Camera, px) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray through the center of pixel ``px = (col, row)``.

    Rows grow downward from the top-left corner.
    """
    col, row = (np.asarray(v, dtype=np.float64) for v in px)
    w, h = cam.image_res
    if np.any(col < 0) or np.any(col >= w) or np.any(row < 0) or np.any(row >= h):
        raise ValueError("pixel index outside the image")
    tan_half = math.tan(math.radians(cam.fov_y) / 2.0)
    aspect = w / h
    sx = ((col + 0.5) / w * 2.0 - 1.0) * tan_half * aspect
    sy = (1.0 - (row + 0.5) / h * 2.0) * tan_half
    d = cam.forward + sx[..., None] * cam.right + sy[..., None] * cam.up
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    origin = np.broadcast_to(cam.position, d.shape).copy()
    return origin, d


@dataclass
class LightConfig:
    """Directional light; ``direction`` is the direction the light travels."""

    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    intensity: float = 1.0
    ambient: float = 0.1
    sigma: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("light direction must be nonzero")
        self.direction = d / n
        if self.intensity < 0 or self.ambient < 0 or self.sigma < 0:
            raise ValueError("light intensity, ambient and sigma must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "LightConfig":
        return cls(
            direction=d.get("direction", [0.0, -1.0, 0.0]),
            intensity=d.get("intensity", 1.0),
            ambient=d.get("ambient", 0.1),
            sigma=d.get("sigma", 1.0),
        )

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.tolist(),
            "intensity": self.intensity,
            "ambient": self.ambient,
            "sigma": self.sigma,
        }
