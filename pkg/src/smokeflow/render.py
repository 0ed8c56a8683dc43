"""Differentiable volume rendering and inverse projection.

Image formation is emission-absorption compositing along pixel rays.
Each ray is clipped to the box spanned by the outermost cell centers. It is
cut into segments of length ``step``, and each segment uses the density and
lighting sampled at its midpoint::

    a_k   = sigma * rho_k * len_k
    pixel = sum_k T_k * L_k * (1 - exp(-a_k)) + T_end * background
    T_k   = exp(-sum_{j<k} a_j)

The single-scattering light volume ``L`` is built the same way by marching
from every cell toward the light.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import Camera, LightConfig, Trilinear, cell_centers, inset_box

DEFAULT_STEP = 0.5
_AXIS_OF = (2, 1, 0)  # array axis of the x, y, z direction


def _ray_box(origin, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (lo - origin) * inv
        t1 = (hi - origin) * inv
    tmin = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    # rays parallel to a slab: inside iff origin lies between the planes
    parallel = d == 0
    inside = (origin >= lo) & (origin <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    return tmin.max(axis=-1), tmax.min(axis=-1)


class RaySamples:
    """Sample positions and segment lengths of every pixel ray of a camera."""

    def __init__(self, cam: Camera, shape, step=DEFAULT_STEP):
        if step <= 0:
            raise ValueError("step must be positive")
        self.cam = cam
        self.shape = tuple(shape[:3])
        self.step = float(step)
        origin, d = cam.rays()
        h, w = d.shape[:2]
        lo, hi = inset_box(self.shape)
        t_in, t_out = _ray_box(origin, d, lo, hi)
        t_in = np.maximum(t_in, cam.near)
        t_out = np.minimum(t_out, cam.far)

        k = max(1, math.ceil((cam.far - cam.near) / self.step - 1e-12))
        edges = cam.near + self.step * np.arange(k + 1)
        seg_lo = np.maximum(edges[:-1], t_in[..., None])
        seg_hi = np.minimum(edges[1:], t_out[..., None])
        length = np.maximum(seg_hi - seg_lo, 0.0)
        self.valid = length > 1e-12
        self.length = np.where(self.valid, length, 0.0)
        self.n_steps = k
        self.image_shape = (h, w)
        mid = 0.5 * (seg_lo + seg_hi)
        pos = origin[:, :, None, :] + mid[..., None] * d[:, :, None, :]
        self.lookup = Trilinear(self.shape, pos[self.valid])

    def gather(self, volume) -> np.ndarray:
        out = np.zeros(self.valid.shape)
        out[self.valid] = self.lookup.sample(volume)
        return out

    def scatter(self, g) -> np.ndarray:
        return self.lookup.scatter(g[self.valid])


class LightMarch:
    """Optical depth from every cell toward a directional light.

    Cells march in unit steps against the light direction until they leave
    the cell-center box. Axis-aligned lights step exactly from cell center to
    cell center and use cumulative sums instead of lookups.
    """

    def __init__(self, shape, direction, step=1.0, fast=True):
        self.shape = tuple(shape[:3])
        self.step = float(step)
        d = np.asarray(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        self.axis = None
        hot = np.flatnonzero(np.abs(d) == 1.0)
        if fast and self.step == 1.0 and hot.size == 1:
            self.axis = _AXIS_OF[hot[0]]
            # light travels toward +axis: it comes from the low side
            self.from_low = d[hot[0]] > 0
            return
        lo, hi = inset_box(self.shape)
        x = cell_centers(self.shape).reshape(-1, 3)
        reach = float(np.linalg.norm(hi - lo))
        k = np.arange(1, int(math.floor(reach / self.step)) + 2)
        pos = x[:, None, :] - (k[:, None] * self.step)[None] * d[None, None, :]
        tol = 1e-9
        inside = np.all((pos >= lo - tol) & (pos <= hi + tol), axis=-1)
        self.cell_of = np.broadcast_to(np.arange(x.shape[0])[:, None], inside.shape)[inside]
        self.lookup = Trilinear(self.shape, pos[inside])

    def depth(self, rho) -> np.ndarray:
        if self.axis is not None:
            r = rho if self.from_low else np.flip(rho, self.axis)
            c = np.cumsum(r, axis=self.axis) - r
            return c if self.from_low else np.flip(c, self.axis)
        vals = self.lookup.sample(rho) * self.step
        return np.bincount(self.cell_of, weights=vals, minlength=rho.size).reshape(rho.shape)

    def depth_adjoint(self, g) -> np.ndarray:
        if self.axis is not None:
            r = np.flip(g, self.axis) if self.from_low else g
            c = np.cumsum(r, axis=self.axis) - r
            return np.flip(c, self.axis) if self.from_low else c
        return self.lookup.scatter(g.ravel()[self.cell_of] * self.step)


def build_light_volume(rho, light: LightConfig, march: LightMarch | None = None) -> np.ndarray:
    """Attenuated light reaching every cell: ``ambient + intensity * exp(-sigma * depth)``."""
    if march is None:
        march = LightMarch(rho.shape, light.direction)
    return light.ambient + light.intensity * np.exp(-light.sigma * march.depth(rho))


class Renderer:
    """Renders density volumes for one camera, light and background.

    Geometry (ray samples, light marching) is computed once and reused, so a
    renderer is cheap to call repeatedly inside an optimization loop.
    """

    def __init__(self, cam: Camera, light: LightConfig, shape, background=None,
                 step=DEFAULT_STEP, light_grad=True):
        self.cam = cam
        self.light = light
        self.shape = tuple(shape[:3])
        self.rays = RaySamples(cam, self.shape, step)
        self.march = LightMarch(self.shape, light.direction)
        h, w = self.rays.image_shape
        if background is None:
            background = np.zeros((h, w))
        background = np.asarray(background, dtype=np.float64)
        if background.shape[:2] != (h, w):
            raise ValueError(
                f"background shape {background.shape} does not match image {(h, w)}"
            )
        self.background = background
        self.light_grad = light_grad

    def _check(self, rho):
        if rho.shape != self.shape:
            raise ValueError(f"density shape {rho.shape} does not match renderer {self.shape}")

    def forward(self, rho):
        self._check(rho)
        sigma = self.light.sigma
        depth = self.march.depth(rho)
        light_vol = self.light.ambient + self.light.intensity * np.exp(-sigma * depth)
        s = self.rays.gather(rho)
        lk = self.rays.gather(light_vol)
        a = sigma * s * self.rays.length
        tau = np.cumsum(a, axis=-1) - a
        trans = np.exp(-tau)
        alpha = -np.expm1(-a)
        t_end = np.exp(-a.sum(axis=-1))
        emit = (trans * lk * alpha).sum(axis=-1)
        return dict(depth=depth, light=light_vol, s=s, lk=lk, a=a, trans=trans,
                    alpha=alpha, t_end=t_end, emit=emit)

    def _compose(self, emit, t_end):
        bg = self.background
        if bg.ndim == 3:
            return emit[..., None] + t_end[..., None] * bg
        return emit + t_end * bg

    def render(self, rho) -> np.ndarray:
        f = self.forward(rho)
        return self._compose(f["emit"], f["t_end"])

    def vjp(self, g, rho, saved=None) -> np.ndarray:
        """Exact gradient of ``<render(rho), g>`` with respect to ``rho``."""
        self._check(rho)
        if g.shape != self.background.shape:
            raise ValueError(f"image cotangent shape {g.shape} != {self.background.shape}")
        f = saved if saved is not None else self.forward(rho)
        if g.ndim == 3:
            g_emit = g.sum(axis=-1)
            g_tend = (g * self.background).sum(axis=-1)
        else:
            g_emit = g
            g_tend = g * self.background
        contrib = f["trans"] * f["lk"] * f["alpha"]
        after = np.cumsum(contrib[..., ::-1], axis=-1)[..., ::-1] - contrib
        g_a = g_emit[..., None] * (f["trans"] * np.exp(-f["a"]) * f["lk"] - after)
        g_a = g_a - (g_tend * f["t_end"])[..., None]
        sigma = self.light.sigma
        g_rho = self.rays.scatter(g_a * sigma * self.rays.length)
        if self.light_grad:
            g_light = self.rays.scatter(g_emit[..., None] * f["trans"] * f["alpha"])
            g_depth = -sigma * self.light.intensity * np.exp(-sigma * f["depth"]) * g_light
            g_rho = g_rho + self.march.depth_adjoint(g_depth)
        return g_rho

    def jvp(self, d_rho, rho, saved=None) -> np.ndarray:
        self._check(rho)
        f = saved if saved is not None else self.forward(rho)
        sigma = self.light.sigma
        ds = self.rays.gather(d_rho)
        if self.light_grad:
            d_depth = self.march.depth(d_rho)
            d_light = -sigma * self.light.intensity * np.exp(-sigma * f["depth"]) * d_depth
            dlk = self.rays.gather(d_light)
        else:
            dlk = np.zeros_like(ds)
        da = sigma * ds * self.rays.length
        d_tau = np.cumsum(da, axis=-1) - da
        d_trans = -f["trans"] * d_tau
        d_alpha = np.exp(-f["a"]) * da
        d_emit = (d_trans * f["lk"] * f["alpha"] + f["trans"] * dlk * f["alpha"]
                  + f["trans"] * f["lk"] * d_alpha).sum(axis=-1)
        d_tend = -f["t_end"] * da.sum(axis=-1)
        if self.background.ndim == 3:
            return d_emit[..., None] + d_tend[..., None] * self.background
        return d_emit + d_tend * self.background

    def transmittance(self, rho) -> np.ndarray:
        """Transmittance along each pixel ray through the whole volume."""
        return self.forward(rho)["t_end"]

    def paper_backward(self, g) -> np.ndarray:
        """Approximate backward pass: normalized scatter of the image gradient."""
        if g.ndim == 3:
            g = g.sum(axis=-1)
        return unproject_samples(g, self.rays)


def render(rho, light: LightConfig, cam: Camera, background=None, step=DEFAULT_STEP):
    """Render a density grid to an image of shape ``(h, w)`` or ``(h, w, 3)``."""
    return Renderer(cam, light, rho.shape, background, step).render(np.asarray(rho, float))


def unproject_samples(img, rays: RaySamples) -> np.ndarray:
    h, w = rays.image_shape
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (h, w):
        raise ValueError(f"image shape {img.shape} does not match camera {(h, w)}")
    vals = np.broadcast_to(img[..., None], rays.valid.shape)
    acc = rays.scatter(vals)
    weight = rays.lookup.scatter_weights()
    out = np.zeros(rays.shape)
    hit = weight > 0
    out[hit] = acc[hit] / weight[hit]
    return out


def unproject(img, cam: Camera, res, step=DEFAULT_STEP) -> np.ndarray:
    """Spread pixel values along their rays into a volume of resolution
    ``res = (nx, ny, nz)``, normalized by the accumulated trilinear weight.
    Voxels no ray reaches are 0. Color images are averaged to gray first."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=-1)
    nx, ny, nz = res
    return unproject_samples(img, RaySamples(cam, (nz, ny, nx), step))
