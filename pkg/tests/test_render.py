import math

import numpy as np
import pytest

from smokeflow.grid import Camera, LightConfig, cell_centers, pixel_ray
from smokeflow.render import (
    LightMarch,
    Renderer,
    build_light_volume,
    render,
    unproject,
)
from smokeflow.synth import orbit_camera

from .conftest import coordinate_fd_check, dot_rel


def axis_camera(n=6, img=5, fov=30.0, z=10.5):
    # looks down -z through the domain center
    return Camera(position=[n / 2, n / 2, z], forward=[0, 0, -1], up=[0, 1, 0],
                  fov_y=fov, image_res=(img, img), near=1.0, far=z + 1.0)


def test_zero_density_renders_background(rng):
    cam = orbit_camera((6, 8, 6), 30.0, (7, 5))
    light = LightConfig()
    bg = rng.random((5, 7))
    assert np.array_equal(render(np.zeros((6, 8, 6)), light, cam, bg), bg)
    bg3 = rng.random((5, 7, 3))
    assert np.array_equal(render(np.zeros((6, 8, 6)), light, cam, bg3), bg3)
    assert np.array_equal(render(np.zeros((6, 8, 6)), light, cam), np.zeros((5, 7)))


def test_background_shape_mismatch():
    with pytest.raises(ValueError):
        render(np.zeros((4, 4, 4)), LightConfig(), axis_camera(4), np.zeros((3, 3)))
    r = Renderer(axis_camera(4), LightConfig(), (4, 4, 4))
    with pytest.raises(ValueError):
        r.render(np.zeros((4, 4, 5)))


def test_homogeneous_slab_closed_form():
    n, c, sigma = 12, 0.3, 1.0
    rho = np.zeros((n, n, n))
    rho[4:8] = c  # four cells thick along z
    light = LightConfig(intensity=0.0, ambient=0.8, sigma=sigma)
    cam = axis_camera(n, img=5, fov=20.0, z=30.5)
    img = render(rho, light, cam, step=0.25)
    want = 0.8 * (1 - math.exp(-sigma * c * 4))
    assert abs(img[2, 2] - want) < 0.01 * want


def test_beer_lambert_column():
    c, sigma, amb, inten = 0.4, 1.3, 0.1, 0.9
    rho = np.full((3, 7, 2), c)
    light = LightConfig(direction=[0, -1, 0], intensity=inten, ambient=amb, sigma=sigma)
    L = build_light_volume(rho, light)
    # scalar recurrence from the top cell (y = ny - 1) downward
    depth = 0.0
    for j in range(6, -1, -1):
        want = amb + inten * math.exp(-sigma * depth)
        assert np.max(np.abs(L[:, j, :] - want)) < 1e-12
        depth += c


def test_light_volume_without_density():
    light = LightConfig(intensity=0.7, ambient=0.2)
    assert np.allclose(build_light_volume(np.zeros((3, 4, 5)), light), 0.9, atol=1e-15)


def test_doubling_sigma_squares_attenuation(rng):
    rho = rng.random((4, 6, 4))
    a = build_light_volume(rho, LightConfig(intensity=1.0, ambient=0.0, sigma=0.7))
    b = build_light_volume(rho, LightConfig(intensity=1.0, ambient=0.0, sigma=1.4))
    assert np.allclose(b, a ** 2, rtol=1e-13)


@pytest.mark.parametrize("direction", [(0, -1, 0), (1, 0, 0), (0, 0, -1)])
def test_fast_light_march_matches_general(rng, direction):
    rho = rng.random((4, 5, 6))
    fast = LightMarch(rho.shape, direction)
    slow = LightMarch(rho.shape, direction, fast=False)
    assert fast.axis is not None and slow.axis is None
    assert np.allclose(fast.depth(rho), slow.depth(rho), atol=1e-12)
    g = rng.random(rho.shape)
    assert np.allclose(fast.depth_adjoint(g), slow.depth_adjoint(g), atol=1e-12)


def test_on_ray_gradient_at_zero_density():
    n, sigma = 6, 1.0
    light = LightConfig(intensity=0.6, ambient=0.3, sigma=sigma)
    cam = axis_camera(n)
    r = Renderer(cam, light, (n, n, n))
    g = np.zeros((5, 5))
    g[2, 2] = 1.0
    grad = r.vjp(g, np.zeros((n, n, n)))
    # center ray runs along z at x = y = 3: half weight on columns 2 and 3.
    # segments of 0.5 cells start at the inset face, so interior cells collect
    # hat weights 0.75 + 0.75 + 0.25 + 0.25 and the two end cells half that
    lz = np.full(n, 2.0)
    lz[[0, -1]] = 1.0
    want = np.zeros((n, n, n))
    for k in range(n):
        for j in (2, 3):
            for i in (2, 3):
                want[k, j, i] = 0.9 * sigma * 0.5 * 0.25 * lz[k]
    assert np.max(np.abs(grad - want)) < 1e-14


def test_zero_cotangent_gives_zero_gradient(rng):
    r = Renderer(orbit_camera((6, 6, 6), 0.0, (8, 8)), LightConfig(), (6, 6, 6))
    assert np.array_equal(r.vjp(np.zeros((8, 8)), rng.random((6, 6, 6))), np.zeros((6, 6, 6)))


def _renderer(bg=None, light_grad=True, angle=25.0):
    light = LightConfig(direction=[0.3, -1.0, 0.2], intensity=1.0, ambient=0.1, sigma=1.5)
    return Renderer(orbit_camera((6, 6, 6), angle, (8, 8)), light, (6, 6, 6), bg,
                    light_grad=light_grad)


@pytest.mark.parametrize("bg_kind", ["black", "gray", "color"])
def test_render_adjoint_dot_product(rng, bg_kind):
    bg = {"black": None, "gray": rng.random((8, 8)), "color": rng.random((8, 8, 3))}[bg_kind]
    r = _renderer(bg)
    rho = rng.random((6, 6, 6))
    d = rng.standard_normal(rho.shape)
    y = rng.standard_normal(r.background.shape)
    assert dot_rel(np.vdot(r.jvp(d, rho), y), np.vdot(d, r.vjp(y, rho))) < 1e-12


def test_render_gradient_matches_fd(rng):
    r = _renderer(rng.random((8, 8)))
    rho = rng.random((6, 6, 6))
    y = rng.standard_normal((8, 8))
    grad = r.vjp(y, rho)
    err = coordinate_fd_check(lambda x: float(np.vdot(r.render(x), y)), rho, grad, n=80)
    assert err < 1e-6


def test_frozen_light_drops_only_the_light_chain(rng):
    bg = rng.random((8, 8))
    exact, frozen = _renderer(bg), _renderer(bg, light_grad=False)
    rho = rng.random((6, 6, 6))
    y = rng.standard_normal((8, 8))
    diff = exact.vjp(y, rho) - frozen.vjp(y, rho)
    f = exact.forward(rho)
    g_light = exact.rays.scatter(y[..., None] * f["trans"] * f["alpha"])
    sigma, inten = exact.light.sigma, exact.light.intensity
    chain = exact.march.depth_adjoint(-sigma * inten * np.exp(-sigma * f["depth"]) * g_light)
    assert np.abs(diff).max() > 1e-3
    assert np.allclose(diff, chain, atol=1e-14)


def test_more_density_never_increases_transmittance(rng):
    r = _renderer()
    rho = rng.random((6, 6, 6)) * 0.5
    t0 = r.transmittance(rho)
    for _ in range(5):
        bumped = rho.copy()
        bumped[tuple(rng.integers(0, 6, 3))] += 0.7
        assert np.all(r.transmittance(bumped) <= t0 + 1e-15)


def test_energy_bound(rng):
    r = _renderer(rng.random((8, 8)) * 0.5)
    rho = rng.random((6, 6, 6)) * 3
    f = r.forward(rho)
    img = r.render(rho)
    l_max = r.light.ambient + r.light.intensity
    cam = r.cam
    assert np.all(f["emit"] <= l_max * (1 - f["t_end"]) + 1e-12)
    assert np.all(img <= l_max * (cam.far - cam.near) + r.background.max())


def test_unproject_constant_and_zero():
    cam = orbit_camera((6, 8, 6), 40.0, (12, 10))
    vol = unproject(np.full((10, 12), 0.37), cam, (6, 8, 6))
    hit = vol != 0
    assert hit.mean() > 0.5
    assert np.max(np.abs(vol[hit] - 0.37)) < 1e-10
    assert np.array_equal(unproject(np.zeros((10, 12)), cam, (6, 8, 6)), np.zeros((6, 8, 6)))


def test_unproject_single_pixel_is_a_tube():
    n = 8
    cam = Camera(position=[3.7, 4.2, 20.0], forward=[0.1, -0.05, -1.0], up=[0, 1, -0.05],
                 fov_y=30.0, image_res=(9, 9), near=1.0, far=30.0)
    img = np.zeros((9, 9))
    img[4, 6] = 1.0
    vol = unproject(img, cam, (n, n, n))
    o, d = pixel_ray(cam, (6, 4))
    pts = o + np.linspace(0, 30, 6001)[:, None] * d
    inside = np.all((pts >= 0.5) & (pts <= n - 0.5), axis=1)
    centers = cell_centers((n, n, n))
    # Chebyshev distance from each voxel center to the traced ray
    cheb = np.min(np.max(np.abs(centers[..., None, :] - pts), axis=-1), axis=-1)
    assert vol[cheb >= 1.0 + 1e-2].max() == 0.0
    # voxels the marched segment passes right by all receive the value
    near = np.min(np.max(np.abs(centers[..., None, :] - pts[inside]), axis=-1), axis=-1)
    assert np.all(vol[near < 0.5] > 0)
