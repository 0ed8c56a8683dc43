import numpy as np
import pytest

from smokeflow.grid import cell_centers
from smokeflow.potential import curl
from smokeflow.synth import gaussian_blob
from smokeflow.transport import (
    advect_maccormack,
    advect_maccormack_jvp,
    advect_maccormack_vjp,
    advect_sequence,
    advect_sl,
    advect_sl_jvp,
    advect_sl_vjp,
)

from .conftest import dot_rel


def sl_oracle(rho, u, dt=1.0):
    # per-cell backtrace with an explicit loop over cells
    nz, ny, nx = rho.shape
    out = np.empty_like(rho)
    dims = (nx, ny, nz)
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                p = np.array([i + 0.5, j + 0.5, k + 0.5]) - dt * u[k, j, i]
                c = [min(max(p[a] - 0.5, 0.0), dims[a] - 1.0) for a in range(3)]
                lo = [min(int(np.floor(c[a])), dims[a] - 2) for a in range(3)]
                f = [c[a] - lo[a] for a in range(3)]
                v = 0.0
                for dz in (0, 1):
                    for dy in (0, 1):
                        for dx in (0, 1):
                            w = ((f[0] if dx else 1 - f[0]) * (f[1] if dy else 1 - f[1])
                                 * (f[2] if dz else 1 - f[2]))
                            v += w * rho[lo[2] + dz, lo[1] + dy, lo[0] + dx]
                out[k, j, i] = v
    return out


def test_zero_velocity_is_identity(rng):
    rho = rng.random((5, 6, 7))
    u = np.zeros(rho.shape + (3,))
    assert np.array_equal(advect_sl(rho, u), rho)
    assert np.array_equal(advect_maccormack(rho, u), rho)


def test_integer_shift():
    rho = np.broadcast_to(np.arange(6.0), (4, 4, 6)).copy()  # f(i) = i along x
    u = np.zeros(rho.shape + (3,))
    u[..., 0] = 1.0
    out = advect_sl(rho, u)
    assert np.array_equal(out[..., 1:], rho[..., :-1])


def test_sl_matches_loop_oracle(rng):
    rho = rng.random((6, 6, 6))
    u = rng.uniform(-1, 1, (6, 6, 6, 3))
    assert np.max(np.abs(advect_sl(rho, u) - sl_oracle(rho, u))) < 1e-14


def test_maccormack_keeps_constants(rng):
    rho = np.full((5, 5, 5), 0.3)
    u = rng.uniform(-1, 1, (5, 5, 5, 3))
    assert np.max(np.abs(advect_maccormack(rho, u) - 0.3)) < 1e-15


def test_outputs_stay_in_input_range(rng):
    rho = rng.random((6, 6, 6))
    u = rng.uniform(-1.5, 1.5, (6, 6, 6, 3))
    for f in (advect_sl, advect_maccormack):
        out = f(rho, u)
        assert out.min() >= rho.min() - 1e-15 and out.max() <= rho.max() + 1e-15


def test_shape_mismatch():
    with pytest.raises(ValueError):
        advect_sl(np.zeros((3, 3, 3)), np.zeros((3, 3, 4, 3)))
    with pytest.raises(ValueError):
        advect_maccormack(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))


def _blob_benchmark(n=48, steps=10, speed=0.5):
    shape = (n, n, n)
    c0 = np.full(3, n / 2.0)
    c0[0] -= steps * speed / 2
    rho0 = gaussian_blob(shape, c0, 4.0, 1.0)
    u = np.zeros(shape + (3,))
    u[..., 0] = speed
    exact = gaussian_blob(shape, c0 + np.array([steps * speed, 0, 0]), 4.0, 1.0)
    errs = {}
    for name, f in (("sl", advect_sl), ("mc", advect_maccormack)):
        r = rho0
        for _ in range(steps):
            r = f(r, u)
        errs[name] = float(np.sqrt(np.mean((r - exact) ** 2)))
    return errs


def test_maccormack_beats_sl_on_translation():
    errs = _blob_benchmark()
    assert errs["mc"] < errs["sl"]


def test_sequence_matches_manual_nesting(rng):
    rho0 = rng.random((8, 8, 8))
    pots = [[rng.normal(0, 0.3, (4, 4, 4, 3)), rng.normal(0, 0.3, (8, 8, 8, 3))]
            for _ in range(3)]
    from smokeflow.potential import compose_multiscale

    u = [curl(compose_multiscale(p)) for p in pots]
    manual = advect_maccormack(advect_maccormack(advect_maccormack(rho0, u[0]), u[1]), u[2])
    frames = advect_sequence(rho0, pots)
    assert len(frames) == 3 and np.array_equal(frames[-1], manual)
    assert np.array_equal(advect_sequence(rho0, pots[:1])[0], advect_maccormack(rho0, u[0]))
    zero = [[np.zeros_like(a) for a in p] for p in pots]
    assert all(np.array_equal(f, rho0) for f in advect_sequence(rho0, zero))


def test_sequence_clamp_flag(rng):
    rho0 = rng.random((4, 4, 4)) - 0.5
    pots = [[np.zeros((4, 4, 4, 3))]]
    assert advect_sequence(rho0, pots, clamp_density=True)[0].min() >= 0.0


@pytest.mark.parametrize("scheme", ["sl", "mc"])
def test_adjoint_dot_product(rng, scheme):
    rho = rng.random((5, 5, 5))
    u = rng.uniform(-0.9, 0.9, (5, 5, 5, 3))
    d_rho = rng.standard_normal(rho.shape)
    d_u = rng.standard_normal(u.shape)
    y = rng.standard_normal(rho.shape)
    if scheme == "sl":
        jv = advect_sl_jvp(d_rho, d_u, rho, u)
        g_rho, g_u = advect_sl_vjp(y, rho, u)
    else:
        jv = advect_maccormack_jvp(d_rho, d_u, rho, u)
        g_rho, g_u = advect_maccormack_vjp(y, rho, u)
    assert dot_rel(np.vdot(jv, y), np.vdot(d_rho, g_rho) + np.vdot(d_u, g_u)) < 1e-12


@pytest.mark.parametrize("scheme", ["sl", "mc"])
def test_directional_derivative_matches_fd(rng, scheme):
    f = advect_sl if scheme == "sl" else advect_maccormack
    jvp = advect_sl_jvp if scheme == "sl" else advect_maccormack_jvp
    rho = rng.random((5, 5, 5))
    u = rng.uniform(-0.8, 0.8, (5, 5, 5, 3))
    d_rho = rng.standard_normal(rho.shape)
    d_u = rng.standard_normal(u.shape)
    h = 1e-5
    fd = (f(rho + h * d_rho, u + h * d_u) - f(rho - h * d_rho, u - h * d_u)) / (2 * h)
    an = jvp(d_rho, d_u, rho, u)
    # cells whose one-sided slopes disagree sit on a lookup or limiter kink
    f0 = f(rho, u)
    fwd = (f(rho + h * d_rho, u + h * d_u) - f0) / h
    bwd = (f0 - f(rho - h * d_rho, u - h * d_u)) / h
    smooth = np.abs(fwd - bwd) <= 1e-3 * np.maximum(np.abs(fwd), 1e-6)
    assert smooth.mean() > 0.8
    rel = np.abs(fd - an)[smooth] / np.maximum(np.abs(an)[smooth], 1e-6 * np.abs(an).max())
    assert rel.max() < 1e-6


def test_zero_velocity_gradient_is_identity(rng):
    rho = rng.random((5, 5, 5))
    u = np.zeros(rho.shape + (3,))
    g = rng.standard_normal(rho.shape)
    g_rho, _ = advect_maccormack_vjp(g, rho, u)
    assert np.allclose(g_rho, g, atol=1e-15)
    g_rho, _ = advect_sl_vjp(g, rho, u)
    assert np.array_equal(g_rho, g)


def test_vjp_shape_check(rng):
    rho = rng.random((4, 4, 4))
    u = np.zeros(rho.shape + (3,))
    with pytest.raises(ValueError):
        advect_sl_vjp(np.zeros((4, 4, 5)), rho, u)
    with pytest.raises(ValueError):
        advect_maccormack_vjp(np.zeros((4, 4, 5)), rho, u)


def test_cell_centers_layout():
    c = cell_centers((2, 3, 4))
    assert c.shape == (2, 3, 4, 3)
    assert np.array_equal(c[1, 2, 3], [3.5, 2.5, 1.5])
