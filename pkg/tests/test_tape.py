import numpy as np
import pytest

from smokeflow import tape as td
from smokeflow.grid import LightConfig
from smokeflow.render import Renderer
from smokeflow.synth import orbit_camera


def test_untouched_leaves_get_zero_gradient(rng):
    t = td.Tape()
    a = t.leaf(rng.random((3, 3)), "a")
    b = t.leaf(rng.random((2,)), "b")
    out = td.vdot(a, np.ones((3, 3)))
    ga, gb = t.gradient(out, [a, b])
    assert np.array_equal(ga, np.ones((3, 3)))
    assert np.array_equal(gb, np.zeros(2))


def test_fan_out_accumulates(rng):
    t = td.Tape()
    x = t.leaf(rng.random(4))
    y = rng.random(4)
    out = td.vdot(x + x * 2.0, y)
    assert np.allclose(t.gradient(out, x), 3 * y, atol=1e-15)


def test_gradient_requires_scalar_and_same_tape(rng):
    t = td.Tape()
    x = t.leaf(rng.random(3))
    with pytest.raises(ValueError):
        t.gradient(x, [x])
    other = td.Tape().leaf(rng.random(3))
    with pytest.raises(ValueError):
        td.add(x, other)


def test_softplus_and_relu(rng):
    t = td.Tape()
    x = t.leaf(np.array([-30.0, -1.0, 0.0, 2.0, 40.0]))
    y = np.arange(1.0, 6.0)
    sp = td.softplus(x)
    assert np.all(np.isfinite(sp.value)) and sp.value[-1] == 40.0
    g = t.gradient(td.vdot(sp, y), x)
    assert np.allclose(g, y / (1 + np.exp(-x.value)), rtol=1e-14)
    t2 = td.Tape()
    x2 = t2.leaf(np.array([-1.0, 0.0, 1.0]))
    assert np.array_equal(t2.gradient(td.vdot(td.relu(x2), np.ones(3)), x2), [0.0, 0.0, 1.0])


def test_composed_chain_matches_fd(rng):
    from smokeflow.optim import gradcheck

    shape = (6, 6, 6)
    r = Renderer(orbit_camera((6, 6, 6), 30.0, (6, 6)), LightConfig(), shape)
    target = rng.random((6, 6)) * 0.2

    def fn(p):
        rho = td.softplus(p["rho"])
        u = td.curl(td.compose_multiscale([p["P0"], p["P1"]]))
        nxt = td.advect_maccormack(rho, u)
        side = td.advect_sl(rho, u)
        return (td.mse(td.render(nxt, r), target) + td.l_cfl(u) * 0.1 + td.l_smooth(u) * 0.01
                + td.l_center(nxt) * 1e-3 + td.vdot(side, np.full(shape, 1e-3)))

    params = {"rho": rng.normal(-2, 0.5, shape),
              "P0": rng.normal(0, 0.8, (3, 3, 3, 3)),
              "P1": rng.normal(0, 0.3, (6, 6, 6, 3))}
    res = gradcheck(fn, params, n=64)
    assert res.checked >= 64 and res.max_rel_error < 1e-6
