import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from smokeflow.grid import sample_trilinear
from smokeflow.loss import l_center, l_cfl, l_smooth, ralsgan
from smokeflow.potential import (
    curl,
    divergence,
    downsample_avg,
    interior,
    upsample_bspline2,
)
from smokeflow.transport import advect_maccormack, advect_sl

FAST = settings(max_examples=40, deadline=None)
finite = st.floats(-4.0, 4.0, allow_nan=False, width=64)
dims = st.tuples(st.integers(2, 6), st.integers(2, 6), st.integers(2, 6))


@st.composite
def scalar_field(draw, lo=0.0, hi=1.0):
    shape = draw(dims)
    return draw(arrays(np.float64, shape, elements=st.floats(lo, hi, width=64)))


@st.composite
def density_and_velocity(draw):
    rho = draw(scalar_field())
    u = draw(arrays(np.float64, rho.shape + (3,), elements=st.floats(-1.5, 1.5, width=64)))
    return rho, u


@FAST
@given(scalar_field(-3.0, 3.0), st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=8))
def test_sampling_stays_within_data_range(data, pts):
    v = sample_trilinear(data, np.array(pts) * 4.0)
    assert np.all(v >= data.min() - 1e-12) and np.all(v <= data.max() + 1e-12)


@FAST
@given(density_and_velocity())
def test_advection_respects_input_range(ru):
    rho, u = ru
    for out in (advect_sl(rho, u), advect_maccormack(rho, u)):
        assert np.all(out >= rho.min() - 1e-12) and np.all(out <= rho.max() + 1e-12)


@FAST
@given(st.integers(0, 2**31 - 1), dims)
def test_curl_divergence_free(seed, shape):
    P = np.random.default_rng(seed).standard_normal(tuple(s + 2 for s in shape) + (3,))
    d = interior(divergence(curl(P)))
    assert np.max(np.abs(d)) < 1e-12 * max(1.0, float(np.abs(P).max()))


@FAST
@given(st.integers(0, 2**31 - 1), st.floats(-3.0, 3.0, width=64))
def test_linear_operators_are_linear(seed, a):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 4, 4, 4, 3))
    for op in (curl, upsample_bspline2, downsample_avg):
        assert np.allclose(op(a * x + y), a * op(x) + op(y), atol=1e-12)


@FAST
@given(density_and_velocity())
def test_losses_nonnegative(ru):
    rho, u = ru
    assert l_center(rho) >= 0.0
    assert l_cfl(u) >= 0.0
    assert l_smooth(u) >= 0.0


@FAST
@given(st.lists(finite, min_size=1, max_size=6), st.lists(finite, min_size=1, max_size=6),
       st.sampled_from([-1.0, 1.0]))
def test_ralsgan_nonnegative(real, fake, label):
    assert ralsgan(real, fake, label) >= 0.0
