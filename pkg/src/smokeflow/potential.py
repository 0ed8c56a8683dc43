"""Divergence-free velocities from vector potentials.

Includes the discrete curl and divergence, factor-2 resampling between
resolution levels and the residual multi-scale composition, each with its
exact transpose. All operators here are linear.
"""

from __future__ import annotations

import numpy as np

# array axis for the x, y and z derivative of a (nz, ny, nx[, 3]) field
_AXIS = {"x": 2, "y": 1, "z": 0}

# fine-cell taps on coarse cells (j-1, j, j+1) for the even fine child 2j;
# the odd child 2j+1 uses the mirrored taps
BSPLINE2_TAPS = (9.0 / 32.0, 22.0 / 32.0, 1.0 / 32.0)
LINEAR_TAPS = (0.25, 0.75, 0.0)


def _sl(axis, s, ndim):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def diff(a, axis) -> np.ndarray:
    """Central difference in the interior, one-sided at the two boundary layers."""
    n = a.shape[axis]
    out = np.zeros_like(a)
    if n < 2:
        return out
    nd = a.ndim
    out[_sl(axis, slice(1, -1), nd)] = 0.5 * (
        a[_sl(axis, slice(2, None), nd)] - a[_sl(axis, slice(None, -2), nd)]
    )
    out[_sl(axis, 0, nd)] = a[_sl(axis, 1, nd)] - a[_sl(axis, 0, nd)]
    out[_sl(axis, -1, nd)] = a[_sl(axis, -1, nd)] - a[_sl(axis, -2, nd)]
    return out


def diff_adjoint(g, axis) -> np.ndarray:
    n = g.shape[axis]
    out = np.zeros_like(g)
    if n < 2:
        return out
    nd = g.ndim
    half = 0.5 * g[_sl(axis, slice(1, -1), nd)]
    out[_sl(axis, slice(2, None), nd)] += half
    out[_sl(axis, slice(None, -2), nd)] -= half
    out[_sl(axis, 1, nd)] += g[_sl(axis, 0, nd)]
    out[_sl(axis, 0, nd)] -= g[_sl(axis, 0, nd)]
    out[_sl(axis, -1, nd)] += g[_sl(axis, -1, nd)]
    out[_sl(axis, -2, nd)] -= g[_sl(axis, -1, nd)]
    return out


def curl(P) -> np.ndarray:
    """Discrete curl of a vector potential with unit cell spacing."""
    P = np.asarray(P, dtype=np.float64)
    px, py, pz = P[..., 0], P[..., 1], P[..., 2]
    return np.stack(
        [
            diff(pz, _AXIS["y"]) - diff(py, _AXIS["z"]),
            diff(px, _AXIS["z"]) - diff(pz, _AXIS["x"]),
            diff(py, _AXIS["x"]) - diff(px, _AXIS["y"]),
        ],
        axis=-1,
    )


def curl_adjoint(g) -> np.ndarray:
    gx, gy, gz = g[..., 0], g[..., 1], g[..., 2]
    return np.stack(
        [
            diff_adjoint(gy, _AXIS["z"]) - diff_adjoint(gz, _AXIS["y"]),
            diff_adjoint(gz, _AXIS["x"]) - diff_adjoint(gx, _AXIS["z"]),
            diff_adjoint(gx, _AXIS["y"]) - diff_adjoint(gy, _AXIS["x"]),
        ],
        axis=-1,
    )


def divergence(u) -> np.ndarray:
    """Divergence with the same stencils as :func:`curl`.

    Only interior cells are exactly zero for ``u = curl(P)``; the boundary
    layers use one-sided differences that do not commute.
    """
    u = np.asarray(u, dtype=np.float64)
    return diff(u[..., 0], 2) + diff(u[..., 1], 1) + diff(u[..., 2], 0)


def interior(a) -> np.ndarray:
    return a[1:-1, 1:-1, 1:-1]


def _up_axis(c, axis, taps):
    a, b, e = taps
    nd = c.ndim
    pad = [(0, 0)] * nd
    pad[axis] = (1, 1)
    p = np.pad(c, pad, mode="edge")
    left = p[_sl(axis, slice(None, -2), nd)]
    mid = p[_sl(axis, slice(1, -1), nd)]
    right = p[_sl(axis, slice(2, None), nd)]
    even = a * left + b * mid + e * right
    odd = e * left + b * mid + a * right
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(c.shape)
    shape[axis] *= 2
    return out.reshape(shape)


def _up_axis_adjoint(g, axis, taps):
    a, b, e = taps
    nd = g.ndim
    shape = list(g.shape)
    n = shape[axis] // 2
    split = shape[: axis] + [n, 2] + shape[axis + 1:]
    g2 = g.reshape(split)
    even = np.take(g2, 0, axis=axis + 1)
    odd = np.take(g2, 1, axis=axis + 1)
    pshape = list(even.shape)
    pshape[axis] = n + 2
    p = np.zeros(pshape)
    p[_sl(axis, slice(None, -2), nd)] += a * even + e * odd
    p[_sl(axis, slice(1, -1), nd)] += b * (even + odd)
    p[_sl(axis, slice(2, None), nd)] += e * even + a * odd
    out = p[_sl(axis, slice(1, -1), nd)].copy()
    out[_sl(axis, 0, nd)] += p[_sl(axis, 0, nd)]
    out[_sl(axis, -1, nd)] += p[_sl(axis, -1, nd)]
    return out


def _upsample(g, taps, factor):
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    out = np.asarray(g, dtype=np.float64)
    for axis in (0, 1, 2):
        out = _up_axis(out, axis, taps)
    return out


def _upsample_adjoint(g, taps, factor):
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    out = np.asarray(g, dtype=np.float64)
    for axis in (2, 1, 0):
        out = _up_axis_adjoint(out, axis, taps)
    return out


def upsample_bspline2(g, factor=2) -> np.ndarray:
    """Evaluate the quadratic B-spline with the coarse cells as control points
    at every fine cell center (approximating, C1)."""
    return _upsample(g, BSPLINE2_TAPS, factor)


def upsample_bspline2_adjoint(g, factor=2) -> np.ndarray:
    return _upsample_adjoint(g, BSPLINE2_TAPS, factor)


def upsample_linear(g, factor=2) -> np.ndarray:
    """Trilinear interpolation at fine cell centers."""
    return _upsample(g, LINEAR_TAPS, factor)


def upsample_linear_adjoint(g, factor=2) -> np.ndarray:
    return _upsample_adjoint(g, LINEAR_TAPS, factor)


def downsample_avg(g, factor=2) -> np.ndarray:
    """Average pooling over 2x2x2 blocks."""
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    g = np.asarray(g, dtype=np.float64)
    nz, ny, nx = g.shape[:3]
    if nz % 2 or ny % 2 or nx % 2:
        raise ValueError(f"cannot average-pool odd resolution {(nx, ny, nz)}")
    rest = g.shape[3:]
    return g.reshape((nz // 2, 2, ny // 2, 2, nx // 2, 2) + rest).mean(axis=(1, 3, 5))


def downsample_avg_adjoint(g, factor=2) -> np.ndarray:
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    out = np.asarray(g, dtype=np.float64) / 8.0
    for axis in (0, 1, 2):
        out = np.repeat(out, 2, axis=axis)
    return out


UPSAMPLERS = {
    "bspline2": (upsample_bspline2, upsample_bspline2_adjoint),
    "linear": (upsample_linear, upsample_linear_adjoint),
}


def check_ladder(levels) -> None:
    if len(levels) == 0:
        raise ValueError("multi-scale potential needs at least one level")
    for lvl, (a, b) in enumerate(zip(levels[:-1], levels[1:])):
        want = tuple(2 * s for s in a.shape[:3])
        if b.shape[:3] != want or b.shape[3:] != a.shape[3:]:
            raise ValueError(
                f"level {lvl + 1} has shape {b.shape}, expected {want + a.shape[3:]}"
            )


def ladder_shapes(finest, n_levels) -> list[tuple[int, int, int]]:
    """Resolutions of a factor-2 ladder ending at ``finest``, coarsest first."""
    shapes = []
    for lvl in range(n_levels):
        f = 2 ** (n_levels - 1 - lvl)
        if any(s % f for s in finest):
            raise ValueError(f"resolution {finest} not divisible by {f}")
        shapes.append(tuple(s // f for s in finest))
    return shapes


def upsample_chain(P, times, kind="bspline2") -> np.ndarray:
    up = UPSAMPLERS[kind][0]
    for _ in range(times):
        P = up(P)
    return P


def compose_multiscale(levels, kind="bspline2") -> np.ndarray:
    """Sum residual potentials coarse to fine: ``((P0 up) + P1) up + P2 ...``."""
    check_ladder(levels)
    up = UPSAMPLERS[kind][0]
    total = np.asarray(levels[0], dtype=np.float64)
    for residual in levels[1:]:
        total = up(total) + residual
    return total


def compose_multiscale_adjoint(g, shapes_or_levels, kind="bspline2") -> list[np.ndarray]:
    """Gradients for every level given the gradient of the composed potential."""
    n = len(shapes_or_levels)
    up_adj = UPSAMPLERS[kind][1]
    grads = [None] * n
    h = np.asarray(g, dtype=np.float64)
    grads[n - 1] = h
    for lvl in range(n - 2, -1, -1):
        h = up_adj(h)
        grads[lvl] = h
    return grads
