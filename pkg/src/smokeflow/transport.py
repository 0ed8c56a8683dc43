"""Semi-Lagrangian and MacCormack advection with exact derivatives.

Velocities are in cells per frame. Lookups clamp to the nearest boundary
cell center, which makes every boundary open: material entering the domain
takes the value of the outermost cell layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Trilinear, cell_centers


def _check(rho, u):
    if u.shape != rho.shape + (3,):
        raise ValueError(f"velocity shape {u.shape} does not match density shape {rho.shape}")


def advect_sl(rho, u, dt=1.0) -> np.ndarray:
    """Single backtrace semi-Lagrangian step: ``out(x) = rho(x - dt*u(x))``."""
    _check(rho, u)
    return Trilinear(rho.shape, cell_centers(rho.shape) - dt * u).sample(rho)


def advect_sl_vjp(g, rho, u, dt=1.0):
    """Returns ``(grad_rho, grad_u)`` for output cotangent ``g``."""
    _check(rho, u)
    if g.shape != rho.shape:
        raise ValueError("cotangent shape mismatch")
    look = Trilinear(rho.shape, cell_centers(rho.shape) - dt * u)
    return look.scatter(g), -dt * g[..., None] * look.grad_pos(rho)


def advect_sl_jvp(d_rho, d_u, rho, u, dt=1.0):
    _check(rho, u)
    look = Trilinear(rho.shape, cell_centers(rho.shape) - dt * u)
    return look.sample(d_rho) - dt * np.einsum("...d,...d->...", look.grad_pos(rho), d_u)


@dataclass
class MacCormackState:
    """Intermediate values of one MacCormack step, kept for derivatives."""

    fwd: Trilinear
    back: Trilinear
    predicted: np.ndarray
    out: np.ndarray
    # 0: corrected value kept, 1: clamped to corner min, 2: clamped to corner max
    mode: np.ndarray
    selected: np.ndarray  # flat index of the corner the clamp copied


def maccormack_forward(rho, u, dt=1.0) -> MacCormackState:
    _check(rho, u)
    x = cell_centers(rho.shape)
    fwd = Trilinear(rho.shape, x - dt * u)
    predicted = fwd.sample(rho)
    back = Trilinear(rho.shape, x + dt * u)
    corrected = predicted + 0.5 * (rho - back.sample(predicted))

    corner_vals = fwd.corners(rho)
    i_min = np.argmin(corner_vals, axis=-1)
    i_max = np.argmax(corner_vals, axis=-1)
    lo = np.take_along_axis(corner_vals, i_min[..., None], -1)[..., 0]
    hi = np.take_along_axis(corner_vals, i_max[..., None], -1)[..., 0]
    mode = np.where(corrected < lo, 1, np.where(corrected > hi, 2, 0))
    out = np.where(mode == 1, lo, np.where(mode == 2, hi, corrected))
    sel_min = np.take_along_axis(fwd.idx, i_min[..., None], -1)[..., 0]
    sel_max = np.take_along_axis(fwd.idx, i_max[..., None], -1)[..., 0]
    selected = np.where(mode == 2, sel_max, sel_min)
    return MacCormackState(fwd, back, predicted, out, mode, selected)


def advect_maccormack(rho, u, dt=1.0) -> np.ndarray:
    """MacCormack step on top of :func:`advect_sl`, limited to the range of
    the corner values seen by the first lookup."""
    return maccormack_forward(rho, u, dt).out


def advect_maccormack_vjp(g, rho, u, dt=1.0, state: MacCormackState | None = None):
    """Exact reverse-mode derivative; the limiter routes the gradient to the
    clamped corner where it is active."""
    if state is None:
        state = maccormack_forward(rho, u, dt)
    if g.shape != rho.shape:
        raise ValueError("cotangent shape mismatch")
    keep = state.mode == 0
    g_corr = np.where(keep, g, 0.0)
    g_rho = 0.5 * g_corr
    g_back = -0.5 * g_corr
    g_pred = g_corr + state.back.scatter(g_back)
    g_u = dt * g_back[..., None] * state.back.grad_pos(state.predicted)
    g_rho = g_rho + state.fwd.scatter(g_pred)
    g_u = g_u - dt * g_pred[..., None] * state.fwd.grad_pos(rho)
    clamped = np.where(keep, 0.0, g).ravel()
    g_rho = g_rho + np.bincount(
        state.selected.ravel(), weights=clamped, minlength=rho.size
    ).reshape(rho.shape)
    return g_rho, g_u


def advect_maccormack_jvp(d_rho, d_u, rho, u, dt=1.0, state: MacCormackState | None = None):
    if state is None:
        state = maccormack_forward(rho, u, dt)
    d_pred = state.fwd.sample(d_rho) - dt * np.einsum(
        "...d,...d->...", state.fwd.grad_pos(rho), d_u
    )
    d_back = state.back.sample(d_pred) + dt * np.einsum(
        "...d,...d->...", state.back.grad_pos(state.predicted), d_u
    )
    d_corr = d_pred + 0.5 * (d_rho - d_back)
    return np.where(state.mode == 0, d_corr, d_rho.ravel()[state.selected])


def advect_sequence(rho0, potentials, dt=1.0, clamp_density=False) -> list[np.ndarray]:
    """Transport ``rho0`` through one multi-scale potential per step.

    Returns the frames after each step, ``[rho^1, ..., rho^T]``.
    """
    from .potential import compose_multiscale, curl

    if len(potentials) < 1:
        raise ValueError("need at least one step")
    frames = []
    rho = rho0
    for levels in potentials:
        rho = advect_maccormack(rho, curl(compose_multiscale(levels)), dt)
        if clamp_density:
            rho = np.maximum(rho, 0.0)
        frames.append(rho)
    return frames
