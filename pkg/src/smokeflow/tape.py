"""Minimal reverse-mode differentiation over the package's operators.

A :class:`Tape` records every operator application together with a closure
that maps the output cotangent to input cotangents. :meth:`Tape.gradient`
replays those closures in reverse order. Only the operators defined in this
module are recorded; each one delegates to the hand-written adjoints of the
numerical modules.
"""

from __future__ import annotations

import numpy as np

from . import loss, potential, transport


class Var:
    __slots__ = ("value", "tape", "index", "name")

    def __init__(self, value, tape, index, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Var({self.name or self.index}, shape={self.shape})"


class Tape:
    def __init__(self):
        self._count = 0
        # (output index, input indices, vjp); closures hold arrays, never Vars,
        # so a finished tape is freed without waiting for the cycle collector
        self._records = []

    def __len__(self):
        return len(self._records)

    def _new(self, value, name=None) -> Var:
        v = Var(value, self, self._count, name)
        self._count += 1
        return v

    def leaf(self, value, name=None) -> Var:
        return self._new(np.asarray(value, dtype=np.float64), name)

    def record(self, value, inputs, vjp, name=None) -> Var:
        for x in inputs:
            if x.tape is not self:
                raise ValueError("all inputs must live on the same tape")
        out = self._new(value, name)
        self._records.append((out.index, tuple(x.index for x in inputs), vjp))
        return out

    def gradient(self, output: Var, wrt):
        """Gradients of scalar ``output`` for every Var in ``wrt``.

        Leaves that did not influence the output receive zeros.
        """
        if np.ndim(output.value) != 0:
            raise ValueError("gradient needs a scalar output")
        grads = {output.index: 1.0}
        for out_i, in_idx, vjp in reversed(self._records):
            g = grads.pop(out_i, None)
            if g is None:
                continue
            for i, gi in zip(in_idx, vjp(g)):
                if gi is None:
                    continue
                grads[i] = grads[i] + gi if i in grads else gi
        single = isinstance(wrt, Var)
        items = [wrt] if single else list(wrt)
        res = [np.broadcast_to(grads.get(v.index, 0.0), v.shape).astype(np.float64) for v in items]
        return res[0] if single else res


def _tape(*xs) -> Tape:
    return xs[0].tape


def add(a: Var, b: Var) -> Var:
    return _tape(a).record(a.value + b.value, [a, b], lambda g: (g, g))


def add_n(xs) -> Var:
    xs = list(xs)
    n = len(xs)
    total = sum(x.value for x in xs)
    return _tape(*xs).record(total, xs, lambda g: (g,) * n)


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return _tape(a).record(c * a.value, [a], lambda g: (c * g,))


def softplus(a: Var) -> Var:
    x = a.value
    val = np.logaddexp(0.0, x)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _tape(a).record(val, [a], lambda g: (g * sig,))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return _tape(a).record(np.where(mask, a.value, 0.0), [a], lambda g: (np.where(mask, g, 0.0),))


def curl(P: Var) -> Var:
    return _tape(P).record(potential.curl(P.value), [P], lambda g: (potential.curl_adjoint(g),))


def upsample(P: Var, kind="bspline2") -> Var:
    up, up_adj = potential.UPSAMPLERS[kind]
    return _tape(P).record(up(P.value), [P], lambda g: (up_adj(g),))


def downsample(P: Var) -> Var:
    return _tape(P).record(
        potential.downsample_avg(P.value), [P], lambda g: (potential.downsample_avg_adjoint(g),)
    )


def compose_multiscale(levels, kind="bspline2") -> Var:
    potential.check_ladder([lv.value for lv in levels])
    total = levels[0]
    for residual in levels[1:]:
        total = add(upsample(total, kind), residual)
    return total


def advect_sl(rho: Var, u: Var, dt=1.0) -> Var:
    r, v = rho.value, u.value
    return _tape(rho).record(
        transport.advect_sl(r, v, dt), [rho, u], lambda g: transport.advect_sl_vjp(g, r, v, dt)
    )


def advect_maccormack(rho: Var, u: Var, dt=1.0) -> Var:
    r, v = rho.value, u.value
    state = transport.maccormack_forward(r, v, dt)
    return _tape(rho).record(
        state.out, [rho, u],
        lambda g: transport.advect_maccormack_vjp(g, r, v, dt, state),
    )


def render(rho: Var, renderer, paper_backward=False) -> Var:
    r = rho.value
    saved = renderer.forward(r)
    img = renderer._compose(saved["emit"], saved["t_end"])
    if paper_backward:
        return _tape(rho).record(img, [rho], lambda g: (renderer.paper_backward(g),))
    return _tape(rho).record(img, [rho], lambda g: (renderer.vjp(g, r, saved),))


def mse(a: Var, target) -> Var:
    t = np.asarray(target, dtype=np.float64)
    v = a.value
    return _tape(a).record(np.float64(loss.mse(v, t)), [a], lambda g: (g * loss.mse_grad(v, t),))


def l_center(rho: Var, c_z=None, r=None, axis="z") -> Var:
    v = rho.value
    return _tape(rho).record(
        np.float64(loss.l_center(v, c_z, r, axis)), [rho],
        lambda g: (g * loss.l_center_grad(v, c_z, r, axis),),
    )


def l_cfl(u: Var) -> Var:
    v = u.value
    return _tape(u).record(np.float64(loss.l_cfl(v)), [u], lambda g: (g * loss.l_cfl_grad(v),))


def l_smooth(u: Var) -> Var:
    v = u.value
    return _tape(u).record(
        np.float64(loss.l_smooth(v)), [u], lambda g: (g * loss.l_smooth_grad(v),)
    )


def vdot(a: Var, y) -> Var:
    """Scalar projection ``<a, y>`` with a constant ``y``; used for checks."""
    y = np.asarray(y, dtype=np.float64)
    return _tape(a).record(np.float64(np.vdot(a.value, y)), [a], lambda g: (g * y,))
