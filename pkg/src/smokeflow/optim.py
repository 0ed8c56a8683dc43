"""Adam, learning-rate decay, gradient checking and scene reconstruction.

``reconstruct`` optimizes the initial density and one residual multi-scale
vector potential per transport step directly, coarse to fine, so that the
transported densities render to the observed images.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tape as td
from .grid import LightConfig
from .loss import TERM_WEIGHT, LossWeights, total_loss
from .potential import compose_multiscale, curl, divergence, interior, ladder_shapes
from .render import Renderer

log = logging.getLogger(__name__)


def lr_decay(base_lr, iteration, offset, decay) -> float:
    """``base_lr / (1 + (iteration - offset) * decay)``."""
    denom = 1.0 + (iteration - offset) * decay
    if denom <= 0:
        raise ValueError(f"learning-rate decay denominator is {denom}, must be positive")
    return base_lr / denom


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr) -> None:
    """Bias-corrected Adam update of ``params`` in place.

    ``lr`` is a float or a dict with one learning rate per parameter. Only
    parameters present in ``grads`` are updated.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape for {name!r}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        rate = lr[name] if isinstance(lr, dict) else lr
        params[name] -= rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class GradcheckResult:
    max_rel_error: float
    worst: tuple  # (parameter name, flat index)
    checked: int
    skipped_kinks: int
    h: float

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "worst": [self.worst[0], int(self.worst[1])],
            "checked": self.checked,
            "skipped_kinks": self.skipped_kinks,
            "h": self.h,
        }


def gradcheck(fn, params: dict, h=1e-5, n=64, seed=0, kink_tol=1e-3, floor=1e-6):
    """Compare tape gradients with central differences on random coordinates.

    ``fn`` maps a dict of tape Vars to a scalar Var. At least ``n``
    coordinates are checked when that many are available. A coordinate whose
    forward and backward one-sided slopes disagree by more than ``kink_tol``
    (relative) sits next to a kink and is skipped. The relative error uses
    ``max(|analytic|, |numeric|, floor * max|gradient|)`` as denominator.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def value(p):
        t = td.Tape()
        out = fn({k: t.leaf(v, k) for k, v in p.items()})
        val = float(out.value)
        if not math.isfinite(val):
            raise FloatingPointError("objective is not finite")
        return val

    t = td.Tape()
    leaves = {k: t.leaf(v, k) for k, v in params.items()}
    out = fn(leaves)
    grads = dict(zip(leaves, t.gradient(out, list(leaves.values()))))
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k!r}")
    scale = max(float(np.max(np.abs(g))) for g in grads.values()) if grads else 0.0
    f0 = float(out.value)

    names = list(params)
    sizes = [params[k].size for k in names]
    offsets = np.cumsum([0] + sizes)
    order = np.random.default_rng(seed).permutation(offsets[-1])

    worst = (names[0], 0)
    max_err = 0.0
    checked = kinks = 0
    for flat in order:
        if checked >= n:
            break
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[which]
        i = int(flat - offsets[which])
        base = params[name].reshape(-1)
        orig = base[i]
        base[i] = orig + h
        fp = value(params)
        base[i] = orig - h
        fm = value(params)
        base[i] = orig
        fwd = (fp - f0) / h
        bwd = (f0 - fm) / h
        numeric = 0.5 * (fp - fm) / h
        analytic = float(grads[name].reshape(-1)[i])
        denom = max(abs(analytic), abs(numeric), floor * scale, 1e-300)
        if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd), floor * scale, 1e-300):
            kinks += 1
            continue
        err = abs(analytic - numeric) / denom
        checked += 1
        if checked == 1 or err > max_err:
            max_err = err
            worst = (name, i)
    return GradcheckResult(max_err, worst, checked, kinks, h)


@dataclass
class View:
    camera: object
    images: list  # one target per frame, frames 0..T
    background: np.ndarray | None = None


@dataclass
class ReconProblem:
    views: list  # views[0] is the input view
    light: LightConfig
    shape: tuple  # (nz, ny, nx) simulation resolution
    steps: int  # transport steps T; frames 0..T
    n_levels: int = 4
    level_growth: tuple | None = None  # iterations activating levels 1..; None spreads evenly
    frame_growth: tuple = ()  # (iteration, active transport steps) pairs
    iterations: int = 300
    density_warmup: int | None = None  # leading iterations that fit rho0 alone
    weights: LossWeights = field(default_factory=LossWeights)
    lr_density: float = 0.2
    lr_potential: float = 0.005
    lr_decay: float = 2e-4
    lr_offset: float = -5000.0
    init_density: float = 1e-3
    prototypes: list | None = None  # optional proto volumes for frames 0..T
    center_axis: str = "z"
    center_cz: float | None = None
    clamp_density: bool = False
    cfl_per_level: bool = False
    paper_backward: bool = False
    light_grad: bool = True
    step: float = 0.5
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.views:
            raise ValueError("need at least one view")
        for v in self.views:
            if len(v.images) != self.steps + 1:
                raise ValueError(f"each view needs {self.steps + 1} frames, got {len(v.images)}")
            shapes = {np.shape(im) for im in v.images}
            if len(shapes) != 1:
                raise ValueError("frames of a view must share one resolution")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.density_warmup is None:
            self.density_warmup = self.iterations // 3 if self.steps > 0 else 0
        if not 0 <= self.density_warmup <= self.iterations:
            raise ValueError("density_warmup must lie in [0, iterations]")
        if self.level_growth is None:
            w, span = self.density_warmup, self.iterations - self.density_warmup
            self.level_growth = tuple(w + span * k // self.n_levels
                                      for k in range(1, self.n_levels))
        self.level_growth = tuple(int(g) for g in self.level_growth)
        self.frame_growth = tuple(tuple(int(v) for v in fg) for fg in self.frame_growth)
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if len(self.level_growth) > self.n_levels - 1:
            raise ValueError("more growth points than levels")
        ladder_shapes(self.shape, self.n_levels)


@dataclass
class ReconResult:
    rho0: np.ndarray
    potentials: list  # per step, list of level arrays coarsest first
    frames: list  # rho^1 .. rho^T
    velocities: list
    report: list
    aborted: bool = False

    @property
    def densities(self):
        return [self.rho0] + list(self.frames)


def _active_steps(problem, it):
    """Transport steps in use at iteration ``it``; growth starts from 1 step."""
    if it < problem.density_warmup:
        return 0
    if not problem.frame_growth:
        return problem.steps
    n = min(1, problem.steps)
    for start, k in sorted(problem.frame_growth):
        if it >= start:
            n = min(k, problem.steps)
    return n


def _active_levels(problem, it):
    return 1 + sum(1 for g in problem.level_growth if it >= g)


def _level_lr(problem, level):
    return problem.lr_potential * 2.0 ** (problem.n_levels - 1 - level)


def _softplus_inv(y):
    return math.log(math.expm1(y))


def build_objective(problem: ReconProblem, renderers, n_steps, n_levels):
    """Returns ``fn(vars) -> (loss Var, terms dict, velocities)`` over a
    parameter dict with ``rho0`` and ``P{t}_{l}`` entries."""
    w = problem.weights
    shapes = ladder_shapes(problem.shape, problem.n_levels)

    def frame_terms(rho, t, terms):
        for v, r in zip(problem.views, renderers):
            img = td.render(rho, r, problem.paper_backward)
            terms["target"].append(td.mse(img, v.images[t]))
        if w.w_center > 0:
            terms["center"].append(td.l_center(rho, problem.center_cz, None, problem.center_axis))
        if problem.prototypes is not None and w.w_proxy > 0:
            terms["proxy"].append(td.mse(rho, problem.prototypes[t]))

    def fn(p):
        terms = {k: [] for k in ("target", "center", "proxy", "cfl", "smooth")}
        rho = td.softplus(p["rho0"])
        frame_terms(rho, 0, terms)
        velocities = []
        for t in range(n_steps):
            levels = [p[f"P{t}_{lvl}"] for lvl in range(n_levels)]
            pot = td.compose_multiscale(levels)
            for _ in range(problem.n_levels - n_levels):
                pot = td.upsample(pot)
            u = td.curl(pot)
            velocities.append(u.value)
            rho = td.advect_maccormack(rho, u)
            if problem.clamp_density:
                rho = td.relu(rho)
            frame_terms(rho, t + 1, terms)
            if w.w_cfl > 0:
                if problem.cfl_per_level and n_levels > 1:
                    for lvl, P in enumerate(levels):
                        for _ in range(problem.n_levels - 1 - lvl):
                            P = td.upsample(P)
                        terms["cfl"].append(td.l_cfl(td.curl(P)))
                else:
                    terms["cfl"].append(td.l_cfl(u))
            if w.w_smooth > 0:
                terms["smooth"].append(td.l_smooth(u))
        weighted = []
        values = {}
        for name, vs in terms.items():
            if not vs:
                continue
            s = td.add_n(vs) if len(vs) > 1 else vs[0]
            values[name] = float(s.value)
            weighted.append(td.scale(s, getattr(w, TERM_WEIGHT[name])))
        total = td.add_n(weighted) if len(weighted) > 1 else weighted[0]
        return total, values, velocities

    fn.shapes = shapes
    return fn


def make_renderers(problem: ReconProblem):
    return [
        Renderer(v.camera, problem.light, problem.shape, v.background, problem.step,
                 problem.light_grad)
        for v in problem.views
    ]


def reconstruct(problem: ReconProblem) -> ReconResult:
    renderers = make_renderers(problem)
    shapes = ladder_shapes(problem.shape, problem.n_levels)
    params = {"rho0": np.full(problem.shape, _softplus_inv(problem.init_density))}
    for t in range(problem.steps):
        for lvl, s in enumerate(shapes):
            params[f"P{t}_{lvl}"] = np.zeros(tuple(s) + (3,))
    lrs = {"rho0": problem.lr_density}
    for t in range(problem.steps):
        for lvl in range(problem.n_levels):
            lrs[f"P{t}_{lvl}"] = _level_lr(problem, lvl)

    state = AdamState()
    report = []
    last_good = {k: v.copy() for k, v in params.items()}
    aborted = False
    t_start = time.perf_counter()
    for it in range(problem.iterations):
        n_steps = _active_steps(problem, it)
        n_levels = _active_levels(problem, it)
        fn = build_objective(problem, renderers, n_steps, n_levels)
        tp = td.Tape()
        names = ["rho0"] + [f"P{t}_{lvl}" for t in range(n_steps) for lvl in range(n_levels)]
        leaves = {k: tp.leaf(params[k], k) for k in names}
        loss_var, values, velocities = fn(leaves)
        loss_val = float(loss_var.value)
        if not math.isfinite(loss_val):
            log.warning("loss became %s at iteration %d; keeping last good state", loss_val, it)
            params = last_good
            aborted = True
            break
        last_good = {k: v.copy() for k, v in params.items()}
        grads = dict(zip(names, tp.gradient(loss_var, list(leaves.values()))))
        decay = lr_decay(1.0, it, problem.lr_offset, problem.lr_decay)
        lr = {k: lrs[k] * decay for k in names}
        _, breakdown = total_loss(values, problem.weights)
        max_div = max((float(np.max(np.abs(interior(divergence(u))))) for u in velocities),
                      default=0.0)
        max_u = max((float(np.max(np.abs(u))) for u in velocities), default=0.0)
        report.append({
            "iteration": it,
            "loss": loss_val,
            "terms": breakdown,
            "lr_scale": decay,
            "steps": n_steps,
            "levels": n_levels,
            "max_div": max_div,
            "max_u": max_u,
        })
        if problem.log_every and it % problem.log_every == 0:
            log.info("it %d loss %.4e %s (%.1fs)", it, loss_val, breakdown,
                     time.perf_counter() - t_start)
        adam_step(params, grads, state, lr)

    return _finish(problem, params, report, aborted)


def _finish(problem, params, report, aborted) -> ReconResult:
    from .transport import advect_maccormack

    rho0 = np.logaddexp(0.0, params["rho0"])
    potentials = []
    velocities = []
    frames = []
    rho = rho0
    for t in range(problem.steps):
        levels = [params[f"P{t}_{lvl}"] for lvl in range(problem.n_levels)]
        potentials.append(levels)
        u = curl(compose_multiscale(levels))
        velocities.append(u)
        rho = advect_maccormack(rho, u)
        if problem.clamp_density:
            rho = np.maximum(rho, 0.0)
        frames.append(rho)
    return ReconResult(rho0, potentials, frames, velocities, report, aborted)


def problem_for_scene(scene, view_indices, **kwargs) -> ReconProblem:
    """Reconstruction problem over the cameras ``view_indices`` of a synthetic scene."""
    if not view_indices:
        raise ValueError("view set is empty")
    n_cams = len(scene.cameras)
    for c in view_indices:
        if not 0 <= c < n_cams:
            raise ValueError(f"camera index {c} out of range for {n_cams} cameras")
    views = [View(scene.cameras[c], scene.views[c], scene.background) for c in view_indices]
    return ReconProblem(views=views, light=scene.light, shape=scene.config.shape,
                        steps=scene.config.frames, step=scene.config.step, **kwargs)


def evaluate(scene, result: ReconResult, view_indices) -> dict:
    """Input-view, held-out-view and volume errors averaged over frames."""
    from .metrics import rmse_image, rmse_volume

    dens = result.densities
    per_cam = []
    for c in range(len(scene.cameras)):
        r = scene.renderer(c)
        per_cam.append(float(np.mean([rmse_image(r.render(d), scene.views[c][t])
                                      for t, d in enumerate(dens)])))
    held_out = [per_cam[c] for c in range(len(per_cam)) if c not in view_indices]
    return {
        "views": list(view_indices),
        "input_rmse": per_cam[view_indices[0]],
        "side_rmse": float(np.mean(held_out)) if held_out else None,
        "volume_rmse": float(np.mean([rmse_volume(d, g)
                                      for d, g in zip(dens, scene.densities)])),
        "max_u": max((float(np.max(np.abs(u))) for u in result.velocities), default=0.0),
        "aborted": result.aborted,
    }


def ablate_views(scene, view_sets, **kwargs) -> dict:
    """Reconstruct once per camera set and compare volume errors.

    ``trend_holds`` is true when every set with more cameras than the first
    one reaches a strictly smaller volume RMSE than the first set.
    """
    rows = []
    for vs in view_sets:
        vs = [int(c) for c in vs]
        res = reconstruct(problem_for_scene(scene, vs, **kwargs))
        rows.append(evaluate(scene, res, vs))
    base = rows[0]["volume_rmse"] if rows else 0.0
    trend = all(r["volume_rmse"] < base for r in rows[1:]
                if len(r["views"]) > len(rows[0]["views"]))
    return {"runs": rows, "trend_holds": bool(trend)}


def ablate_center(scene, view=0, **kwargs) -> dict:
    """Single-view reconstruction with and without the center loss.

    Reports the density-weighted mean distance from the depth center plane,
    averaged over frames, for both settings.
    """
    from .metrics import depth_centroid_deviation

    weights = kwargs.pop("weights", LossWeights())
    axis = kwargs.get("center_axis", "z")
    ax = {"x": 2, "y": 1, "z": 0}[axis]
    out = {}
    for label, wc in (("on", weights.w_center), ("off", 0.0)):
        w = LossWeights(**{**weights.__dict__, "w_center": wc})
        res = reconstruct(problem_for_scene(scene, [view], weights=w, **kwargs))
        dev = np.mean([depth_centroid_deviation(d, kwargs.get("center_cz"), ax)
                       for d in res.densities])
        out[label] = {"w_center": wc, "centroid_deviation": float(dev),
                      **evaluate(scene, res, [view])}
    out["center_reduces_deviation"] = (
        out["on"]["centroid_deviation"] < out["off"]["centroid_deviation"])
    return out
