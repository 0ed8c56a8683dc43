"""Command line interface: ``smokeflow <subcommand> ...``.

Every subcommand accepts ``--seed``, ``--json`` and ``--threads``. Reports go
to stdout; failures print a single JSON object ``{"error": {...}}`` to stderr
and exit nonzero:

* 2: invalid configuration, input file or format
* 3: a check ran but its claim did not hold (gradcheck tolerance,
  ablation trend, upsampling comparison)
* 1: any other runtime failure

The error ``type`` is one of ``config``, ``format``, ``io``, ``usage``,
``check`` or ``runtime``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .grid import ScalarGrid, VectorGrid
from .io import ConfigError, FormatError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2
EXIT_CHECK = 3

log = logging.getLogger("smokeflow")


class CheckFailed(Exception):
    """A check subcommand finished but its claim did not hold."""

    def __init__(self, report):
        super().__init__("check failed")
        self.report = report


# ---------------------------------------------------------------- config


_RECON_NUMBERS = ("lr_density", "lr_potential", "lr_decay", "lr_offset", "init_density")
_RECON_INTS = ("iterations", "n_levels", "seed", "log_every")
_RECON_BOOLS = ("clamp_density", "cfl_per_level", "paper_backward", "light_grad")
_RECON_FIELDS = (
    {"scene", "views", "weights", "level_growth", "frame_growth", "center_axis", "center_cz"}
    | set(_RECON_NUMBERS) | set(_RECON_INTS) | set(_RECON_BOOLS)
)
_ABLATION_FIELDS = _RECON_FIELDS | {"view_sets", "center"}


def _int_list(field, v):
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool)
                                          for x in v):
        raise ConfigError(field, "must be a list of integers")
    return v


def parse_recon_config(d, path, allowed=_RECON_FIELDS) -> tuple[Path, dict]:
    """Validate a reconstruction config dict.

    Returns the scene directory (resolved against the config file) and the
    keyword arguments for :class:`smokeflow.optim.ReconProblem`, plus the
    ``views`` entry. Errors are :class:`ConfigError` naming field and file.
    """
    from .loss import LossWeights

    try:
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        if "scene" not in d or not isinstance(d["scene"], str):
            raise ConfigError("scene", "required path to a scene directory")
        kw = {}
        for k in _RECON_NUMBERS:
            if k in d:
                if not isinstance(d[k], (int, float)) or isinstance(d[k], bool):
                    raise ConfigError(k, "must be a number")
                kw[k] = float(d[k])
        for k in _RECON_INTS:
            if k in d:
                if not isinstance(d[k], int) or isinstance(d[k], bool) or d[k] < 0:
                    raise ConfigError(k, "must be a nonnegative integer")
                kw[k] = d[k]
        for k in _RECON_BOOLS:
            if k in d:
                if not isinstance(d[k], bool):
                    raise ConfigError(k, "must be true or false")
                kw[k] = d[k]
        if "views" in d:
            kw["views"] = _int_list("views", d["views"])
            if not kw["views"]:
                raise ConfigError("views", "must name at least one camera")
        if d.get("level_growth") is not None:
            kw["level_growth"] = tuple(_int_list("level_growth", d["level_growth"]))
        if "frame_growth" in d:
            fg = d["frame_growth"]
            if not isinstance(fg, list):
                raise ConfigError("frame_growth", "must be a list of [iteration, steps] pairs")
            kw["frame_growth"] = tuple(tuple(_int_list("frame_growth", p)) for p in fg)
            if any(len(p) != 2 for p in kw["frame_growth"]):
                raise ConfigError("frame_growth", "must be a list of [iteration, steps] pairs")
        if "weights" in d:
            w = d["weights"]
            if not isinstance(w, dict):
                raise ConfigError("weights", "must be an object")
            for k, v in w.items():
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ConfigError(f"weights.{k}", "must be a number")
            try:
                kw["weights"] = LossWeights.from_dict(w)
            except ValueError as e:
                raise ConfigError("weights", str(e)) from None
        if "center_axis" in d:
            if d["center_axis"] not in ("x", "y", "z"):
                raise ConfigError("center_axis", "must be 'x', 'y' or 'z'")
            kw["center_axis"] = d["center_axis"]
        if d.get("center_cz") is not None:
            if not isinstance(d["center_cz"], (int, float)):
                raise ConfigError("center_cz", "must be a number or null")
            kw["center_cz"] = float(d["center_cz"])
        if "view_sets" in d:
            vs = d["view_sets"]
            if not isinstance(vs, list) or not vs:
                raise ConfigError("view_sets", "must be a nonempty list of camera lists")
            kw["view_sets"] = [_int_list("view_sets", v) for v in vs]
        if "center" in d:
            if not isinstance(d["center"], bool):
                raise ConfigError("center", "must be true or false")
            kw["center"] = d["center"]
    except ConfigError as e:
        raise e.with_file(path) from None
    scene = (Path(path).parent / d["scene"]).resolve()
    return scene, kw


def _read_config(path) -> dict:
    try:
        return io.read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError("<root>", f"invalid JSON: {e}", path) from None


def _scene_root(path) -> tuple[Path, dict]:
    p = Path(path)
    manifest = p if p.is_file() else p / "manifest.json"
    if not manifest.exists():
        raise FileNotFoundError(str(manifest))
    return manifest.parent, _read_config(manifest)


# ---------------------------------------------------------------- commands


def cmd_gen(args):
    from .synth import SceneConfig, gen_plume_sequence, save_scene

    d = _read_config(args.config)
    if args.seed is not None:
        d = {**d, "seed": args.seed}
    try:
        cfg = SceneConfig.from_dict(d)
    except ConfigError as e:
        raise e.with_file(args.config) from None
    except TypeError as e:
        raise ConfigError("<root>", str(e), args.config) from None
    scene = gen_plume_sequence(cfg)
    out = save_scene(scene, args.out)
    return {
        "command": "gen",
        "out": str(out),
        "frames": cfg.frames,
        "cameras": len(scene.cameras),
        "res": list(cfg.res),
        "seed": cfg.seed,
        "mass": [float(r.sum()) for r in scene.densities],
        "max_u": max((float(np.abs(u).max()) for u in scene.velocities), default=0.0),
    }


def _scene_renderer(root, man, camera, shape):
    from .grid import Camera, LightConfig
    from .render import Renderer

    cams = man.get("cameras", [])
    if not 0 <= camera < len(cams):
        raise ConfigError("camera", f"index {camera} out of range for {len(cams)} cameras",
                          root / "manifest.json")
    cfg = man.get("config", {})
    bg = io.read_pfm(root / man["background"]) if man.get("background") else None
    return Renderer(Camera.from_dict(cams[camera]), LightConfig.from_dict(man["light"]),
                    shape, bg, cfg.get("step", 0.5))


def cmd_render(args):
    root, man = _scene_root(args.scene)
    grid = io.read_vgrid(args.density)
    if not isinstance(grid, ScalarGrid):
        raise FormatError(f"{args.density}: expected a scalar grid")
    r = _scene_renderer(root, man, args.camera, grid.data.shape)
    img = r.render(grid.data)
    io.write_pfm(img, args.out)
    if args.png:
        io.write_png(img, args.png)
    return {"command": "render", "out": str(args.out), "camera": args.camera,
            "min": float(img.min()), "max": float(img.max()), "mean": float(img.mean())}


def cmd_project(args):
    from .grid import Camera
    from .render import unproject

    root, man = _scene_root(args.scene)
    img = io.read_pfm(args.image)
    cams = man.get("cameras", [])
    if not 0 <= args.camera < len(cams):
        raise ConfigError("camera", f"index {args.camera} out of range", root / "manifest.json")
    cam = Camera.from_dict(cams[args.camera])
    if img.shape[:2] != (cam.image_res[1], cam.image_res[0]):
        raise FormatError(f"{args.image}: image size does not match camera {args.camera}")
    res = tuple(man["config"]["res"])
    vol = unproject(img, cam, res, man["config"].get("step", 0.5))
    io.write_vgrid(ScalarGrid(vol), args.out)
    return {"command": "project", "out": str(args.out), "res": list(res),
            "max": float(vol.max()), "covered": float((vol > 0).mean())}


def cmd_advect(args):
    from .transport import advect_maccormack, advect_sl

    rho = io.read_vgrid(args.density)
    if not isinstance(rho, ScalarGrid):
        raise FormatError(f"{args.density}: expected a scalar grid")
    vels = []
    for p in args.velocity:
        u = io.read_vgrid(p)
        if not isinstance(u, VectorGrid) or u.data.shape[:3] != rho.data.shape:
            raise FormatError(f"{p}: expected a vector grid matching the density")
        vels.append(u.data)
    steps = args.steps if args.steps is not None else len(vels)
    if steps < 0:
        raise ConfigError("steps", "must be >= 0")
    if len(vels) not in (1, steps) and steps > 0:
        raise ConfigError("velocity", f"give one field or one per step ({steps})")
    step_fn = advect_maccormack if args.scheme == "maccormack" else advect_sl
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = rho.data
    files = []
    for t in range(steps + 1):
        if t > 0:
            r = step_fn(r, vels[min(t - 1, len(vels) - 1)], args.dt)
            if args.clamp_density:
                r = np.maximum(r, 0.0)
        name = f"density_{t:03d}.vgrid"
        io.write_vgrid(ScalarGrid(r), out / name)
        files.append(name)
    return {"command": "advect", "out": str(out), "scheme": args.scheme, "steps": steps,
            "files": files, "mass": float(r.sum())}


def _load_problem_scene(scene_dir):
    from .synth import load_scene

    try:
        return load_scene(scene_dir)
    except ConfigError as e:
        raise e.with_file(Path(scene_dir) / "manifest.json") from None


def _apply_flags(kw, args):
    for flag in ("paper_backward", "clamp_density", "cfl_per_level"):
        if getattr(args, flag, False):
            kw[flag] = True
    if getattr(args, "iterations", None) is not None:
        kw["iterations"] = args.iterations
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.verbose:
        kw.setdefault("log_every", 10)
    return kw


def _write_reconstruction(out, problem, result, scene_dir, views):
    from .potential import ladder_shapes

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {"density": [], "velocity": [], "potentials": []}
    for t, d in enumerate(result.densities):
        name = f"density_{t:03d}.vgrid"
        io.write_vgrid(ScalarGrid(d), out / name)
        files["density"].append(name)
    for t, u in enumerate(result.velocities):
        name = f"velocity_{t:03d}.vgrid"
        io.write_vgrid(VectorGrid(u), out / name)
        files["velocity"].append(name)
    for t, levels in enumerate(result.potentials):
        names = []
        for lvl, P in enumerate(levels):
            name = f"potential_{t:03d}_L{lvl}.vgrid"
            io.write_vgrid(VectorGrid(P), out / name)
            names.append(name)
        files["potentials"].append(names)
    with open(out / "report.jsonl", "w") as f:
        for row in result.report:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    io.write_json({
        "kind": "reconstruction",
        "scene": str(scene_dir),
        "views": views,
        "ladder": [list(s) for s in ladder_shapes(problem.shape, problem.n_levels)],
        "problem": _problem_summary(problem),
        "aborted": result.aborted,
        "report": "report.jsonl",
        "files": files,
    }, out / "manifest.json")
    return files


def _problem_summary(p) -> dict:
    return {
        "shape": list(p.shape), "steps": p.steps, "n_levels": p.n_levels,
        "level_growth": list(p.level_growth), "frame_growth": [list(x) for x in p.frame_growth],
        "iterations": p.iterations, "weights": dict(p.weights.__dict__),
        "lr_density": p.lr_density, "lr_potential": p.lr_potential, "lr_decay": p.lr_decay,
        "lr_offset": p.lr_offset, "init_density": p.init_density,
        "center_axis": p.center_axis, "center_cz": p.center_cz,
        "clamp_density": p.clamp_density, "cfl_per_level": p.cfl_per_level,
        "paper_backward": p.paper_backward, "light_grad": p.light_grad, "seed": p.seed,
    }


def cmd_reconstruct(args):
    from .optim import evaluate, problem_for_scene, reconstruct

    scene_dir, kw = parse_recon_config(_read_config(args.config), args.config)
    scene = _load_problem_scene(scene_dir)
    views = kw.pop("views", [0])
    kw = _apply_flags(kw, args)
    try:
        problem = problem_for_scene(scene, views, **kw)
    except ValueError as e:
        raise ConfigError("views", str(e), args.config) from None
    result = reconstruct(problem)
    _write_reconstruction(args.out, problem, result, scene_dir, views)
    metrics = evaluate(scene, result, views)
    last = result.report[-1] if result.report else {}
    return {"command": "reconstruct", "out": str(args.out), "iterations": len(result.report),
            "final_loss": last.get("loss"), "final_terms": last.get("terms", {}), **metrics}


def cmd_ablate_views(args):
    from .optim import ablate_center, ablate_views

    scene_dir, kw = parse_recon_config(_read_config(args.config), args.config,
                                       _ABLATION_FIELDS)
    scene = _load_problem_scene(scene_dir)
    kw.pop("views", None)
    view_sets = kw.pop("view_sets", [[0], list(range(len(scene.cameras)))])
    center = kw.pop("center", True)
    kw = _apply_flags(kw, args)
    for vs in view_sets:
        for c in vs:
            if not 0 <= c < len(scene.cameras):
                raise ConfigError("view_sets", f"camera {c} does not exist", args.config)
    report = {"command": "ablate-views", **ablate_views(scene, view_sets, **kw)}
    ok = report["trend_holds"]
    if center:
        report["center"] = ablate_center(scene, view_sets[0][0], **kw)
        ok = ok and report["center"]["center_reduces_deviation"]
    if not ok:
        raise CheckFailed(report)
    return report


def _scene_frames(root, man, key):
    return [io.read_vgrid(root / n).data for n in man.get("files", {}).get(key, [])]


def cmd_metrics(args):
    from . import metrics

    ref_root, ref = _scene_root(args.reference)
    oth_root, oth = _scene_root(args.other)
    d_ref = _scene_frames(ref_root, ref, "density")
    d_oth = _scene_frames(oth_root, oth, "density")
    u_ref = _scene_frames(ref_root, ref, "velocity")
    u_oth = _scene_frames(oth_root, oth, "velocity")
    if len(d_ref) != len(d_oth):
        raise FormatError(f"frame count differs: {len(d_ref)} vs {len(d_oth)}")
    renderers = []
    if ref.get("cameras") and ref.get("files", {}).get("views"):
        shape = d_ref[0].shape
        renderers = [_scene_renderer(ref_root, ref, c, shape) for c in range(len(ref["cameras"]))]
    rows = []
    for t, (a, b) in enumerate(zip(d_ref, d_oth)):
        row = {"frame": t, "volume_rmse": metrics.rmse_volume(a, b)}
        if renderers:
            row["image_rmse"] = [
                metrics.rmse_image(r.render(b), io.read_pfm(ref_root / ref["files"]["views"][c][t]))
                for c, r in enumerate(renderers)
            ]
        if t < min(len(u_ref), len(u_oth)):
            row["velocity_rmse"] = metrics.rmse_velocity(u_oth[t], u_ref[t])
            row["epe"] = metrics.epe(u_oth[t], u_ref[t])
            row["epe_masked"] = metrics.epe(u_oth[t], u_ref[t], mask=a)
        rows.append(row)

    def mean(key):
        vals = [r[key] for r in rows if key in r]
        return float(np.mean(vals)) if vals else None

    summary = {k: mean(k) for k in ("volume_rmse", "velocity_rmse", "epe", "epe_masked")}
    if renderers:
        summary["image_rmse"] = [float(np.mean([r["image_rmse"][c] for r in rows]))
                                 for c in range(len(renderers))]
    return {"command": "metrics", "reference": str(ref_root), "other": str(oth_root),
            "frames": rows, "summary": summary}


def _gradcheck_levels(size):
    n = 1
    while n < 3 and size % (2**n) == 0 and size // 2**n >= 2:
        n += 1
    return n


def cmd_gradcheck(args):
    from .optim import build_objective, gradcheck, make_renderers, problem_for_scene
    from .potential import ladder_shapes
    from .synth import SceneConfig, gen_plume_sequence

    d = _read_config(args.scene) if args.scene else {}
    if args.size < 2:
        raise ConfigError("size", "must be >= 2")
    seed = args.seed if args.seed is not None else 0
    d = {**d, "res": [args.size] * 3, "image_res": [args.size] * 2, "frames": args.frames,
         "seed": seed}
    d.setdefault("noise_octaves", 1)
    if args.size % 2**d["noise_octaves"]:
        d["noise_amplitude"] = 0.0
    try:
        cfg = SceneConfig.from_dict(d)
    except ConfigError as e:
        raise e.with_file(args.scene or "<defaults>") from None
    scene = gen_plume_sequence(cfg)
    n_levels = _gradcheck_levels(args.size)
    problem = problem_for_scene(scene, list(range(len(scene.cameras))), n_levels=n_levels,
                                iterations=1, paper_backward=False)
    renderers = make_renderers(problem)
    obj = build_objective(problem, renderers, cfg.frames, n_levels)
    rng = np.random.default_rng(seed)
    params = {"rho0": rng.normal(-3.0, 0.5, cfg.shape)}
    for t in range(cfg.frames):
        for lvl, s in enumerate(ladder_shapes(cfg.shape, n_levels)):
            params[f"P{t}_{lvl}"] = rng.normal(0.0, args.amplitude, tuple(s) + (3,))
    res = gradcheck(lambda p: obj(p)[0], params, h=args.h, n=args.n, seed=seed)
    report = {"command": "gradcheck", "size": args.size, "frames": cfg.frames,
              "levels": n_levels, "tolerance": args.tol, **res.to_dict(),
              "passed": bool(res.max_rel_error < args.tol)}
    if not report["passed"]:
        raise CheckFailed(report)
    return report


def cmd_compare_upsample(args):
    from .metrics import boundary_roughness
    from .potential import curl, upsample_bspline2, upsample_linear

    if args.potential:
        coarse = []
        for p in args.potential:
            g = io.read_vgrid(p)
            if not isinstance(g, VectorGrid):
                raise FormatError(f"{p}: expected a vector potential")
            coarse.append(g.data)
    else:
        if args.trials < 1 or args.coarse < 5:
            raise ConfigError("trials", "need trials >= 1 and coarse size >= 5")
        seed = args.seed if args.seed is not None else 0
        coarse = [np.random.default_rng(seed + k).standard_normal((args.coarse,) * 3 + (3,))
                  for k in range(args.trials)]
    rows = []
    for P in coarse:
        u_lin = curl(upsample_linear(P))
        u_bsp = curl(upsample_bspline2(P))
        rows.append({"linear": boundary_roughness(u_lin), "bspline2": boundary_roughness(u_bsp)})
    smoother = sum(r["bspline2"] < r["linear"] for r in rows)
    if args.out:
        _side_by_side(curl(upsample_linear(coarse[0])), curl(upsample_bspline2(coarse[0])),
                      args.out)
    report = {"command": "compare-upsample", "trials": len(rows), "bspline2_smoother": smoother,
              "all_smoother": smoother == len(rows), "roughness": rows}
    if not report["all_smoother"]:
        raise CheckFailed(report)
    return report


def _side_by_side(u_a, u_b, path):
    # middle z slice of each x velocity component, shared color scale
    k = u_a.shape[0] // 2
    a, b = u_a[k, :, :, 0], u_b[k, :, :, 0]
    s = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-12)
    gap = np.full((a.shape[0], 2), 0.5)
    img = np.concatenate([a / s * 0.5 + 0.5, gap, b / s * 0.5 + 0.5], axis=1)[::-1]
    if str(path).endswith(".pfm"):
        io.write_pfm(img, path)
    else:
        io.write_png(img, path)


# ---------------------------------------------------------------- plumbing


class _Parser(argparse.ArgumentParser):
    """Reports usage errors in the same JSON shape as every other failure."""

    def error(self, message):
        _error("usage", message)
        self.exit(EXIT_INPUT)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed (default: config or 0)")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on internal operator threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _recon_flags(p):
    p.add_argument("--paper-backward", action="store_true",
                   help="use the normalized unprojection as render backward pass")
    p.add_argument("--clamp-density", action="store_true",
                   help="clamp advected densities at 0")
    p.add_argument("--cfl-per-level", action="store_true",
                   help="apply the CFL loss to each potential level instead of the total")
    p.add_argument("--iterations", type=int, default=None, help="override the iteration count")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="smokeflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic plume scene")
    p.add_argument("config", help="scene config JSON")
    p.add_argument("--out", required=True, help="output scene directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("render", parents=[common], help="render a density with a scene camera")
    p.add_argument("--scene", required=True, help="scene directory or manifest.json")
    p.add_argument("--density", required=True, help="density .vgrid")
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--out", required=True, help="output PFM")
    p.add_argument("--png", help="optional 8-bit preview")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("project", parents=[common], help="spread an image back along its rays")
    p.add_argument("--scene", required=True)
    p.add_argument("--image", required=True, help="input PFM")
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--out", required=True, help="output .vgrid")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("advect", parents=[common], help="transport a density")
    p.add_argument("--density", required=True)
    p.add_argument("--velocity", required=True, action="append",
                   help="velocity .vgrid; repeat for one field per step")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--scheme", choices=("maccormack", "sl"), default="maccormack")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--clamp-density", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_advect)

    p = sub.add_parser("reconstruct", parents=[common], help="fit density and motion to views")
    p.add_argument("config", help="reconstruction config JSON")
    p.add_argument("--out", required=True, help="output directory")
    _recon_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("ablate-views", parents=[common],
                       help="compare reconstructions from different camera sets")
    p.add_argument("config", help="reconstruction config JSON with view_sets")
    _recon_flags(p)
    p.set_defaults(func=cmd_ablate_views)

    p = sub.add_parser("metrics", parents=[common], help="compare two scene directories")
    p.add_argument("reference", help="ground-truth scene directory")
    p.add_argument("other", help="scene or reconstruction directory")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="check objective gradients against finite differences")
    p.add_argument("--scene", help="scene config JSON (resolution is replaced by --size)")
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--n", type=int, default=64, help="coordinates to check")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--amplitude", type=float, default=1.0, help="random potential scale")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare-upsample", parents=[common],
                       help="velocity roughness of linear vs B-spline upsampled potentials")
    p.add_argument("--potential", action="append", help="coarse potential .vgrid (repeatable)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--coarse", type=int, default=8, help="coarse grid size for random trials")
    p.add_argument("--out", help="side-by-side image (PNG or PFM)")
    p.set_defaults(func=cmd_compare_upsample)
    return parser


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _emit(report, as_json, stream=None):
    stream = stream or sys.stdout
    if as_json:
        stream.write(json.dumps(report, sort_keys=True, default=_jsonable) + "\n")
        return
    for k, v in report.items():
        if isinstance(v, (dict, list)):
            v = json.dumps(v, default=_jsonable)
            if len(v) > 200:
                v = v[:197] + "..."
        stream.write(f"{k}: {v}\n")


def _error(kind, message, field=None, file=None):
    err = {"type": kind, "message": message}
    if field is not None:
        err["field"] = field
    if file is not None:
        err["file"] = str(file)
    sys.stderr.write(json.dumps({"error": err}, sort_keys=True) + "\n")


def _run(args):
    if args.threads is not None and args.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    threads = args.threads or os.cpu_count() or 1
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        return args.func(args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        report = _run(args)
    except ConfigError as e:
        _error("config", e.message, e.field, e.file)
        return EXIT_INPUT
    except FormatError as e:
        _error("format", str(e))
        return EXIT_INPUT
    except FileNotFoundError as e:
        _error("io", "file not found", file=e.filename or str(e))
        return EXIT_INPUT
    except CheckFailed as e:
        _emit(e.report, args.json)
        _error("check", f"{args.command} check did not hold")
        return EXIT_CHECK
    except (ValueError, FloatingPointError, KeyError, OSError) as e:
        _error("runtime", f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    _emit(report, args.json)
    return EXIT_OK
