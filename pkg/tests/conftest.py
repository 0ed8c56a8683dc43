from pathlib import Path

import numpy as np
import pytest

from smokeflow.synth import SceneConfig, gen_plume_sequence, save_scene

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "scenes" / "configs"


@pytest.fixture(scope="session", autouse=True)
def bundled_scenes():
    """Generate any bundled scene that is missing from scenes/data."""
    from smokeflow.cli import main

    for name in ("small", "static", "zero", "plume"):
        out = ROOT / "scenes" / "data" / name
        if not (out / "manifest.json").exists():
            assert main(["gen", str(CONFIGS / f"{name}.json"), "--out", str(out)]) == 0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_fd(f, x, direction, h=1e-5):
    """Directional central difference of scalar or array valued ``f``."""
    return (f(x + h * direction) - f(x - h * direction)) / (2.0 * h)


def coordinate_fd_check(f, x, grad, n=40, h=1e-5, seed=0, kink_tol=1e-3):
    """Max relative error of ``grad`` against per-coordinate central
    differences of scalar ``f``; coordinates next to kinks are skipped."""
    rng = np.random.default_rng(seed)
    flat = x.reshape(-1)
    f0 = f(x)
    scale = float(np.abs(grad).max())
    worst = 0.0
    for i in rng.choice(flat.size, size=min(n, flat.size), replace=False):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd), 1e-6 * scale, 1e-300):
            continue
        num = (fp - fm) / (2.0 * h)
        ana = grad.reshape(-1)[i]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6 * scale, 1e-300))
    return worst


def dot_rel(lhs, rhs):
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def make_scene(tmp_path_factory, name, **overrides):
    cfg = SceneConfig.from_dict({**_cfg(name), **overrides})
    scene = gen_plume_sequence(cfg)
    out = tmp_path_factory.mktemp(name)
    save_scene(scene, out)
    return scene, out


def _cfg(name):
    import json

    return json.loads((CONFIGS / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def small_scene(tmp_path_factory):
    return make_scene(tmp_path_factory, "small")


@pytest.fixture(scope="session")
def static_scene(tmp_path_factory):
    return make_scene(tmp_path_factory, "static")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
