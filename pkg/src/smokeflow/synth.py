"""Synthetic rising-plume scenes with known density and velocity.

Velocities are curls of a uniform-rise potential plus smooth value noise, so
they are divergence free by construction. Frames are produced with the same
MacCormack transport and renderer the reconstruction uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .io import ConfigError
from .grid import Camera, LightConfig, ScalarGrid, VectorGrid, cell_centers
from .potential import curl, upsample_bspline2
from .render import Renderer
from .transport import advect_maccormack


def _ints(name, v, n):
    try:
        out = tuple(int(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(name, f"must be a list of {n} integers") from None
    if len(out) != n:
        raise ConfigError(name, f"must be a list of {n} integers")
    return out


def gen_potential_noise(res, seed, octaves=2, amplitude=1.0) -> np.ndarray:
    """Band-limited vector value noise of resolution ``res = (nx, ny, nz)``.

    Octave ``o`` draws Gaussian values on a lattice ``2**(octaves - o)`` times
    coarser than ``res`` and brings it up with quadratic B-spline upsampling;
    each octave has half the amplitude of the previous one.
    """
    if amplitude <= 0:
        raise ValueError("noise amplitude must be positive")
    nx, ny, nz = res
    f = 2**octaves
    if nx % f or ny % f or nz % f:
        raise ValueError(f"resolution {res} must be divisible by {f} for {octaves} octaves")
    rng = np.random.default_rng(seed)
    total = np.zeros((nz, ny, nx, 3))
    for o in range(octaves):
        k = octaves - o
        s = 2**k
        lattice = rng.standard_normal((nz // s, ny // s, nx // s, 3))
        for _ in range(k):
            lattice = upsample_bspline2(lattice)
        total += 0.5**o * lattice
    return amplitude * total


def rise_potential(shape, speed) -> np.ndarray:
    """Potential whose curl is the uniform velocity ``(0, speed, 0)``."""
    P = np.zeros(tuple(shape[:3]) + (3,))
    P[..., 2] = -speed * cell_centers(shape)[..., 0]
    return P


def gaussian_blob(shape, center, radius, peak) -> np.ndarray:
    x = cell_centers(shape)
    r2 = np.sum((x - np.asarray(center, dtype=np.float64)) ** 2, axis=-1)
    return peak * np.exp(-0.5 * r2 / radius**2)


def orbit_camera(res, angle_deg, image_res, distance_factor=2.5, margin=1.15) -> Camera:
    """Camera on a horizontal circle around the domain center, looking at it.

    Angle 0 sits on the +z side looking along -z; positive angles rotate
    toward +x.
    """
    nx, ny, nz = res
    center = np.array([nx, ny, nz], dtype=np.float64) / 2.0
    a = math.radians(angle_deg)
    back = np.array([math.sin(a), 0.0, math.cos(a)])
    dist = distance_factor * max(res)
    half_diag = 0.5 * math.sqrt(nx**2 + ny**2 + nz**2)
    w, h = image_res
    half_h = margin * max(ny / 2.0, (max(nx, nz) / 2.0) * h / w)
    fov = 2.0 * math.degrees(math.atan(half_h / (dist - max(nx, nz) / 2.0)))
    return Camera(
        position=center + dist * back,
        forward=-back,
        up=[0.0, 1.0, 0.0],
        fov_y=fov,
        image_res=image_res,
        near=dist - half_diag,
        far=dist + half_diag,
    )


@dataclass
class SceneConfig:
    res: tuple = (32, 48, 32)
    frames: int = 5  # number of transport steps T
    seed: int = 0
    rise: float = 0.5
    noise_amplitude: float = 4.0
    noise_octaves: int = 2
    noise_swirl: float = 0.4  # radians per frame between the two noise fields
    blob_center: tuple = (0.5, 0.3, 0.5)  # fraction of the domain
    blob_radius: float = 0.12  # fraction of nx
    blob_peak: float = 0.25
    image_res: tuple = (32, 48)
    camera_angles: tuple = (0.0, 90.0, -90.0)
    light: dict = field(default_factory=lambda: LightConfig().to_dict())
    background: str = "black"  # or "gradient"
    step: float = 0.5

    def __post_init__(self):
        self.res = _ints("res", self.res, 3)
        self.image_res = _ints("image_res", self.image_res, 2)
        try:
            self.camera_angles = tuple(float(a) for a in self.camera_angles)
            self.blob_center = tuple(float(a) for a in self.blob_center)
        except (TypeError, ValueError):
            raise ConfigError("camera_angles", "must be a list of numbers") from None
        if min(self.res) < 2:
            raise ConfigError("res", f"need three sizes >= 2, got {list(self.res)}")
        if min(self.image_res) < 1:
            raise ConfigError("image_res", "sizes must be positive")
        if not isinstance(self.frames, int) or self.frames < 0:
            raise ConfigError("frames", "must be an integer >= 0")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")
        if not 0 <= self.rise < 1:
            raise ConfigError("rise", "must be in [0, 1)")
        if self.noise_amplitude < 0:
            raise ConfigError("noise_amplitude", "must be >= 0")
        if self.blob_peak < 0 or self.blob_radius <= 0:
            raise ConfigError("blob_peak", "peak must be >= 0 and radius > 0")
        if len(self.blob_center) != 3:
            raise ConfigError("blob_center", "needs three fractions")
        if self.background not in ("black", "gradient"):
            raise ConfigError("background", "must be 'black' or 'gradient'")
        if not self.camera_angles:
            raise ConfigError("camera_angles", "need at least one camera")
        if self.step <= 0:
            raise ConfigError("step", "must be positive")
        try:
            LightConfig.from_dict(self.light)
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigError("light", str(e)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "scene config must be a JSON object")
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(unknown[0], "unknown scene config field")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}

    @property
    def shape(self):
        nx, ny, nz = self.res
        return (nz, ny, nx)

    def cameras(self) -> list[Camera]:
        return [orbit_camera(self.res, a, self.image_res) for a in self.camera_angles]

    def make_light(self) -> LightConfig:
        return LightConfig.from_dict(self.light)

    def make_background(self):
        w, h = self.image_res
        if self.background == "black":
            return np.zeros((h, w))
        rows = np.linspace(0.35, 0.05, h)[:, None]
        return np.broadcast_to(rows, (h, w)).copy()


@dataclass
class Scene:
    config: SceneConfig
    densities: list  # rho^0 .. rho^T
    velocities: list  # u^0 .. u^(T-1)
    cameras: list
    light: LightConfig
    background: np.ndarray
    views: list  # views[c][t] image of camera c at frame t

    def renderer(self, cam_index, shape=None, light_grad=True) -> Renderer:
        return Renderer(self.cameras[cam_index], self.light, shape or self.config.shape,
                        self.background, self.config.step, light_grad)


def step_velocity(cfg: SceneConfig, noise_a, noise_b, t) -> np.ndarray:
    base = curl(rise_potential(cfg.shape, cfg.rise))
    if cfg.noise_amplitude == 0:
        return base
    ang = cfg.noise_swirl * t
    noise = curl(math.cos(ang) * noise_a + math.sin(ang) * noise_b)
    peak = float(np.max(np.linalg.norm(noise, axis=-1)))
    s = min(1.0, (1.0 - cfg.rise) / peak) if peak > 0 else 1.0
    return base + s * noise


def gen_plume_sequence(cfg: SceneConfig) -> Scene:
    shape = cfg.shape
    nx, ny, nz = cfg.res
    center = np.array(cfg.blob_center) * np.array([nx, ny, nz])
    rho = gaussian_blob(shape, center, cfg.blob_radius * nx, cfg.blob_peak)
    if cfg.noise_amplitude > 0:
        noise_a = gen_potential_noise(cfg.res, cfg.seed, cfg.noise_octaves, cfg.noise_amplitude)
        noise_b = gen_potential_noise(cfg.res, cfg.seed + 7919, cfg.noise_octaves,
                                      cfg.noise_amplitude)
    else:
        noise_a = noise_b = None
    densities = [rho]
    velocities = []
    for t in range(cfg.frames):
        u = step_velocity(cfg, noise_a, noise_b, t)
        velocities.append(u)
        rho = advect_maccormack(rho, u)
        densities.append(rho)

    cameras = cfg.cameras()
    light = cfg.make_light()
    background = cfg.make_background()
    views = []
    for cam in cameras:
        r = Renderer(cam, light, shape, background, cfg.step)
        views.append([r.render(d) for d in densities])
    return Scene(cfg, densities, velocities, cameras, light, background, views)


def save_scene(scene: Scene, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"density": [], "velocity": [], "views": []}
    for t, d in enumerate(scene.densities):
        name = f"density_{t:03d}.vgrid"
        io.write_vgrid(ScalarGrid(d), out / name)
        files["density"].append(name)
    for t, u in enumerate(scene.velocities):
        name = f"velocity_{t:03d}.vgrid"
        io.write_vgrid(VectorGrid(u), out / name)
        files["velocity"].append(name)
    for c, frames in enumerate(scene.views):
        names = []
        for t, img in enumerate(frames):
            name = f"view{c}_{t:03d}.pfm"
            io.write_pfm(img, out / name)
            names.append(name)
        files["views"].append(names)
    io.write_pfm(scene.background, out / "background.pfm")
    io.write_json(
        {
            "config": scene.config.to_dict(),
            "cameras": [c.to_dict() for c in scene.cameras],
            "light": scene.light.to_dict(),
            "background": "background.pfm",
            "files": files,
        },
        out / "manifest.json",
    )
    return out


def load_scene(scene_dir) -> Scene:
    root = Path(scene_dir)
    man = io.read_json(root / "manifest.json")
    cfg = SceneConfig.from_dict(man["config"])
    files = man["files"]
    return Scene(
        config=cfg,
        densities=[io.read_vgrid(root / n).data for n in files["density"]],
        velocities=[io.read_vgrid(root / n).data for n in files["velocity"]],
        cameras=[Camera.from_dict(c) for c in man["cameras"]],
        light=LightConfig.from_dict(man["light"]),
        background=io.read_pfm(root / man["background"]),
        views=[[io.read_pfm(root / n) for n in names] for names in files["views"]],
    )
