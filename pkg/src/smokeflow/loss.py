"""Objective terms for density and velocity reconstruction, with gradients.

Image and volume errors are means. The CFL and smoothness terms are summed
over components and averaged over cells, so their weights do not depend on
the grid resolution. The center loss is a plain sum over cells.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

_DEPTH_AXIS = {"x": 2, "y": 1, "z": 0}


@dataclass
class LossWeights:
    w_tar: float = 1.0
    w_proxy: float = 1e-3
    w_disc: float = 2e-6
    w_center: float = 1e-3
    w_cfl: float = 0.1
    w_smooth: float = 1e-4

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")

    @classmethod
    def density(cls) -> "LossWeights":
        """Weights of the single-frame density objective."""
        return cls(w_tar=1.0, w_proxy=0.0, w_disc=2e-4, w_center=1e-3, w_cfl=0.0, w_smooth=0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        unknown = set(d) - set(asdict(cls()))
        if unknown:
            raise ValueError(f"unknown loss weights: {sorted(unknown)}")
        return cls(**d)


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape {a.shape} does not match {b.shape}")


def mse(a, b) -> float:
    _same_shape(a, b, "mse")
    return float(np.mean((a - b) ** 2))


def mse_grad(a, b) -> np.ndarray:
    _same_shape(a, b, "mse")
    return 2.0 * (a - b) / a.size


def l_target(rho, target, renderer) -> float:
    """Mean squared error between the rendered density and a target image."""
    return mse(renderer.render(rho), np.asarray(target, dtype=np.float64))


def l_target_grad(rho, target, renderer) -> np.ndarray:
    img = renderer.render(rho)
    return renderer.vjp(mse_grad(img, target), rho)


def l_center(rho, c_z=None, r=None, axis="z") -> float:
    """Depth regularizer: sum of ``rho**2`` weighted by normalized squared
    distance from the plane ``c_z`` along the view depth axis.

    ``r`` defaults to the grid resolution along that axis, which makes the
    weight 1 at the domain boundary when ``c_z`` is the midpoint.
    """
    return float(np.sum(rho**2 * center_weight(rho.shape, c_z, r, axis)))


def l_center_grad(rho, c_z=None, r=None, axis="z") -> np.ndarray:
    return 2.0 * rho * center_weight(rho.shape, c_z, r, axis)


def center_weight(shape, c_z=None, r=None, axis="z") -> np.ndarray:
    """Per-cell weight ``((c_z - p_z) * 2 / r)**2`` broadcastable to ``shape``."""
    ax = _DEPTH_AXIS[axis]
    n = shape[ax]
    r = n if r is None else r
    if r <= 0:
        raise ValueError("center loss normalization r must be positive")
    if c_z is None:
        c_z = n / 2.0
    w = ((c_z - (np.arange(n) + 0.5)) * 2.0 / r) ** 2
    view = [1, 1, 1]
    view[ax] = n
    return w.reshape(view)


def l_proxy(rho, proto) -> float:
    """L2 distance to a prototype volume (mean over cells)."""
    return mse(rho, proto)


def l_proxy_grad(rho, proto) -> np.ndarray:
    return mse_grad(rho, proto)


def _cells(u):
    return u.size // 3


def l_cfl(u) -> float:
    """Penalty on velocity components faster than one cell per frame."""
    return float(np.sum(np.maximum(u**2 - 1.0, 0.0)) / _cells(u))


def l_cfl_grad(u) -> np.ndarray:
    # subgradient 0 at |u_i| == 1
    return np.where(u**2 > 1.0, 2.0 * u, 0.0) / _cells(u)


def _fwd_diffs(u):
    return [np.diff(u, axis=ax) for ax in (2, 1, 0)]


def l_smooth(u) -> float:
    """Squared forward differences of every component along x, y and z,
    summed and divided by the number of cells."""
    return float(sum(np.sum(d**2) for d in _fwd_diffs(u)) / _cells(u))


def l_smooth_grad(u) -> np.ndarray:
    g = np.zeros_like(u)
    n = _cells(u)
    for ax, d in zip((2, 1, 0), _fwd_diffs(u)):
        w = 2.0 * d / n
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        g[tuple(hi)] += w
        g[tuple(lo)] -= w
    return g


def ralsgan(scores_real, scores_fake, label) -> float:
    """Relativistic average least-squares GAN objective.

    ``label`` is 1 when training the discriminator and -1 when the scores are
    used as a loss for the generator.
    """
    real = np.asarray(scores_real, dtype=np.float64)
    fake = np.asarray(scores_fake, dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError("ralsgan needs at least one real and one fake score")
    return float(
        np.mean((real - fake.mean() - label) ** 2) + np.mean((fake - real.mean() + label) ** 2)
    )


def ralsgan_grad(scores_real, scores_fake, label) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`ralsgan` with respect to both score lists."""
    real = np.asarray(scores_real, dtype=np.float64)
    fake = np.asarray(scores_fake, dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError("ralsgan needs at least one real and one fake score")
    mr, mf = real.mean(), fake.mean()
    g_real = (2.0 * (real - mf - label) - 2.0 * (mf - mr + label)) / real.size
    g_fake = (2.0 * (fake - mr + label) - 2.0 * (mr - mf - label)) / fake.size
    return g_real, g_fake


TERM_WEIGHT = {
    "target": "w_tar",
    "proxy": "w_proxy",
    "disc": "w_disc",
    "center": "w_center",
    "cfl": "w_cfl",
    "smooth": "w_smooth",
}


def total_loss(terms: dict, weights: LossWeights, disc_scores=None):
    """Weighted sum of precomputed loss terms.

    ``terms`` maps term names (see ``TERM_WEIGHT``) to unweighted values.
    ``disc_scores`` is an optional ``(real, fake)`` pair of discriminator
    scores; without it the adversarial term contributes 0.
    Returns ``(total, breakdown)`` where ``breakdown`` holds weighted values.
    """
    terms = dict(terms)
    if disc_scores is not None:
        terms["disc"] = ralsgan(disc_scores[0], disc_scores[1], -1.0)
    breakdown = {}
    for name, value in terms.items():
        if name not in TERM_WEIGHT:
            raise ValueError(f"unknown loss term {name!r}")
        breakdown[name] = getattr(weights, TERM_WEIGHT[name]) * float(value)
    return float(sum(breakdown.values())), breakdown
