"""Procedural ray-cast scenes: dense depth plus a shaded grayscale image."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .block_spectrum import DepthMap


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    extent: int = 64
    planes: int = 1
    spheres: int = 2
    boxes: int = 1
    near: float = 1.0
    far: float = 10.0
    # direction from surfaces toward the light, camera frame (x right, y down, z forward)
    light: tuple[float, float, float] = (0.35, -0.6, -0.7)
    ambient: float = 0.7
    # exponential attenuation over the depth range; gives the image an absolute-depth cue
    fog: float = 2.0
    background_albedo: float = 0.8
    albedo: tuple[float, float] = (0.75, 0.85)

    def __post_init__(self):
        if self.near <= 0 or self.far <= self.near:
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if self.extent <= 0 or self.extent % 8:
            raise ValueError(f"extent must be a positive multiple of 8, got {self.extent}")
        if min(self.planes, self.spheres, self.boxes) < 0:
            raise ValueError("primitive counts must be non-negative")


def _rays(n: int) -> np.ndarray:
    f = float(n)
    c = (np.arange(n) + 0.5 - n / 2) / f
    x, y = np.meshgrid(c, c)
    return np.stack([x, y, np.ones_like(x)], axis=-1)  # z component 1: ray t == z-depth


def _hit_plane(d, normal, point):
    denom = d @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (point @ normal) / denom
    return np.where((denom != 0) & (t > 0), t, np.inf)


def _hit_sphere(d, center, radius):
    a = np.einsum("...k,...k", d, d)
    b = -2.0 * (d @ center)
    c = center @ center - radius ** 2
    disc = b * b - 4 * a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    t = (-b - root) / (2 * a)
    return np.where((disc >= 0) & (t > 0), t, np.inf)


def _hit_box(d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo / d
        t2 = hi / d
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    return np.where((tmax >= tmin) & (tmin > 0), tmin, np.inf)


def _hit_quad(d, center, ax1, ax2):
    normal = np.cross(ax1, ax2)
    t = _hit_plane(d, normal, center)
    p = d * np.where(np.isfinite(t), t, 0.0)[..., None] - center
    s1 = (p @ ax1) / (ax1 @ ax1)
    s2 = (p @ ax2) / (ax2 @ ax2)
    return np.where((np.abs(s1) <= 1) & (np.abs(s2) <= 1), t, np.inf)


def _normals(depth: np.ndarray, rays: np.ndarray) -> np.ndarray:
    pts = rays * depth[..., None]
    dy, dx = np.gradient(pts, axis=(0, 1))
    n = np.cross(dx, dy)
    n /= np.linalg.norm(n, axis=-1, keepdims=True) + 1e-12
    # face the camera
    flip = np.einsum("...k,...k", n, rays) > 0
    n[flip] *= -1
    return n


def gen_scene(spec: SceneSpec) -> tuple[np.ndarray, DepthMap]:
    """Returns (image of shape (1, H, W) in [0, 1], dense depth map in [near, far])."""
    rng = np.random.default_rng(spec.seed)
    n = spec.extent
    d = _rays(n)
    near, far = spec.near, spec.far
    span = far - near

    z0 = near + span * rng.uniform(0.45, 0.8)
    tilt = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.9, 0.2), 1.0])
    depth = _hit_plane(d, tilt / np.linalg.norm(tilt), np.array([0.0, 0.0, z0]))
    label = np.zeros((n, n), dtype=int)
    albedo = [spec.background_albedo]

    def place(zlo, zhi):
        z = rng.uniform(zlo, zhi)
        return np.array([rng.uniform(-0.35, 0.35) * z, rng.uniform(-0.35, 0.35) * z, z])

    hits = []
    for _ in range(spec.spheres):
        c = place(near + 0.2 * span, near + 0.6 * span)
        hits.append(_hit_sphere(d, c, rng.uniform(0.08, 0.2) * c[2]))
    for _ in range(spec.boxes):
        c = place(near + 0.15 * span, near + 0.6 * span)
        half = rng.uniform(0.06, 0.18, 3) * c[2]
        hits.append(_hit_box(d, c - half, c + half))
    for _ in range(spec.planes):
        c = place(near + 0.15 * span, near + 0.6 * span)
        ax1 = np.array([rng.uniform(0.1, 0.25), 0.0, rng.uniform(-0.15, 0.15)]) * c[2]
        ax2 = np.array([0.0, rng.uniform(0.1, 0.25), rng.uniform(-0.15, 0.15)]) * c[2]
        hits.append(_hit_quad(d, c, ax1, ax2))
    for t in hits:
        albedo.append(rng.uniform(*spec.albedo))
        closer = t < depth
        depth = np.where(closer, t, depth)
        label = np.where(closer, len(albedo) - 1, label)

    depth = np.clip(depth, near, far)
    light = np.asarray(spec.light, dtype=np.float64)
    light /= np.linalg.norm(light)
    lambert = np.clip(_normals(depth, d) @ light, 0.0, 1.0)
    shade = np.asarray(albedo)[label] * (spec.ambient + (1 - spec.ambient) * lambert)
    image = np.clip(shade * np.exp(-spec.fog * (depth - near) / span), 0.0, 1.0)
    return image[None], DepthMap(depth, np.ones((n, n), dtype=bool))


def scene_specs(seed: int, count: int, extent: int = 64, **overrides) -> list[SceneSpec]:
    """Reproducible per-scene specs with randomized primitive counts."""
    out = []
    for i in range(count):
        ss = np.random.SeedSequence([seed, i])
        rng = np.random.default_rng(ss)
        counts = rng.integers(0, 3, size=3)
        sub = int(ss.generate_state(1)[0])
        spec = SceneSpec(seed=sub, extent=extent, planes=int(counts[0]), spheres=int(counts[1]),
                         boxes=int(counts[2]))
        out.append(replace(spec, **overrides))
    return out


def make_dataset(seed: int, count: int, extent: int = 64, **overrides) -> tuple[np.ndarray, np.ndarray]:
    """Stacked images (N, 1, H, W) and depths (N, H, W)."""
    imgs, depths = [], []
    for spec in scene_specs(seed, count, extent, **overrides):
        im, dm = gen_scene(spec)
        imgs.append(im)
        depths.append(dm.values)
    if not imgs:
        return np.zeros((0, 1, extent, extent)), np.zeros((0, extent, extent))
    return np.stack(imgs), np.stack(depths)
