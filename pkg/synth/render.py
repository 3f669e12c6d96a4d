"""Height-field renderer for the synthetic relighting corpus.

A scene is a flat ground plane carrying extruded disks and boxes. Lighting is
a directional source at a fixed elevation whose azimuth is one of the eight
compass points (north is up in the image, east is to the right). Hard shadows
come from marching each pixel's ray toward the light over the height field.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from config import settings
from core.errors import ConfigError
from core.models import LightSetting, SceneObject, SceneSpec

# Fractions of the resolution
POSITION_RANGE = (0.2, 0.8)
SIZE_RANGE = (0.06, 0.14)
HEIGHT_RANGE = (0.04, 0.12)
GROUND_ALBEDO_RANGE = (0.35, 0.6)
OBJECT_ALBEDO_RANGE = (0.2, 0.75)

COMPASS_DEGREES = {d: 45.0 * i for i, d in enumerate(settings.DIRECTIONS)}


def check_resolution(resolution: int) -> None:
    if resolution & (resolution - 1) or not (
            settings.MIN_RESOLUTION <= resolution <= settings.MAX_RESOLUTION):
        raise ConfigError(f"resolution must be a power of two in "
                          f"[{settings.MIN_RESOLUTION}, {settings.MAX_RESOLUTION}], got {resolution}")


def scene_from_seed(seed: int, resolution: int) -> SceneSpec:
    """Random scene fully determined by (seed, resolution)."""
    check_resolution(resolution)
    rng = np.random.default_rng(seed)
    count = int(rng.integers(settings.MIN_OBJECTS, settings.MAX_OBJECTS + 1))
    ground = tuple(float(v) for v in rng.uniform(*GROUND_ALBEDO_RANGE, size=3))
    objects = []
    for _ in range(count):
        shape = "disk" if rng.integers(2) == 0 else "box"
        cx, cy = (float(v) * resolution for v in rng.uniform(*POSITION_RANGE, size=2))
        size = float(rng.uniform(*SIZE_RANGE)) * resolution
        height = float(rng.uniform(*HEIGHT_RANGE)) * resolution
        albedo = tuple(float(v) for v in rng.uniform(*OBJECT_ALBEDO_RANGE, size=3))
        objects.append(SceneObject(shape, (cx, cy), size, height, albedo))
    return SceneSpec(seed, resolution, ground, tuple(objects))


def height_and_albedo(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Height field (H, W) and albedo map (H, W, 3); the tallest object owns a pixel."""
    res = spec.resolution
    ys, xs = np.mgrid[0:res, 0:res] + 0.5
    height = np.zeros((res, res))
    albedo = np.broadcast_to(np.asarray(spec.ground_albedo), (res, res, 3)).copy()
    for obj in spec.objects:
        dx, dy = xs - obj.center[0], ys - obj.center[1]
        if obj.shape == "disk":
            inside = dx * dx + dy * dy <= obj.size * obj.size
        else:
            inside = (np.abs(dx) <= obj.size) & (np.abs(dy) <= obj.size)
        owned = inside & (obj.height > height)
        height[owned] = obj.height
        albedo[owned] = obj.albedo
    return height, albedo


def surface_normals(height: np.ndarray) -> np.ndarray:
    grad_y, grad_x = np.gradient(height)
    normals = np.stack([-grad_x, -grad_y, np.ones_like(height)], axis=-1)
    return normals / np.linalg.norm(normals, axis=-1, keepdims=True)


def light_vector(direction: str,
                 elevation_deg: float = settings.LIGHT_ELEVATION_DEG) -> np.ndarray:
    """Unit vector toward the light in (x right, y down, z up) coordinates."""
    azimuth = math.radians(COMPASS_DEGREES[direction])
    elevation = math.radians(elevation_deg)
    return np.array([math.sin(azimuth) * math.cos(elevation),
                     -math.cos(azimuth) * math.cos(elevation),
                     math.sin(elevation)])


def shadow_mask(height: np.ndarray, direction: str,
                elevation_deg: float = settings.LIGHT_ELEVATION_DEG) -> np.ndarray:
    """True where the light is blocked by the height field."""
    res_y, res_x = height.shape
    light = light_vector(direction, elevation_deg)
    planar = math.hypot(light[0], light[1])
    step_x, step_y = light[0] / planar, light[1] / planar
    rise = math.tan(math.radians(elevation_deg))

    rows, cols = np.mgrid[0:res_y, 0:res_x]
    shadowed = np.zeros(height.shape, dtype=bool)
    max_height = height.max()
    for t in range(1, int(math.ceil(math.hypot(res_x, res_y))) + 1):
        ray = height + t * rise
        if ray.min() >= max_height:
            break
        xs = np.rint(cols + t * step_x).astype(int)
        ys = np.rint(rows + t * step_y).astype(int)
        valid = (xs >= 0) & (xs < res_x) & (ys >= 0) & (ys < res_y)
        terrain = np.zeros(height.shape)
        terrain[valid] = height[ys[valid], xs[valid]]
        shadowed |= valid & (terrain > ray)
    return shadowed


def _gain(temperature: int) -> np.ndarray:
    return np.asarray(settings.TEMPERATURE_GAINS[temperature])


@lru_cache(maxsize=8)
def _surface(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(height, albedo, normals) of a scene, shared read-only across its 41 renders."""
    height, albedo = height_and_albedo(spec)
    normals = surface_normals(height)
    for array in (height, albedo, normals):
        array.setflags(write=False)
    return height, albedo, normals


def scene_shadow_mask(spec: SceneSpec, direction: str) -> np.ndarray:
    return shadow_mask(_surface(spec)[0], direction)


def render_scene(spec: SceneSpec, light: LightSetting) -> np.ndarray:
    """RGB render in [0, 1]: albedo x (ambient + unshadowed Lambert) x temperature gain."""
    height, albedo, normals = _surface(spec)
    diffuse = np.clip(normals @ light_vector(light.direction), 0.0, None)
    lit = ~shadow_mask(height, light.direction)
    shading = settings.AMBIENT + lit * diffuse
    return np.clip(albedo * shading[..., None] * _gain(light.temperature), 0.0, 1.0)


def render_shadow_free(spec: SceneSpec) -> np.ndarray:
    """Ambient plus direction-averaged Lambert, no shadows, neutral gain."""
    _, albedo, normals = _surface(spec)
    diffuse = np.mean([np.clip(normals @ light_vector(d), 0.0, None)
                       for d in settings.DIRECTIONS], axis=0)
    shading = settings.AMBIENT + diffuse
    return np.clip(albedo * shading[..., None] * _gain(settings.NEUTRAL_TEMPERATURE), 0.0, 1.0)
