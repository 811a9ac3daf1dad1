"""
Sphere tracing of the gradient-norm iso-surface.

Each ray advances d <- d + gamma * (F(o + d u) - delta) for k_max steps,
where F is |g(x, sigma_k)| in "raw" mode or sigma_k^2 |g(x, sigma_k)|
(an approximate distance to the surface) in "sigma_squared" mode. The
iso level delta is read in the units of F:

    mode           stops where            surface offset
    raw            |g| = delta            about delta * sigma_k^2
    sigma_squared  sigma^2 |g| = delta    about delta (a length)

A ray hits when its final travel is below d_max and F has settled
within `tolerance * delta` of the iso level. Rays that left the scene
for good are frozen as misses.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike
from PIL import Image as PILImage

from shape_gradient_fields.core import NoiseSchedule, ScoreField, Tensor

FIELD_SCALES = ("raw", "sigma_squared")
LIGHT_DIRECTION = np.ones(3) / np.sqrt(3.0)


@dataclass
class RayCastConfig:
    step_rate: float = 1.0
    max_steps: int = 64
    iso_level: float = 0.005
    max_travel: float = 4.0
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    field_scale: str = "sigma_squared"
    tolerance: float = 0.2

    def __post_init__(self) -> None:
        if not (
            self.step_rate > 0 and self.iso_level > 0 and self.max_travel > 0
        ):
            raise ValueError(
                "Ray casting needs step_rate, iso_level and max_travel > 0"
            )
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.field_scale not in FIELD_SCALES:
            raise ValueError(
                f"field_scale must be one of {FIELD_SCALES}, got "
                f"'{self.field_scale}'"
            )
        if len(self.background) != 3:
            raise ValueError("Background must be an RGB triple")

    def to_dict(self) -> dict:
        params = dict(self.__dict__)
        params["background"] = ",".join(str(c) for c in self.background)
        return params


@dataclass
class RayHits:
    """Per-ray results of one cast; normals are NaN where undefined."""

    points: Tensor
    normals: Tensor
    hit: np.ndarray
    degenerate: np.ndarray
    travel: Tensor

    def __len__(self) -> int:
        return len(self.hit)


def _marched(config: RayCastConfig, grad: Tensor, sigma_k: float) -> Tensor:
    norm = np.linalg.norm(grad, axis=1)
    return sigma_k**2 * norm if config.field_scale == "sigma_squared" else norm


def cast_rays(
    field: ScoreField,
    sigma_k: float,
    origins: ArrayLike,
    directions: ArrayLike,
    config: RayCastConfig,
) -> RayHits:
    if field.dim != 3:
        raise ValueError(f"Ray casting needs a 3D field, got dim={field.dim}")
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    origins = np.broadcast_to(
        np.asarray(origins, dtype=np.float64), directions.shape
    )
    n = len(directions)
    delta = config.iso_level
    # beyond this travel a ray can never come back below max_travel
    frozen_at = config.max_travel + config.max_steps * config.step_rate * delta

    travel = np.zeros(n)
    marched = np.full(n, np.inf)
    grads = np.zeros((n, 3))
    active = np.ones(n, dtype=bool)

    for _ in range(config.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x = origins[idx] + travel[idx, None] * directions[idx]
        grad = np.atleast_2d(field.score(x, sigma_k))
        value = _marched(config, grad, sigma_k)

        grads[idx] = grad
        marched[idx] = value
        travel[idx] += config.step_rate * (value - delta)

        escaped = ~np.isfinite(travel[idx]) | (travel[idx] > frozen_at)
        active[idx[escaped]] = False

    # the hit point and normal come from the last evaluated position
    last_travel = travel - config.step_rate * (marched - delta)
    points = origins + last_travel[:, None] * directions
    converged = np.abs(marched - delta) <= config.tolerance * delta
    hit = np.isfinite(travel) & (travel < config.max_travel) & converged

    norms = np.linalg.norm(grads, axis=1)
    degenerate = hit & (norms == 0)
    normals = np.full((n, 3), np.nan)
    ok = hit & ~degenerate
    normals[ok] = -grads[ok] / norms[ok, None]

    return RayHits(
        points=points,
        normals=normals,
        hit=hit,
        degenerate=degenerate,
        travel=travel,
    )


def cast_ray(
    field: ScoreField,
    sigma_k: float,
    o0: ArrayLike,
    u: ArrayLike,
    config: RayCastConfig,
) -> Optional[tuple[Tensor, Optional[Tensor]]]:
    """
    Single-ray form: None on a miss, otherwise (point, normal) with
    normal None for a degenerate (zero-gradient) hit.
    """
    hits = cast_rays(field, sigma_k, o0, u, config)
    if not hits.hit[0]:
        return None
    normal = None if hits.degenerate[0] else hits.normals[0]
    return hits.points[0], normal


@dataclass
class Camera:
    """Pinhole camera at `origin` looking at `target`, y axis up."""

    origin: tuple[float, float, float] = (0.0, 0.0, -2.0)
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: int = 64
    height: int = 64
    fov_degrees: float = 45.0
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("Camera needs a positive image size")
        if not 0 < self.fov_degrees < 180:
            raise ValueError(f"Field of view out of range: {self.fov_degrees}")

    def basis(self) -> tuple[Tensor, Tensor, Tensor]:
        forward = np.subtract(self.target, self.origin).astype(np.float64)
        forward /= np.linalg.norm(forward)
        right = np.cross(self.up, forward)
        right /= np.linalg.norm(right)
        return right, np.cross(forward, right), forward

    def directions(self) -> Tensor:
        """Unit ray directions, row-major over the (height, width) grid."""
        right, up, forward = self.basis()
        half = np.tan(np.radians(self.fov_degrees) / 2)
        aspect = self.width / self.height

        px = (np.arange(self.width) + 0.5) / self.width * 2 - 1
        py = 1 - (np.arange(self.height) + 0.5) / self.height * 2
        grid_x, grid_y = np.meshgrid(px * half * aspect, py * half)

        rays = (
            grid_x[..., None] * right
            + grid_y[..., None] * up
            + forward[None, None, :]
        ).reshape(-1, 3)
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)


@dataclass
class Image:
    pixels: Tensor
    hit: np.ndarray

    @property
    def hit_rate(self) -> float:
        return float(self.hit.mean())

    def to_uint8(self) -> np.ndarray:
        return np.round(np.clip(self.pixels, 0, 1) * 255).astype(np.uint8)


def render(
    field: ScoreField,
    camera: Camera,
    config: RayCastConfig,
    schedule: NoiseSchedule,
) -> Image:
    """
    Casts one ray per pixel at the finest level of `schedule` and shades
    hits with max(0, n . l) for a light along (1, 1, 1).
    """
    directions = camera.directions()
    hits = cast_rays(
        field, schedule.sigma_min, camera.origin, directions, config
    )

    shade = np.clip(hits.normals @ LIGHT_DIRECTION, 0.0, None)
    background = np.asarray(config.background, dtype=np.float64)
    pixels = np.tile(background, (len(hits), 1))
    lit = hits.hit & ~hits.degenerate
    pixels[lit] = shade[lit, None]

    if hits.degenerate.any():
        logger.warning(
            f"{int(hits.degenerate.sum())} hits with zero gradient drawn as "
            f"background"
        )

    shape = (camera.height, camera.width)
    return Image(pixels=pixels.reshape(*shape, 3), hit=hits.hit.reshape(shape))


def write_ppm(path: Union[str, Path], image: Image) -> Path:
    """Binary PPM (P6), 8 bits per channel, rows top to bottom."""
    path = Path(path)
    PILImage.fromarray(image.to_uint8(), mode="RGB").save(path, format="PPM")
    logger.info(f"rendered image written to {path}")
    return path
