"""
Synthetic shapes: 2D outlines sampled by arc length and 3D spheres
sampled by area.

"stratified" sampling (the default) places one point in each of n
equal arc-length cells with a shared random phase in 2D and uses a
randomly rotated Fibonacci lattice on spheres; "iid" draws every point
independently. Regular supports give a smooth mixture field down to
noise levels near the point spacing.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from shape_gradient_fields.core import PointCloud, Tensor
from shape_gradient_fields.exceptions import ConfigError

SHAPES_2D = ("circle", "square", "star", "polyline-glyph")
SHAPES_3D = ("sphere", "two-spheres")
SAMPLINGS = ("stratified", "iid")
DEFAULT_POINTS = {2: 800, 3: 2048}
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# a "Z" stroke
DEFAULT_GLYPH = ((-0.4, 0.5), (0.4, 0.5), (-0.4, -0.5), (0.4, -0.5))


@dataclass(frozen=True)
class ShapeSpec:
    kind: str = "circle"
    n_points: Optional[int] = None
    noise: float = 0.0
    seed: int = 0
    radius: float = 0.5
    side: float = 1.0
    n_arms: int = 5
    inner_radius: float = 0.25
    vertices: tuple[tuple[float, float], ...] = DEFAULT_GLYPH
    closed: bool = False
    separation: float = 1.2
    sampling: str = "stratified"

    def __post_init__(self) -> None:
        if self.kind not in SHAPES_2D + SHAPES_3D:
            raise ConfigError(
                f"Unknown shape kind '{self.kind}'. Available: "
                f"{list(SHAPES_2D + SHAPES_3D)}"
            )
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"Unknown sampling '{self.sampling}'")
        if self.n_points is not None and self.n_points < 1:
            raise ConfigError(f"n_points must be >= 1, got {self.n_points}")
        if self.noise < 0:
            raise ConfigError(f"Noise must be non-negative, got {self.noise}")
        self._check_geometry()

    def _check_geometry(self) -> None:
        if self.kind in ("circle", "sphere", "two-spheres", "star"):
            if not self.radius > 0:
                raise ConfigError(f"Radius must be positive: {self.radius}")
        if self.kind == "square" and not self.side > 0:
            raise ConfigError(f"Side must be positive: {self.side}")
        if self.kind == "star":
            if self.n_arms < 2:
                raise ConfigError(f"A star needs >= 2 arms: {self.n_arms}")
            if not 0 < self.inner_radius < self.radius:
                raise ConfigError(
                    f"Star inner radius must lie in (0, {self.radius}), got "
                    f"{self.inner_radius}"
                )
        if self.kind == "polyline-glyph":
            vertices = np.asarray(self.vertices, dtype=np.float64)
            if vertices.ndim != 2 or vertices.shape != (len(vertices), 2):
                raise ConfigError("Glyph vertices must be (x, y) pairs")
            if len(vertices) < 2 or _polyline_length(vertices) == 0:
                raise ConfigError("Glyph needs a non-degenerate polyline")
        if self.kind == "two-spheres" and not self.separation > 0:
            raise ConfigError(
                f"Sphere separation must be positive: {self.separation}"
            )

    @property
    def dim(self) -> int:
        return 2 if self.kind in SHAPES_2D else 3

    @property
    def size(self) -> int:
        return self.n_points or DEFAULT_POINTS[self.dim]

    def to_dict(self) -> dict:
        params = dict(self.__dict__)
        params["n_points"] = self.size
        params["vertices"] = ";".join(f"{x},{y}" for x, y in self.vertices)
        return params

    def outline(self) -> Tensor:
        """2D polyline vertices; closed outlines repeat the first one."""
        if self.kind == "square":
            h = self.side / 2
            corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
            return np.array(corners + corners[:1])
        if self.kind == "star":
            corners = np.arange(2 * self.n_arms)
            angles = np.pi / 2 + corners * np.pi / self.n_arms
            radii = np.where(
                corners % 2 == 0,
                self.radius,
                self.inner_radius,
            )
            points = np.column_stack(
                [radii * np.cos(angles), radii * np.sin(angles)]
            )
            return np.vstack([points, points[:1]])
        if self.kind == "polyline-glyph":
            points = np.asarray(self.vertices, dtype=np.float64)
            return np.vstack([points, points[:1]]) if self.closed else points
        raise ConfigError(f"'{self.kind}' has no polygonal outline")

    def sample(self, n: int, seed: int) -> PointCloud:
        """n points on this shape drawn with `seed` (noise included)."""
        rng = np.random.default_rng(seed)
        if self.kind == "circle":
            points = _circle(self.radius, self._positions(n, rng))
        elif self.kind in SHAPES_2D:
            points = _along_polyline(self.outline(), self._positions(n, rng))
        elif self.kind == "sphere":
            points = self._sphere(n, rng)
        else:
            first = n // 2
            offset = np.array([self.separation / 2, 0.0, 0.0])
            points = np.vstack(
                [
                    self._sphere(first, rng) - offset,
                    self._sphere(n - first, rng) + offset,
                ]
            )

        if self.noise > 0:
            points = points + self.noise * rng.standard_normal(points.shape)
        return PointCloud(points)

    def generate(self) -> PointCloud:
        return self.sample(self.size, self.seed)

    def _positions(self, n: int, rng: np.random.Generator) -> Tensor:
        """Fractions of the total arc length in [0, 1)."""
        if self.sampling == "iid":
            return rng.random(n)
        return (np.arange(n) + rng.random()) / n

    def _sphere(self, n: int, rng: np.random.Generator) -> Tensor:
        if n == 0:
            return np.empty((0, 3))
        if self.sampling == "iid":
            directions = rng.standard_normal((n, 3))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            return self.radius * directions

        i = np.arange(n)
        z = 1 - 2 * (i + 0.5) / n
        ring = np.sqrt(1 - z**2)
        theta = GOLDEN_ANGLE * i
        lattice = np.column_stack(
            [ring * np.cos(theta), ring * np.sin(theta), z]
        )
        rotation = Rotation.random(random_state=rng)
        return self.radius * rotation.apply(lattice)


def _circle(radius: float, fractions: Tensor) -> Tensor:
    angles = 2 * np.pi * fractions
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _polyline_length(vertices: Tensor) -> float:
    return float(np.linalg.norm(np.diff(vertices, axis=0), axis=1).sum())


def _along_polyline(vertices: Tensor, fractions: Tensor) -> Tensor:
    lengths = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    distance = fractions * cumulative[-1]

    segment = np.searchsorted(cumulative, distance, side="right") - 1
    segment = np.clip(segment, 0, len(lengths) - 1)
    # zero-length segments are never selected by searchsorted
    local = (distance - cumulative[segment]) / np.where(
        lengths[segment] > 0, lengths[segment], 1.0
    )
    start, end = vertices[segment], vertices[segment + 1]
    return start + local[:, None] * (end - start)


def generate(spec: ShapeSpec) -> PointCloud:
    return spec.generate()
