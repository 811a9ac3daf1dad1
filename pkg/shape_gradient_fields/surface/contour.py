"""
2D iso-contours of the gradient-norm field and the second-derivative
test for candidate surface points.

G(x) = sigma_k^2 |g(x, sigma_k)| approximates the distance to the shape,
so its delta level set is the boundary of a band of half-width delta
around every curve. The grid is signed before contouring: cells above
delta that touch the border (flood fill) are outside and stay positive,
the band and any enclosed region above delta are negative. The zero
crossing is then the outer band boundary only, one polyline per shape
component, and zero-gradient points inside a closed curve drop out.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from loguru import logger
from numpy.typing import ArrayLike
from scipy import ndimage
from skimage import measure

from shape_gradient_fields.core import ScoreField, Tensor

# relative tolerance of the density-maximum test on Hessian eigenvalues
FLAT_RATIO = 0.1


@dataclass(frozen=True)
class ContourGrid:
    resolution: int = 256
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.resolution < 2:
            raise ValueError(
                f"Contour grid needs at least 2 nodes per axis, got "
                f"{self.resolution}"
            )
        if not self.high > self.low:
            raise ValueError(f"Empty grid bounds [{self.low}, {self.high}]")

    @property
    def cell_size(self) -> float:
        return (self.high - self.low) / (self.resolution - 1)

    def nodes(self) -> Tensor:
        return np.linspace(self.low, self.high, self.resolution)

    def points(self) -> Tensor:
        """(resolution^2, 2) node coordinates, rows follow y then x."""
        xs = self.nodes()
        grid_x, grid_y = np.meshgrid(xs, xs)
        return np.column_stack([grid_x.ravel(), grid_y.ravel()])


@dataclass
class Polyline:
    points: Tensor
    closed: bool

    def __len__(self) -> int:
        return len(self.points)


def distance_grid(
    field: ScoreField, sigma_k: float, grid: ContourGrid
) -> Tensor:
    """G on the grid nodes as a (resolution, resolution) array [y, x]."""
    scores = np.atleast_2d(field.score(grid.points(), sigma_k))
    norms = np.linalg.norm(scores, axis=1)
    return (sigma_k**2 * norms).reshape(grid.resolution, grid.resolution)


def signed_band(values: Tensor, delta: float) -> Tensor:
    outside = values > delta
    labels, _ = ndimage.label(outside)
    border = np.concatenate(
        [labels[0], labels[-1], labels[:, 0], labels[:, -1]]
    )
    exterior = np.isin(labels, border[border > 0])

    offset = values - delta
    return np.where(exterior | ~outside, offset, -offset)


def extract_contour_2d(
    field: ScoreField,
    sigma_k: float,
    grid: ContourGrid,
    delta: float,
) -> list[Polyline]:
    """
    Marching squares with linear edge interpolation on the signed band.
    Returns an empty list when the grid resolves no crossing.
    """
    if field.dim != 2:
        raise ValueError(f"Contours need a 2D field, got dim={field.dim}")
    if not delta > 0:
        raise ValueError(f"Iso level must be positive, got {delta}")

    signed = signed_band(distance_grid(field, sigma_k, grid), delta)
    if signed.min() >= 0 or signed.max() <= 0:
        return []

    polylines = []
    for contour in measure.find_contours(signed, level=0.0):
        # find_contours yields (row, col) = (y, x) index coordinates
        points = grid.low + contour[:, ::-1] * grid.cell_size
        closed = len(points) > 2 and np.allclose(points[0], points[-1])
        polylines.append(Polyline(points=points, closed=closed))

    logger.debug(
        f"{len(polylines)} contours at delta={delta} on a "
        f"{grid.resolution}^2 grid"
    )
    return polylines


def log_density_hessian(
    field: ScoreField, points: Tensor, sigma_k: float
) -> Tensor:
    """
    Central-difference Jacobian of the score with h = sigma_k / 10,
    symmetrised. The score is the gradient of the log-density, so this
    is the Hessian of the log-density.
    """
    h = sigma_k / 10
    n, dim = points.shape
    hessian = np.empty((n, dim, dim))

    for axis in range(dim):
        step = np.zeros(dim)
        step[axis] = h
        forward = np.atleast_2d(field.score(points + step, sigma_k))
        backward = np.atleast_2d(field.score(points - step, sigma_k))
        hessian[:, :, axis] = (forward - backward) / (2 * h)

    return (hessian + hessian.transpose(0, 2, 1)) / 2


def filter_local_minima(
    field: ScoreField, points: ArrayLike, sigma_k: float
) -> Tensor:
    """
    Keeps candidates that sit on a ridge of the density: the strongest
    curvature is negative and no other principal curvature is positive
    beyond FLAT_RATIO of it. Minima and saddles are removed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.empty((0, field.dim))
    points = points.reshape(-1, field.dim)

    eigenvalues = np.linalg.eigvalsh(
        log_density_hessian(field, points, sigma_k)
    )
    lowest, highest = eigenvalues[:, 0], eigenvalues[:, -1]
    keep = (lowest < 0) & (highest <= FLAT_RATIO * np.abs(lowest))

    logger.debug(f"kept {int(keep.sum())} of {len(points)} candidates")
    return points[keep]


def contours_frame(polylines: list[Polyline]) -> pd.DataFrame:
    rows = [
        pd.DataFrame(
            {
                "contour": index,
                "closed": int(line.closed),
                "x": line.points[:, 0],
                "y": line.points[:, 1],
            }
        )
        for index, line in enumerate(polylines)
    ]
    if not rows:
        return pd.DataFrame(columns=["contour", "closed", "x", "y"])
    return pd.concat(rows, ignore_index=True)


def write_contours_csv(
    path: Union[str, Path], polylines: list[Polyline]
) -> Path:
    path = Path(path)
    contours_frame(polylines).to_csv(path, index=False, float_format="%.17g")
    return path
