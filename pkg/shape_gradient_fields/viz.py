"""
Static SVG figures: log-density heatmaps with score arrows, sampling
trajectories, point-cloud scatters and extracted contours. Output is
byte-stable for identical inputs (fixed SVG hash salt, no date).
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from shape_gradient_fields.core import PointCloud, ScoreField, Tensor  # noqa
from shape_gradient_fields.sampler import SamplingRun  # noqa: E402
from shape_gradient_fields.surface.contour import Polyline  # noqa: E402

plt.rcParams["svg.hashsalt"] = "shape-gradient-fields"
PANEL_SIZE = 4.0


@dataclass
class FieldPanel:
    """
    One noise level of a 2D field: `heatmap` over the (ys, xs) grid
    and unit score directions at the arrow anchors.
    """

    sigma: float
    xs: Tensor
    ys: Tensor
    heatmap: Tensor
    heatmap_label: str
    anchors: Tensor
    directions: Tensor


def _grid(low: float, high: float, resolution: int) -> tuple[Tensor, Tensor]:
    nodes = np.linspace(low, high, resolution)
    grid_x, grid_y = np.meshgrid(nodes, nodes)
    return nodes, np.column_stack([grid_x.ravel(), grid_y.ravel()])


def field_panels(
    field: ScoreField,
    sigmas: Sequence[float],
    bounds: tuple[float, float] = (-1.0, 1.0),
    resolution: int = 96,
    arrows: int = 16,
) -> list[FieldPanel]:
    """
    Heatmap is the log-density when the field provides one (analytic
    mixtures) and log |g| otherwise.
    """
    if field.dim != 2:
        raise ValueError(f"Field panels need a 2D field, got dim={field.dim}")

    nodes, grid = _grid(*bounds, resolution)
    _, anchors = _grid(*bounds, arrows)
    panels = []

    for sigma in sigmas:
        if hasattr(field, "log_density"):
            values = field.log_density(grid, sigma)
            label = "log density"
        else:
            norms = np.linalg.norm(field.score(grid, sigma), axis=1)
            values = np.log(np.maximum(norms, np.finfo(float).tiny))
            label = "log |score|"

        scores = np.atleast_2d(field.score(anchors, sigma))
        norms = np.linalg.norm(scores, axis=1, keepdims=True)
        directions = np.divide(
            scores, norms, out=np.zeros_like(scores), where=norms > 0
        )

        panels.append(
            FieldPanel(
                sigma=float(sigma),
                xs=nodes,
                ys=nodes,
                heatmap=np.asarray(values).reshape(resolution, resolution),
                heatmap_label=label,
                anchors=anchors,
                directions=directions,
            )
        )

    return panels


def _row_of_axes(count: int) -> tuple[Figure, list]:
    fig, axes = plt.subplots(1, count, squeeze=False)
    fig.set_size_inches(PANEL_SIZE * count, PANEL_SIZE)
    return fig, list(axes[0])


def plot_field_panels(
    panels: Sequence[FieldPanel], support: Optional[PointCloud] = None
) -> Figure:
    fig, axes = _row_of_axes(len(panels))

    for ax, panel in zip(axes, panels):
        mesh = ax.pcolormesh(
            panel.xs, panel.ys, panel.heatmap, shading="auto", cmap="viridis"
        )
        fig.colorbar(mesh, ax=ax, label=panel.heatmap_label)
        ax.quiver(
            panel.anchors[:, 0],
            panel.anchors[:, 1],
            panel.directions[:, 0],
            panel.directions[:, 1],
            color="white",
            width=0.004,
        )
        if support is not None:
            ax.scatter(*support.points[:, :2].T, s=1, color="red")
        ax.set_title(f"sigma = {panel.sigma:g}")
        ax.set_aspect("equal")

    return fig


def plot_trajectory(run: SamplingRun, max_panels: int = 6) -> Figure:
    """Chain positions at evenly spaced level boundaries (x, y only)."""
    frames = run.trajectory
    picks = np.unique(
        np.linspace(0, len(frames) - 1, min(max_panels, len(frames)))
        .round()
        .astype(int)
    )
    labels = ("prior", *(f"after sigma = {s:g}" for s in run.sigmas))
    fig, axes = _row_of_axes(len(picks))

    for ax, boundary in zip(axes, picks):
        positions = frames[boundary]
        ax.scatter(positions[:, 0], positions[:, 1], s=2, color="black")
        ax.set_title(labels[boundary])
        ax.set_aspect("equal")

    return fig


def plot_clouds(
    clouds: Sequence[PointCloud], titles: Optional[Sequence[str]] = None
) -> Figure:
    titles = titles or [f"cloud {i}" for i in range(len(clouds))]
    fig = plt.figure()
    fig.set_size_inches(PANEL_SIZE * len(clouds), PANEL_SIZE)

    for idx, (cloud, title) in enumerate(zip(clouds, titles), start=1):
        if cloud.dim == 3:
            ax = fig.add_subplot(1, len(clouds), idx, projection="3d")
            ax.scatter(*cloud.points.T, s=1, color="black")
        else:
            ax = fig.add_subplot(1, len(clouds), idx)
            ax.scatter(*cloud.points.T, s=1, color="black")
            ax.set_aspect("equal")
        ax.set_title(title)

    return fig


def plot_contours(
    polylines: Sequence[Polyline],
    support: Optional[PointCloud] = None,
    bounds: tuple[float, float] = (-1.0, 1.0),
) -> Figure:
    fig, (ax,) = _row_of_axes(1)
    for line in polylines:
        ax.plot(line.points[:, 0], line.points[:, 1], color="black")
    if support is not None:
        ax.scatter(*support.points[:, :2].T, s=1, color="red")
    ax.set_xlim(*bounds)
    ax.set_ylim(*bounds)
    ax.set_aspect("equal")
    return fig


def save_svg(fig: Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"figure written to {path}")
    return path
