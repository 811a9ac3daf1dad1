"""
One flat configuration schema for every command. Values come from the
field defaults, then a key=value file (`--config`), then `--key value`
flags. The resolved values are written to `config.resolved` next to
every run's outputs.
"""
import platform
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import scipy

from shape_gradient_fields.config.env_config import RUNS_ROOT
from shape_gradient_fields.config.key_value import (
    read_key_values,
    write_key_values,
)
from shape_gradient_fields.core import NoiseSchedule, default_schedule
from shape_gradient_fields.exceptions import ConfigError, DataError

RESOLVED_FILE = "config.resolved"
MANIFEST_FILE = "manifest.txt"
PACKAGE_VERSION = "0.1.0"
TRUE_VALUES = ("1", "true", "yes", "on")
FALSE_VALUES = ("0", "false", "no", "off")


def _key(default: Any, help: str) -> Any:
    return field(default=default, metadata={"help": help})


@dataclass
class RunConfig:
    seed: int = _key(0, "master seed of the run")
    out: str = _key("", f"output directory (default {RUNS_ROOT}/<command>)")
    to_mlflow: bool = _key(False, "log params and metrics to mlflow")

    # shapes
    shape: str = _key("circle", "shape kind for generated data")
    n_points: int = _key(0, "points per shape, 0 = 800 in 2D / 2048 in 3D")
    n_shapes: int = _key(1, "number of generated shapes")
    test_fraction: float = _key(0.2, "fraction of shapes held out as test")
    shape_noise: float = _key(0.0, "Gaussian jitter added to shape points")
    radius: float = _key(0.5, "circle / sphere / star outer radius")
    side: float = _key(1.0, "square side length")
    n_arms: int = _key(5, "star arm count")
    inner_radius: float = _key(0.25, "star inner radius")
    separation: float = _key(1.2, "distance between two-spheres centres")
    sampling: str = _key("stratified", "shape sampling: stratified or iid")
    cloud_format: str = _key("xyz", "cloud file format: xyz, csv, ply_ascii")

    # inputs
    data: str = _key("", "training cloud file or directory")
    cloud: str = _key("", "cloud file used as the support of an oracle field")
    checkpoint: str = _key("", "checkpoint directory of a trained model")
    generated: str = _key("", "generated cloud file or directory (eval)")
    reference: str = _key("", "reference cloud file or directory (eval)")
    candidates: str = _key("", "candidate points to filter (extract)")

    # noise schedule
    n_levels: int = _key(10, "number of noise levels")
    sigma_max: float = _key(1.0, "largest noise level")
    sigma_min: float = _key(0.01, "smallest noise level")

    # model and training
    latent_dim: int = _key(32, "latent code size")
    hidden: int = _key(64, "decoder hidden width")
    n_blocks: int = _key(4, "decoder residual blocks")
    encoder_widths: str = _key("64,128", "encoder pointwise layer widths")
    epochs: int = _key(2000, "training epochs")
    batch_shapes: int = _key(64, "shapes per batch")
    encoder_lr: float = _key(1e-3, "encoder learning rate")
    decoder_lr: float = _key(1e-3, "decoder learning rate")
    decay_start: int = _key(1000, "epoch where linear lr decay starts")
    lr_floor: float = _key(1e-4, "learning rate reached at the last epoch")
    points_per_shape: int = _key(0, "points drawn per shape, 0 = all")
    log_every: int = _key(100, "epochs between loss log lines")

    # sampling
    n_samples: int = _key(500, "points to sample")
    alpha: float = _key(2e-4, "Langevin step size")
    steps_per_level: int = _key(10, "Langevin steps per noise level")
    prior: str = _key("uniform", "chain prior: uniform, gaussian, fixed")
    prior_mean: float = _key(0.0, "Gaussian prior mean")
    prior_std: float = _key(0.5, "Gaussian prior standard deviation")
    noise_first: bool = _key(True, "add noise before the gradient step")
    trajectory: bool = _key(False, "also write the chain trajectory CSV")

    # surface extraction
    sigma_k: float = _key(0.0, "field noise level, 0 = smallest level")
    iso_level: float = _key(0.005, "iso level delta in marched units")
    grid_resolution: int = _key(256, "contour grid nodes per axis")
    grid_low: float = _key(-1.0, "lower contour grid bound")
    grid_high: float = _key(1.0, "upper contour grid bound")
    width: int = _key(64, "render width in pixels")
    height: int = _key(64, "render height in pixels")
    fov: float = _key(45.0, "camera field of view in degrees")
    camera: str = _key("0,0,-2", "camera origin, looking at the origin")
    step_rate: float = _key(1.0, "ray marching step rate")
    max_steps: int = _key(64, "ray marching steps")
    max_travel: float = _key(4.0, "ray travel beyond which rays miss")
    field_scale: str = _key(
        "sigma_squared", "marched quantity: raw or sigma_squared"
    )
    background: str = _key("1,1,1", "background RGB in [0, 1]")

    # evaluation
    normalize: bool = _key(True, "bbox-normalize clouds before metrics")
    with_emd: bool = _key(True, "compute EMD based metrics")

    # field visualization
    viz_sigmas: str = _key("1,0.1,0.01", "noise levels of the field panels")
    viz_resolution: int = _key(96, "heatmap nodes per axis")
    arrows: int = _key(16, "quiver arrows per axis")

    @classmethod
    def defaults(cls) -> dict[str, Any]:
        return {
            key.name: key.default
            for key in fields(cls)
            if key.default is not MISSING
        }

    @classmethod
    def from_strings(
        cls, values: Mapping[str, str], source: str = "<config>"
    ) -> "RunConfig":
        types = {key.name: type(key.default) for key in fields(cls)}
        parsed = {}
        for name, text in values.items():
            if name not in types:
                raise ConfigError(f"{source}: unknown config key '{name}'")
            parsed[name] = _convert(name, text, types[name], source)
        return cls(**parsed)

    @classmethod
    def resolve(
        cls,
        config_path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, str]] = None,
    ) -> "RunConfig":
        values = {}
        if config_path:
            try:
                values.update(read_key_values(config_path))
            except DataError as e:
                raise ConfigError(str(e))
        values.update(overrides or {})
        return cls.from_strings(values, source=str(config_path or "<flags>"))

    def to_dict(self) -> dict[str, Any]:
        return {key.name: getattr(self, key.name) for key in fields(self)}

    def output_dir(self, command: str) -> Path:
        return Path(self.out) if self.out else Path(RUNS_ROOT) / command

    def schedule(self) -> NoiseSchedule:
        try:
            return default_schedule(
                self.n_levels,
                sigma_max=self.sigma_max,
                sigma_min=self.sigma_min,
            )
        except ValueError as e:
            raise ConfigError(str(e))

    def floats(self, name: str) -> tuple[float, ...]:
        text = getattr(self, name)
        try:
            return tuple(float(part) for part in text.split(","))
        except ValueError:
            raise ConfigError(f"{name}: expected comma separated numbers")

    def ints(self, name: str) -> tuple[int, ...]:
        return tuple(int(value) for value in self.floats(name))

    def write_resolved(self, directory: Path, command: str) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        write_key_values(
            directory / RESOLVED_FILE,
            {k: _format(v) for k, v in self.to_dict().items()},
            header=f"resolved config of '{command}'",
        )
        write_key_values(
            directory / MANIFEST_FILE,
            {
                "command": command,
                "seed": self.seed,
                "shape_gradient_fields": PACKAGE_VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        )


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(name: str, text: str, kind: type, source: str) -> Any:
    text = str(text).strip()
    try:
        if kind is bool:
            if text.lower() in TRUE_VALUES:
                return True
            if text.lower() in FALSE_VALUES:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(
            f"{source}: '{name}' expects {kind.__name__}, got '{text}'"
        )
