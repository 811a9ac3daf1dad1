"""
Command line entry point:

    shape-gradient-fields <command> [--config FILE] [--<key> VALUE ...]

Commands: gen-data, train, sample, extract, render, eval, field-viz.
Every key of RunConfig is accepted as a flag. Failures print a single
`error code=<CODE> message=<text>` line to stderr and exit with 2
(config), 3 (data) or 4 (numeric).
"""
import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

from loguru import logger

from shape_gradient_fields.analytic_field import GmmField
from shape_gradient_fields.config.env_config import LOG_LEVEL
from shape_gradient_fields.config.key_value import write_key_values
from shape_gradient_fields.config.run_config import RunConfig
from shape_gradient_fields.core import (
    NoiseSchedule,
    PointCloud,
    ScoreField,
    Tensor,
    normalize_unit_cube,
)
from shape_gradient_fields.data_io import (
    Dataset,
    ShapeSpec,
    dataset_from_clouds,
    make_dataset,
    read_cloud,
    write_cloud,
)
from shape_gradient_fields.data_io.cloud_files import SUFFIX_FORMATS
from shape_gradient_fields.evaluator import Evaluator
from shape_gradient_fields.exceptions import (
    ConfigError,
    DataError,
    NumericError,
    ShapeFieldError,
)
from shape_gradient_fields.models import (
    Checkpoint,
    LatentField,
    PointEncoder,
    ScoreDecoder,
    TrainConfig,
    encode,
    fit_latent_sampler,
    load_checkpoint,
    save_checkpoint,
)
from shape_gradient_fields.models.latent_sampler import LATENT_SAMPLER_LABEL
from shape_gradient_fields.models.trainer import ScoreTrainer
from shape_gradient_fields.sampler import (
    AnnealedLangevin,
    SamplerConfig,
    make_prior,
)
from shape_gradient_fields.surface import (
    Camera,
    ContourGrid,
    RayCastConfig,
    extract_contour_2d,
    filter_local_minima,
    render,
    write_contours_csv,
    write_ppm,
)
from shape_gradient_fields.viz import (
    field_panels,
    plot_contours,
    plot_field_panels,
    plot_trajectory,
    save_svg,
)

CLOUD_SUFFIXES = {"xyz": ".xyz", "csv": ".csv", "ply_ascii": ".ply"}
SPLIT_FILE = "split.txt"
SAMPLE_INFO_FILE = "sample_info.txt"
ANALYTIC_SOURCE = "analytic-mixture"
ENCODED_SOURCE = "encoded-cloud"


class CliParser(argparse.ArgumentParser):
    """Usage errors surface as ConfigError so they print one error line."""

    def error(self, message: str) -> None:
        raise ConfigError(f"{self.prog}: {message}")


def shape_spec(config: RunConfig, index: int = 0) -> ShapeSpec:
    return ShapeSpec(
        kind=config.shape,
        n_points=config.n_points or None,
        noise=config.shape_noise,
        seed=config.seed + index,
        radius=config.radius,
        side=config.side,
        n_arms=config.n_arms,
        inner_radius=config.inner_radius,
        separation=config.separation,
        sampling=config.sampling,
    )


def read_clouds(path: str) -> list[PointCloud]:
    """One cloud file, or every cloud file of a directory in name order."""
    if not path:
        raise ConfigError("A cloud file or directory is required")
    location = Path(path)
    if location.is_dir():
        files = sorted(
            p for p in location.iterdir() if p.suffix.lower() in SUFFIX_FORMATS
        )
        if not files:
            raise DataError(f"{location}: no cloud files")
        return [read_cloud(p) for p in files]
    if not location.exists():
        raise DataError(f"{location}: no such file or directory")
    return [read_cloud(location)]


def cloud_path(config: RunConfig, directory: Path, stem: str) -> Path:
    return directory / f"{stem}{CLOUD_SUFFIXES[config.cloud_format]}"


@dataclass
class FieldSource:
    field: ScoreField
    # support points of an analytic field, or the encoded cloud
    support: Optional[Tensor]
    schedule: NoiseSchedule
    origin: str

    def to_dict(self) -> dict:
        return {"field_source": self.origin, "dim": self.field.dim}


def build_field(config: RunConfig) -> FieldSource:
    """
    The field a command works on: a trained decoder bound to a latent
    code (`checkpoint`), or the analytic mixture over `cloud` or over a
    generated shape. The latent code is the encoding of `cloud` when one
    is given and a draw of the checkpoint's latent sampler otherwise.
    """
    if config.checkpoint:
        checkpoint = load_checkpoint(config.checkpoint)
        if config.cloud:
            (cloud,) = read_clouds(config.cloud)
            normalized, _ = normalize_unit_cube(cloud)
            latent = encode(checkpoint.encoder, normalized)
            support, origin = normalized.points, ENCODED_SOURCE
        elif checkpoint.latent_sampler is not None:
            latent = checkpoint.latent_sampler.sample(config.seed, n=1)[0]
            support, origin = None, checkpoint.latent_sampler.label
        else:
            raise ConfigError(
                "Checkpoint has no latent sampler; pass a cloud to encode"
            )
        field = LatentField(checkpoint.decoder, latent)
        return FieldSource(field, support, checkpoint.schedule, origin)

    if config.cloud:
        (cloud,) = read_clouds(config.cloud)
    else:
        cloud = shape_spec(config).generate()
    return FieldSource(
        GmmField.from_cloud(cloud),
        cloud.points,
        config.schedule(),
        ANALYTIC_SOURCE,
    )


def sampler_config(
    config: RunConfig, schedule: NoiseSchedule
) -> SamplerConfig:
    try:
        prior = make_prior(
            config.prior, mean=config.prior_mean, std=config.prior_std
        )
        return SamplerConfig(
            schedule=schedule,
            alpha=config.alpha,
            steps_per_level=config.steps_per_level,
            prior=prior,
            seed=config.seed,
            noise_first=config.noise_first,
        )
    except ValueError as e:
        raise ConfigError(str(e))


def split_fractions(config: RunConfig) -> tuple[float, float]:
    return 1.0 - config.test_fraction, config.test_fraction


def generated_dataset(config: RunConfig) -> Dataset:
    specs = [shape_spec(config, index) for index in range(config.n_shapes)]
    return make_dataset(specs, split=split_fractions(config), seed=config.seed)


def gen_data(config: RunConfig, out: Path) -> None:
    """
    Writes every generated shape in its original frame, in spec order,
    and the train/test membership to `split.txt`.
    """
    dataset = generated_dataset(config)
    shapes = out / "shapes"
    shapes.mkdir(parents=True, exist_ok=True)

    members = zip(
        dataset.train_index + dataset.test_index,
        dataset.train + dataset.test,
        dataset.train_transforms + dataset.test_transforms,
    )
    for index, cloud, transform in sorted(members, key=lambda m: m[0]):
        original = PointCloud(transform.invert(cloud.points))
        write_cloud(original, cloud_path(config, shapes, f"shape_{index:04d}"))

    write_key_values(out / SPLIT_FILE, dataset.split_dict())
    logger.info(f"wrote {config.n_shapes} shapes to {shapes}")


def train_command(config: RunConfig, out: Path) -> None:
    if config.data:
        dataset = dataset_from_clouds(
            read_clouds(config.data),
            split=split_fractions(config),
            seed=config.seed,
        )
    else:
        dataset = generated_dataset(config)
    if not dataset.train:
        raise ConfigError("The split leaves no shape to train on")
    dim = dataset.train[0].dim

    encoder = PointEncoder(
        dim=dim,
        latent_dim=config.latent_dim,
        widths=config.ints("encoder_widths"),
        seed=config.seed,
    )
    decoder = ScoreDecoder(
        dim=dim,
        latent_dim=config.latent_dim,
        hidden=config.hidden,
        n_blocks=config.n_blocks,
        seed=config.seed + 1,
    )
    train_config = TrainConfig(
        schedule=config.schedule(),
        batch_shapes=config.batch_shapes,
        epochs=config.epochs,
        encoder_lr=config.encoder_lr,
        decoder_lr=config.decoder_lr,
        decay_start=config.decay_start,
        encoder_lr_floor=config.lr_floor,
        decoder_lr_floor=config.lr_floor,
        points_per_shape=config.points_per_shape or None,
        seed=config.seed,
        log_every=config.log_every,
    )

    trainer = ScoreTrainer(encoder, decoder, dataset, train_config)
    trainer.fit(mlflow_run_name="train" if config.to_mlflow else None)
    trainer.get_results().to_csv(
        out / "loss_history.csv", index=False, float_format="%.17g"
    )
    write_key_values(out / SPLIT_FILE, dataset.split_dict())

    save_checkpoint(
        out / "checkpoint",
        Checkpoint(
            encoder=encoder,
            decoder=decoder,
            schedule=train_config.schedule,
            latent_sampler=fit_latent_sampler(encoder, dataset.train),
            seed=config.seed,
            iterations=trainer.iteration,
        ),
    )


def sample_command(config: RunConfig, out: Path) -> None:
    source = build_field(config)
    sampler = AnnealedLangevin(sampler_config(config, source.schedule))
    run = sampler.run(source.field, config.n_samples)
    write_cloud(run.cloud, cloud_path(config, out, "samples"))

    info = {
        **source.to_dict(),
        "n_samples": config.n_samples,
        **sampler.config.to_dict(),
    }
    write_key_values(out / SAMPLE_INFO_FILE, info, header=source.origin)
    if source.origin == LATENT_SAMPLER_LABEL:
        logger.info(f"latent code drawn by {LATENT_SAMPLER_LABEL}")

    if config.trajectory:
        run.write_trajectory(out / "trajectory.csv")
        if source.field.dim == 2:
            save_svg(plot_trajectory(run), out / "trajectory.svg")


def _sigma_k(config: RunConfig, schedule: NoiseSchedule) -> float:
    return config.sigma_k or schedule.sigma_min


def extract_command(config: RunConfig, out: Path) -> None:
    source = build_field(config)
    field, support = source.field, source.support
    sigma_k = _sigma_k(config, source.schedule)

    if config.candidates:
        (candidates,) = read_clouds(config.candidates)
        kept = filter_local_minima(field, candidates.points, sigma_k)
        if len(kept) == 0:
            raise DataError("No candidate point survived the filter")
        write_cloud(PointCloud(kept), cloud_path(config, out, "filtered"))
        return

    grid = ContourGrid(
        resolution=config.grid_resolution,
        low=config.grid_low,
        high=config.grid_high,
    )
    polylines = extract_contour_2d(field, sigma_k, grid, config.iso_level)
    write_contours_csv(out / "contours.csv", polylines)
    figure = plot_contours(
        polylines,
        support=None if support is None else PointCloud(support),
        bounds=(config.grid_low, config.grid_high),
    )
    save_svg(figure, out / "contours.svg")


def render_command(config: RunConfig, out: Path) -> None:
    source = build_field(config)
    ray_config = RayCastConfig(
        step_rate=config.step_rate,
        max_steps=config.max_steps,
        iso_level=config.iso_level,
        max_travel=config.max_travel,
        background=config.floats("background"),
        field_scale=config.field_scale,
    )
    camera = Camera(
        origin=config.floats("camera"),
        width=config.width,
        height=config.height,
        fov_degrees=config.fov,
    )
    image = render(source.field, camera, ray_config, source.schedule)
    logger.info(f"hit rate {image.hit_rate:.3f}")
    write_ppm(out / "render.ppm", image)


def eval_command(config: RunConfig, out: Path) -> None:
    generated = read_clouds(config.generated)
    reference = read_clouds(config.reference)
    evaluator = Evaluator(
        generated,
        reference,
        normalize=config.normalize,
        with_emd=config.with_emd,
        seed=config.seed,
    )
    single_pair = len(generated) == 1 and len(reference) == 1
    report = evaluator.get_all_metrics(
        to_mlflow=config.to_mlflow, set_metrics=not single_pair
    )
    report.save(out)


def field_viz_command(config: RunConfig, out: Path) -> None:
    source = build_field(config)
    support = source.support
    panels = field_panels(
        source.field,
        config.floats("viz_sigmas"),
        bounds=(config.grid_low, config.grid_high),
        resolution=config.viz_resolution,
        arrows=config.arrows,
    )
    figure = plot_field_panels(
        panels, support=None if support is None else PointCloud(support)
    )
    save_svg(figure, out / "field.svg")


COMMANDS: dict[str, Callable[[RunConfig, Path], None]] = {
    "gen-data": gen_data,
    "train": train_command,
    "sample": sample_command,
    "extract": extract_command,
    "render": render_command,
    "eval": eval_command,
    "field-viz": field_viz_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="shape-gradient-fields",
        description="Learn, sample and inspect gradient fields of shapes.",
    )
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", help="key=value config file")

    for key in fields(RunConfig):
        parser.add_argument(
            f"--{key.name}",
            dest=key.name,
            default=argparse.SUPPRESS,
            metavar=type(key.default).__name__.upper(),
            help=f"{key.metadata['help']} (default: {key.default})",
        )
    return parser


def run(argv: Optional[Sequence[str]] = None) -> None:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)

    config = RunConfig.resolve(config_path, overrides=args)
    out = config.output_dir(command)
    config.write_resolved(out, command)

    logger.info(f"running '{command}' into {out}")
    COMMANDS[command](config, out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logger.remove()
    logger.add(sys.stderr, level=LOG_LEVEL)

    try:
        run(argv)
    except ShapeFieldError as e:
        error = e
    except (ValueError, KeyError) as e:
        error = ConfigError(str(e))
    except OSError as e:
        error = DataError(str(e))
    except ArithmeticError as e:
        error = NumericError(str(e))
    else:
        return 0

    print(error.one_line(), file=sys.stderr)
    return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
