from dataclasses import fields

import numpy as np
import pandas as pd
import pytest

from shape_gradient_fields.cli import main
from shape_gradient_fields.config.key_value import read_key_values
from shape_gradient_fields.config.run_config import RunConfig
from shape_gradient_fields.data_io import read_cloud
from shape_gradient_fields.evaluator import oracle_bound


def run_ok(*argv):
    assert main(list(argv)) == 0


def last_error_line(capsys) -> str:
    lines = capsys.readouterr().err.strip().splitlines()
    return lines[-1]


def gen_circle(out, n_points=64, seed=0, *extra):
    run_ok(
        "gen-data",
        "--out",
        str(out),
        "--shape",
        "circle",
        "--n_points",
        str(n_points),
        "--seed",
        str(seed),
        *extra,
    )
    return out / "shapes" / "shape_0000.xyz"


def test_help_lists_every_config_key(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["--help"])
    assert exit_info.value.code == 0
    text = capsys.readouterr().out
    for key in fields(RunConfig):
        assert f"--{key.name}" in text


def test_gen_data_is_reproducible(tmp_path):
    first = gen_circle(tmp_path / "a", 32, 5, "--n_shapes", "2")
    second = gen_circle(tmp_path / "b", 32, 5, "--n_shapes", "2")
    assert first.read_bytes() == second.read_bytes()
    assert len(read_cloud(first)) == 32
    assert (tmp_path / "a" / "shapes" / "shape_0001.xyz").exists()

    resolved = read_key_values(tmp_path / "a" / "config.resolved")
    assert resolved["seed"] == "5"
    manifest = read_key_values(tmp_path / "a" / "manifest.txt")
    assert manifest["command"] == "gen-data"

    split = read_key_values(tmp_path / "a" / "split.txt")
    assert {split["train"], split["test"]} == {"0", "1"}
    assert split["seed"] == "5"


def test_gen_data_formats(tmp_path):
    run_ok(
        "gen-data",
        "--out",
        str(tmp_path),
        "--shape",
        "sphere",
        "--n_points",
        "20",
        "--cloud_format",
        "ply_ascii",
    )
    cloud = read_cloud(tmp_path / "shapes" / "shape_0000.ply")
    assert cloud.points.shape == (20, 3)


def test_eval_of_a_cloud_against_itself(tmp_path):
    path = gen_circle(tmp_path / "data")
    run_ok(
        "eval",
        "--out",
        str(tmp_path / "eval"),
        "--generated",
        str(path),
        "--reference",
        str(path),
    )
    metrics = read_key_values(tmp_path / "eval" / "metrics.txt")
    assert float(metrics["cd"]) == 0.0
    assert float(metrics["emd"]) == 0.0
    assert metrics["protocol"] == "bbox-eval"
    assert "one_nna_cd" not in metrics


def test_eval_of_directories_reports_set_metrics(tmp_path):
    gen_circle(tmp_path / "gen", 32, 0, "--n_shapes", "3")
    gen_circle(tmp_path / "ref", 32, 10, "--n_shapes", "3")
    run_ok(
        "eval",
        "--out",
        str(tmp_path / "eval"),
        "--generated",
        str(tmp_path / "gen" / "shapes"),
        "--reference",
        str(tmp_path / "ref" / "shapes"),
        "--with_emd",
        "0",
    )
    frame = pd.read_csv(tmp_path / "eval" / "metrics.csv")
    assert {"cd", "mmd_cd", "cov_cd", "one_nna_cd"} <= set(frame.columns)
    assert "emd" not in frame.columns


def test_config_error_exit_code(tmp_path, capsys):
    code = main(["sample", "--out", str(tmp_path), "--seed", "abc"])
    assert code == 2
    line = last_error_line(capsys)
    assert line.startswith("error code=CONFIG_ERROR message=")
    assert "'seed' expects int" in line


def test_config_file_with_an_unknown_key(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text("# sampling run\nsigma_maximum=2\n")
    assert main(["sample", "--config", str(config)]) == 2
    assert "unknown config key 'sigma_maximum'" in last_error_line(capsys)


def test_invalid_shape_is_a_config_error(tmp_path, capsys):
    code = main(["gen-data", "--out", str(tmp_path), "--shape", "torus"])
    assert code == 2
    assert "torus" in last_error_line(capsys)


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("0 0\n1 oops\n")
    code = main(
        [
            "eval",
            "--out",
            str(tmp_path / "eval"),
            "--generated",
            str(bad),
            "--reference",
            str(bad),
        ]
    )
    assert code == 3
    line = last_error_line(capsys)
    assert line.startswith("error code=DATA_ERROR message=")
    assert "line 2" in line


def test_missing_input_is_a_data_error(tmp_path, capsys):
    code = main(
        [
            "eval",
            "--out",
            str(tmp_path),
            "--generated",
            str(tmp_path / "nothing.xyz"),
            "--reference",
            str(tmp_path / "nothing.xyz"),
        ]
    )
    assert code == 3
    assert "no such file" in last_error_line(capsys)


def test_diverging_sampler_is_a_numeric_error(tmp_path, capsys):
    code = main(
        [
            "sample",
            "--out",
            str(tmp_path),
            "--n_points",
            "50",
            "--n_samples",
            "10",
            "--alpha",
            "1e6",
        ]
    )
    assert code == 4
    assert last_error_line(capsys).startswith("error code=NUMERIC_ERROR")


def test_usage_errors_print_one_line(capsys):
    assert main(["fly"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error code=CONFIG_ERROR message=")
    assert "invalid choice" in err[-1]
    assert not any(line.startswith("usage:") for line in err)

    assert main(["sample", "--no_such_flag", "1"]) == 2
    assert "unrecognized arguments" in last_error_line(capsys)


def test_degenerate_cloud_is_a_data_error(tmp_path, capsys):
    point = tmp_path / "point.xyz"
    point.write_text("0.5 0.5\n0.5 0.5\n")
    code = main(
        [
            "eval",
            "--out",
            str(tmp_path / "eval"),
            "--generated",
            str(point),
            "--reference",
            str(point),
        ]
    )
    assert code == 3
    assert "zero-extent" in last_error_line(capsys)


def test_sample_writes_cloud_and_trajectory(tmp_path):
    args = [
        "sample",
        "--n_points",
        "100",
        "--n_samples",
        "40",
        "--n_levels",
        "3",
        "--steps_per_level",
        "3",
        "--trajectory",
        "1",
        "--cloud_format",
        "csv",
    ]
    run_ok(*args, "--out", str(tmp_path / "a"))
    run_ok(*args, "--out", str(tmp_path / "b"))

    samples = tmp_path / "a" / "samples.csv"
    assert len(read_cloud(samples)) == 40
    other = tmp_path / "b" / "samples.csv"
    assert samples.read_bytes() == other.read_bytes()

    trajectory = pd.read_csv(tmp_path / "a" / "trajectory.csv")
    assert len(trajectory) == 40 * 4
    assert list(trajectory.columns) == ["chain", "boundary", "level", "x", "y"]
    info = read_key_values(tmp_path / "a" / "sample_info.txt")
    assert info["field_source"] == "analytic-mixture"
    assert info["n_samples"] == "40"
    assert (tmp_path / "a" / "trajectory.svg").exists()


def test_sample_from_a_cloud_file(tmp_path):
    support = gen_circle(tmp_path / "data", 100)
    run_ok(
        "sample",
        "--out",
        str(tmp_path / "run"),
        "--cloud",
        str(support),
        "--n_samples",
        "10",
        "--n_levels",
        "2",
        "--prior",
        "gaussian",
    )
    assert len(read_cloud(tmp_path / "run" / "samples.xyz")) == 10


def test_field_viz_is_byte_stable(tmp_path):
    args = [
        "field-viz",
        "--n_points",
        "100",
        "--viz_resolution",
        "16",
        "--arrows",
        "4",
    ]
    run_ok(*args, "--out", str(tmp_path / "a"))
    run_ok(*args, "--out", str(tmp_path / "b"))
    first = (tmp_path / "a" / "field.svg").read_bytes()
    assert first.startswith(b"<?xml")
    assert first == (tmp_path / "b" / "field.svg").read_bytes()


def test_extract_contours(tmp_path):
    run_ok(
        "extract",
        "--out",
        str(tmp_path),
        "--n_points",
        "400",
        "--n_levels",
        "3",
        "--grid_resolution",
        "64",
    )
    frame = pd.read_csv(tmp_path / "contours.csv")
    assert list(frame.columns) == ["contour", "closed", "x", "y"]
    assert frame["contour"].nunique() == 1
    radii = np.hypot(frame["x"], frame["y"])
    np.testing.assert_allclose(radii, 0.505, atol=2 * 2 / 63)
    assert (tmp_path / "contours.svg").exists()


def test_extract_filters_candidates(tmp_path):
    candidates = tmp_path / "candidates.xyz"
    candidates.write_text("0 0\n0.5 0\n0 -0.5\n")
    run_ok(
        "extract",
        "--out",
        str(tmp_path / "run"),
        "--candidates",
        str(candidates),
        "--n_levels",
        "3",
    )
    kept = read_cloud(tmp_path / "run" / "filtered.xyz")
    np.testing.assert_array_equal(kept.points, [[0.5, 0.0], [0.0, -0.5]])


def test_render_writes_a_ppm(tmp_path):
    run_ok(
        "render",
        "--out",
        str(tmp_path),
        "--shape",
        "sphere",
        "--n_points",
        "300",
        "--n_levels",
        "3",
        "--sigma_min",
        "0.05",
        "--width",
        "12",
        "--height",
        "8",
    )
    data = (tmp_path / "render.ppm").read_bytes()
    assert data.startswith(b"P6")
    assert len(data) > 12 * 8 * 3


def test_render_needs_a_3d_field(tmp_path, capsys):
    code = main(["render", "--out", str(tmp_path), "--n_points", "50"])
    assert code == 2
    assert "3D" in last_error_line(capsys)


def test_train_then_sample_from_the_checkpoint(tmp_path):
    train = tmp_path / "train"
    run_ok(
        "train",
        "--out",
        str(train),
        "--n_shapes",
        "2",
        "--n_points",
        "32",
        "--epochs",
        "2",
        "--decay_start",
        "1",
        "--latent_dim",
        "4",
        "--hidden",
        "8",
        "--n_blocks",
        "1",
        "--encoder_widths",
        "8",
        "--batch_shapes",
        "2",
        "--n_levels",
        "3",
    )
    history = pd.read_csv(train / "loss_history.csv")
    assert len(history) == 2
    assert (train / "checkpoint" / "params.bin").exists()

    run_ok(
        "sample",
        "--out",
        str(tmp_path / "sample"),
        "--checkpoint",
        str(train / "checkpoint"),
        "--n_samples",
        "15",
        "--steps_per_level",
        "2",
    )
    cloud = read_cloud(tmp_path / "sample" / "samples.xyz")
    assert cloud.points.shape == (15, 2)
    info = read_key_values(tmp_path / "sample" / "sample_info.txt")
    assert info["field_source"] == "gaussian-latent (not l-GAN)"
    split = read_key_values(train / "split.txt")
    assert {split["train"], split["test"]} == {"0", "1"}


@pytest.mark.slow
def test_sampled_circle_is_within_the_oracle_bound(tmp_path, circle_field):
    run_ok("sample", "--out", str(tmp_path / "sample"))
    generated = tmp_path / "sample" / "samples.xyz"
    reference = gen_circle(tmp_path / "ref", 500, 100)
    run_ok(
        "eval",
        "--out",
        str(tmp_path / "eval"),
        "--generated",
        str(generated),
        "--reference",
        str(reference),
        "--normalize",
        "0",
    )
    metrics = read_key_values(tmp_path / "eval" / "metrics.txt")
    _, bound = oracle_bound(circle_field, 500, seeds=range(5))
    assert float(metrics["emd"]) < 2 * bound
