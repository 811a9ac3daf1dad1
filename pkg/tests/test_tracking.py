import mlflow
import pytest

from shape_gradient_fields import tracking
from shape_gradient_fields.tracking import mlflow_run_start_handle


@mlflow_run_start_handle
def active_run_name(mlflow_run_name=None):
    run = mlflow.active_run()
    return None if run is None else run.info.run_name


@pytest.fixture
def local_tracking(tmp_path, monkeypatch):
    previous = mlflow.get_tracking_uri()
    monkeypatch.setattr(
        tracking, "MLFLOW_TRACKING_URI", (tmp_path / "mlruns").as_uri()
    )
    monkeypatch.setattr(tracking, "EXPERIMENT_NAME", "unit-tests")
    yield
    mlflow.set_tracking_uri(previous)


def test_without_a_run_name_nothing_is_tracked():
    assert active_run_name() is None


def test_named_call_runs_inside_an_mlflow_run(local_tracking):
    assert active_run_name(mlflow_run_name="smoke") == "smoke"
    assert mlflow.active_run() is None

    experiment = mlflow.get_experiment_by_name("unit-tests")
    runs = mlflow.search_runs([experiment.experiment_id])
    assert list(runs["tags.mlflow.runName"]) == ["smoke"]
