import functools

import mlflow
from loguru import logger

from shape_gradient_fields.config.env_config import (
    EXPERIMENT_NAME,
    MLFLOW_TRACKING_URI,
)


def mlflow_run_start_handle(method):
    """
    Runs `method` inside an mlflow run when it is called with a truthy
    `mlflow_run_name` keyword, and plainly otherwise.
    """

    @functools.wraps(method)
    def wrapper(*args, **kwargs):
        mlflow_run_name = kwargs.get("mlflow_run_name", None)
        to_mlflow = True if mlflow_run_name else False

        if to_mlflow:
            if MLFLOW_TRACKING_URI:
                mlflow.set_tracking_uri(MLFLOW_TRACKING_URI)
            experiment = mlflow.set_experiment(EXPERIMENT_NAME)
            logger.info(
                f"logging run '{mlflow_run_name}' to experiment "
                f"'{EXPERIMENT_NAME}'"
            )

            with mlflow.start_run(
                run_name=mlflow_run_name,
                experiment_id=experiment.experiment_id,
            ):
                return method(*args, **kwargs)

        else:
            return method(*args, **kwargs)

    return wrapper
