import os

EXPERIMENT_NAME = os.environ.get("EXPERIMENT_NAME", "shape-gradient-fields")
MLFLOW_TRACKING_URI = os.environ.get("MLFLOW_TRACKING_URI", "")
RUNS_ROOT = os.environ.get("SGF_RUNS_ROOT", "runs")
LOG_LEVEL = os.environ.get("SGF_LOG_LEVEL", "INFO")
DISABLE_PROGRESS = os.environ.get("SGF_DISABLE_PROGRESS", "0") == "1"
