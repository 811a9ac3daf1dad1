from .analytic_field import GmmField, linear_score_objectives
from .core import (
    ArrayField,
    BBoxTransform,
    NoiseSchedule,
    PointCloud,
    ScoreField,
    default_schedule,
    normalize_eval,
    normalize_unit_cube,
)
from .exceptions import ConfigError, DataError, NumericError, ShapeFieldError

__version__ = "0.1.0"
