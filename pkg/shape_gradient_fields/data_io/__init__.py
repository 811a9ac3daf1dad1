from .cloud_files import (
    infer_format,
    read_cloud,
    write_cloud,
    write_trajectory,
)
from .pipeline import Dataset, dataset_from_clouds, make_dataset
from .shapes import ShapeSpec, generate
