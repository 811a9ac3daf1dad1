import hashlib
import os
from pathlib import Path

os.environ.setdefault("SGF_DISABLE_PROGRESS", "1")
os.environ.setdefault("MLFLOW_ALLOW_FILE_STORE", "true")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from shape_gradient_fields.analytic_field import GmmField  # noqa: E402
from shape_gradient_fields.core import PointCloud  # noqa: E402
from shape_gradient_fields.data_io import ShapeSpec  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circle_cloud() -> PointCloud:
    return ShapeSpec(kind="circle", n_points=800, seed=0).generate()


@pytest.fixture(scope="session")
def circle_field(circle_cloud) -> GmmField:
    return GmmField.from_cloud(circle_cloud)


@pytest.fixture(scope="session")
def sphere_field() -> GmmField:
    cloud = ShapeSpec(kind="sphere", n_points=2000, seed=0).generate()
    return GmmField.from_cloud(cloud)


def relative_error(actual, expected, floor: float = 1e-12) -> float:
    actual, expected = np.asarray(actual), np.asarray(expected)
    scale = max(float(np.linalg.norm(expected)), floor)
    return float(np.linalg.norm(actual - expected)) / scale


FD_STEP = 1e-5


def randomize(params, rng, scale=0.5):
    for value in params.values():
        value[...] = scale * rng.standard_normal(value.shape)


def assert_gradient_matches(loss, value, analytic, rng, n_checks=20):
    """Central differences of `loss()` w.r.t. random entries of `value`."""
    flat = value.reshape(-1)
    expected = np.asarray(analytic).reshape(-1)
    for idx in rng.choice(flat.size, size=min(n_checks, flat.size)):
        original = flat[idx]
        flat[idx] = original + FD_STEP
        upper = loss()
        flat[idx] = original - FD_STEP
        lower = loss()
        flat[idx] = original
        numeric = (upper - lower) / (2 * FD_STEP)
        scale = max(abs(numeric), abs(expected[idx]))
        assert abs(numeric - expected[idx]) <= 1e-4 * scale + 1e-7, (
            idx,
            numeric,
            expected[idx],
        )


def cosine_similarity(first, second) -> np.ndarray:
    dots = np.einsum("ij,ij->i", first, second)
    norms = np.linalg.norm(first, axis=1) * np.linalg.norm(second, axis=1)
    return dots / np.maximum(norms, 1e-300)


GOLDEN_DIR = Path(__file__).parent / "golden"


def array_digest(array) -> str:
    """sha256 over the shape and the little-endian float64 bytes."""
    values = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    digest = hashlib.sha256(repr(values.shape).encode())
    digest.update(values.tobytes())
    return digest.hexdigest()


@pytest.fixture
def golden():
    """
    Compares a digest with the one frozen in tests/golden/<name>.sha256.
    A missing file is recorded from the current run and the test skips;
    commit the new file to freeze it.
    """

    def check(name: str, digest: str) -> None:
        path = GOLDEN_DIR / f"{name}.sha256"
        if not path.exists():
            GOLDEN_DIR.mkdir(exist_ok=True)
            path.write_text(digest + "\n")
            pytest.skip(f"recorded golden digest {path.name}")
        assert digest == path.read_text().strip(), name

    return check
