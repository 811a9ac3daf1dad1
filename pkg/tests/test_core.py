import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shape_gradient_fields.core import (
    ArrayField,
    BBoxTransform,
    NoiseSchedule,
    PointCloud,
    default_schedule,
    normalize_eval,
    normalize_unit_cube,
)
from shape_gradient_fields.exceptions import DataError

coordinates = st.integers(-10**6, 10**6).map(lambda i: i / 1000)
clouds = st.integers(2, 3).flatmap(
    lambda dim: arrays(
        np.float64,
        st.tuples(st.integers(1, 30), st.just(dim)),
        elements=coordinates,
    )
)


class TestPointCloud:
    def test_single_vector_becomes_one_point(self):
        cloud = PointCloud([0.5, 1.0])
        assert len(cloud) == 1
        assert cloud.dim == 2

    @pytest.mark.parametrize(
        "points",
        [np.empty((0, 2)), np.zeros((3, 4)), np.zeros((3, 1))],
    )
    def test_rejects_bad_shapes(self, points):
        with pytest.raises(ValueError):
            PointCloud(points)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            PointCloud([[0.0, np.nan], [1.0, 1.0]])

    def test_points_are_read_only(self):
        cloud = PointCloud(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 1.0

    def test_copies_input(self):
        source = np.zeros((2, 2))
        cloud = PointCloud(source)
        source[0, 0] = 5.0
        assert cloud.points[0, 0] == 0.0


class TestNoiseSchedule:
    def test_rejects_increasing_levels(self):
        with pytest.raises(ValueError, match="non-increasing"):
            NoiseSchedule.from_sigmas([0.1, 1.0])

    def test_rejects_weight_count_mismatch(self):
        with pytest.raises(ValueError):
            NoiseSchedule(sigmas=(1.0, 0.1), weights=(1.0,))

    @pytest.mark.parametrize("sigmas", [[], [1.0, 0.0], [1.0, -0.5]])
    def test_rejects_empty_or_non_positive(self, sigmas):
        with pytest.raises(ValueError):
            NoiseSchedule.from_sigmas(sigmas)

    def test_equal_levels_are_allowed(self):
        schedule = NoiseSchedule.from_sigmas([0.5, 0.5])
        assert schedule.sigma_max == schedule.sigma_min == 0.5

    def test_to_dict_round_trips_through_text(self):
        schedule = default_schedule(4)
        values = schedule.to_dict()
        sigmas = [float(s) for s in values["sigmas"].split(",")]
        assert tuple(sigmas) == schedule.sigmas


class TestDefaultSchedule:
    def test_ten_levels_from_one_to_a_hundredth(self):
        schedule = default_schedule(10, sigma_max=1.0, sigma_min=0.01)
        expected = 10.0 ** (-2 * np.arange(10) / 9)
        np.testing.assert_allclose(schedule.sigmas, expected, rtol=1e-12)
        np.testing.assert_allclose(
            schedule.weights, expected**2, rtol=1e-12
        )

    def test_single_level(self):
        schedule = default_schedule(1, sigma_max=0.1, sigma_min=0.1)
        assert schedule.sigmas == (0.1,)
        assert schedule.weights[0] == pytest.approx(0.01)

    def test_three_levels_have_geometric_midpoint(self):
        schedule = default_schedule(3, sigma_max=1.0, sigma_min=0.01)
        np.testing.assert_allclose(schedule.sigmas, [1.0, 0.1, 0.01])

    def test_zero_levels_raise(self):
        with pytest.raises(ValueError):
            default_schedule(0)

    def test_inverted_range_raises(self):
        with pytest.raises(ValueError):
            default_schedule(3, sigma_max=0.01, sigma_min=1.0)


class TestNormalizeUnitCube:
    def test_bbox_arithmetic(self):
        cloud, transform = normalize_unit_cube(PointCloud([[0, 0], [2, 4]]))
        np.testing.assert_allclose(cloud.points, [[-0.5, -1], [0.5, 1]])
        np.testing.assert_allclose(transform.center, [1, 2])
        assert transform.scale == pytest.approx(0.5)

    def test_unit_box_is_unchanged(self):
        points = [[-1.0, -1.0], [1.0, 1.0]]
        cloud, transform = normalize_unit_cube(PointCloud(points))
        np.testing.assert_allclose(cloud.points, points)
        assert transform.scale == 1.0

    def test_single_point_is_centered_with_unit_scale(self):
        cloud, transform = normalize_unit_cube(PointCloud([[3.0, 7.0]]))
        np.testing.assert_array_equal(cloud.points, [[0.0, 0.0]])
        assert transform.scale == 1.0

    @settings(max_examples=50, deadline=None)
    @given(clouds)
    def test_round_trip_and_bounds(self, points):
        cloud = PointCloud(points)
        normalized, transform = normalize_unit_cube(cloud)
        assert np.all(np.abs(normalized.points) <= 1 + 1e-12)
        restored = transform.invert(normalized.points)
        scale = max(1.0, float(np.abs(points).max()))
        np.testing.assert_allclose(restored, points, atol=1e-10 * scale)

    @settings(max_examples=50, deadline=None)
    @given(clouds)
    def test_idempotent(self, points):
        once, _ = normalize_unit_cube(PointCloud(points))
        twice, _ = normalize_unit_cube(once)
        np.testing.assert_allclose(twice.points, once.points, atol=1e-12)


class TestNormalizeEval:
    def test_longest_side_is_two(self):
        cloud = normalize_eval(PointCloud([[0, 0], [4, 1]]))
        np.testing.assert_allclose(cloud.points, [[-1, -0.25], [1, 0.25]])

    def test_idempotent_on_normalized_cloud(self):
        points = np.array([[-1.0, -0.25], [1.0, 0.25]])
        np.testing.assert_allclose(
            normalize_eval(PointCloud(points)).points, points
        )

    def test_uniform_scale_in_3d(self):
        points = np.array([[0, 0, 0], [2, 1, 0.5]], dtype=float)
        cloud = normalize_eval(PointCloud(points))
        lower, upper = cloud.bbox()
        np.testing.assert_allclose(upper - lower, [2.0, 1.0, 0.5])
        np.testing.assert_allclose(lower + upper, 0.0, atol=1e-15)

    def test_zero_extent_raises(self):
        with pytest.raises(DataError, match="zero-extent"):
            normalize_eval(PointCloud([[1.0, 1.0], [1.0, 1.0]]))


def test_bbox_transform_rejects_non_positive_scale():
    with pytest.raises(ValueError):
        BBoxTransform(center=[0.0, 0.0], scale=0.0)


def test_array_field_wraps_a_callable():
    field = ArrayField(lambda x, sigma: -x / sigma**2, dimension=2)
    np.testing.assert_allclose(field([1.0, 0.0], 0.5), [-4.0, 0.0])
    assert field.dim == 2
