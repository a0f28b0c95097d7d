import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daccsr.geometry import (BoundingBox, DegenerateShapeError, GrayImage, InvalidBoxError,
                             Shape, apply_bbox_delta, place_mean_shape, shape_to_bbox)


def shape_of(*pts):
    return Shape(np.asarray(pts, dtype=float).ravel())


class TestShape:
    def test_landmark_count(self):
        s = shape_of((0, 0), (2, 0), (1, 3))
        assert s.n_landmarks == 3

    def test_rejects_odd_length(self):
        with pytest.raises(ValueError):
            Shape(np.arange(7, dtype=float))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            shape_of((0, 0), (np.nan, 1), (2, 2))

    def test_points_are_immutable(self):
        s = shape_of((0, 0), (2, 0), (1, 3))
        with pytest.raises(ValueError):
            s.points[0] = 5.0


class TestBoundingBox:
    def test_rejects_inverted(self):
        with pytest.raises(InvalidBoxError):
            BoundingBox(0, 0, -1, 1)

    def test_rejects_zero_area(self):
        with pytest.raises(InvalidBoxError):
            BoundingBox(0, 0, 0, 1)

    def test_dimensions(self):
        b = BoundingBox(1, 2, 4, 8)
        assert b.width == 3 and b.height == 6


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GrayImage(np.full((4, 4), 1.5))

    def test_shape_accessors(self):
        img = GrayImage(np.zeros((3, 5)))
        assert img.height == 3 and img.width == 5


class TestShapeToBbox:
    def test_tight_bounds(self):
        assert shape_to_bbox(shape_of((0, 0), (2, 0), (1, 3))) == BoundingBox(0, 0, 2, 3)

    def test_tight_bounds_offset(self):
        assert shape_to_bbox(shape_of((5, 5), (5, 9), (8, 5))) == BoundingBox(5, 5, 8, 9)

    def test_rejects_coincident_points(self):
        with pytest.raises(DegenerateShapeError):
            shape_to_bbox(shape_of((1, 1), (1, 1), (1, 1)))

    def test_rejects_vertical_line(self):
        with pytest.raises(DegenerateShapeError):
            shape_to_bbox(shape_of((1, 0), (1, 5), (1, 9)))


class TestPlaceMeanShape:
    def test_bounds_match_target_box(self):
        mean = shape_of((0, 0), (1, 0), (0.3, 1))
        box = BoundingBox(10, 20, 30, 60)
        placed = place_mean_shape(mean, box)
        assert shape_to_bbox(placed) == box

    def test_identity_when_box_equals_bounds(self):
        mean = shape_of((0, 0), (1, 0), (0.3, 1))
        placed = place_mean_shape(mean, shape_to_bbox(mean))
        np.testing.assert_allclose(placed.points, mean.points, atol=1e-12)

    def test_anisotropic_scaling(self):
        mean = shape_of((0, 0), (1, 0), (0, 2))
        placed = place_mean_shape(mean, BoundingBox(0, 0, 2, 2))
        np.testing.assert_allclose(placed.points, [0, 0, 2, 0, 0, 2], atol=1e-12)

    def test_rejects_degenerate_mean(self):
        with pytest.raises(DegenerateShapeError):
            place_mean_shape(shape_of((0, 0), (1, 0), (2, 0)), BoundingBox(0, 0, 1, 1))


class TestApplyBboxDelta:
    def test_componentwise_add(self):
        out = apply_bbox_delta(BoundingBox(0, 0, 10, 10), np.array([1, 1, -1, -1.0]))
        assert out == BoundingBox(1, 1, 9, 9)

    def test_zero_delta_identity(self):
        b = BoundingBox(2, 3, 5, 7)
        assert apply_bbox_delta(b, np.zeros(4)) == b

    def test_inversion_raises(self):
        with pytest.raises(InvalidBoxError):
            apply_bbox_delta(BoundingBox(0, 0, 2, 2), np.array([0, 0, -3, 0.0]))


finite_coord = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@st.composite
def nondegenerate_shapes(draw):
    n = draw(st.integers(min_value=3, max_value=8))
    pts = draw(st.lists(st.tuples(finite_coord, finite_coord), min_size=n, max_size=n))
    arr = np.asarray(pts, dtype=float)
    # force a strictly positive extent on both axes
    arr[0] = (arr[0, 0] - 1.0, arr[0, 1] - 1.0)
    arr[1] = (arr[0, 0] + 2.0, arr[0, 1] + 2.0)
    return Shape(arr.ravel())


@st.composite
def boxes(draw):
    x1 = draw(st.floats(min_value=-1e5, max_value=1e5, allow_nan=False))
    y1 = draw(st.floats(min_value=-1e5, max_value=1e5, allow_nan=False))
    w = draw(st.floats(min_value=1e-3, max_value=1e5, allow_nan=False))
    h = draw(st.floats(min_value=1e-3, max_value=1e5, allow_nan=False))
    return BoundingBox(x1, y1, x1 + w, y1 + h)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(nondegenerate_shapes())
    def test_placing_into_own_bounds_is_identity(self, shape):
        placed = place_mean_shape(shape, shape_to_bbox(shape))
        np.testing.assert_allclose(placed.points, shape.points, atol=1e-9 * max(
            1.0, np.abs(shape.points).max()))

    @settings(max_examples=100, deadline=None)
    @given(boxes())
    def test_zero_delta_is_identity(self, box):
        assert apply_bbox_delta(box, np.zeros(4)) == box

    @settings(max_examples=100, deadline=None)
    @given(nondegenerate_shapes(),
           st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
           st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
    def test_bbox_translation_equivariance(self, shape, dx, dy):
        moved = np.array(shape.points)
        moved[0::2] += dx
        moved[1::2] += dy
        b0 = shape_to_bbox(shape)
        b1 = shape_to_bbox(Shape(moved))
        np.testing.assert_allclose(
            [b1.x1 - b0.x1, b1.y1 - b0.y1, b1.x2 - b0.x2, b1.y2 - b0.y2],
            [dx, dy, dx, dy], atol=1e-6)
