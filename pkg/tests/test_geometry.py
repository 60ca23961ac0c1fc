import math

import numpy as np
import pytest

from src.errors import ValidationError
from src.grid_model import apply_coordinates
from src.geometry import (
    BranchDistances,
    Segment,
    branch_distance,
    distance_matrix,
    paired_distances,
    point_segment_distance,
)

HORIZONTAL = Segment((0.0, 0.0), (10.0, 0.0))


@pytest.mark.parametrize("point,expected", [
    ((5.0, 4.0), 4.0),
    ((-3.0, 4.0), 5.0),
    ((13.0, -4.0), 5.0),
    ((7.0, 0.0), 0.0),
])
def test_point_segment_distance(point, expected):
    assert point_segment_distance(point, HORIZONTAL) == pytest.approx(expected)


def test_degenerate_segment():
    assert point_segment_distance((3.0, 4.0), Segment((0.0, 0.0), (0.0, 0.0))) == pytest.approx(5.0)


def test_parallel_segments():
    assert branch_distance(HORIZONTAL, Segment((0.0, 3.0), (10.0, 3.0))) == pytest.approx(3.0)


def test_shared_endpoint():
    assert branch_distance(HORIZONTAL, Segment((0.0, 0.0), (0.0, 10.0))) == pytest.approx(5.0)


def test_disjoint_perpendicular():
    other = Segment((20.0, 0.0), (20.0, 10.0))
    expected = (20.0 + 10.0 + 10.0 + math.hypot(10.0, 10.0)) / 4.0
    assert branch_distance(HORIZONTAL, other) == pytest.approx(expected)
    assert branch_distance(other, HORIZONTAL) == pytest.approx(expected)


def test_not_a_metric():
    # Three collinear segments laid end to end
    a = Segment((0.0, 0.0), (10.0, 0.0))
    c = Segment((10.0, 0.0), (20.0, 0.0))
    b = Segment((20.0, 0.0), (30.0, 0.0))
    assert branch_distance(a, b) == pytest.approx(15.0)
    assert branch_distance(a, c) + branch_distance(c, b) == pytest.approx(10.0)


def test_non_finite_segment_rejected():
    with pytest.raises(ValidationError):
        Segment((0.0, math.nan), (1.0, 1.0))


def test_parallel_circuits_coincide(stress_case):
    assert BranchDistances(stress_case)(11, 12) == 0.0


def test_matrix_agrees_with_scalar(stress_case):
    ids = list(stress_case.branch_ids)
    matrix = distance_matrix(stress_case, ids)
    distances = BranchDistances(stress_case)
    assert matrix.shape == (37, 37)
    np.testing.assert_allclose(matrix, matrix.T)
    np.testing.assert_allclose(np.diag(matrix), 0.0)
    np.testing.assert_allclose(matrix[:8, :8], distances.matrix(ids[:8]), atol=1e-9)
    assert matrix[10, 20] == pytest.approx(distances(11, 21))


def test_paired_distances(stress_case):
    a, b = [1, 11, 19, 2], [2, 12, 33, 2]
    distances = BranchDistances(stress_case)
    np.testing.assert_allclose(paired_distances(stress_case, a, b), [distances(x, y) for x, y in zip(a, b)], atol=1e-9)


def test_paired_distances_length_mismatch(stress_case):
    with pytest.raises(ValidationError):
        paired_distances(stress_case, [1, 2], [3])


def test_empty_matrix(stress_case):
    assert distance_matrix(stress_case, []).shape == (0, 0)


def test_offset_perpendicular_segments():
    u = Segment((0.0, 0.0), (2.0, 0.0))
    v = Segment((1.0, 1.0), (1.0, 2.0))
    expected = (1.0 + 2.0 + 2.0 * math.sqrt(2.0)) / 4.0
    assert branch_distance(u, v) == pytest.approx(expected, abs=1e-12)
    assert branch_distance(u, v) == pytest.approx(1.45711, abs=1e-5)


def test_identical_segments():
    assert branch_distance(HORIZONTAL, HORIZONTAL) == 0.0


def random_segments(rng, n):
    return [Segment(tuple(p), tuple(q)) for p, q in rng.uniform(-500.0, 500.0, size=(n, 2, 2))]


def test_symmetric_on_random_pairs():
    rng = np.random.default_rng(11)
    first, second = random_segments(rng, 10_000), random_segments(rng, 10_000)
    for u, v in zip(first, second):
        assert branch_distance(u, v) == pytest.approx(branch_distance(v, u), rel=1e-12, abs=1e-12)


def rigid_motion(point, angle, shift):
    c, s = math.cos(angle), math.sin(angle)
    return (c * point[0] - s * point[1] + shift[0], s * point[0] + c * point[1] + shift[1])


def test_invariant_under_rigid_motion():
    rng = np.random.default_rng(5)
    for u, v in zip(random_segments(rng, 500), random_segments(rng, 500)):
        angle, shift = rng.uniform(0.0, 2.0 * math.pi), rng.uniform(-1000.0, 1000.0, size=2)
        moved_u = Segment(rigid_motion(u.p1, angle, shift), rigid_motion(u.p2, angle, shift))
        moved_v = Segment(rigid_motion(v.p1, angle, shift), rigid_motion(v.p2, angle, shift))
        assert branch_distance(moved_u, moved_v) == pytest.approx(branch_distance(u, v), rel=1e-9, abs=1e-9)


def test_case_matrix_invariant_under_rigid_motion(stress_case):
    coords = {bus.id: rigid_motion((bus.x_km, bus.y_km), 0.7, (250.0, -90.0)) for bus in stress_case.buses}
    moved = apply_coordinates(stress_case, coords)
    ids = list(stress_case.branch_ids)
    np.testing.assert_allclose(distance_matrix(moved, ids), distance_matrix(stress_case, ids), rtol=1e-9, atol=1e-9)


def test_matrix_symmetric_with_random_coordinates(stress_case):
    rng = np.random.default_rng(3)
    coords = {bus.id: tuple(rng.uniform(0.0, 800.0, size=2)) for bus in stress_case.buses}
    case = apply_coordinates(stress_case, coords)
    matrix = distance_matrix(case, list(case.branch_ids))
    np.testing.assert_allclose(matrix, matrix.T, rtol=0, atol=1e-12)
    assert (np.diag(matrix) == 0.0).all()
    assert (matrix >= 0.0).all()
