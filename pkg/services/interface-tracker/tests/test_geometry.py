import math
import os
import sys
import unittest

import numpy as np

# Add src directory to path for importing modules
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from mars_tracker.errors import RankDeficiencyError
from mars_tracker.geometry import (barycentric_2d, fit_plane, fold_cosine, incircle, orient2d, plane_through,
                                   point_segment_distance, signed_area_2d, triangle_angles, triangle_normals)


class TestTriangleMeasures(unittest.TestCase):
    """Test cases for vectorized triangle measures"""

    def test_equilateral_angles(self):
        """All angles of an equilateral triangle are pi/3"""
        points = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
        angles = triangle_angles(points, np.array([[0, 1, 2]]))
        np.testing.assert_allclose(angles, [[math.pi / 3] * 3], atol=1e-14)

    def test_right_triangle_angles(self):
        """Angles are reported per corner"""
        points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        angles = triangle_angles(points, np.array([[0, 1, 2]]))[0]
        np.testing.assert_allclose(angles, [math.pi / 2, math.pi / 4, math.pi / 4], atol=1e-14)

    def test_empty_triangle_list(self):
        """No triangles gives an empty (0, 3) array"""
        self.assertEqual(triangle_angles(np.zeros((3, 3)), np.zeros((0, 3))).shape, (0, 3))

    def test_normals_follow_orientation(self):
        """Counter-clockwise triangles in the xy-plane point up"""
        points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        normals = triangle_normals(points, np.array([[0, 1, 2], [0, 2, 1]]))
        np.testing.assert_allclose(normals, [[0, 0, 1], [0, 0, -1]])

    def test_point_segment_distance(self):
        """Distance uses the segment, not the line"""
        distances = point_segment_distance(np.array([0.0, 1.0, 0.0]),
                                           np.array([[-1.0, 0, 0], [2.0, 0, 0]]),
                                           np.array([[1.0, 0, 0], [3.0, 0, 0]]))
        np.testing.assert_allclose(distances, [1.0, math.sqrt(5.0)])

    def test_barycentric_coordinates(self):
        """Coordinates sum to one and are NaN for degenerate triangles"""
        triangles = np.array([[[0, 0], [1, 0], [0, 1]], [[0, 0], [1, 1], [2, 2]]], dtype=float)
        coords = barycentric_2d(np.array([0.25, 0.25]), triangles)
        np.testing.assert_allclose(coords[0], [0.5, 0.25, 0.25])
        self.assertTrue(np.all(np.isnan(coords[1])))

    def test_signed_area(self):
        """Shoelace area is positive counter-clockwise"""
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        self.assertAlmostEqual(signed_area_2d(square), 1.0)
        self.assertAlmostEqual(signed_area_2d(square[::-1]), -1.0)


class TestFitPlane(unittest.TestCase):
    """Test cases for the least-squares plane fit"""

    def test_recovers_tilted_plane(self):
        """Points on z = 0.5x + 0.25y + 1 give back the coefficients"""
        xs, ys = np.meshgrid(np.linspace(0, 1, 3), np.linspace(0, 1, 3))
        points = np.column_stack([xs.ravel(), ys.ravel(), 0.5 * xs.ravel() + 0.25 * ys.ravel() + 1.0])
        plane = fit_plane(points)
        self.assertEqual(plane.dropped_axis, 2)
        np.testing.assert_allclose(plane.coefficients, (0.5, 0.25, 1.0), atol=1e-12)
        np.testing.assert_allclose(plane.signed_distance(points), 0.0, atol=1e-12)

    def test_vertical_plane_drops_x(self):
        """A plane x = const is fitted over (y, z)"""
        ys, zs = np.meshgrid(np.linspace(0, 1, 3), np.linspace(0, 1, 3))
        points = np.column_stack([np.full(9, 0.3), ys.ravel(), zs.ravel()])
        plane = fit_plane(points)
        self.assertEqual(plane.dropped_axis, 0)
        np.testing.assert_allclose(plane.coefficients, (0.0, 0.0, 0.3), atol=1e-12)

    def test_tie_prefers_z(self):
        """Equal spans drop the z axis"""
        points = np.array([[0, 0, 0], [1, 0, 1], [0, 1, 1], [1, 1, 0]], dtype=float)
        self.assertEqual(fit_plane(points).dropped_axis, 2)

    def test_rank_deficient_inputs(self):
        """Collinear points and too few points are rejected"""
        with self.assertRaises(RankDeficiencyError):
            fit_plane(np.array([[0, 0, 0], [1, 1, 0], [2, 2, 0]], dtype=float))
        with self.assertRaises(RankDeficiencyError):
            fit_plane(np.array([[0, 0, 0], [1, 0, 0]], dtype=float))

    def test_plane_coordinates_round_trip(self):
        """from_plane inverts to_plane for points on the plane"""
        rng = np.random.default_rng(3)
        xy = rng.uniform(0, 1, size=(10, 2))
        points = np.column_stack([xy, 0.2 * xy[:, 0] - 0.3 * xy[:, 1] + 0.1])
        plane = fit_plane(points)
        np.testing.assert_allclose(plane.from_plane(plane.to_plane(points)), points, atol=1e-12)

    def test_projection_removes_normal_offset(self):
        """Projecting an offset point lands back on the plane"""
        points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        plane = fit_plane(points)
        projected = plane.project(np.array([0.3, 0.4, 2.0]))
        np.testing.assert_allclose(projected, [0.3, 0.4, 0.0], atol=1e-12)

    def test_plane_through_point_and_normal(self):
        """The plane contains the point and is normal to the given direction"""
        normal = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
        plane = plane_through(np.array([1.0, 2.0, 3.0]), normal)
        self.assertAlmostEqual(float(plane.signed_distance(np.array([1.0, 2.0, 3.0]))), 0.0, places=12)
        self.assertAlmostEqual(abs(float(plane.normal @ normal)), 1.0, places=12)

    def test_plane_through_flips_to_dropped_axis(self):
        """A downward normal gives the same horizontal plane"""
        plane = plane_through(np.array([0.0, 0.0, 2.0]), np.array([0.0, 0.0, -1.0]))
        self.assertEqual(plane.dropped_axis, 2)
        np.testing.assert_allclose(plane.coefficients, (0.0, 0.0, 2.0), atol=1e-15)
        with self.assertRaises(RankDeficiencyError):
            plane_through(np.zeros(3), np.zeros(3))


class TestFoldCosine(unittest.TestCase):
    """Test cases for fold_cosine"""

    POINTS = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, -1], [0.5, -1, 0]], dtype=float)

    def test_right_angle_fold(self):
        """Two triangles meeting at 90 degrees have cosine 0"""
        self.assertAlmostEqual(fold_cosine(self.POINTS, [[0, 1, 2], [1, 0, 3]]), 0.0, places=12)

    def test_flat_pair(self):
        """Coplanar neighbours have cosine 1"""
        self.assertAlmostEqual(fold_cosine(self.POINTS, [[0, 1, 2], [1, 0, 4]]), 1.0, places=12)

    def test_no_shared_edge(self):
        """Triangles touching at a vertex only are not compared"""
        self.assertEqual(fold_cosine(self.POINTS, [[0, 1, 2], [0, 3, 4]]), 1.0)


class TestPredicates(unittest.TestCase):
    """Test cases for the orientation and incircle predicates"""

    def test_orient2d_signs(self):
        """Counter-clockwise, clockwise and collinear triples"""
        self.assertEqual(orient2d((0, 0), (1, 0), (0, 1)), 1)
        self.assertEqual(orient2d((0, 0), (0, 1), (1, 0)), -1)
        self.assertEqual(orient2d((0, 0), (1, 1), (2, 2)), 0)

    def test_orient2d_exact_on_near_collinear(self):
        """Large collinear coordinates are detected exactly"""
        self.assertEqual(orient2d((0.5, 0.5), (12.0, 12.0), (24.0, 24.0)), 0)
        self.assertEqual(orient2d((1e15, 1e15), (1e15 + 1, 1e15 + 1), (1e15 + 2, 1e15 + 2)), 0)

    def test_incircle_signs(self):
        """Inside, outside and on the unit circle"""
        a, b, c = (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)
        self.assertEqual(incircle(a, b, c, (0.0, 0.0)), 1)
        self.assertEqual(incircle(a, b, c, (2.0, 0.0)), -1)
        self.assertEqual(incircle(a, b, c, (0.0, -1.0)), 0)


if __name__ == '__main__':
    unittest.main()
