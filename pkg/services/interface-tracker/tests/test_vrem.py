import dataclasses
import math
import os
import sys
import unittest
from unittest.mock import patch

import numpy as np

# Add src directory to path for importing modules
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))
sys.path.append(os.path.dirname(__file__))

from mars_tracker.errors import MeshError
from mars_tracker.mesh_core import RegularityParams, TriMesh, check_regularity
from mars_tracker.mesh_io import gen_sphere
from mars_tracker.vrem import (LineSearchParams, LocalProjector, SpringSystem, _project_all, energy_gradient,
                               local_projection, resting_length, spring_force, total_energy, vrem_iterate, vrem_run)
from mesh_fixtures import hex_fan, offset_hex_fan


class TestSprings(unittest.TestCase):
    """Test cases for the spring model"""

    def test_spring_force(self):
        """A stretched spring pulls p_i toward p_j"""
        force = spring_force(np.zeros(3), np.array([2.0, 0, 0]), 1.0)
        np.testing.assert_allclose(force, [1.0, 0, 0])

    def test_coincident_endpoints_raise(self):
        """A spring of zero length has no direction"""
        with self.assertRaises(MeshError):
            spring_force(np.ones(3), np.ones(3), 1.0)
        mesh = hex_fan()
        mesh.vertices[0] = mesh.vertices[1]
        with self.assertRaises(MeshError):
            energy_gradient(mesh, SpringSystem.from_mesh(mesh))

    def test_resting_length_modes(self):
        """Interior mode averages spokes only, all mode every edge"""
        mesh = offset_hex_fan()
        spokes = np.linalg.norm(mesh.vertices[1:] - mesh.vertices[0], axis=1)
        self.assertAlmostEqual(resting_length(mesh), float(spokes.mean()))
        self.assertAlmostEqual(resting_length(mesh, 'all'), float((spokes.sum() + 6.0) / 12.0))

    def test_resting_length_errors(self):
        """No interior edges, or an unknown mode"""
        triangle = TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
        with self.assertRaises(MeshError):
            resting_length(triangle)
        with self.assertRaises(ValueError):
            resting_length(hex_fan(), 'median')

    def test_line_search_validation(self):
        """Armijo constants outside (0, 1) are rejected"""
        with self.assertRaises(ValueError):
            LineSearchParams(c=0.0)
        with self.assertRaises(ValueError):
            LineSearchParams(rho=1.0)

    def test_gradient_matches_finite_differences(self):
        """Energy gradient agrees with central differences on random patches"""
        rng = np.random.default_rng(11)
        eps = 1e-6
        for _ in range(50):
            mesh = hex_fan()
            mesh.vertices += rng.uniform(-0.2, 0.2, size=mesh.vertices.shape)
            system = SpringSystem.from_mesh(mesh)
            gradient = energy_gradient(mesh, system)[0]
            numeric = np.zeros(3)
            for axis in range(3):
                plus = mesh.vertices.copy()
                minus = mesh.vertices.copy()
                plus[0, axis] += eps
                minus[0, axis] -= eps
                numeric[axis] = (total_energy(mesh, system, plus) - total_energy(mesh, system, minus)) / (2 * eps)
            np.testing.assert_allclose(gradient, numeric, rtol=1e-6, atol=1e-8)

    def test_gradient_with_many_free_vertices(self):
        """Every free vertex of a perturbed closed sphere matches central differences"""
        rng = np.random.default_rng(5)
        eps = 1e-6
        mesh = gen_sphere((0.0, 0.0, 0.0), 1.0, subdivisions=1)
        mesh.vertices += rng.uniform(-0.05, 0.05, size=mesh.vertices.shape)
        system = SpringSystem.from_mesh(mesh)
        self.assertEqual(len(system.free_vertices), 42)
        gradient = energy_gradient(mesh, system)
        numeric = np.zeros_like(gradient)
        for row, v in enumerate(system.free_vertices):
            for axis in range(3):
                plus = mesh.vertices.copy()
                minus = mesh.vertices.copy()
                plus[v, axis] += eps
                minus[v, axis] -= eps
                numeric[row, axis] = (total_energy(mesh, system, plus) - total_energy(mesh, system, minus)) / (2 * eps)
        np.testing.assert_allclose(gradient, numeric, rtol=1e-6, atol=1e-8)


class TestLocalProjection(unittest.TestCase):
    """Test cases for the local projection onto a vertex star"""

    def test_project_onto_planar_star(self):
        """A point above the plane drops onto it"""
        mesh = hex_fan()
        np.testing.assert_allclose(local_projection(mesh, 0, [0.2, 0.1, 0.5]), [0.2, 0.1, 0.0], atol=1e-12)

    def test_point_outside_neighborhood(self):
        """Points beyond the link are not projected"""
        self.assertIsNone(local_projection(hex_fan(), 0, [2.0, 0.0, 0.0]))

    def test_projection_is_idempotent(self):
        """Projecting a projected point leaves it in place on a curved star"""
        mesh = hex_fan((0.0, 0.0, 0.3))
        for q in ([0.2, 0.1, 0.5], [-0.4, 0.3, -0.2], [0.05, -0.6, 0.0]):
            once = local_projection(mesh, 0, q)
            self.assertIsNotNone(once)
            np.testing.assert_allclose(local_projection(mesh, 0, once), once, atol=1e-12)

    def test_link_distance(self):
        """The center of a unit hexagon is sqrt(3)/2 from its link"""
        mesh = hex_fan()
        projector = LocalProjector(mesh, 0)
        self.assertAlmostEqual(projector.link_distance(mesh.vertices), math.sqrt(3) / 2)


class TestRelocation(unittest.TestCase):
    """Test cases for vrem_iterate and vrem_run"""

    def test_energy_is_non_increasing(self):
        """Accepted iterations never raise the energy"""
        mesh = offset_hex_fan()
        system = SpringSystem.from_mesh(mesh)
        energies = [total_energy(mesh, system)]
        energies += [state.energy for state in vrem_iterate(mesh, system, 50)]
        self.assertGreater(len(energies), 1)
        for previous, current in zip(energies, energies[1:]):
            self.assertLessEqual(current, previous)

    def test_iterate_does_not_modify_mesh(self):
        """Positions come back in the states only"""
        mesh = offset_hex_fan()
        before = mesh.vertices.copy()
        list(vrem_iterate(mesh, SpringSystem.from_mesh(mesh), 5))
        np.testing.assert_array_equal(mesh.vertices, before)

    def test_gradient_vanishes_on_smooth_patch(self):
        """The gradient drops below 1e-8 of its initial value within 500 iterations"""
        mesh = hex_fan((0.3, 0.2, 0.0))
        system = dataclasses.replace(SpringSystem.from_mesh(mesh), resting_length=1.0)
        initial = float(np.linalg.norm(energy_gradient(mesh, system)))
        line_search = LineSearchParams(max_backtracks=200)
        reached = False
        for state in vrem_iterate(mesh, system, 500, line_search):
            if state.gradient_norm < 1e-8 * initial:
                reached = True
                break
        self.assertTrue(reached)

    def test_run_fixes_offset_center(self):
        """Relocating the center of the offset fan makes it regular"""
        mesh = offset_hex_fan()
        params = RegularityParams(h_l=2.0)
        self.assertFalse(check_regularity(mesh, params).is_regular)
        outcome = vrem_run(mesh, 0, params)
        self.assertTrue(outcome.success)
        self.assertEqual(outcome.rounds, 1)
        self.assertTrue(check_regularity(mesh, params).is_regular)
        self.assertLess(mesh.vertices[0, 0], 0.75)
        self.assertAlmostEqual(mesh.vertices[0, 2], 0.0, places=12)
        np.testing.assert_array_equal(mesh.vertices[1:], hex_fan().vertices[1:])

    def test_run_keeps_connectivity(self):
        """Relocation moves vertices only; triangles and edges are untouched"""
        mesh = offset_hex_fan()
        triangles = dict(mesh.triangles)
        edges = mesh.edge_array().tolist()
        self.assertTrue(vrem_run(mesh, 0, RegularityParams(h_l=2.0)).success)
        self.assertEqual(mesh.triangles, triangles)
        self.assertEqual(mesh.edge_array().tolist(), edges)
        self.assertEqual(mesh.euler_characteristic(), 1)

    def test_non_descent_trial_is_shortened(self):
        """An uphill first projection halves the step instead of stopping the descent"""
        mesh = offset_hex_fan()
        system = SpringSystem.from_mesh(mesh)
        current = mesh.vertices[system.free_vertices].copy()
        calls = []

        def uphill_once(projectors, targets):
            projected = _project_all(projectors, targets)
            calls.append(len(calls))
            if len(calls) == 1 and projected is not None:
                return 2 * current - projected
            return projected

        with patch('mars_tracker.vrem._project_all', side_effect=uphill_once):
            states = list(vrem_iterate(mesh, system, 1))
        self.assertEqual(len(states), 1)
        self.assertGreaterEqual(len(calls), 2)
        self.assertLess(states[0].energy, total_energy(mesh, system))

    def test_folding_relocation_is_undone(self):
        """A regular result that folds the surface is not accepted"""
        mesh = offset_hex_fan()
        before = mesh.vertices.copy()
        folds = iter([0.9] + [0.1] * 100)
        with patch('mars_tracker.vrem.surface_fold', side_effect=lambda *args: next(folds)):
            outcome = vrem_run(mesh, 0, RegularityParams(h_l=2.0), mu=1)
        self.assertFalse(outcome.success)
        self.assertGreater(outcome.iterations, 0)
        np.testing.assert_array_equal(mesh.vertices, before)

    def test_failed_run_restores_positions(self):
        """A run that cannot succeed leaves the mesh as it was"""
        mesh = offset_hex_fan()
        before = mesh.vertices.copy()
        outcome = vrem_run(mesh, 0, RegularityParams(h_l=0.5), mu=2, nu=3)
        self.assertFalse(outcome.success)
        np.testing.assert_array_equal(mesh.vertices, before)


if __name__ == '__main__':
    unittest.main()
