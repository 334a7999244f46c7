import math
import os
import sys
import unittest
from unittest.mock import MagicMock, patch

import numpy as np

# Add src directory to path for importing modules
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))
sys.path.append(os.path.dirname(__file__))

from mars_tracker.ema import edge_flip, edge_split
from mars_tracker.errors import CascadeError, StepError
from mars_tracker.flows import make_field
from mars_tracker.ltr import ltr_run
from mars_tracker.mesh_core import CascadeTier, RegularityParams, TriMesh, check_regularity, surface_fold, validate
from mars_tracker.mesh_io import gen_sphere
from mars_tracker.metrics import CostLedger
from mars_tracker.stepper import (PreimageMap, StepConfig, augment_long_edges, collapse_short_edges, enforce_theta,
                                  remesh_static, simulate, step)
from mesh_fixtures import hex_fan, offset_hex_fan


def identity_map(points, t, k):
    return np.array(points, dtype=float)


def rotated_center(center, angle):
    """Image of center under rotation by angle about the vertical axis through (0.5, 0.5)."""
    x, y = center[0] - 0.5, center[1] - 0.5
    return np.array([0.5 + x * math.cos(angle) - y * math.sin(angle),
                     0.5 + x * math.sin(angle) + y * math.cos(angle), center[2]])


class TestStepConfig(unittest.TestCase):
    """Test cases for StepConfig validation"""

    def test_rejects_bad_values(self):
        """Non-positive step, zero caps and unknown rest length modes"""
        params = RegularityParams(h_l=1.0)
        with self.assertRaises(ValueError):
            StepConfig(params=params, time_step=0.0)
        with self.assertRaises(ValueError):
            StepConfig(params=params, time_step=0.1, mu=0)
        with self.assertRaises(ValueError):
            StepConfig(params=params, time_step=0.1, rest_length_mode='median')

    def test_full_cascade_flag(self):
        """Disabling either tier turns the full cascade off"""
        params = RegularityParams(h_l=1.0)
        self.assertTrue(StepConfig(params=params, time_step=0.1).full_cascade)
        self.assertFalse(StepConfig(params=params, time_step=0.1, enable_ltr=False).full_cascade)


class TestAugmentation(unittest.TestCase):
    """Test cases for augment_long_edges"""

    def test_splits_every_long_edge(self):
        """All unit edges are halved for h_L = 0.9"""
        mesh = hex_fan()
        preimages = PreimageMap(positions=mesh.vertices.copy(), time=0.0)
        params = RegularityParams(h_l=0.9)
        splits = augment_long_edges(preimages, mesh, identity_map, 0.0, 0.0, params)
        self.assertEqual(splits, 12)
        self.assertEqual(mesh.num_vertices, 19)
        self.assertEqual(len(preimages.positions), 19)
        self.assertEqual(check_regularity(mesh, params).long_edges, [])
        self.assertEqual(mesh.euler_characteristic(), 1)
        self.assertEqual(validate(mesh), [])

    def test_new_markers_are_advected_preimages(self):
        """New vertices sit at the image of the preimage midpoints"""
        mesh = hex_fan()
        preimages = PreimageMap(positions=mesh.vertices.copy(), time=0.0)

        def shift(points, t, k):
            return np.asarray(points) + np.array([0.0, 0.0, k])

        mesh.vertices = shift(mesh.vertices, 0.0, 0.5)
        augment_long_edges(preimages, mesh, shift, 0.0, 0.5, RegularityParams(h_l=0.9))
        np.testing.assert_allclose(mesh.vertices[7:, 2], 0.5)
        np.testing.assert_allclose(preimages.positions[7:, 2], 0.0)

    def test_sweep_cap(self):
        """Too few sweeps leave long edges and raise StepError"""
        mesh = hex_fan()
        preimages = PreimageMap(positions=mesh.vertices.copy(), time=0.0)
        with self.assertRaises(StepError):
            augment_long_edges(preimages, mesh, identity_map, 0.0, 0.0, RegularityParams(h_l=0.3), max_sweeps=1)


class TestCollapse(unittest.TestCase):
    """Test cases for collapse_short_edges"""

    def test_tiny_edge_is_collapsed(self):
        """A vertex 0.02 from the center is merged back"""
        mesh = hex_fan()
        edge_split(mesh, 0, 1, 2, new_positions=[[0.02, 0.0, 0.0]])
        self.assertEqual(mesh.num_triangles, 8)
        stuck = collapse_short_edges(mesh, RegularityParams(h_l=1.0))
        self.assertEqual(stuck, [])
        self.assertEqual(mesh.num_vertices, 7)
        self.assertEqual(mesh.num_triangles, 6)
        self.assertEqual(validate(mesh), [])

    def test_regular_mesh_untouched(self):
        """No short edges, nothing collapsed"""
        mesh = hex_fan()
        self.assertEqual(collapse_short_edges(mesh, RegularityParams(h_l=1.0)), [])
        self.assertEqual(mesh.num_triangles, 6)


class TestEnforceTheta(unittest.TestCase):
    """Test cases for the flip -> relocation -> regeneration cascade"""

    def config(self, **kwargs):
        return StepConfig(params=RegularityParams(h_l=2.0), time_step=0.01, **kwargs)

    def test_relocation_resolves_offset_fan(self):
        """The flip is refused and relocation fixes both thin triangles"""
        mesh = offset_hex_fan()
        ledger = CostLedger()
        resolutions = enforce_theta(mesh, self.config(), ledger=ledger)
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.VREM])
        self.assertEqual(ledger.counts['VREM'], 1)
        self.assertTrue(check_regularity(mesh, self.config().params).is_regular)

    def test_regeneration_when_relocation_disabled(self):
        """Without relocation the patch is regenerated"""
        mesh = offset_hex_fan()
        resolutions = enforce_theta(mesh, self.config(enable_vrem=False))
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.LTR])
        self.assertTrue(check_regularity(mesh, self.config().params).is_regular)
        self.assertEqual(validate(mesh), [])

    def test_flip_only_leaves_violations(self):
        """With both later tiers off the thin triangles are recorded as unresolved"""
        mesh = offset_hex_fan()
        ledger = CostLedger()
        with self.assertLogs('mars_tracker.stepper', level='WARNING'):
            resolutions = enforce_theta(mesh, self.config(enable_vrem=False, enable_ltr=False), ledger=ledger)
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.UNRESOLVED] * 2)
        self.assertEqual(ledger.counts['UNRESOLVED'], 2)

    def test_cascade_failure_raises(self):
        """Every tier failing under the full cascade raises CascadeError with the patch"""
        mesh = offset_hex_fan()
        failed = MagicMock(success=False)
        with patch('mars_tracker.stepper.vrem_run', return_value=failed), \
                patch('mars_tracker.stepper.ltr_run', return_value=failed):
            with self.assertRaises(CascadeError) as context:
                enforce_theta(mesh, self.config())
        self.assertEqual(context.exception.triangle, 0)
        self.assertIsNotNone(context.exception.patch)
        self.assertEqual(context.exception.patch.num_triangles, 6)

    def test_flip_fixable_pair_uses_edge_flip_only(self):
        """A thin pair is fixed by the flip; relocation and regeneration are never called"""
        mesh = TriMesh([(0, 0, 0), (2, 0, 0), (1, 0.2, 0), (1, -0.2, 0)], [(0, 1, 2), (1, 0, 3)])
        config = StepConfig(params=RegularityParams(h_l=2.5), time_step=0.01)
        with patch('mars_tracker.stepper.vrem_run') as relocate, patch('mars_tracker.stepper.ltr_run') as regenerate:
            resolutions = enforce_theta(mesh, config)
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.EMA])
        relocate.assert_not_called()
        regenerate.assert_not_called()
        self.assertTrue(mesh.has_edge(2, 3))
        self.assertTrue(check_regularity(mesh, config.params).is_regular)

    def test_tiers_run_in_order(self):
        """A refused flip falls through to relocation, then regeneration"""
        mesh = offset_hex_fan()
        order = []

        def flip(*args, **kwargs):
            order.append(CascadeTier.EMA)
            return edge_flip(*args, **kwargs)

        def relocate(*args, **kwargs):
            order.append(CascadeTier.VREM)
            return MagicMock(success=False)

        def regenerate(*args, **kwargs):
            order.append(CascadeTier.LTR)
            return ltr_run(*args, **kwargs)

        with patch('mars_tracker.stepper.edge_flip', side_effect=flip), \
                patch('mars_tracker.stepper.vrem_run', side_effect=relocate), \
                patch('mars_tracker.stepper.ltr_run', side_effect=regenerate):
            resolutions = enforce_theta(mesh, self.config())
        self.assertEqual(order[:3], [CascadeTier.EMA, CascadeTier.VREM, CascadeTier.LTR])
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.LTR])
        self.assertTrue(check_regularity(mesh, self.config().params).is_regular)

    def test_failure_is_retried_after_the_queue_drains(self):
        """A triangle no tier fixed on its first turn does not abort the step if a later fix covers it"""
        mesh = offset_hex_fan()
        attempts = []

        def regenerate_second_time(*args, **kwargs):
            attempts.append(args[1])
            if len(attempts) == 1:
                return MagicMock(success=False)
            return ltr_run(*args, **kwargs)

        with patch('mars_tracker.stepper.vrem_run', return_value=MagicMock(success=False)), \
                patch('mars_tracker.stepper.ltr_run', side_effect=regenerate_second_time):
            resolutions = enforce_theta(mesh, self.config())
        self.assertEqual([r.tier for r in resolutions], [CascadeTier.LTR])
        self.assertEqual(len(attempts), 2)
        self.assertTrue(check_regularity(mesh, self.config().params).is_regular)
        self.assertEqual(validate(mesh), [])

    def test_regular_mesh_needs_nothing(self):
        """No violations, no resolutions"""
        self.assertEqual(enforce_theta(hex_fan(), self.config()), [])


class TestStep(unittest.TestCase):
    """Test cases for step, simulate and remesh_static"""

    CENTER = (0.5, 0.75, 0.5)
    RADIUS = 0.15

    def rotation_config(self):
        return StepConfig(params=RegularityParams(h_l=0.1), time_step=0.01)

    def test_identity_map_keeps_mesh(self):
        """A regular sphere under the identity map comes back unchanged"""
        mesh = gen_sphere((0.0, 0.0, 0.0), 1.0, subdivisions=1)
        config = StepConfig(params=RegularityParams(h_l=0.7), time_step=0.01)
        moved, report = step(mesh, identity_map, 0.0, config, step_index=1)
        self.assertEqual((moved.num_vertices, moved.num_triangles), (42, 80))
        np.testing.assert_array_equal(moved.vertices, mesh.vertices)
        self.assertTrue(report.is_regular)
        self.assertEqual(report.resolutions, [])
        self.assertEqual(report.step, 1)
        self.assertAlmostEqual(report.time, 0.01)

    def test_zero_step_and_negative_step(self):
        """k = 0 is allowed, k < 0 is not"""
        mesh = gen_sphere((0.0, 0.0, 0.0), 1.0, subdivisions=1)
        config = StepConfig(params=RegularityParams(h_l=0.7), time_step=0.01)
        moved, _ = step(mesh, make_field('rigid_rotation'), 0.0, config, k=0.0)
        np.testing.assert_array_equal(moved.vertices, mesh.vertices)
        with self.assertRaises(ValueError):
            step(mesh, make_field('rigid_rotation'), 0.0, config, k=-0.01)

    def test_rigid_rotation_step(self):
        """Markers stay on the rotated sphere and the input mesh is not modified"""
        mesh = gen_sphere(self.CENTER, self.RADIUS, subdivisions=2)
        before = mesh.vertices.copy()
        moved, report = step(mesh, make_field('rigid_rotation'), 0.0, self.rotation_config())
        np.testing.assert_array_equal(mesh.vertices, before)
        center = rotated_center(self.CENTER, 2 * math.pi * 0.01)
        distances = np.linalg.norm(moved.vertices - center, axis=1)
        np.testing.assert_allclose(distances, self.RADIUS, atol=1e-7)
        self.assertTrue(report.is_regular)
        self.assertEqual(report.euler_characteristic, 2)

    def test_simulate_shortens_last_step(self):
        """T = 0.05 with k = 0.02 takes three steps ending at T"""
        mesh = gen_sphere(self.CENTER, self.RADIUS, subdivisions=2)
        config = StepConfig(params=RegularityParams(h_l=0.1), time_step=0.02)
        seen = []
        result = simulate(mesh, make_field('rigid_rotation'), 0.05, config,
                          on_step=lambda index, t, m, report: seen.append((index, t)))
        self.assertEqual(len(result.reports), 3)
        self.assertEqual([index for index, _ in seen], [1, 2, 3])
        times = [t for _, t in seen]
        np.testing.assert_allclose(times, [0.02, 0.04, 0.05])
        self.assertAlmostEqual(times[-1] - times[-2], 0.01)
        self.assertAlmostEqual(result.reports[-1].time, 0.05)
        self.assertEqual(result.mesh.euler_characteristic(), 2)

    def test_report_carries_ltr_seed(self):
        """Every step report records the seed of the regeneration generator"""
        mesh = gen_sphere((0.0, 0.0, 0.0), 1.0, subdivisions=1)
        config = StepConfig(params=RegularityParams(h_l=0.7), time_step=0.01, seed=1234)
        _, report = step(mesh, identity_map, 0.0, config)
        self.assertEqual(report.ltr_seed, 1234)
        self.assertEqual(report.as_row()['ltr_seed'], 1234)

    def test_vortical_shear_stays_regular(self):
        """Fifteen default steps of the vortical shear keep a coarse sphere regular and closed"""
        mesh = gen_sphere((0.5, 0.75, 0.25), 0.15, subdivisions=2)
        config = StepConfig(params=RegularityParams(h_l=0.06), time_step=0.02)
        self.assertTrue(check_regularity(mesh, config.params).is_regular)
        result = simulate(mesh, make_field('vortical_shear', period=3.0), 0.3, config)
        self.assertEqual(len(result.reports), 15)
        for report in result.reports:
            self.assertTrue(report.is_regular, report.step)
            self.assertEqual(report.euler_characteristic, 2, report.step)
            self.assertNotIn(CascadeTier.UNRESOLVED.value, [r.tier for r in report.resolutions])
        self.assertEqual(validate(result.mesh), [])
        self.assertGreater(surface_fold(result.mesh, result.mesh.triangle_ids()), 0.0)

    def test_remesh_static_refines_fan(self):
        """Unit edges of the fan are halved for h_L = 0.9 without moving the input"""
        mesh = hex_fan()
        config = StepConfig(params=RegularityParams(h_l=0.9), time_step=0.01)
        remeshed, report = remesh_static(mesh, config)
        self.assertTrue(report.is_regular)
        self.assertEqual(report.num_vertices, 19)
        self.assertEqual(report.euler_characteristic, 1)
        self.assertEqual(validate(remeshed), [])
        self.assertEqual(mesh.num_triangles, 6)


if __name__ == '__main__':
    unittest.main()
