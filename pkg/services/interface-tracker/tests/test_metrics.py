import math
import os
import sys
import unittest

import numpy as np

# Add src directory to path for importing modules
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))
sys.path.append(os.path.dirname(__file__))

from mars_tracker.errors import ResolutionError
from mars_tracker.mesh_core import CascadeTier, RegularityParams
from mars_tracker.mesh_io import gen_sphere
from mars_tracker.metrics import (CostLedger, ErrorRecord, convergence_order, e1, eg, quality_stats,
                                  sphere_errors)
from mesh_fixtures import hex_fan


class TestSphereErrors(unittest.TestCase):
    """Test cases for E1 and Eg"""

    def test_exact_sphere_has_no_error(self):
        """Icosphere markers lie on the sphere"""
        mesh = gen_sphere((0.5, 0.75, 0.25), 0.15, subdivisions=2)
        self.assertLess(e1(mesh, (0.5, 0.75, 0.25), 0.15), 1e-15)

    def test_scaled_sphere(self):
        """A sphere of radius 0.16 is off by 0.01 everywhere"""
        mesh = gen_sphere((0.5, 0.5, 0.5), 0.16, subdivisions=1)
        record = sphere_errors(mesh, (0.5, 0.5, 0.5), 0.15, h=1 / 32, h_l=0.1)
        self.assertAlmostEqual(record.e1, 0.01, places=12)
        self.assertAlmostEqual(record.eg, 4 * math.pi * 0.15 ** 2 * 0.01, places=12)
        self.assertEqual((record.num_vertices, record.num_triangles), (42, 80))

    def test_eg_scaling(self):
        """Eg = 4 pi R^2 E1"""
        self.assertAlmostEqual(eg(1.0, 0.5), math.pi)

    def test_record_row_formatting(self):
        """Rows are formatted for byte-stable CSV output"""
        row = ErrorRecord(h=0.03125, h_l=0.015625, e1=1e-4, eg=2e-5, num_vertices=10, num_triangles=16).as_row()
        self.assertEqual(row['h'], '0.03125')
        self.assertEqual(row['e1'], '1.000000000000e-04')


class TestConvergenceOrder(unittest.TestCase):
    """Test cases for convergence_order"""

    def test_second_order(self):
        """Error dropping fourfold per halving is order 2"""
        orders = convergence_order([(1 / 32, 4e-4), (1 / 64, 1e-4)])
        self.assertEqual(len(orders), 1)
        self.assertAlmostEqual(orders[0], 2.0)

    def test_zero_error_gives_none(self):
        """A zero error makes the order undefined"""
        self.assertEqual(convergence_order([(1 / 32, 4e-4), (1 / 64, 0.0)]), [None])

    def test_grids_must_halve(self):
        """Grid ratios other than two raise ResolutionError"""
        with self.assertRaises(ResolutionError):
            convergence_order([(1 / 32, 4e-4), (1 / 96, 1e-4)])

    def test_records_and_eg(self):
        """ErrorRecords are read through E1 or Eg"""
        records = [ErrorRecord(1 / 32, 0.05, 8e-4, 1e-3, 1, 1), ErrorRecord(1 / 64, 0.02, 1e-4, 5e-4, 1, 1)]
        self.assertAlmostEqual(convergence_order(records)[0], 3.0)
        self.assertAlmostEqual(convergence_order(records, use_eg=True)[0], 1.0)

    def test_single_level(self):
        """One grid gives no orders"""
        self.assertEqual(convergence_order([(1 / 32, 4e-4)]), [])


class TestQualityStats(unittest.TestCase):
    """Test cases for quality_stats"""

    def test_hex_fan_statistics(self):
        """Every angle is 60 degrees and every edge 1"""
        stats = quality_stats(hex_fan(), RegularityParams(h_l=1.0))
        self.assertAlmostEqual(stats.min_angle, 60.0, places=9)
        self.assertAlmostEqual(stats.mean_angle, 60.0, places=9)
        self.assertAlmostEqual(stats.max_edge_length, 1.0, places=12)
        self.assertEqual((stats.num_vertices, stats.num_edges, stats.num_triangles), (7, 12, 6))
        self.assertEqual(sum(stats.angle_histogram['counts']), 18)
        self.assertEqual(sum(stats.edge_histogram['counts']), 12)


class TestCostLedger(unittest.TestCase):
    """Test cases for CostLedger"""

    def test_count_shares(self):
        """Nine flips and one regeneration split 90/10"""
        ledger = CostLedger()
        for _ in range(9):
            ledger.record(CascadeTier.EMA)
        ledger.record('LTR')
        shares = ledger.count_shares()
        self.assertAlmostEqual(shares['EMA'], 90.0)
        self.assertAlmostEqual(shares['LTR'], 10.0)
        self.assertEqual(shares['VREM'], 0.0)
        self.assertEqual(ledger.total, 10)

    def test_empty_ledger(self):
        """Nothing recorded gives zero shares"""
        ledger = CostLedger()
        self.assertTrue(all(value == 0.0 for value in ledger.count_shares().values()))
        self.assertTrue(all(value == 0.0 for value in ledger.time_shares().values()))

    def test_time_shares_and_merge(self):
        """Times are tracked apart from counts and merge adds both"""
        first = CostLedger()
        first.add_time(CascadeTier.VREM, 3.0)
        second = CostLedger()
        second.record(CascadeTier.LTR, seconds=1.0)
        first.merge(second)
        self.assertEqual(first.counts['LTR'], 1)
        self.assertEqual(first.counts['VREM'], 0)
        self.assertAlmostEqual(first.time_shares()['VREM'], 75.0)

    def test_count_rows(self):
        """One row per tier in fixed order"""
        rows = CostLedger().count_rows()
        self.assertEqual([row['tier'] for row in rows], ['EMA', 'VREM', 'LTR', 'UNRESOLVED'])
        np.testing.assert_array_equal([row['count'] for row in rows], [0, 0, 0, 0])


if __name__ == '__main__':
    unittest.main()
