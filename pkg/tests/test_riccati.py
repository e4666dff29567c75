import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

from varjet.documents import load_riccati, load_system
from varjet.errors import ConfigError, PoleCrossedError
from varjet.identities import allwright_terms
from varjet.job_runner import SampleRunner
from varjet.riccati import (
    detect_flow,
    estimate_existence_interval,
    frac_solution,
    lift_matrix,
    roundtrip_theorem61,
)
from varjet.sysmodel import RiccatiCoeffs, riccati_to_system
from varjet.varflow import IntegratorConfig, integrate_directional, integrate_flow

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


class LiftTests(unittest.TestCase):
    def setUp(self) -> None:
        self.cfg = IntegratorConfig(step=1e-3)

    def test_lift_matrix_blocks(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2.ric.json")
        assert_allclose(lift_matrix(rc, 0.0), [[0.0, 1.0, 1.0], [-1.0, 0.0, 0.0], [-1.0, 1.0, 0.0]])

    def test_square_solution(self) -> None:
        rc = load_riccati(FIXTURES / "square1.ric.json")
        solution = frac_solution(rc, 0.0, [0.5], 1.0, self.cfg)
        self.assertEqual(solution.t[-1], 1.0)
        assert_allclose(solution.phi[-1], [1.0], rtol=1e-12)
        assert_allclose(solution.lift.rho[-1], 0.5, rtol=1e-12)
        self.assertFalse(solution.existence.pole)
        self.assertEqual(solution.existence.interval, (0.0, 1.0))

    def test_existence_interval_ends_at_pole(self) -> None:
        rc = load_riccati(FIXTURES / "square1.ric.json")
        estimate = estimate_existence_interval(rc, 0.0, [1.0], 1.5, self.cfg)
        self.assertTrue(estimate.pole)
        self.assertAlmostEqual(estimate.end, 1.0, delta=2e-3)
        assert estimate.bracket is not None
        lo, hi = estimate.bracket
        self.assertLessEqual(lo, 1.0)
        self.assertGreaterEqual(hi, 1.0 - 1e-9)

    def test_backward_existence(self) -> None:
        rc = load_riccati(FIXTURES / "square1.ric.json")
        estimate = estimate_existence_interval(rc, 0.0, [-1.0], -1.5, self.cfg)
        self.assertTrue(estimate.pole)
        self.assertAlmostEqual(estimate.end, -1.0, delta=2e-3)
        self.assertEqual(estimate.interval[1], 0.0)

    def test_crossing_a_pole_is_refused(self) -> None:
        rc = load_riccati(FIXTURES / "square1.ric.json")
        with self.assertRaises(PoleCrossedError) as ctx:
            frac_solution(rc, 0.0, [1.0], 1.5, self.cfg)
        lo, hi = ctx.exception.bracket
        self.assertLess(abs(0.5 * (lo + hi) - 1.0), 2e-3)
        self.assertEqual(ctx.exception.to_dict()["code"], "pole_crossed")
        self.assertEqual(ctx.exception.exit_code, 5)
        start, end = ctx.exception.to_dict()["existenceInterval"]
        self.assertEqual(start, 0.0)
        self.assertAlmostEqual(end, 1.0, delta=2e-3)

    def test_solution_starts_at_xi(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2t.ric.json")
        xi = np.array([0.1, 0.2])
        np.testing.assert_array_equal(frac_solution(rc, 0.0, xi, 0.5, self.cfg).phi[0], xi)
        at_tau = frac_solution(rc, 0.3, xi, 0.3, self.cfg)
        self.assertEqual(len(at_tau.t), 1)
        np.testing.assert_array_equal(at_tau.phi[0], xi)

    def test_lift_semigroup(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2t.ric.json")
        xi = np.array([0.1, 0.2])
        whole = frac_solution(rc, 0.0, xi, 0.6, self.cfg).lift.Phi[-1]
        first = frac_solution(rc, 0.0, xi, 0.25, self.cfg).lift.Phi[-1]
        second = frac_solution(rc, 0.25, xi, 0.6, self.cfg).lift.Phi[-1]
        assert_allclose(second @ first, whole, atol=1e-10)

    def test_linear_system_has_constant_denominator(self) -> None:
        rc = RiccatiCoeffs.from_coefficients(2, [0.0, 0.0], [[0.0, 1.0], [-1.0, 0.0]], [0.0, 0.0])
        xi = np.array([0.3, -0.8])
        solution = frac_solution(rc, 0.0, xi, 1.0, self.cfg)
        assert_allclose(solution.lift.rho, np.ones(len(solution.t)), atol=1e-14)
        rot = np.array([[np.cos(1.0), np.sin(1.0)], [-np.sin(1.0), np.cos(1.0)]])
        assert_allclose(solution.phi[-1], rot @ xi, atol=1e-10)
        assert_allclose(solution.maps[-1].gamma, [0.0, 0.0], atol=1e-14)

    def test_lift_agrees_with_direct_flow(self) -> None:
        for name in ("square1.ric.json", "riccati2.ric.json", "riccati2t.ric.json"):
            with self.subTest(document=name):
                rc = load_riccati(FIXTURES / name)
                xi = np.array([0.1, 0.2][: rc.n])
                solution = frac_solution(rc, 0.0, xi, 0.5, self.cfg)
                direct = integrate_flow(riccati_to_system(rc), 0.0, xi, 0.5, self.cfg)
                self.assertEqual(len(direct), len(solution.t))
                assert_allclose(solution.phi, np.stack([s.y for s in direct]), atol=1e-10)

    def test_roundtrip(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2t.ric.json")
        report = roundtrip_theorem61(rc, 0.0, [[0.1, 0.2], [-0.3, 0.1]], [0.1, 0.25, 0.4], self.cfg)
        self.assertEqual(report.checked, 6)
        self.assertLess(report.flow_residual, 1e-10)
        self.assertLess(report.jet_residual, 1e-9)
        self.assertLess(report.lemma_residual, 1e-12)

    def test_roundtrip_on_both_sides_of_tau(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2.ric.json")
        report = roundtrip_theorem61(rc, 0.0, [[0.1, 0.2]], [-0.1, 0.0, 0.2], self.cfg)
        self.assertEqual(report.checked, 3)
        self.assertLess(report.flow_residual, 1e-10)
        self.assertLess(report.jet_residual, 1e-9)

    def test_roundtrip_needs_times(self) -> None:
        rc = load_riccati(FIXTURES / "riccati2.ric.json")
        with self.assertRaises(ConfigError):
            roundtrip_theorem61(rc, 0.0, [[0.1, 0.2]], [], self.cfg)


class DetectionTests(unittest.TestCase):
    def setUp(self) -> None:
        self.cfg = IntegratorConfig(step=1e-3)
        self.windows = [(0.0, 0.2)]

    def test_riccati_is_consistent(self) -> None:
        sys = load_system(FIXTURES / "riccati2.ric.json")
        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                verdict = detect_flow(sys, 0.0, self.windows, 4, self.cfg, seed=seed)
                self.assertTrue(verdict.consistent)
                self.assertEqual(verdict.verdict, "riccati-consistent")
                self.assertEqual(len(verdict.samples), 4)
                self.assertEqual(verdict.seed, seed)

    def test_converted_riccati_documents_are_consistent(self) -> None:
        for name in ("square1.ric.json", "riccati2.ric.json", "riccati2t.ric.json"):
            with self.subTest(document=name):
                sys = riccati_to_system(load_riccati(FIXTURES / name))
                self.assertTrue(detect_flow(sys, 0.0, self.windows, 4, self.cfg, seed=1).consistent)

    def test_decoupled_squares_are_not_riccati(self) -> None:
        sys = load_system(FIXTURES / "quadratic2.sys.json")
        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                verdict = detect_flow(sys, 0.0, [(0.0, 0.3)], 4, self.cfg, seed=seed)
                self.assertFalse(verdict.consistent)
                self.assertEqual(verdict.verdict, "not-riccati")
                self.assertGreater(verdict.max_normalized, 1e-3)

    def test_scalar_cube_is_not_riccati(self) -> None:
        verdict = detect_flow(load_system(FIXTURES / "cubic1.sys.json"), 0.0, [(0.0, 0.3)], 4, self.cfg, seed=0)
        self.assertEqual(verdict.verdict, "not-riccati")
        self.assertGreater(verdict.max_normalized, 1e-3)

    def test_cubic_is_not_riccati(self) -> None:
        verdict = detect_flow(load_system(FIXTURES / "cubic2.sys.json"), 0.0, [(0.0, 0.5)], 3, self.cfg)
        self.assertFalse(verdict.consistent)

    def test_off_diagonal_violation(self) -> None:
        sys = load_system(FIXTURES / "quadratic2.sys.json")
        jet = integrate_directional(
            sys, 0.0, np.array([1.0, 0.0]), np.array([1.0, 1.0]), 0.5, self.cfg, accumulate=False
        ).final
        lhs, _ = allwright_terms(jet.u1, jet.u2, jet.u3)
        assert_allclose(lhs, [0.0, 6.0, 6.0, 0.0], atol=1e-8)

    def test_same_seed_same_samples(self) -> None:
        sys = load_system(FIXTURES / "riccati2.ric.json")
        first = detect_flow(sys, 0.0, self.windows, 3, self.cfg, seed=9)
        runner = SampleRunner(max_workers=3)
        self.addCleanup(runner.shutdown)
        second = detect_flow(sys, 0.0, self.windows, 3, self.cfg, seed=9, runner=runner)
        for a, b in zip(first.samples, second.samples):
            assert_allclose(a.xi, b.xi)
            assert_allclose(a.h, b.h)
            self.assertAlmostEqual(float(np.linalg.norm(a.h)), 1.0)
            self.assertTrue(np.all(np.abs(a.xi) <= 1.0))

    def test_window_is_clipped_before_escape(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        verdict = detect_flow(sys, 0.0, [(0.0, 5.0)], 2, self.cfg, seed=3)
        self.assertTrue(verdict.consistent)
        blown = [s for s in verdict.samples if s.clipped]
        for sample in blown:
            escape = 1.0 / float(sample.xi[0])
            self.assertLess(sample.windows[0][1], escape)

    def test_window_behind_tau_is_scored(self) -> None:
        sys = load_system(FIXTURES / "cubic1.sys.json")
        verdict = detect_flow(sys, 0.0, [(-0.3, 0.0)], 4, self.cfg, seed=0)
        self.assertEqual(verdict.verdict, "not-riccati")
        self.assertGreater(verdict.max_normalized, 1e-3)
        for sample in verdict.samples:
            self.assertEqual(sample.windows, [(-0.3, 0.0)])

    def test_window_around_tau_is_scored_on_both_sides(self) -> None:
        sys = load_system(FIXTURES / "cubic1.sys.json")
        verdict = detect_flow(sys, 1.0, [(0.7, 1.2)], 3, self.cfg, seed=2)
        self.assertFalse(verdict.consistent)
        for sample in verdict.samples:
            lows = [low for low, _ in sample.windows]
            self.assertIn(0.7, lows)
            self.assertIn(1.0, lows)

    def test_escape_before_window_scores_nothing(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        verdict = detect_flow(sys, 0.0, [(2.0, 3.0)], 16, self.cfg, seed=5)
        self.assertTrue(any(s.clipped and not s.windows for s in verdict.samples))
        for sample in verdict.samples:
            for low, high in sample.windows:
                self.assertGreaterEqual(low, 2.0)
                self.assertLessEqual(high, 3.0)

    def test_arguments_are_checked(self) -> None:
        sys = load_system(FIXTURES / "riccati2.ric.json")
        with self.assertRaises(ConfigError):
            detect_flow(sys, 0.0, self.windows, 0, self.cfg)
        with self.assertRaises(ConfigError):
            detect_flow(sys, 0.0, [], 2, self.cfg)
        with self.assertRaises(ConfigError):
            detect_flow(sys, 0.5, [(0.5, 0.5)], 2, self.cfg)
        with self.assertRaises(ConfigError):
            detect_flow(sys, 0.0, [(0.0, float("inf"))], 2, self.cfg)


if __name__ == "__main__":
    unittest.main()
