import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

from varjet.csym import is_csymmetric
from varjet.documents import load_system
from varjet.errors import BlowUpError, ConfigError, IllConditionedFlowError
from varjet.varflow import (
    IntegratorConfig,
    fd_jets,
    integrate_directional,
    integrate_flow,
    integrate_jets,
    inverse_flow,
)

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def _square_jets(t: float, xi: float) -> tuple[float, float, float, float]:
    s = 1.0 / (1.0 - t * xi)
    return xi * s, s**2, 2.0 * t * s**3, 6.0 * t**2 * s**4


class VarFlowTests(unittest.TestCase):
    def setUp(self) -> None:
        self.cfg = IntegratorConfig(step=1e-3)

    def test_square_jets_closed_form(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        jet = integrate_jets(sys, 0.0, np.array([1.0]), 0.5, self.cfg).final
        self.assertEqual(jet.t, 0.5)
        assert_allclose(
            [jet.phi[0], jet.Dphi[0, 0], jet.D2phi[0, 0], jet.D3phi[0, 0]], [2.0, 4.0, 8.0, 24.0], rtol=1e-7
        )

    def test_rotation_jets(self) -> None:
        sys = load_system(FIXTURES / "linear2.sys.json")
        xi = np.array([0.3, -0.8])
        t = 1.2
        jet = integrate_jets(sys, 0.0, xi, t, self.cfg).final
        rot = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        assert_allclose(jet.phi, rot @ xi, atol=1e-10)
        assert_allclose(jet.Dphi, rot, atol=1e-10)
        assert_allclose(jet.D2phi, np.zeros((2, 4)), atol=1e-12)
        assert_allclose(jet.D3phi, np.zeros((2, 8)), atol=1e-12)

    def test_jets_agree_with_finite_differences(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        xi = np.array([0.5])
        jet = integrate_jets(sys, 0.0, xi, 0.5, self.cfg).final
        fd = fd_jets(sys, 0.0, xi, 0.5, self.cfg)
        assert_allclose(fd.Dphi, jet.Dphi, rtol=1e-7)
        assert_allclose(fd.D2phi, jet.D2phi, rtol=1e-5)
        assert_allclose(fd.D3phi, jet.D3phi, rtol=1e-4)

    def test_cubic_jets_agree_with_finite_differences(self) -> None:
        sys = load_system(FIXTURES / "cubic2.sys.json")
        xi = np.array([0.5, 0.2])
        jet = integrate_jets(sys, 0.0, xi, 0.8, self.cfg).final
        fd = fd_jets(sys, 0.0, xi, 0.8, self.cfg)
        assert_allclose(fd.Dphi, jet.Dphi, atol=1e-7)
        assert_allclose(fd.D2phi, jet.D2phi, atol=1e-5)
        assert_allclose(fd.D3phi, jet.D3phi, atol=1e-3)

    def test_finite_differences_on_every_fixture(self) -> None:
        cases = {
            "linear1": [0.4],
            "linear2": [0.3, -0.8],
            "square1": [-0.3],
            "riccati2": [0.1, 0.2],
            "quadratic2": [0.5, -0.4],
            "cubic1": [0.5],
        }
        for name, xi in cases.items():
            with self.subTest(system=name):
                sys = load_system(FIXTURES / f"{name}.sys.json")
                jet = integrate_jets(sys, 0.0, np.array(xi), 0.3, self.cfg).final
                fd = fd_jets(sys, 0.0, np.array(xi), 0.3, self.cfg)
                assert_allclose(fd.Dphi, jet.Dphi, rtol=1e-4, atol=1e-4)
                assert_allclose(fd.D2phi, jet.D2phi, rtol=1e-3, atol=1e-3)
                assert_allclose(fd.D3phi, jet.D3phi, rtol=1e-2, atol=1e-2)

    def test_higher_jets_are_csymmetric(self) -> None:
        sys = load_system(FIXTURES / "riccati2.sys.json")
        jet = integrate_jets(sys, 0.0, np.array([0.1, 0.2]), 0.4, self.cfg).final
        self.assertLess(is_csymmetric(jet.D2phi, 2, 2).violation, 1e-12)
        self.assertLess(is_csymmetric(jet.D3phi, 2, 3).violation, 1e-11)

    def test_group_property(self) -> None:
        sys = load_system(FIXTURES / "riccati2.sys.json")
        xi = np.array([0.1, 0.2])
        direct = integrate_flow(sys, 0.0, xi, 0.4, self.cfg).final.y
        middle = integrate_flow(sys, 0.0, xi, 0.15, self.cfg).final.y
        composed = integrate_flow(sys, 0.15, middle, 0.4, self.cfg).final.y
        assert_allclose(composed, direct, atol=1e-10)

    def test_group_property_of_first_jet(self) -> None:
        sys = load_system(FIXTURES / "cubic2.sys.json")
        xi = np.array([0.5, 0.2])
        direct = integrate_jets(sys, 0.0, xi, 0.4, self.cfg).final
        first = integrate_jets(sys, 0.0, xi, 0.15, self.cfg).final
        second = integrate_jets(sys, 0.15, first.phi, 0.4, self.cfg).final
        assert_allclose(second.Dphi @ first.Dphi, direct.Dphi, atol=1e-10)

    def test_backward_returns_to_start(self) -> None:
        sys = load_system(FIXTURES / "riccati2.sys.json")
        xi = np.array([0.1, 0.2])
        forward = integrate_jets(sys, 0.0, xi, 0.4, self.cfg).final
        backward = integrate_jets(sys, 0.4, forward.phi, 0.0, self.cfg).final
        self.assertEqual(backward.t, 0.0)
        assert_allclose(backward.phi, xi, atol=1e-10)
        assert_allclose(backward.Dphi @ forward.Dphi, np.eye(2), atol=1e-9)

    def test_liouville(self) -> None:
        rotation = integrate_jets(load_system(FIXTURES / "linear2.sys.json"), 0.0, np.array([1.0, 0.0]), 2.0, self.cfg)
        self.assertAlmostEqual(float(np.linalg.det(rotation.final.Dphi)), 1.0, places=10)
        growth = integrate_jets(load_system(FIXTURES / "linear1.sys.json"), 0.0, np.array([2.0]), 1.0, self.cfg)
        self.assertAlmostEqual(float(growth.final.Dphi[0, 0]), np.e, places=10)

    def test_directional_jets_contract_full_jets(self) -> None:
        sys = load_system(FIXTURES / "cubic2.sys.json")
        xi = np.array([0.5, 0.2])
        h = np.array([0.6, -0.8])
        full = integrate_jets(sys, 0.0, xi, 0.7, self.cfg).final
        directional = integrate_directional(sys, 0.0, xi, h, 0.7, self.cfg, accumulate=False).final
        h2 = np.kron(h, h)
        assert_allclose(directional.u1, full.Dphi @ h, atol=1e-12)
        assert_allclose(directional.u2, full.D2phi @ h2, atol=1e-12)
        assert_allclose(directional.u3, full.D3phi @ np.kron(h2, h), atol=1e-11)
        self.assertIsNone(directional.I1)

    def test_stops_are_hit_exactly(self) -> None:
        sys = load_system(FIXTURES / "linear1.sys.json")
        traj = integrate_flow(sys, 0.0, np.array([1.0]), 0.05, IntegratorConfig(step=0.01), stops=(0.0123, 0.03))
        times = traj.times.tolist()
        self.assertIn(0.0123, times)
        self.assertIn(0.03, times)
        self.assertEqual(times[-1], 0.05)

    def test_fourth_order_convergence(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        exact = _square_jets(0.5, 1.0)
        errors = []
        for step in (0.02, 0.01):
            jet = integrate_jets(sys, 0.0, np.array([1.0]), 0.5, IntegratorConfig(step=step)).final
            errors.append(abs(float(jet.D3phi[0, 0]) - exact[3]))
        ratio = errors[0] / errors[1]
        self.assertGreater(ratio, 10.0)
        self.assertLess(ratio, 24.0)

    def test_richardson_estimate(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        plain = integrate_jets(sys, 0.0, np.array([1.0]), 0.5, IntegratorConfig(step=0.01))
        self.assertIsNone(plain.richardson_error)
        checked = integrate_jets(sys, 0.0, np.array([1.0]), 0.5, IntegratorConfig(step=0.01, richardson=True))
        assert checked.richardson_error is not None
        self.assertGreater(checked.richardson_error, 0.0)
        self.assertLess(checked.richardson_error, 1e-4)

    def test_blow_up_carries_partial_jets(self) -> None:
        sys = load_system(FIXTURES / "square1.sys.json")
        with self.assertRaises(BlowUpError) as ctx:
            integrate_jets(sys, 0.0, np.array([1.0]), 2.0, self.cfg)
        self.assertAlmostEqual(ctx.exception.t_escape, 1.0, delta=2e-3)
        partial = ctx.exception.partial
        self.assertGreater(len(partial), 900)
        self.assertTrue(hasattr(partial[-1], "D3phi"))

    def test_inverse_flow_refuses_ill_conditioned(self) -> None:
        assert_allclose(inverse_flow(np.array([[2.0, 0.0], [0.0, 4.0]]), 0.0), [[0.5, 0.0], [0.0, 0.25]])
        with self.assertRaises(IllConditionedFlowError):
            inverse_flow(np.array([[1.0, 0.0], [0.0, 1e-14]]), 0.3)

    def test_integrator_config_validation(self) -> None:
        with self.assertRaises(ConfigError):
            IntegratorConfig(step=0.0)
        with self.assertRaises(ConfigError):
            IntegratorConfig(max_norm=-1.0)


if __name__ == "__main__":
    unittest.main()
