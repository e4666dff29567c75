"""Both sides of the jet identities evaluated along computed trajectories.

Residuals are reported per sample so a failing step can be located, and are
normalized by ``1 + scale`` because jets grow without bound near blow-up.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from varjet.errors import ConfigError, DimensionError, PoleError, ShapeError
from varjet.integrator import propagate
from varjet.matkron import apply_kron_inv_pair, as_matrix, as_vector
from varjet.sysmodel import PolySystem, eval_D2f, eval_D3f, eval_Df, eval_f
from varjet.varflow import DirJet3, IntegratorConfig, Jet3, Trajectory

logger = logging.getLogger(__name__)

POLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AllwrightReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual_norm: np.ndarray
    scale: np.ndarray
    # largest |I2| entry along the trajectory; nonzero only when n >= 2
    i2_max: float = 0.0

    @property
    def normalized(self) -> np.ndarray:
        return self.residual_norm / (1.0 + self.scale)

    @property
    def max_normalized(self) -> float:
        return float(self.normalized.max()) if self.t.size else 0.0


@dataclass(frozen=True)
class Eq8Report:
    t: np.ndarray
    residual: np.ndarray
    # |D2phi| per sample
    scale: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(self.residual.max()) if self.t.size else 0.0


def allwright_terms(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray) -> tuple[np.ndarray, float]:
    """``u3 (x) u1 + u1 (x) u3 - 3 u2 (x) u2`` and the sum of the term norms."""
    left = np.kron(u3, u1)
    right = np.kron(u1, u3)
    square = 3.0 * np.kron(u2, u2)
    size = float(np.max(np.abs(left)) + np.max(np.abs(right)) + np.max(np.abs(square)))
    return left + right - square, size


def allwright_sides(traj: Trajectory[DirJet3]) -> AllwrightReport:
    n = traj.final.phi.size
    lhs = np.zeros((len(traj), n * n))
    rhs = np.zeros((len(traj), n * n))
    i2_max = 0.0
    for k, jet in enumerate(traj):
        if jet.I1 is None or jet.I2 is None:
            raise ConfigError("trajectory was integrated without the Allwright accumulators")
        lhs[k], _ = allwright_terms(jet.u1, jet.u2, jet.u3)
        rhs[k] = apply_kron_inv_pair(jet.Dphi, jet.I1 + 3.0 * jet.I2)
        i2_max = max(i2_max, float(np.max(np.abs(jet.I2))))
    residual = np.max(np.abs(lhs - rhs), axis=1) if len(traj) else np.zeros(0)
    scale = (np.max(np.abs(lhs), axis=1) + np.max(np.abs(rhs), axis=1)) if len(traj) else np.zeros(0)
    return AllwrightReport(t=traj.times, lhs=lhs, rhs=rhs, residual_norm=residual, scale=scale, i2_max=i2_max)


def eq8_check(traj: Trajectory[Jet3]) -> Eq8Report:
    """``D2phi`` against ``Dphi * integral(Psi D2f (Dphi (x) Dphi))``.

    The accumulator is integrated as part of the jet state, so the trajectory
    must come from ``integrate_jets(..., with_integral=True)``.
    """
    residual = []
    scale = []
    for jet in traj:
        if jet.eq8_acc is None:
            raise ConfigError("trajectory was integrated without the second-order accumulator")
        size = float(np.max(np.abs(jet.D2phi)))
        residual.append(float(np.max(np.abs(jet.D2phi - jet.Dphi @ jet.eq8_acc))) / (1.0 + size))
        scale.append(size)
    return Eq8Report(t=traj.times, residual=np.asarray(residual), scale=np.asarray(scale))


@dataclass(frozen=True)
class ScalarFormulas:
    """Scalar flow derivatives and the integral formulas that reproduce them."""

    t: float
    phi: float
    dphi: float
    d2phi: float
    d3phi: float
    phi1: float
    phi2: float
    schwarzian_lhs: float
    schwarzian_rhs: float
    eq4_lhs: float
    eq4_rhs: float

    def residuals(self) -> dict[str, float]:
        def rel(x: float, y: float) -> float:
            return abs(x - y) / (1.0 + max(abs(x), abs(y)))

        return {
            "phi1": rel(self.phi1, self.dphi),
            "phi2": rel(self.phi2, self.d2phi),
            "schwarzian": rel(self.schwarzian_lhs, self.schwarzian_rhs),
            "eq4": rel(self.eq4_lhs, self.eq4_rhs),
            "eq4VsSchwarzian": rel(self.eq4_lhs, 2.0 * self.dphi**2 * self.schwarzian_lhs),
        }


def scalar_formulas(sys: PolySystem, tau: float, xi: float, t: float, cfg: IntegratorConfig) -> ScalarFormulas:
    """Scalar case on one grid: jets from the variational equations, integrals alongside.

    State ``[phi, phi', phi'', phi''', L, J2, J3]`` with ``L = int f'``,
    ``J2 = int f'' e^L`` and ``J3 = int f''' e^(2L)``, so that
    ``phi' = e^L``, ``phi'' = e^L J2`` and the Schwarzian of phi in xi is J3.
    """
    if sys.n != 1:
        raise DimensionError(f"scalar formulas need n = 1, got n = {sys.n}")

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        x = y[:1]
        f1 = float(eval_Df(sys, s, x)[0, 0])
        f2 = float(eval_D2f(sys, s, x)[0, 0])
        f3 = float(eval_D3f(sys, s)[0, 0])
        _, p1, p2, p3, log_p1, _, _ = y
        return np.array(
            [
                float(eval_f(sys, s, x)[0]),
                f1 * p1,
                f1 * p2 + f2 * p1**2,
                f1 * p3 + 3.0 * f2 * p1 * p2 + f3 * p1**3,
                f1,
                f2 * np.exp(log_p1),
                f3 * np.exp(2.0 * log_p1),
            ]
        )

    y0 = np.array([float(xi), 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    samples = propagate(rhs, tau, y0, t, cfg.step, guard=lambda y: abs(y[0]), max_norm=cfg.max_norm)
    phi, p1, p2, p3, log_p1, j2, j3 = samples[-1].y
    if p1 == 0.0:
        raise ShapeError("dphi vanished; the Schwarzian is undefined")
    phi1 = math.exp(log_p1)
    return ScalarFormulas(
        t=samples[-1].t,
        phi=float(phi),
        dphi=float(p1),
        d2phi=float(p2),
        d3phi=float(p3),
        phi1=phi1,
        phi2=phi1 * float(j2),
        schwarzian_lhs=float(p3 / p1 - 1.5 * (p2 / p1) ** 2),
        schwarzian_rhs=float(j3),
        eq4_lhs=float(2.0 * p1 * p3 - 3.0 * p2**2),
        eq4_rhs=float(2.0 * p1**2 * j3),
    )


@dataclass(frozen=True, eq=False)
class FracLin:
    """``x -> (A x + beta) / (gamma^T x + delta)``."""

    A: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: float

    def __post_init__(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.beta.shape != (n,) or self.gamma.shape != (n,):
            raise ShapeError(
                f"inconsistent FracLin shapes A={self.A.shape} beta={self.beta.shape} gamma={self.gamma.shape}"
            )
        if not self.gamma.any() and self.delta == 0.0:
            raise ShapeError("gamma and delta must not vanish together")

    @classmethod
    def build(cls, A: object, beta: object, gamma: object, delta: float) -> FracLin:
        return cls(as_matrix(A, "A"), as_vector(beta, "beta"), as_vector(gamma, "gamma"), float(delta))

    @classmethod
    def from_lift(cls, phi: np.ndarray) -> FracLin:
        """Blocks ``[[A, beta], [gamma^T, delta]]`` of an (n+1) x (n+1) lift matrix."""
        n = phi.shape[0] - 1
        return cls(phi[:n, :n].copy(), phi[:n, n].copy(), phi[n, :n].copy(), float(phi[n, n]))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def denominator(self, x: np.ndarray) -> float:
        return float(self.gamma @ x + self.delta)

    def _checked_denominator(self, x: np.ndarray) -> float:
        s = self.denominator(x)
        if abs(s) <= POLE_TOLERANCE:
            raise PoleError(f"denominator {s:.3e} vanishes at x={np.array2string(x, precision=6)}")
        return s

    def __call__(self, x: object) -> np.ndarray:
        vec = as_vector(x, "x")
        return (self.A @ vec + self.beta) / self._checked_denominator(vec)


def fraclin_differentials(g: FracLin, x: object, h: object) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vec_x = as_vector(x, "x")
    vec_h = as_vector(h, "h")
    s = g._checked_denominator(vec_x)
    value = (g.A @ vec_x + g.beta) / s
    ratio = float(g.gamma @ vec_h) / s
    dg = (g.A @ vec_h - value * float(g.gamma @ vec_h)) / s
    return dg, -2.0 * ratio * dg, 6.0 * ratio**2 * dg


def remark2_combination(dg: np.ndarray, d2g: np.ndarray, d3g: np.ndarray) -> np.ndarray:
    """``dg (x) d3g - 3/2 d2g (x) d2g``; zero for every fractional linear map."""
    return np.kron(dg, d3g) - 1.5 * np.kron(d2g, d2g)


def remark2_residual(g: FracLin, x: object) -> np.ndarray:
    return remark2_combination(*fraclin_differentials(g, x, x))
