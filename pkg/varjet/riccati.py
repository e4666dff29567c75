"""Vector Riccati equations: detection, the linear lift and its fractional linear flow.

``x' = a(t) + B(t) x + (c(t)^T x) x`` is the projection of the linear system
``y' = B y + a z, z' = -c^T y`` onto ``x = y / z``. Its fundamental matrix
therefore yields the flow as a fractional linear map of the initial value.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from varjet.errors import BlowUpError, ConfigError, PoleCrossedError, ShapeError
from varjet.identities import FracLin, allwright_terms, fraclin_differentials, remark2_combination
from varjet.integrator import propagate
from varjet.job_runner import SampleRunner
from varjet.matkron import as_vector
from varjet.sysmodel import PolySystem, RiccatiCoeffs, riccati_to_system
from varjet.varflow import IntegratorConfig, integrate_directional

logger = logging.getLogger(__name__)

RHO_TOLERANCE = 1e-10
DEFAULT_DETECT_TOL = 1e-7
DEFAULT_SAMPLE_COUNT = 8

__all__ = [
    "DetectionSample",
    "ExistenceEstimate",
    "FlowVerdict",
    "FracLin",
    "FracSolution",
    "LiftTrajectory",
    "RoundTripReport",
    "detect_flow",
    "estimate_existence_interval",
    "frac_solution",
    "lift_matrix",
    "roundtrip_theorem61",
]


def lift_matrix(rc: RiccatiCoeffs, t: float) -> np.ndarray:
    a, b, c = rc.at(t)
    n = rc.n
    lift = np.zeros((n + 1, n + 1))
    lift[:n, :n] = b
    lift[:n, n] = a
    lift[n, :n] = -c
    return lift


@dataclass(frozen=True)
class LiftTrajectory:
    t: np.ndarray
    Phi: np.ndarray
    rho: np.ndarray

    def fraclin(self, index: int) -> FracLin:
        return FracLin.from_lift(self.Phi[index])


@dataclass(frozen=True)
class ExistenceEstimate:
    """Where the lift denominator stays away from zero, starting at tau."""

    tau: float
    end: float
    # step pair around the first zero of rho, refined by one bisection
    bracket: tuple[float, float] | None = None

    @property
    def pole(self) -> bool:
        return self.bracket is not None

    @property
    def interval(self) -> tuple[float, float]:
        return (min(self.tau, self.end), max(self.tau, self.end))


@dataclass(frozen=True)
class FracSolution:
    t: np.ndarray
    maps: list[FracLin]
    phi: np.ndarray
    lift: LiftTrajectory
    existence: ExistenceEstimate


def _integrate_lift(
    rc: RiccatiCoeffs, tau: float, phi0: np.ndarray, t_end: float, cfg: IntegratorConfig, stops: Sequence[float] = ()
) -> tuple[np.ndarray, np.ndarray]:
    size = rc.n + 1

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return (lift_matrix(rc, t) @ y.reshape(size, size)).reshape(-1)

    samples = propagate(
        rhs,
        tau,
        phi0.reshape(-1),
        t_end,
        cfg.step,
        guard=lambda y: float(np.max(np.abs(y))),
        max_norm=cfg.max_norm,
        stops=stops,
    )
    times = np.array([s.t for s in samples])
    return times, np.stack([s.y.reshape(size, size) for s in samples])


def _denominators(phis: np.ndarray, xi: np.ndarray) -> np.ndarray:
    n = xi.size
    return phis[:, n, :n] @ xi + phis[:, n, n]


def _existence(
    rc: RiccatiCoeffs, tau: float, xi: np.ndarray, t_end: float, cfg: IntegratorConfig, stops: Sequence[float] = ()
) -> tuple[LiftTrajectory, ExistenceEstimate, int]:
    times, phis = _integrate_lift(rc, tau, np.eye(rc.n + 1), t_end, cfg, stops)
    rho = _denominators(phis, xi)
    bad = np.flatnonzero((rho <= RHO_TOLERANCE))
    lift = LiftTrajectory(t=times, Phi=phis, rho=rho)
    if bad.size == 0:
        return lift, ExistenceEstimate(tau=float(tau), end=float(times[-1])), len(times)

    k = int(bad[0])
    lo, hi = float(times[k - 1]), float(times[k])
    mid = 0.5 * (lo + hi)
    _, half = _integrate_lift(rc, lo, phis[k - 1], mid, replace(cfg, step=abs(hi - lo)))
    if float(_denominators(half[-1:], xi)[0]) > RHO_TOLERANCE:
        lo = mid
    else:
        hi = mid
    estimate = ExistenceEstimate(tau=float(tau), end=0.5 * (lo + hi), bracket=(lo, hi))
    logger.debug("lift denominator vanishes in [%s, %s]", lo, hi)
    return lift, estimate, k


def estimate_existence_interval(
    rc: RiccatiCoeffs, tau: float, xi: object, t_end: float, cfg: IntegratorConfig
) -> ExistenceEstimate:
    """Part of J(tau, xi) between tau and t_end.

    The end is t_end when rho stays above the tolerance on the whole grid,
    otherwise the midpoint of the bracket around its first sign change.
    """
    return _existence(rc, tau, as_vector(xi, "xi"), t_end, cfg)[1]


def frac_solution(
    rc: RiccatiCoeffs,
    tau: float,
    xi: object,
    t_end: float,
    cfg: IntegratorConfig,
    stops: Sequence[float] = (),
) -> FracSolution:
    vec = as_vector(xi, "xi")
    if vec.size != rc.n:
        raise ShapeError(f"xi has {vec.size} entries, system dimension is {rc.n}")
    lift, existence, count = _existence(rc, tau, vec, t_end, cfg, stops)
    if existence.pole:
        raise PoleCrossedError(existence.bracket, interval=existence.interval)

    maps = [lift.fraclin(k) for k in range(count)]
    phi = np.stack([g(vec) for g in maps])
    return FracSolution(t=lift.t[:count], maps=maps, phi=phi, lift=lift, existence=existence)


@dataclass(frozen=True)
class DetectionSample:
    xi: np.ndarray
    h: np.ndarray
    max_normalized: float
    # largest normalized distance of d2phi from span(dphi)
    parallel_deviation: float
    windows: list[tuple[float, float]] = field(default_factory=list)
    clipped: bool = False


@dataclass(frozen=True)
class FlowVerdict:
    consistent: bool
    max_normalized: float
    max_parallel_deviation: float
    tol: float
    seed: int
    samples: list[DetectionSample]

    @property
    def verdict(self) -> str:
        return "riccati-consistent" if self.consistent else "not-riccati"


def _parallel_deviation(u1: np.ndarray, u2: np.ndarray) -> float:
    norm = float(u1 @ u1)
    if norm == 0.0:
        return 0.0
    rest = u2 - (u1 @ u2) / norm * u1
    return float(np.max(np.abs(rest))) / (1.0 + float(np.max(np.abs(u2))))


def _window_sides(tau: float, window: tuple[float, float]) -> list[tuple[float, float]]:
    """Split a window at tau into (near, far) pieces, each on one side of tau."""
    low, high = sorted(float(t) for t in window)
    pieces = []
    if high > tau:
        pieces.append((max(low, tau), high))
    if low < tau:
        pieces.append((min(high, tau), low))
    return pieces


def _check_windows(tau: float, windows: Sequence[tuple[float, float]]) -> None:
    if not windows:
        raise ConfigError("detect_flow needs at least one window")
    for window in windows:
        if len(window) != 2 or not np.all(np.isfinite(window)):
            raise ConfigError(f"window must be two finite times, got {window}")
        if not _window_sides(tau, window):
            raise ConfigError(f"window {tuple(window)} holds no time other than tau={tau}")


def _probe(
    sys: PolySystem,
    tau: float,
    windows: Sequence[tuple[float, float]],
    cfg: IntegratorConfig,
    xi: np.ndarray,
    h: np.ndarray,
) -> DetectionSample:
    worst = 0.0
    deviation = 0.0
    clipped = False
    used: list[tuple[float, float]] = []
    for window in windows:
        for near, far in _window_sides(tau, window):
            horizon = tau + 2.0 * (far - tau)
            try:
                jets = list(integrate_directional(sys, tau, xi, h, horizon, cfg, accumulate=False, stops=(near, far)))
            except BlowUpError as exc:
                jets = exc.partial
                clip = tau + 0.5 * (exc.t_escape - tau)
                if abs(clip - tau) < abs(far - tau):
                    logger.warning("window [%s, %s] clipped to %s (escape near %s)", near, far, clip, exc.t_escape)
                    far = clip
                    clipped = True
                if abs(far - tau) < abs(near - tau):
                    # escape before the window starts; nothing of it is scored
                    continue
            low, high = min(near, far), max(near, far)
            used.append((low, high))
            for jet in jets:
                if not low <= jet.t <= high:
                    continue
                lhs, size = allwright_terms(jet.u1, jet.u2, jet.u3)
                worst = max(worst, float(np.max(np.abs(lhs))) / (1.0 + size))
                deviation = max(deviation, _parallel_deviation(jet.u1, jet.u2))
    return DetectionSample(
        xi=xi, h=h, max_normalized=worst, parallel_deviation=deviation, windows=used, clipped=clipped
    )


def detect_flow(
    sys: PolySystem,
    tau: float,
    windows: Sequence[tuple[float, float]],
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    cfg: IntegratorConfig | None = None,
    tol: float = DEFAULT_DETECT_TOL,
    *,
    seed: int = 0,
    runner: SampleRunner | None = None,
) -> FlowVerdict:
    """Sampled necessary check that ``sys`` is a vector Riccati equation.

    Draws ``sample_count`` seeded pairs (xi uniform in [-1, 1]^n, h uniform on
    the unit sphere) and measures the normalized Allwright left side
    ``u3 (x) u1 + u1 (x) u3 - 3 u2 (x) u2`` on every window. A consistent verdict
    is not a proof; a violation is.
    """
    if sample_count < 1:
        raise ConfigError(f"sample_count must be at least 1, got {sample_count}")
    _check_windows(tau, windows)
    cfg = cfg or IntegratorConfig()
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(sample_count):
        xi = rng.uniform(-1.0, 1.0, sys.n)
        h = rng.standard_normal(sys.n)
        pairs.append((xi, h / np.linalg.norm(h)))

    runner = runner or SampleRunner(max_workers=1)
    samples = runner.map(lambda pair: _probe(sys, tau, windows, cfg, *pair), pairs)

    worst = max(s.max_normalized for s in samples)
    verdict = FlowVerdict(
        consistent=worst <= tol,
        max_normalized=worst,
        max_parallel_deviation=max(s.parallel_deviation for s in samples),
        tol=tol,
        seed=seed,
        samples=samples,
    )
    logger.info("detect_flow verdict=%s max=%.3e samples=%s", verdict.verdict, worst, sample_count)
    return verdict


@dataclass(frozen=True)
class RoundTripReport:
    flow_residual: float
    lemma_residual: float
    jet_residual: float
    checked: int


def roundtrip_theorem61(
    rc: RiccatiCoeffs,
    tau: float,
    xi_set: Sequence[object],
    t_grid: Sequence[float],
    cfg: IntegratorConfig,
    h: object | None = None,
) -> RoundTripReport:
    """Fractional linear lift against the nonlinear flow of the same equation.

    Reports three maxima over every (xi, t) pair: the deviation between the
    lift solution and direct integration, the fractional linear identities of
    the lift maps, and the deviation between their differentials and the
    directional jets of the flow.
    """
    if not t_grid:
        raise ConfigError("roundtrip needs a non-empty t grid")
    sys = riccati_to_system(rc)
    direction = np.ones(rc.n) / np.sqrt(rc.n) if h is None else as_vector(h, "h")
    ahead = [float(t) for t in t_grid if t >= tau]
    behind = [float(t) for t in t_grid if t < tau]
    sides = [(max(ts, key=lambda t: abs(t - tau)), ts) for ts in (ahead, behind) if ts]
    flow_residual = lemma_residual = jet_residual = 0.0
    checked = 0
    for raw, (t_end, points) in itertools.product(xi_set, sides):
        xi = as_vector(raw, "xi")
        solution = frac_solution(rc, tau, xi, t_end, cfg, stops=points)
        direct = integrate_directional(sys, tau, xi, direction, t_end, cfg, accumulate=False, stops=points)
        by_time = {jet.t: jet for jet in direct}
        lift_index = {float(t): k for k, t in enumerate(solution.t)}
        for t in points:
            jet = by_time[t]
            k = lift_index[t]
            g = solution.maps[k]
            flow_residual = max(
                flow_residual,
                float(np.max(np.abs(solution.phi[k] - jet.phi))) / (1.0 + float(np.max(np.abs(jet.phi)))),
            )
            dg, d2g, d3g = fraclin_differentials(g, xi, direction)
            for u, d in ((jet.u1, dg), (jet.u2, d2g), (jet.u3, d3g)):
                jet_residual = max(jet_residual, float(np.max(np.abs(u - d))) / (1.0 + float(np.max(np.abs(u)))))
            lhs, size = allwright_terms(dg, d2g, d3g)
            combination = remark2_combination(*fraclin_differentials(g, xi, xi))
            lemma_residual = max(
                lemma_residual,
                float(np.max(np.abs(lhs))) / (1.0 + size),
                float(np.max(np.abs(combination))) / (1.0 + _combination_scale(g, xi)),
            )
            checked += 1
    logger.info(
        "roundtrip flow=%.3e lemma=%.3e jets=%.3e over %s points", flow_residual, lemma_residual, jet_residual, checked
    )
    return RoundTripReport(flow_residual, lemma_residual, jet_residual, checked)


def _combination_scale(g: FracLin, x: np.ndarray) -> float:
    dg, d2g, d3g = fraclin_differentials(g, x, x)
    return float(np.max(np.abs(np.kron(dg, d3g))) + 1.5 * np.max(np.abs(np.kron(d2g, d2g))))
