"""Flow propagation together with its derivative tensors.

The full jet system carries Dphi, D2phi (n x n^2) and D3phi (n x n^3) through
the variational equations; the directional system carries only the
differentials d^k phi = D^k phi h^k for one direction h, plus the two integral
accumulators of the generalized Allwright formula.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, replace
from typing import Generic, TypeVar

import numpy as np

from varjet.config import VarjetConfig
from varjet.errors import BlowUpError, ConfigError, IllConditionedFlowError
from varjet.integrator import Sample, propagate
from varjet.matkron import apply_kron_inv_pair, kron_mat_pow, lu_solve, star
from varjet.sysmodel import PolySystem, eval_D2f, eval_D3f, eval_Df, eval_f

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12

S = TypeVar("S")


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    max_norm: float = 1e8
    richardson: bool = False

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if not self.max_norm > 0:
            raise ConfigError(f"max_norm must be positive, got {self.max_norm}")

    @classmethod
    def from_config(cls, config: VarjetConfig, **overrides: object) -> IntegratorConfig:
        base = cls(step=config.step, max_norm=config.max_norm)
        return replace(base, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class Trajectory(Generic[S]):
    samples: list[S]
    # endpoint difference against a half-step rerun, when requested
    richardson_error: float | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[S]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> S:
        return self.samples[index]

    @property
    def final(self) -> S:
        return self.samples[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


@dataclass(frozen=True)
class Jet3:
    t: float
    phi: np.ndarray
    Dphi: np.ndarray
    D2phi: np.ndarray
    D3phi: np.ndarray
    # integral of Psi D2f (Dphi (x) Dphi), present with with_integral=True
    eq8_acc: np.ndarray | None = None


@dataclass(frozen=True)
class DirJet3:
    t: float
    phi: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    Dphi: np.ndarray
    I1: np.ndarray | None = None
    I2: np.ndarray | None = None


@dataclass(frozen=True)
class FDJets:
    Dphi: np.ndarray
    D2phi: np.ndarray
    D3phi: np.ndarray


class _Layout:
    """Packs a fixed list of array shapes into one flat state vector."""

    def __init__(self, shapes: Sequence[tuple[int, ...]]) -> None:
        self.shapes = list(shapes)
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.cumsum([0] + sizes)

    def pack(self, parts: Iterable[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])

    def unpack(self, y: np.ndarray) -> list[np.ndarray]:
        return [
            y[self.offsets[i] : self.offsets[i + 1]].reshape(shape)
            for i, shape in enumerate(self.shapes)
        ]


def inverse_flow(dphi: np.ndarray, t: float) -> np.ndarray:
    """Psi = Dphi^-1, refusing ill-conditioned fundamental matrices."""
    try:
        condition = float(np.linalg.cond(dphi, 1))
    except np.linalg.LinAlgError:
        condition = float("inf")
    if not condition <= MAX_CONDITION:
        raise IllConditionedFlowError(t, condition)
    return lu_solve(dphi, np.eye(dphi.shape[0]))


def _phi_guard(n: int) -> Callable[[np.ndarray], float]:
    return lambda y: float(np.max(np.abs(y[:n])))


def _run(
    fn: Callable[[float, np.ndarray], np.ndarray],
    tau: float,
    y0: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    n: int,
    stops: Iterable[float],
) -> tuple[list[Sample], float | None]:
    stops = tuple(stops)
    samples = propagate(fn, tau, y0, t_end, cfg.step, guard=_phi_guard(n), max_norm=cfg.max_norm, stops=stops)
    if not cfg.richardson:
        return samples, None
    half = propagate(fn, tau, y0, t_end, cfg.step / 2, guard=_phi_guard(n), max_norm=cfg.max_norm, stops=stops)
    error = float(np.max(np.abs(half[-1].y - samples[-1].y))) / 15.0
    logger.info("richardson endpoint error estimate %.3e (step=%s)", error, cfg.step)
    return samples, error


def _run_unpacked(
    fn: Callable[[float, np.ndarray], np.ndarray],
    tau: float,
    y0: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    n: int,
    stops: Iterable[float],
    convert: Callable[[Sample], S],
) -> tuple[list[S], float | None]:
    """Like ``_run``, with the partial samples of a blow-up converted as well."""
    try:
        samples, error = _run(fn, tau, y0, t_end, cfg, n, stops)
    except BlowUpError as exc:
        raise BlowUpError(exc.t_escape, [convert(s) for s in exc.partial]) from exc
    return [convert(s) for s in samples], error


def integrate_flow(
    sys: PolySystem,
    tau: float,
    xi: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    stops: Iterable[float] = (),
) -> Trajectory[Sample]:
    """Only phi, no derivative tensors."""
    samples, error = _run(
        lambda t, y: eval_f(sys, t, y), tau, np.asarray(xi, dtype=float), t_end, cfg, sys.n, stops
    )
    return Trajectory(samples, error)


def integrate_jets(
    sys: PolySystem,
    tau: float,
    xi: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    *,
    with_integral: bool = False,
    stops: Iterable[float] = (),
) -> Trajectory[Jet3]:
    n = sys.n
    cubic = bool(sys.T3.any())
    shapes = [(n,), (n, n), (n, n**2), (n, n**3)]
    if with_integral:
        shapes.append((n, n**2))
    layout = _Layout(shapes)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        parts = layout.unpack(y)
        phi, d1, d2, d3 = parts[:4]
        df = eval_Df(sys, t, phi)
        d2f = eval_D2f(sys, t, phi)
        k2 = np.kron(d1, d1)
        d3_rate = df @ d3 + d2f @ np.kron(d1, d2) + d2f @ (star(d1, d2, n) + np.kron(d2, d1))
        if cubic:
            d3_rate = d3_rate + eval_D3f(sys, t) @ kron_mat_pow(d1, 3)
        rates = [eval_f(sys, t, phi), df @ d1, df @ d2 + d2f @ k2, d3_rate]
        if with_integral:
            rates.append(inverse_flow(d1, t) @ d2f @ k2)
        return layout.pack(rates)

    def to_jet(sample: Sample) -> Jet3:
        parts = layout.unpack(sample.y)
        return Jet3(
            t=sample.t,
            phi=parts[0],
            Dphi=parts[1],
            D2phi=parts[2],
            D3phi=parts[3],
            eq8_acc=parts[4] if with_integral else None,
        )

    initial = [np.asarray(xi, dtype=float), np.eye(n), np.zeros((n, n**2)), np.zeros((n, n**3))]
    if with_integral:
        initial.append(np.zeros((n, n**2)))
    samples, error = _run_unpacked(rhs, tau, layout.pack(initial), t_end, cfg, n, stops, to_jet)
    logger.debug("integrate_jets n=%s tau=%s t_end=%s samples=%s", n, tau, t_end, len(samples))
    return Trajectory(samples, error)


def allwright_integrands(
    psi: np.ndarray, d2f: np.ndarray, d3f: np.ndarray | None, u1: np.ndarray, u2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Integrands of the two accumulators, without forming any n^2 x n^4 matrix.

    ``(D3f (x) E + E (x) D3f) u1^4 = (D3f u1^3) (x) u1 + u1 (x) (D3f u1^3)`` and
    ``(D2f (x) E - E (x) D2f)(u2 u1 u1 - u1 u1 u2)`` expands into four
    Kronecker products of n-vectors in the same way.
    """
    if d3f is None:
        first = np.zeros(u1.size**2)
    else:
        v3 = d3f @ np.kron(np.kron(u1, u1), u1)
        first = np.kron(v3, u1) + np.kron(u1, v3)
    q21 = d2f @ np.kron(u2, u1)
    q11 = d2f @ np.kron(u1, u1)
    q12 = d2f @ np.kron(u1, u2)
    second = np.kron(q21, u1) - np.kron(u2, q11) - np.kron(q11, u2) + np.kron(u1, q12)
    return apply_kron_inv_pair(psi, first), apply_kron_inv_pair(psi, second)


def integrate_directional(
    sys: PolySystem,
    tau: float,
    xi: np.ndarray,
    h: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    *,
    accumulate: bool = True,
    stops: Iterable[float] = (),
) -> Trajectory[DirJet3]:
    n = sys.n
    cubic = bool(sys.T3.any())
    shapes = [(n,), (n, n), (n,), (n,), (n,)]
    if accumulate:
        shapes += [(n * n,), (n * n,)]
    layout = _Layout(shapes)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        parts = layout.unpack(y)
        phi, d1, u1, u2, u3 = parts[:5]
        df = eval_Df(sys, t, phi)
        d2f = eval_D2f(sys, t, phi)
        d3f = eval_D3f(sys, t) if cubic else None
        u3_rate = df @ u3 + 3.0 * d2f @ np.kron(u2, u1)
        if d3f is not None:
            u3_rate = u3_rate + d3f @ np.kron(np.kron(u1, u1), u1)
        rates = [
            eval_f(sys, t, phi),
            df @ d1,
            df @ u1,
            df @ u2 + d2f @ np.kron(u1, u1),
            u3_rate,
        ]
        if accumulate:
            rates.extend(allwright_integrands(inverse_flow(d1, t), d2f, d3f, u1, u2))
        return layout.pack(rates)

    def to_jet(sample: Sample) -> DirJet3:
        parts = layout.unpack(sample.y)
        return DirJet3(
            t=sample.t,
            phi=parts[0],
            Dphi=parts[1],
            u1=parts[2],
            u2=parts[3],
            u3=parts[4],
            I1=parts[5] if accumulate else None,
            I2=parts[6] if accumulate else None,
        )

    direction = np.asarray(h, dtype=float)
    initial = [np.asarray(xi, dtype=float), np.eye(n), direction, np.zeros(n), np.zeros(n)]
    if accumulate:
        initial += [np.zeros(n * n), np.zeros(n * n)]
    samples, error = _run_unpacked(rhs, tau, layout.pack(initial), t_end, cfg, n, stops, to_jet)
    return Trajectory(samples, error)


def _mixed_difference(
    flow: Callable[[np.ndarray], np.ndarray], xi: np.ndarray, directions: Sequence[np.ndarray], step: float
) -> np.ndarray:
    """Product of central differences along each direction, divided by (2 step)^k."""
    total = np.zeros_like(xi)
    for signs in itertools.product((1.0, -1.0), repeat=len(directions)):
        offset = sum(s * d for s, d in zip(signs, directions))
        total = total + np.prod(signs) * flow(xi + step * offset)
    return total / (2.0 * step) ** len(directions)


def fd_jets(
    sys: PolySystem,
    tau: float,
    xi: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    eps: float = 1e-6,
) -> FDJets:
    """Finite-difference jets of phi(t_end, tau, .) at xi.

    Steps: eps for Dphi, eps^(2/3) for D2phi and eps^(1/2) for D3phi; each
    stencil point is a separate integration from tau.
    """
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    n = sys.n
    base = np.asarray(xi, dtype=float)
    basis = np.eye(n)
    plain = replace(cfg, richardson=False)

    def flow(point: np.ndarray) -> np.ndarray:
        return integrate_flow(sys, tau, point, t_end, plain).final.y

    tensors = []
    for order, step in ((1, eps), (2, eps ** (2 / 3)), (3, eps**0.5)):
        tensor = np.zeros((n, n**order))
        for index in itertools.combinations_with_replacement(range(n), order):
            column = _mixed_difference(flow, base, [basis[i] for i in index], step)
            for multi in set(itertools.permutations(index)):
                pos = 0
                for i in multi:
                    pos = pos * n + i
                tensor[:, pos] = column
        tensors.append(tensor)
    return FDJets(*tensors)
