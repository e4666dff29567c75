"""Polynomial ODE right-hand sides in Taylor form and vector Riccati coefficients.

``f(t, x) = a(t) + B(t) x + 1/2 C(t) x^2 + 1/6 T3(t) x^3`` where every entry is a
polynomial in t. Coefficient stacks are stored with the power of t on axis 0,
so ``C[k]`` is the n x n^2 matrix multiplying ``t**k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from varjet.csym import csym_project, extract_linear_form
from varjet.errors import ShapeError

logger = logging.getLogger(__name__)

MAX_DIMENSION = 8


@dataclass(frozen=True)
class PolyT:
    """Scalar polynomial in t, coefficients in ascending powers."""

    coefficients: tuple[float, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, t: float) -> float:
        return float(P.polyval(t, np.asarray(self.coefficients, dtype=float)))


def _stack(value: object, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == shape:
        arr = arr[np.newaxis]
    if arr.ndim != len(shape) + 1 or arr.shape[1:] != shape or arr.shape[0] == 0:
        raise ShapeError(f"{name} coefficients must have shape (K, {', '.join(map(str, shape))}), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ShapeError(f"{name} has non-finite coefficients")
    return arr


def _trim(stack: np.ndarray) -> np.ndarray:
    """Drop trailing all-zero powers of t, keeping at least the constant term."""
    last = stack.shape[0]
    while last > 1 and not stack[last - 1].any():
        last -= 1
    return stack[:last]


def _at(stack: np.ndarray, t: float) -> np.ndarray:
    return P.polyval(t, stack)


def _check_dimension(n: int) -> None:
    if not 1 <= n <= MAX_DIMENSION:
        raise ShapeError(f"dimension n={n} outside 1..{MAX_DIMENSION}")


@dataclass(frozen=True, eq=False)
class PolySystem:
    n: int
    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    T3: np.ndarray = field(repr=False)

    @classmethod
    def from_coefficients(
        cls,
        n: int,
        a: object,
        B: object,
        C: object | None = None,
        T3: object | None = None,
    ) -> PolySystem:
        """Build a system, c-symmetrizing C and T3 coefficient by coefficient."""
        _check_dimension(n)
        a_stack = _stack(a, (n,), "a")
        b_stack = _stack(B, (n, n), "B")
        c_stack = _stack(np.zeros((n, n**2)) if C is None else C, (n, n**2), "C")
        t_stack = _stack(np.zeros((n, n**3)) if T3 is None else T3, (n, n**3), "T3")

        c_sym = np.stack([csym_project(layer, n, 2) for layer in c_stack])
        t_sym = np.stack([csym_project(layer, n, 3) for layer in t_stack])
        if not np.allclose(c_sym, c_stack) or not np.allclose(t_sym, t_stack):
            logger.debug("symmetrized non-c-symmetric C/T3 input (n=%s)", n)
        return cls(n=n, a=_trim(a_stack), B=_trim(b_stack), C=_trim(c_sym), T3=_trim(t_sym))

    def coefficients_at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return _at(self.a, t), _at(self.B, t), _at(self.C, t), _at(self.T3, t)


@dataclass(frozen=True, eq=False)
class RiccatiCoeffs:
    """``x' = a(t) + B(t) x + (c(t)^T x) x``."""

    n: int
    a: np.ndarray
    B: np.ndarray
    c: np.ndarray

    @classmethod
    def from_coefficients(cls, n: int, a: object, B: object, c: object) -> RiccatiCoeffs:
        _check_dimension(n)
        return cls(
            n=n,
            a=_trim(_stack(a, (n,), "a")),
            B=_trim(_stack(B, (n, n), "B")),
            c=_trim(_stack(c, (n,), "c")),
        )

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _at(self.a, t), _at(self.B, t), _at(self.c, t)

    def allclose(self, other: RiccatiCoeffs, atol: float = 1e-12) -> bool:
        if self.n != other.n:
            return False
        pairs = ((self.a, other.a), (self.B, other.B), (self.c, other.c))
        return all(x.shape == y.shape and np.allclose(x, y, rtol=0.0, atol=atol) for x, y in pairs)


def _cubes(sys: PolySystem, t: float) -> tuple[np.ndarray, np.ndarray]:
    n = sys.n
    return _at(sys.C, t).reshape(n, n, n), _at(sys.T3, t).reshape(n, n, n, n)


def eval_f(sys: PolySystem, t: float, x: np.ndarray) -> np.ndarray:
    a, b, _, _ = sys.coefficients_at(t)
    c3, t4 = _cubes(sys, t)
    return (
        a
        + b @ x
        + 0.5 * np.einsum("rij,i,j->r", c3, x, x)
        + np.einsum("rijk,i,j,k->r", t4, x, x, x) / 6.0
    )


def eval_Df(sys: PolySystem, t: float, x: np.ndarray) -> np.ndarray:
    b = _at(sys.B, t)
    c3, t4 = _cubes(sys, t)
    return b + np.einsum("rij,i->rj", c3, x) + 0.5 * np.einsum("rijk,i,j->rk", t4, x, x)


def eval_D2f(sys: PolySystem, t: float, x: np.ndarray) -> np.ndarray:
    n = sys.n
    c3, t4 = _cubes(sys, t)
    return (c3 + np.einsum("rijk,i->rjk", t4, x)).reshape(n, n * n)


def eval_D3f(sys: PolySystem, t: float) -> np.ndarray:
    return _at(sys.T3, t)


def riccati_to_system(rc: RiccatiCoeffs) -> PolySystem:
    n = rc.n
    eye = np.eye(n)
    c_stack = np.stack(
        [np.kron(layer.reshape(1, n), eye) + np.kron(eye, layer.reshape(1, n)) for layer in rc.c]
    )
    return PolySystem.from_coefficients(n, rc.a, rc.B, c_stack)


def system_to_riccati(sys: PolySystem, tol: float = 1e-10) -> RiccatiCoeffs | None:
    """Vector Riccati coefficients of ``sys``, or None when it has none.

    Proportionality ``C h^2 || h`` is checked per power of t, which is the same
    as checking it for every t.
    """
    if np.max(np.abs(sys.T3)) > tol:
        return None
    c_layers = []
    for layer in sys.C:
        a = extract_linear_form(layer, tol)
        if a is None:
            return None
        c_layers.append(0.5 * a)
    return RiccatiCoeffs.from_coefficients(sys.n, sys.a, sys.B, np.stack(c_layers))
