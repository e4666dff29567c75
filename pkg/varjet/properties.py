"""Seeded property suite behind ``varjet selftest``.

Each check draws one random instance from the generator and returns the
relative deviation between the two sides of a Kronecker or c-symmetry rule.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from varjet.csym import csym_project, kron_square_root, kron_symmetric_factor, polarize
from varjet.matkron import kron_mat_pow, kron_pow, star, swap_matrix
from varjet.sysmodel import PolySystem, eval_D2f, eval_D3f, eval_Df

logger = logging.getLogger(__name__)

ALGEBRA_TOLERANCE = 1e-12
POLARIZE_TOLERANCE = 1e-10
MAX_DIM = 4

Check = Callable[[np.random.Generator], float]


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    instances: int
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "instances": self.instances,
            "maxDeviation": self.max_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_deviation(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.max(np.abs(x - y))) / max(1.0, float(np.max(np.abs(y))))


def _dim(rng: np.random.Generator, low: int = 1) -> int:
    return int(rng.integers(low, MAX_DIM + 1))


def _mat(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal((rows, cols))


def _vec(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal(n)


def _csym(rng: np.random.Generator, m: int, n: int, q: int) -> np.ndarray:
    return csym_project(_mat(rng, m, n**q), n, q)


def check_product_rule(rng: np.random.Generator) -> float:
    m, n, p, q, r, s = (_dim(rng) for _ in range(6))
    a, c = _mat(rng, m, n), _mat(rng, n, r)
    b, d = _mat(rng, p, q), _mat(rng, q, s)
    return relative_deviation(np.kron(a, b) @ np.kron(c, d), np.kron(a @ c, b @ d))


def check_column_rules(rng: np.random.Generator) -> float:
    n, m = _dim(rng), _dim(rng)
    a, b, c = _vec(rng, n), _vec(rng, n), _vec(rng, n)
    cm = _mat(rng, m, n)
    return max(
        relative_deviation(np.kron(a.reshape(1, -1), b.reshape(-1, 1)) @ c, (a @ c) * b),
        relative_deviation(np.kron(a.reshape(-1, 1), cm) @ b, np.kron(a, cm @ b)),
        relative_deviation(np.kron(cm, a.reshape(-1, 1)) @ b, np.kron(cm @ b, a)),
    )


def check_csym_swap(rng: np.random.Generator) -> float:
    m, n, p = _dim(rng), _dim(rng), _dim(rng)
    mat = _csym(rng, m, n, 2)
    a, b = _mat(rng, n, p), _vec(rng, n).reshape(-1, 1)
    return relative_deviation(mat @ np.kron(a, b), mat @ np.kron(b, a))


def check_csym_block_swap(rng: np.random.Generator) -> float:
    m, n = _dim(rng), _dim(rng)
    mat = _csym(rng, m, n, 2)
    eye = np.eye(n)
    a, b, c = _vec(rng, n), _vec(rng, n), _vec(rng, n)
    left, right = np.kron(mat, eye), np.kron(eye, mat)
    return max(
        relative_deviation(left @ kron3(a, b, c), left @ kron3(b, a, c)),
        relative_deviation(right @ kron3(a, b, c), right @ kron3(a, c, b)),
    )


def kron3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.kron(np.kron(a, b), c)


def check_symmetric_factor(rng: np.random.Generator) -> float:
    n = _dim(rng)
    a, b = _vec(rng, n), _vec(rng, n)
    w = np.kron(a, b) + np.kron(b, a)
    recovered = kron_symmetric_factor(a, w)
    zero = kron_symmetric_factor(a, np.zeros(n * n))
    if recovered is None or zero is None:
        return float("inf")
    alpha = float(rng.standard_normal())
    root = kron_square_root(np.kron(a, 0.5 * alpha**2 * a) + np.kron(0.5 * alpha**2 * a, a))
    if root is None:
        return float("inf")
    # the root is alpha * a up to the sign convention
    sign = 1.0 if root @ a * alpha >= 0 else -1.0
    return max(
        relative_deviation(recovered, b),
        float(np.max(np.abs(zero))),
        relative_deviation(sign * root, alpha * a),
    )


def check_star_powers(rng: np.random.Generator) -> float:
    m, n = _dim(rng), _dim(rng)
    a, c, b = _mat(rng, m, n), _mat(rng, n, n), _mat(rng, n, n * n)
    h = _vec(rng, n)
    return max(
        relative_deviation(star(a, c) @ kron_pow(h, 2), np.kron(a @ h, c @ h)),
        relative_deviation(star(a, b) @ kron_pow(h, 3), np.kron(a @ h, b @ kron_pow(h, 2))),
    )


def _linear_family(rng: np.random.Generator, s: int, rows: int, cols: int) -> Callable[[np.ndarray], np.ndarray]:
    base = _mat(rng, rows, cols)
    slopes = rng.standard_normal((s, rows, cols))
    return lambda x: base + np.tensordot(x, slopes, axes=1)


def _jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """``[d/dx_1 F, ..., d/dx_s F]`` by central differences with unit step.

    Exact up to rounding when F is at most quadratic in x.
    """
    eye = np.eye(x.size)
    return np.hstack([(fn(x + e) - fn(x - e)) / 2.0 for e in eye])


def check_product_derivative(rng: np.random.Generator) -> float:
    s, m, n, q = _dim(rng), _dim(rng), _dim(rng), _dim(rng)
    a_fn = _linear_family(rng, s, m, n)
    b_fn = _linear_family(rng, s, n, q)
    x = _vec(rng, s)
    lhs = _jacobian(lambda y: a_fn(y) @ b_fn(y), x)
    rhs = a_fn(x) @ _jacobian(b_fn, x) + _jacobian(a_fn, x) @ np.kron(np.eye(s), b_fn(x))
    return relative_deviation(lhs, rhs)


def check_kron_derivative(rng: np.random.Generator) -> float:
    s, m, n, p, q = (_dim(rng) for _ in range(5))
    a_fn = _linear_family(rng, s, m, n)
    b_fn = _linear_family(rng, s, p, q)
    x = _vec(rng, s)
    lhs = _jacobian(lambda y: np.kron(a_fn(y), b_fn(y)), x)
    a, db, da = a_fn(x), _jacobian(b_fn, x), _jacobian(a_fn, x)
    starred = star(a, db, s) + np.kron(da, b_fn(x))
    swapped = np.kron(a, db) @ np.kron(swap_matrix(s, n), np.eye(q)) + np.kron(da, b_fn(x))
    return max(relative_deviation(lhs, starred), relative_deviation(lhs, swapped))


def check_chain_rule(rng: np.random.Generator) -> float:
    """Derivative tensors of f composed with an affine map of xi."""
    n = _dim(rng)
    sys = PolySystem.from_coefficients(
        n, _vec(rng, n), _mat(rng, n, n), _mat(rng, n, n**2), _mat(rng, n, n**3)
    )
    g, shift = _mat(rng, n, n), _vec(rng, n)
    xi = _vec(rng, n)
    t = float(rng.uniform(-1.0, 1.0))

    def phi(y: np.ndarray) -> np.ndarray:
        return g @ y + shift

    first = _jacobian(lambda y: eval_Df(sys, t, phi(y)), xi)
    second = _jacobian(lambda y: eval_D2f(sys, t, phi(y)), xi)
    return max(
        relative_deviation(first, eval_D2f(sys, t, phi(xi)) @ np.kron(g, np.eye(n))),
        relative_deviation(second, eval_D3f(sys, t) @ np.kron(g, np.eye(n * n))),
    )


def check_block_rules(rng: np.random.Generator) -> float:
    m, n, p, s = _dim(rng), _dim(rng), _dim(rng), _dim(rng)
    a = _mat(rng, m, n)
    bs = [_mat(rng, n, p) for _ in range(s)]
    as_ = [_mat(rng, m, n) for _ in range(s)]
    b = _mat(rng, n, p)
    return max(
        relative_deviation(a @ np.hstack(bs), np.hstack([a @ blk for blk in bs])),
        relative_deviation(np.kron(np.hstack(as_), b), np.hstack([np.kron(blk, b) for blk in as_])),
        relative_deviation(np.hstack(as_) @ np.kron(np.eye(s), b), np.hstack([blk @ b for blk in as_])),
    )


def check_block_scaling(rng: np.random.Generator) -> float:
    m, n, p, q = _dim(rng), _dim(rng), _dim(rng), _dim(rng)
    as_ = [_mat(rng, m, n) for _ in range(p)]
    b = _mat(rng, p, q)
    rhs = sum(np.hstack([b[k, j] * as_[k] for j in range(q)]) for k in range(p))
    return relative_deviation(np.hstack(as_) @ np.kron(b, np.eye(n)), rhs)


def check_swap(rng: np.random.Generator) -> float:
    s, n = _dim(rng), _dim(rng)
    f = swap_matrix(s, n)
    u, v = _vec(rng, s), _vec(rng, n)
    square = swap_matrix(n, n)
    return max(
        relative_deviation(f @ np.kron(u, v), np.kron(v, u)),
        relative_deviation(f.T @ f, np.eye(s * n)),
        relative_deviation(square @ square, np.eye(n * n)),
    )


def check_polarize(rng: np.random.Generator) -> float:
    m, n, q = _dim(rng), _dim(rng), int(rng.integers(1, 4))
    mat = _csym(rng, m, n, q)
    recovered = polarize(lambda x: mat @ kron_pow(x, q), n, q)
    return relative_deviation(recovered, mat)


def check_polarize_composed(rng: np.random.Generator) -> float:
    m, n, q = _dim(rng), _dim(rng), int(rng.integers(1, 4))
    mat = _csym(rng, m, n, q)
    a = _mat(rng, n, n) + n * np.eye(n)
    recovered = polarize(lambda x: mat @ kron_pow(a @ x, q), n, q)
    if not np.any(np.abs(recovered) > 0):
        return float("inf")
    return relative_deviation(recovered, csym_project(mat @ kron_mat_pow(a, q), n, q))


ALGEBRA_CHECKS: list[tuple[str, Check]] = [
    ("kron_product_rule", check_product_rule),
    ("column_rules", check_column_rules),
    ("csym_swap", check_csym_swap),
    ("csym_block_swap", check_csym_block_swap),
    ("symmetric_factor", check_symmetric_factor),
    ("star_powers", check_star_powers),
    ("product_derivative", check_product_derivative),
    ("kron_derivative", check_kron_derivative),
    ("chain_rule", check_chain_rule),
    ("block_rules", check_block_rules),
    ("block_scaling", check_block_scaling),
    ("swap_matrix", check_swap),
]

POLARIZE_CHECKS: list[tuple[str, Check]] = [
    ("polarize_roundtrip", check_polarize),
    ("polarize_composed", check_polarize_composed),
]


def run_selftest(seed: int = 0, instances: int = 500, polarize_instances: int = 200) -> list[PropertyCheck]:
    results = []
    suites = (
        (ALGEBRA_CHECKS, instances, ALGEBRA_TOLERANCE),
        (POLARIZE_CHECKS, polarize_instances, POLARIZE_TOLERANCE),
    )
    for offset, (checks, count, tolerance) in enumerate(suites):
        for index, (name, check) in enumerate(checks):
            rng = np.random.default_rng([seed, offset, index])
            worst = max((check(rng) for _ in range(count)), default=0.0)
            results.append(PropertyCheck(name, count, worst, tolerance))
            if worst > tolerance:
                logger.warning("selftest %s deviates by %.3e (tolerance %.1e)", name, worst, tolerance)
    return results
