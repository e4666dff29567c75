"""Column-symmetric (c-symmetric) matrices acting on Kronecker powers."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from varjet.errors import OrderUnsupportedError, ShapeError
from varjet.matkron import as_matrix, as_vector, flat_index, kron_pow

logger = logging.getLogger(__name__)

MAX_POLARIZE_ORDER = 3
LINEAR_FORM_SAMPLES = 20
LINEAR_FORM_SEED = 20


@dataclass(frozen=True)
class CSymCheck:
    symmetric: bool
    violation: float

    def __bool__(self) -> bool:
        return self.symmetric


def _as_tensor(m: object, n: int, q: int) -> np.ndarray:
    mat = as_matrix(m, "M")
    if q < 1 or n < 1 or mat.shape[1] != n**q:
        raise ShapeError(f"M has {mat.shape[1]} columns, expected n^q = {n}^{q}")
    return mat.reshape((mat.shape[0],) + (n,) * q)


def _index_perms(q: int) -> list[tuple[int, ...]]:
    return [(0,) + tuple(1 + p for p in perm) for perm in itertools.permutations(range(q))]


def is_csymmetric(m: object, n: int, q: int, tol: float = 1e-12) -> CSymCheck:
    tensor = _as_tensor(m, n, q)
    violation = 0.0
    for axes in _index_perms(q)[1:]:
        violation = max(violation, float(np.max(np.abs(tensor - tensor.transpose(axes)))))
    return CSymCheck(symmetric=violation <= tol, violation=violation)


def csym_project(m: object, n: int, q: int) -> np.ndarray:
    tensor = _as_tensor(m, n, q)
    perms = _index_perms(q)
    averaged = sum(tensor.transpose(axes) for axes in perms) / len(perms)
    return averaged.reshape(tensor.shape[0], n**q)


def polarize(oracle: Callable[[np.ndarray], object], n: int, q: int) -> np.ndarray:
    """Recover the c-symmetric M from ``x -> M x^q``.

    Uses inclusion-exclusion over sums of basis vectors:
    ``q! M(e_i1 (x) ... (x) e_iq) = sum_S (-1)^(q-|S|) oracle(sum_{s in S} e_is)``.
    Nothing is checked about the oracle: a map that is not homogeneous of
    degree q yields a meaningless matrix.
    """
    if not 1 <= q <= MAX_POLARIZE_ORDER:
        raise OrderUnsupportedError(f"polarization order {q} outside 1..{MAX_POLARIZE_ORDER}")
    basis = np.eye(n)
    cache: dict[tuple[int, ...], np.ndarray] = {}

    def value(counts: tuple[int, ...]) -> np.ndarray:
        if counts not in cache:
            point = sum((c * basis[i] for i, c in enumerate(counts) if c), np.zeros(n))
            cache[counts] = as_vector(oracle(point), "oracle value")
        return cache[counts]

    columns: dict[tuple[int, ...], np.ndarray] = {}
    for index in itertools.combinations_with_replacement(range(n), q):
        total = None
        for size in range(1, q + 1):
            for subset in itertools.combinations(range(q), size):
                counts = [0] * n
                for pos in subset:
                    counts[index[pos]] += 1
                term = (-1) ** (q - size) * value(tuple(counts))
                total = term if total is None else total + term
        columns[index] = total / math.factorial(q)

    rows = next(iter(columns.values())).size
    result = np.zeros((rows, n**q))
    for multi in itertools.product(range(n), repeat=q):
        result[:, flat_index(multi, n)] = columns[tuple(sorted(multi))]
    return result


def linear_form_matrix(a: object) -> np.ndarray:
    """``1/2 (a^T (x) E + E (x) a^T)``, the c-symmetric C with ``C h^2 = (a^T h) h``."""
    vec = as_vector(a, "a").reshape(1, -1)
    eye = np.eye(vec.shape[1])
    return 0.5 * (np.kron(vec, eye) + np.kron(eye, vec))


def extract_linear_form(c: object, tol: float = 1e-10) -> np.ndarray | None:
    """Column a with ``C h^2 = (a^T h) h`` for all h, or None.

    Checked on a fixed seeded sample; the answer is a sampled necessary
    condition plus, for c-symmetric C, the exact structural identity.
    """
    mat = as_matrix(c, "C")
    n = mat.shape[0]
    if mat.shape[1] != n * n:
        raise ShapeError(f"C must be n x n^2, got {mat.shape}")

    # C (e_i (x) e_i) = a_i e_i picks the candidate off the diagonal blocks
    a = np.array([mat[i, i * n + i] for i in range(n)])

    rng = np.random.default_rng(LINEAR_FORM_SEED)
    samples = np.vstack([np.eye(n), rng.standard_normal((LINEAR_FORM_SAMPLES, n))])
    for h in samples:
        residual = mat @ kron_pow(h, 2) - (a @ h) * h
        if np.max(np.abs(residual)) > tol * (1.0 + float(h @ h)):
            return None

    if is_csymmetric(mat, n, 2, tol):
        deviation = float(np.max(np.abs(mat - linear_form_matrix(a))))
        if deviation > tol:
            logger.debug("c-symmetric C deviates from the linear form by %s", deviation)
            return None
    return a


def kron_square_root(w: object, tol: float = 1e-10) -> np.ndarray | None:
    """c with ``w = c (x) c``, first nonzero component nonnegative, or None."""
    vec = as_vector(w, "w")
    n = math.isqrt(vec.size)
    if n * n != vec.size:
        raise ShapeError(f"w has length {vec.size}, not a square")
    mat = vec.reshape(n, n)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > tol * scale:
        return None

    eigvals, eigvecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if eigvals[0] < -tol * scale or (n > 1 and abs(eigvals[-2]) > tol * scale):
        return None
    c = math.sqrt(max(eigvals[-1], 0.0)) * eigvecs[:, -1]
    nonzero = np.flatnonzero(np.abs(c) > tol)
    if nonzero.size and c[nonzero[0]] < 0:
        c = -c
    c[np.abs(c) <= tol] = 0.0
    return c


def kron_symmetric_factor(a: object, w: object, tol: float = 1e-10) -> np.ndarray | None:
    """b with ``a (x) b + b (x) a = w`` for a given nonzero a, or None.

    With ``W = reshape(w)`` the relation reads ``a b^T + b a^T = W``; picking a
    pivot ``a_k != 0`` gives ``b = (W e_k - b_k a) / a_k`` with
    ``b_k = W_kk / (2 a_k)``. When w = 0 this returns b = 0.
    """
    vec_a = as_vector(a, "a")
    vec_w = as_vector(w, "w")
    n = vec_a.size
    if vec_w.size != n * n:
        raise ShapeError(f"w has length {vec_w.size}, expected {n * n}")
    k = int(np.argmax(np.abs(vec_a)))
    if abs(vec_a[k]) <= tol:
        raise ShapeError("a must be nonzero")
    mat = vec_w.reshape(n, n)
    b_k = mat[k, k] / (2.0 * vec_a[k])
    b = (mat[:, k] - b_k * vec_a) / vec_a[k]
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(np.outer(vec_a, b) + np.outer(b, vec_a) - mat)) > tol * scale:
        return None
    return b
