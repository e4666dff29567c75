"""Dense matrix core and Kronecker-product machinery.

Every tensor is an ordinary 2-D float array. A vector of length n**k indexes
its components with the first factor most significant, so ``e_i (x) e_j`` sits
at flat position ``i * n + j`` (0-based), matching ``np.kron``.
"""

from __future__ import annotations

import logging
import warnings
from functools import reduce

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor
from scipy.linalg import lu_solve as _lu_solve

from varjet.errors import NonFiniteError, OrderUnsupportedError, ShapeError, SingularMatrixError

logger = logging.getLogger(__name__)

MAX_KRON_ORDER = 4
SINGULAR_PIVOT_RATIO = 1e-13


def as_matrix(value: object, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def as_vector(value: object, name: str = "vector") -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ShapeError(f"{name} must not be empty")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def flat_index(multi_index: tuple[int, ...], n: int) -> int:
    """0-based flat position of ``e_{i1} (x) ... (x) e_{ik}``."""
    pos = 0
    for i in multi_index:
        if not 0 <= i < n:
            raise ShapeError(f"index {i} outside 0..{n - 1}")
        pos = pos * n + i
    return pos


def kron(a: object, b: object) -> np.ndarray:
    return np.kron(as_matrix(a, "A"), as_matrix(b, "B"))


def kron_pow(h: object, k: int) -> np.ndarray:
    if not 1 <= k <= MAX_KRON_ORDER:
        raise OrderUnsupportedError(f"Kronecker order {k} outside 1..{MAX_KRON_ORDER}")
    vec = as_vector(h, "h")
    return reduce(np.kron, [vec] * k)


def kron_mat_pow(a: np.ndarray, k: int) -> np.ndarray:
    if not 1 <= k <= MAX_KRON_ORDER:
        raise OrderUnsupportedError(f"Kronecker order {k} outside 1..{MAX_KRON_ORDER}")
    return reduce(np.kron, [a] * k)


def star(a: object, b: object, blocks: int | None = None) -> np.ndarray:
    """``[A (x) B_1, ..., A (x) B_k]`` for B split into ``blocks`` column blocks.

    ``blocks`` defaults to the column count of A. For a column ``a`` the
    result coincides with ``a (x) B``.
    """
    mat_a = as_matrix(a, "A")
    mat_b = as_matrix(b, "B")
    count = mat_a.shape[1] if blocks is None else blocks
    if count < 1 or mat_b.shape[1] % count != 0:
        raise ShapeError(f"B has {mat_b.shape[1]} columns, not divisible into {count} blocks")
    return np.hstack([np.kron(mat_a, part) for part in np.hsplit(mat_b, count)])


def swap_matrix(s: int, n: int) -> np.ndarray:
    """Permutation F with ``F (u (x) v) = v (x) u`` for u in R^s, v in R^n."""
    if s < 1 or n < 1:
        raise ShapeError(f"swap_matrix needs positive dimensions, got s={s}, n={n}")
    f = np.zeros((s * n, s * n))
    for i in range(s):
        for j in range(n):
            f[j * s + i, i * n + j] = 1.0
    return f


def lu_solve(a: object, b: object) -> np.ndarray:
    mat_a = as_matrix(a, "A")
    rhs = np.asarray(b, dtype=float)
    if mat_a.shape[0] != mat_a.shape[1]:
        raise ShapeError(f"A must be square, got {mat_a.shape}")
    if rhs.shape[0] != mat_a.shape[0]:
        raise ShapeError(f"B has {rhs.shape[0]} rows, A has {mat_a.shape[0]}")

    scale = np.linalg.norm(mat_a, np.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(mat_a)
    smallest_pivot = float(np.min(np.abs(np.diag(lu))))
    if scale == 0.0 or smallest_pivot < SINGULAR_PIVOT_RATIO * scale:
        try:
            condition = float(np.linalg.cond(mat_a, 1)) if scale else float("inf")
        except np.linalg.LinAlgError:
            condition = float("inf")
        raise SingularMatrixError("matrix is numerically singular", condition)
    return _lu_solve((lu, piv), rhs)


def apply_kron_inv_pair(psi: object, v: object) -> np.ndarray:
    """``(Psi (x) Psi) v`` through two n x n products instead of an n^2 x n^2 one."""
    mat = as_matrix(psi, "Psi")
    n = mat.shape[0]
    vec = np.asarray(v, dtype=float).reshape(-1)
    if mat.shape != (n, n) or vec.size != n * n:
        raise ShapeError(f"Psi {mat.shape} does not act on a vector of length {vec.size}")
    return (mat @ vec.reshape(n, n) @ mat.T).reshape(-1)
