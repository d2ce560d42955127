"""Small inequalities used by the sensitivity bounds, plus the SVD contract."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SvdFactors:
    """A = left @ diag(singular_values) @ right.T with both factors orthogonal."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def svd(A) -> SvdFactors:
    """Full SVD of a square matrix, singular values in descending order."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    u, s, vt = np.linalg.svd(A)
    return SvdFactors(u, s, vt.T)


def lp_norm(x, p: float) -> float:
    """(sum |x_i|^p)^(1/p); a quasi-norm when p < 1."""
    x = np.abs(np.asarray(x, dtype=float))
    top = float(x.max(initial=0.0))
    if np.isinf(p) or top == 0:
        return top
    # scaled by the largest entry so x**p neither underflows nor overflows
    return top * float(np.sum((x / top) ** p) ** (1.0 / p))


def norm_equivalence_bounds(x, a: float, b: float) -> tuple[float, float]:
    """Bracket ||x||_a between ||x||_b and d^(1/a - 1/b) ||x||_b for 0 < a <= b."""
    if a <= 0 or a > b:
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    x = np.asarray(x, dtype=float).ravel()
    nb = lp_norm(x, b)
    inv_b = 0.0 if np.isinf(b) else 1.0 / b
    return nb, x.size ** (1.0 / a - inv_b) * nb


def holder_power_bound(values, z: float) -> tuple[float, float]:
    """Return (sum |a_i|^z, n^(1-z) (sum |a_i|)^z); the first never exceeds the second."""
    if not 0 < z < 1:
        raise ValueError(f"z must lie in (0, 1), got {z}")
    a = np.abs(np.asarray(values, dtype=float).ravel())
    if not np.all(np.isfinite(a)):
        raise ValueError("values must be finite")
    return float(np.sum(a ** z)), float(a.size ** (1 - z) * a.sum() ** z)


def min_pair_index(x) -> int:
    """Index j maximizing |x[0] + x[j]| over all j (0-based, smallest on ties).

    For that j, ||x||_1 <= (3d/2 - 1) |x[0] + x[j]|.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need a vector of dimension at least 2")
    return int(np.argmax(np.abs(x[0] + x)))


def min_pair_ratio_bound(d: int) -> float:
    return 1.5 * d - 1.0


def top_singular_pair_bound(A, i: int) -> tuple[float, float]:
    """Return (||A||_2, ||A (V_1 + V_i)||_2) for the right singular vectors V of A.

    ``i`` is 1-based and must lie in [2, d].
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if not 2 <= i <= d:
        raise ValueError(f"i must lie in [2, {d}], got {i}")
    f = svd(A)
    if f.singular_values[-1] <= f.singular_values[0] * 1e-14:
        raise ValueError("matrix is singular")
    lhs = f.singular_values[0]
    rhs = np.linalg.norm(A @ (f.right[:, 0] + f.right[:, i - 1]))
    return float(lhs), float(rhs)
