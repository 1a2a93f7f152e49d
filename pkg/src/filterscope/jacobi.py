"""Cyclic Jacobi eigendecomposition for small symmetric matrices.

The filter analytics only ever eigendecompose 9x9 Gram matrices, where Jacobi
is simple, accurate for tiny eigenvalues, and has no dimension-dependent
tuning. Convergence is measured by the off-diagonal Frobenius norm relative
to the initial matrix norm.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoConvergence


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt((off * off).sum()))


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvectors as columns, in no
    particular order; callers sort. The input is not modified.

    Raises:
        NoConvergence: off-diagonal mass above ``tol`` after ``max_sweeps``.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    scale = float(np.sqrt((a * a).sum()))
    if scale == 0.0 or n < 2:
        return np.diag(a).copy(), v

    for _ in range(max_sweeps):
        if _off_norm(a) <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # avoid theta**2 overflow
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(theta * theta + 1.0)
                    )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    if _off_norm(a) <= tol * scale:
        return np.diag(a).copy(), v
    raise NoConvergence(f"jacobi did not converge in {max_sweeps} sweeps")
