"""Truncated-SVD solves for ill-conditioned collocation systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import svd_double


@dataclass(frozen=True)
class TsvdReport:
    """Truncation index and the norms needed to check the perturbation bounds.

    ``sigma_k`` is the smallest singular value kept (``inf`` when nothing is
    kept); ``sigma_k1`` the largest one dropped (``0`` when nothing is dropped).
    """

    k: int
    sigma_k: float
    sigma_k1: float
    solution_norm: float
    residual_norm: float


def truncation_index(s: np.ndarray, eps: float) -> int:
    """Largest ``k`` with ``s[k-1] >= eps`` for descending ``s`` (ties are kept)."""
    return int(np.count_nonzero(np.asarray(s) >= eps))


def tsvd_solve(A, b, eps: float) -> tuple[np.ndarray, TsvdReport]:
    """Solve ``A x = b`` through the ``k``-term truncated SVD of ``A``.

    Keeps every singular value ``>= eps`` and returns ``x = V_k S_k^{-1} U_k^* b``
    together with a :class:`TsvdReport`. Real and complex inputs are both
    accepted; the result is complex if either input is.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ParameterError(f"A must be a non-empty matrix, got shape {A.shape}")
    if b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise ParameterError(f"b must be a vector of length {A.shape[0]}, got shape {b.shape}")
    if not np.isfinite(A).all() or not np.isfinite(b).all():
        raise ParameterError("A and b must have finite entries")
    if not (eps > 0 and np.isfinite(eps)):
        raise ParameterError(f"eps must be a positive finite number, got {eps!r}")

    dtype = np.result_type(A.dtype, b.dtype, np.float64)
    A = A.astype(dtype)
    b = b.astype(dtype)
    res = svd_double(A)
    s = res.s
    k = truncation_index(s, eps)
    if k == 0:
        x = np.zeros(A.shape[1], dtype=dtype)
    else:
        coef = (res.u[:, :k].conj().T @ b) / s[:k]
        x = res.vh[:k].conj().T @ coef
    report = TsvdReport(
        k=k,
        sigma_k=float(s[k - 1]) if k > 0 else float("inf"),
        sigma_k1=float(s[k]) if k < len(s) else 0.0,
        solution_norm=float(np.linalg.norm(x)),
        residual_norm=float(np.linalg.norm(A @ x - b)),
    )
    return x, report
