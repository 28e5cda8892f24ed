"""Extended-precision numeric substrate.

Scalars are ``gmpy2.mpfr`` values held in numpy object arrays, so vector
arithmetic runs through numpy's object loops while each element operation is
a single MPFR call. Every routine takes a ``digits`` argument and runs inside
its own gmpy2 context; nothing here touches the global context.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import gmpy2
import numpy as np

from .errors import ParameterError, PrecisionError, RootCountError

DEFAULT_DIGITS = 60
MIN_DIGITS = 40

BigReal = gmpy2.mpfr


def bits_for(digits: int) -> int:
    # a few guard bits on top of the decimal request
    return int(math.ceil(digits * math.log2(10))) + 8


def check_digits(digits: int) -> int:
    if int(digits) != digits or digits < MIN_DIGITS:
        raise ParameterError(f"digits must be an integer >= {MIN_DIGITS}, got {digits!r}")
    return int(digits)


@contextmanager
def precision(digits: int) -> Iterator[gmpy2.context]:
    """Run the enclosed block at ``digits`` decimal digits."""
    with gmpy2.context(gmpy2.get_context(), precision=bits_for(digits)) as ctx:
        yield ctx


def big(x, digits: int = DEFAULT_DIGITS) -> gmpy2.mpfr:
    """Convert ``x`` (float, int, str, mpfr) to an mpfr at ``digits``."""
    if isinstance(x, str):
        return gmpy2.mpfr(x, bits_for(digits))
    with precision(digits):
        return gmpy2.mpfr(x)


def big_array(values, digits: int = DEFAULT_DIGITS) -> np.ndarray:
    with precision(digits):
        flat = [gmpy2.mpfr(v) if not isinstance(v, str) else gmpy2.mpfr(v, bits_for(digits))
                for v in np.ravel(np.asarray(values, dtype=object))]
    return np.array(flat, dtype=object).reshape(np.shape(values))


def to_float(values) -> np.ndarray | float:
    """Round mpfr scalars or arrays to the nearest double."""
    if isinstance(values, np.ndarray):
        return np.array([float(v) for v in values.ravel()], dtype=float).reshape(values.shape)
    return float(values)


def to_str(x: gmpy2.mpfr, digits: int) -> str:
    """Decimal string carrying ``digits`` significant digits."""
    return format(x, f".{digits}e")


def mp_sum(values) -> gmpy2.mpfr:
    return gmpy2.fsum(list(values))


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadRule:
    """Quadrature nodes and positive weights on ``(lo, hi)``."""

    nodes: np.ndarray
    weights: np.ndarray
    lo: gmpy2.mpfr
    hi: gmpy2.mpfr
    digits: int

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> gmpy2.mpfr:
        """Apply the rule to function values sampled at ``self.nodes``."""
        with precision(self.digits):
            return mp_sum(self.weights * values)


def _legendre_with_derivative(n: int, x: np.ndarray):
    # three-term recurrence; x is an object array of mpfr
    p0 = np.array([gmpy2.mpfr(1)] * len(x), dtype=object)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    if n == 0:
        return p0, np.zeros_like(p0)
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


def gauss_legendre(n: int, lo=-1, hi=1, digits: int = DEFAULT_DIGITS) -> QuadRule:
    """Gauss-Legendre rule with ``n`` points on ``[lo, hi]`` at ``digits`` digits.

    Nodes are Newton-refined roots of P_n starting from the standard
    Chebyshev-type guesses; weights come from 2 / ((1 - x^2) P_n'(x)^2).
    """
    digits = check_digits(digits)
    if int(n) != n or n < 1:
        raise ParameterError(f"gauss_legendre needs n >= 1, got {n!r}")
    n = int(n)
    with precision(digits):
        lo_b, hi_b = gmpy2.mpfr(lo), gmpy2.mpfr(hi)
        if not lo_b < hi_b:
            raise ParameterError(f"degenerate interval ({lo}, {hi})")
        # only the non-negative half is iterated; the rest follows by symmetry
        half = (n + 1) // 2
        guess = np.cos(np.pi * (4 * np.arange(1, half + 1) - 1) / (4 * n + 2))
        x = np.array([gmpy2.mpfr(float(g)) for g in guess], dtype=object)
        tol = gmpy2.mpfr(10) ** (-digits)
        for _ in range(100):
            p, dp = _legendre_with_derivative(n, x)
            dx = p / dp
            x = x - dx
            if max(abs(v) for v in dx) < tol:
                break
        else:  # pragma: no cover - Newton from these guesses always converges
            raise PrecisionError("Gauss-Legendre Newton iteration did not converge")
        _, dp = _legendre_with_derivative(n, x)
        w = 2 / ((1 - x * x) * dp * dp)
        if n % 2:
            x[-1] = gmpy2.mpfr(0)
        xs = np.concatenate([-x, x[: n // 2][::-1]])
        ws = np.concatenate([w, w[: n // 2][::-1]])
        order = np.argsort(to_float(xs), kind="stable")
        xs, ws = xs[order], ws[order]
        half_len = (hi_b - lo_b) / 2
        mid = (hi_b + lo_b) / 2
        nodes = np.array([mid + half_len * v for v in xs], dtype=object)
        weights = np.array([half_len * v for v in ws], dtype=object)
    return QuadRule(nodes, weights, lo_b, hi_b, digits)


def composite_gauss_legendre(breaks: Sequence, order: int, digits: int = DEFAULT_DIGITS) -> QuadRule:
    """Concatenate ``order``-point Gauss-Legendre panels between ``breaks``."""
    digits = check_digits(digits)
    base = gauss_legendre(order, -1, 1, digits)
    with precision(digits):
        edges = [gmpy2.mpfr(b) if not isinstance(b, str) else gmpy2.mpfr(b, bits_for(digits))
                 for b in breaks]
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if not lo < hi:
                raise ParameterError("panel breaks must be strictly increasing")
            h = (hi - lo) / 2
            m = (hi + lo) / 2
            nodes.append(m + h * base.nodes)
            weights.append(h * base.weights)
    return QuadRule(np.concatenate(nodes), np.concatenate(weights), edges[0], edges[-1], digits)


# ---------------------------------------------------------------------------
# Dense linear algebra


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns


def _as_object_matrix(S, digits: int) -> np.ndarray:
    S = np.asarray(S, dtype=object)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {S.shape}")
    with precision(digits):
        return np.vectorize(gmpy2.mpfr, otypes=[object])(S) if S.size else S.copy()


def sym_eig(S, digits: int = DEFAULT_DIGITS, max_sweeps: int = 60) -> SymEigResult:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Rotations are skipped when |s_pq| <= tol * sqrt(|s_pp s_qq|), the relative
    criterion that keeps small eigenvalues of graded positive definite
    matrices accurate to high relative precision.
    """
    digits = check_digits(digits)
    A = _as_object_matrix(S, digits)
    n = A.shape[0]
    with precision(digits):
        tol = gmpy2.mpfr(10) ** (-digits)
        norm_f = gmpy2.sqrt(mp_sum(v * v for v in A.ravel())) if n else gmpy2.mpfr(0)
        asym = max((abs(A[i, j] - A[j, i]) for i in range(n) for j in range(i + 1, n)), default=0)
        if asym > tol * 1e3 * max(norm_f, 1):
            raise ParameterError("matrix is not symmetric to working precision")
        floor = tol * tol * norm_f
        Q = np.array([[gmpy2.mpfr(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)
        Q = Q.reshape(n, n)
        for _ in range(max_sweeps):
            rotated = False
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0:
                        continue
                    app, aqq = A[p, p], A[q, q]
                    if abs(apq) <= tol * gmpy2.sqrt(abs(app * aqq)) or abs(apq) <= floor:
                        A[p, q] = A[q, p] = gmpy2.mpfr(0)
                        continue
                    rotated = True
                    tau = (aqq - app) / (2 * apq)
                    t = (1 if tau >= 0 else -1) / (abs(tau) + gmpy2.sqrt(1 + tau * tau))
                    c = 1 / gmpy2.sqrt(1 + t * t)
                    s = t * c
                    rp, rq = A[p, :].copy(), A[q, :].copy()
                    A[p, :] = c * rp - s * rq
                    A[q, :] = s * rp + c * rq
                    A[:, p] = A[p, :]
                    A[:, q] = A[q, :]
                    A[p, p] = app - t * apq
                    A[q, q] = aqq + t * apq
                    A[p, q] = A[q, p] = gmpy2.mpfr(0)
                    qp, qq = Q[:, p].copy(), Q[:, q].copy()
                    Q[:, p] = c * qp - s * qq
                    Q[:, q] = s * qp + c * qq
            if not rotated:
                break
        else:
            raise PrecisionError(f"Jacobi did not converge in {max_sweeps} sweeps")
        evals = np.array([A[i, i] for i in range(n)], dtype=object)
    order = sorted(range(n), key=lambda i: evals[i], reverse=True)
    return SymEigResult(evals[order], Q[:, order] if n else Q)


def solve(A, b, digits: int = DEFAULT_DIGITS) -> np.ndarray:
    """Gaussian elimination with partial pivoting at working precision."""
    digits = check_digits(digits)
    A = _as_object_matrix(A, digits)
    n = A.shape[0]
    with precision(digits):
        x = np.array([gmpy2.mpfr(v) for v in np.asarray(b, dtype=object)], dtype=object)
        if x.shape != (n,):
            raise ParameterError("right-hand side length does not match matrix")
        for k in range(n):
            piv = max(range(k, n), key=lambda i: abs(A[i, k]))
            if A[piv, k] == 0:
                raise PrecisionError("singular matrix in extended-precision solve")
            if piv != k:
                A[[k, piv]] = A[[piv, k]]
                x[[k, piv]] = x[[piv, k]]
            if k + 1 < n:
                f = A[k + 1 :, k] / A[k, k]
                A[k + 1 :, k:] -= np.outer(f, A[k, k:])
                x[k + 1 :] -= f * x[k]
        for k in range(n - 1, -1, -1):
            x[k] = (x[k] - A[k, k + 1 :].dot(x[k + 1 :])) / A[k, k] if k + 1 < n else x[k] / A[k, k]
    return x


def pivoted_cholesky(diag: np.ndarray, column: Callable[[int], np.ndarray], rtol, digits: int):
    """Low-rank factor ``L`` with ``S ~= L @ L.T`` for a PSD matrix given by columns.

    Stops once the largest remaining diagonal entry is below ``rtol`` times the
    largest original one. Returns ``(L, pivots)``.
    """
    with precision(digits):
        d = diag.copy()
        m = len(d)
        stop = gmpy2.mpfr(rtol) * max(d)
        cols: list[np.ndarray] = []
        pivots: list[int] = []
        while len(cols) < m:
            j = max(range(m), key=lambda i: d[i])
            if d[j] <= stop:
                break
            col = column(j)
            if cols:
                Lm = np.array(cols, dtype=object).T
                col = col - Lm.dot(Lm[j])
            piv = gmpy2.sqrt(d[j])
            col = col / piv
            for p in pivots:
                col[p] = gmpy2.mpfr(0)
            col[j] = piv
            cols.append(col)
            pivots.append(j)
            d = d - col * col
            for p in pivots:
                d[p] = gmpy2.mpfr(0)
        L = np.array(cols, dtype=object).T if cols else np.zeros((m, 0), dtype=object)
    return L, pivots


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``A = u @ diag(s) @ vh`` in double precision."""

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray


def svd_double(A) -> SvdResult:
    """Double-precision (real or complex) thin SVD via LAPACK."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ParameterError(f"expected a matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix has non-finite entries")
    if A.dtype.kind not in "fc":
        A = A.astype(float)
    if A.size == 0:
        return SvdResult(np.zeros((A.shape[0], 0)), np.zeros(0), np.zeros((0, A.shape[1])))
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    return SvdResult(u, s, vh)


# ---------------------------------------------------------------------------
# Root finding


def _sign(v) -> int:
    return (v > 0) - (v < 0)


def _refine(f, lo, hi, flo, fhi, tol, method: str, max_iter: int):
    # bracket [lo, hi] with f(lo) f(hi) < 0 is kept throughout
    side = 0
    for _ in range(max_iter):
        if hi - lo <= tol * max(abs(lo), abs(hi)):
            break
        if method == "illinois":
            mid = hi - fhi * (hi - lo) / (fhi - flo)
            # stay strictly inside; fall back to bisection if the step stalls
            if not lo < mid < hi:
                mid = (lo + hi) / 2
        else:
            mid = (lo + hi) / 2
        fm = f(mid)
        s = _sign(fm)
        if s == 0:
            return mid
        if s == _sign(flo):
            lo, flo = mid, fm
            if side == -1 and method == "illinois":
                fhi = fhi / 2
            side = -1
        else:
            hi, fhi = mid, fm
            if side == 1 and method == "illinois":
                flo = flo / 2
            side = 1
    return (lo + hi) / 2


def find_roots(
    f: Callable,
    lo,
    hi,
    expected_count: int,
    digits: int = DEFAULT_DIGITS,
    grid: Sequence | None = None,
    method: str = "bisect",
    max_refinements: int = 8,
) -> list:
    """Locate exactly ``expected_count`` simple roots of ``f`` in ``(lo, hi)``.

    Sign changes are bracketed on ``grid`` (default: ``4 * expected_count + 8``
    uniform points), halving the spacing until enough brackets appear, then
    each bracket is refined to relative width ``10**-(digits - 10)``.

    ``method="illinois"`` swaps plain bisection for the bracket-preserving
    Illinois variant of regula falsi, which needs ~10x fewer evaluations.
    """
    digits = check_digits(digits)
    if method not in ("bisect", "illinois"):
        raise ParameterError(f"unknown root refinement method {method!r}")
    if expected_count < 0:
        raise ParameterError("expected_count must be non-negative")
    with precision(digits):
        lo_b, hi_b = gmpy2.mpfr(lo), gmpy2.mpfr(hi)
        if not lo_b < hi_b:
            raise ParameterError(f"degenerate search interval ({lo}, {hi})")
        if grid is None:
            k = 4 * expected_count + 8
            pts = [lo_b + (hi_b - lo_b) * j / k for j in range(k + 1)]
        else:
            pts = [gmpy2.mpfr(p) for p in grid]
        vals = [f(p) for p in pts]
        tol = gmpy2.mpfr(10) ** (-(digits - 10))
        for _ in range(max_refinements + 1):
            brackets = []
            for j in range(len(pts) - 1):
                sa, sb = _sign(vals[j]), _sign(vals[j + 1])
                if sa == 0:
                    if j > 0:  # exact hit at an interior grid point
                        brackets.append(j)
                elif sa * sb < 0:
                    brackets.append(j)
            if len(brackets) >= expected_count:
                break
            new_pts, new_vals = [pts[0]], [vals[0]]
            for j in range(len(pts) - 1):
                mid = (pts[j] + pts[j + 1]) / 2
                new_pts += [mid, pts[j + 1]]
                new_vals += [f(mid), vals[j + 1]]
            pts, vals = new_pts, new_vals
        if len(brackets) != expected_count:
            raise RootCountError(
                f"found {len(brackets)} sign changes, expected {expected_count}; "
                "widen the search interval or refine the scan grid"
            )
        roots = []
        for j in brackets:
            if _sign(vals[j]) == 0:
                roots.append(pts[j])
                continue
            roots.append(_refine(f, pts[j], pts[j + 1], vals[j], vals[j + 1], tol, method, 4 * digits + 200))
    return roots
