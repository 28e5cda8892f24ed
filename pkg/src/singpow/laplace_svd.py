"""Singular system of the shifted truncated Laplace transform.

The operator maps ``L2[0, 1] -> L2[0, inf)`` with kernel ``exp(-x (t + d))``,
``d = 1 / (gamma - 1)``. Right singular functions ``u_i`` and squared
singular values come from a Nystrom discretisation of ``T* T``, whose kernel
is ``1 / (t + s + 2d)``; left singular functions are recovered on demand from
``alpha_i v_i = T u_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import gmpy2
import numpy as np

from . import numerics as nm
from .errors import InvariantError, ParameterError, PrecisionError, RootCountError

Side = Literal["U", "V"]


@dataclass(frozen=True)
class Band:
    """Singularity interval ``[a, b]`` of the exponents."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)) or not 0 < a < b:
            raise ParameterError(f"need 0 < a < b < inf, got a={self.a!r}, b={self.b!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def gamma(self) -> float:
        return self.b / self.a

    @property
    def width(self) -> float:
        return self.b - self.a

    def shift(self, digits: int = nm.DEFAULT_DIGITS) -> gmpy2.mpfr:
        """``d = 1 / (gamma - 1) = a / (b - a)`` at working precision."""
        with nm.precision(digits):
            return gmpy2.mpfr(self.a) / (gmpy2.mpfr(self.b) - gmpy2.mpfr(self.a))

    @property
    def d(self) -> float:
        return float(self.shift())


def default_mesh_size(n_max: int) -> int:
    return max(200, 8 * n_max)


def graded_mesh(band: Band, M: int, digits: int) -> nm.QuadRule:
    """Composite Gauss-Legendre rule on [0, 1], dyadically graded towards 0.

    The first panel is no wider than the shift ``d``, which keeps the kernel's
    pole at ``-2d`` a full panel-width away from every panel; the per-panel
    order is ``ceil(M / panels)``.
    """
    d = band.d
    levels = max(1, math.ceil(math.log2(1 / d)))
    breaks = [0] + [f"{2.0 ** -j!r}" for j in range(levels, -1, -1)]
    order = max(4, math.ceil(M / (len(breaks) - 1)))
    return nm.composite_gauss_legendre(breaks, order, digits)


@dataclass(frozen=True, eq=False)
class LaplaceSvd:
    """Singular values and right singular functions (sampled on ``mesh``).

    ``alphas`` holds ``alpha_0 .. alpha_{n_max}``; ``u_nodes[:, i]`` holds
    ``u_i`` at the mesh nodes.
    """

    band: Band
    digits: int
    mesh: nm.QuadRule
    alphas: np.ndarray
    u_nodes: np.ndarray
    mesh_size: int
    _u_coef: np.ndarray = field(init=False, repr=False)
    _v_coef: np.ndarray = field(init=False, repr=False)
    _d: gmpy2.mpfr = field(init=False, repr=False)

    def __post_init__(self):
        with nm.precision(self.digits):
            wu = self.mesh.weights[:, None] * self.u_nodes
            # u_i(t) = sum_q K(t, s_q) w_q u_i(s_q) / alpha_i^2
            object.__setattr__(self, "_u_coef", wu / (self.alphas * self.alphas)[None, :])
            # alpha_i v_i(x) = sum_q exp(-x (t_q + d)) w_q u_i(t_q)
            object.__setattr__(self, "_v_coef", wu / self.alphas[None, :])
            object.__setattr__(self, "_d", self.band.shift(self.digits))

    @property
    def n_max(self) -> int:
        return len(self.alphas) - 1

    @property
    def d(self) -> gmpy2.mpfr:
        return self._d

    def alphas_float(self) -> np.ndarray:
        return nm.to_float(self.alphas)

    def _check_index(self, i):
        idx = np.atleast_1d(np.asarray(i, dtype=int))
        if idx.size and (idx.min() < 0 or idx.max() > self.n_max):
            raise IndexError(f"singular function index {i} outside 0..{self.n_max}")
        return idx

    # -- evaluation -------------------------------------------------------

    def u_matrix(self, ts, indices, m: int = 0) -> np.ndarray:
        """``u_i^{(m)}(t)`` for every ``t`` in ``ts`` (rows) and ``i`` (columns)."""
        idx = self._check_index(indices)
        if m < 0:
            raise ParameterError("derivative order must be >= 0")
        with nm.precision(self.digits):
            tau = self.mesh.nodes + 2 * self._d
            coef = self._u_coef[:, idx]
            scale = (-1) ** m * math.factorial(m)
            rows = []
            for t in ts:
                r = 1 / (gmpy2.mpfr(t) + tau)
                rows.append((r ** (m + 1)).dot(coef) * scale)
            return np.array(rows, dtype=object).reshape(len(rows), len(idx))

    def u_derivatives(self, t, indices, kmax: int) -> np.ndarray:
        """All derivatives ``0..kmax`` of ``u_i`` at a single ``t``; shape (kmax+1, len(indices))."""
        idx = self._check_index(indices)
        with nm.precision(self.digits):
            r = 1 / (gmpy2.mpfr(t) + self.mesh.nodes + 2 * self._d)
            coef = self._u_coef[:, idx]
            out, p = [], r
            for m in range(kmax + 1):
                out.append(p.dot(coef) * ((-1) ** m * math.factorial(m)))
                p = p * r
            return np.array(out, dtype=object)

    def v_matrix(self, xs, indices, scaled: bool = False) -> np.ndarray:
        """``v_i(x)`` (or ``alpha_i v_i(x)`` when ``scaled``) for each ``x`` and ``i``."""
        idx = self._check_index(indices)
        with nm.precision(self.digits):
            tau = self.mesh.nodes + self._d
            coef = self.mesh.weights[:, None] * self.u_nodes[:, idx] if scaled else self._v_coef[:, idx]
            rows = []
            for x in xs:
                e = np.array([gmpy2.exp(-gmpy2.mpfr(x) * v) for v in tau], dtype=object)
                rows.append(e.dot(coef))
            return np.array(rows, dtype=object).reshape(len(rows), len(idx))

    def integral_u(self, indices) -> np.ndarray:
        """``int_0^1 u_i`` by the mesh rule."""
        idx = self._check_index(indices)
        with nm.precision(self.digits):
            return self.mesh.weights.dot(self.u_nodes[:, idx])

    def integral_v(self, indices) -> np.ndarray:
        """``int_0^inf v_i dx = (1/alpha_i) int_0^1 u_i(t) / (t + d) dt``."""
        idx = self._check_index(indices)
        with nm.precision(self.digits):
            w = self.mesh.weights / (self.mesh.nodes + self._d)
            return w.dot(self.u_nodes[:, idx]) / self.alphas[idx]


def eval_u(svd: LaplaceSvd, i: int, t, m: int = 0) -> gmpy2.mpfr:
    """``m``-th derivative of the right singular function ``u_i`` at ``t``."""
    return svd.u_matrix([t], [i], m)[0, 0]


def eval_v(svd: LaplaceSvd, i: int, x) -> gmpy2.mpfr:
    """Left singular function ``v_i(x) = (1/alpha_i) int_0^1 exp(-x (t+d)) u_i(t) dt``."""
    return svd.v_matrix([x], [i])[0, 0]


# ---------------------------------------------------------------------------
# Construction


def _nystrom(band: Band, n_max: int, digits: int, M: int):
    mesh = graded_mesh(band, M, digits)
    with nm.precision(digits):
        d = band.shift(digits)
        t = mesh.nodes
        sw = np.array([gmpy2.sqrt(w) for w in mesh.weights], dtype=object)
        diag = sw * sw / (2 * t + 2 * d)

        def column(j):
            return sw * sw[j] / (t + t[j] + 2 * d)

        L, _ = nm.pivoted_cholesky(diag, column, gmpy2.mpfr(10) ** (-(digits - 2)), digits)
        if L.shape[1] <= n_max:
            raise PrecisionError(
                f"numerical rank {L.shape[1]} of the discretised operator does not exceed "
                f"n_max={n_max}; increase digits"
            )
        eig = nm.sym_eig(L.T.dot(L), digits)
        lam = eig.eigenvalues[: n_max + 1]
        floor = lam[0] * gmpy2.mpfr(10) ** (-(digits - 14))
        if lam[-1] <= floor:
            raise PrecisionError(
                f"alpha_{n_max}^2 = {float(lam[-1]):.3e} is below the resolvable floor at "
                f"{digits} digits; increase digits or lower n_max"
            )
        Y = L.dot(eig.eigenvectors[:, : n_max + 1]) / np.array([gmpy2.sqrt(v) for v in lam], dtype=object)
        U = Y / sw[:, None]
        alphas = np.array([gmpy2.sqrt(v) for v in lam], dtype=object)
    return mesh, alphas, U


def _fix_signs(svd: LaplaceSvd) -> LaplaceSvd:
    ends = svd.u_matrix([1], range(svd.n_max + 1))[0]
    with nm.precision(svd.digits):
        small = gmpy2.mpfr(10) ** (-(svd.digits // 2))
        flip = []
        for i, e in enumerate(ends):
            ref = e
            if abs(e) < small:
                col = svd.u_nodes[:, i]
                ref = col[max(range(len(col)), key=lambda q: abs(col[q]))]
            flip.append(-1 if ref < 0 else 1)
        U = svd.u_nodes * np.array(flip, dtype=object)[None, :]
    return LaplaceSvd(svd.band, svd.digits, svd.mesh, svd.alphas, U, svd.mesh_size)


def build(
    band: Band,
    n_max: int,
    digits: int = nm.DEFAULT_DIGITS,
    mesh_size: int | None = None,
    check_convergence: bool = True,
) -> LaplaceSvd:
    """Compute ``alpha_0..alpha_{n_max}`` and ``u_0..u_{n_max}`` for ``band``.

    With ``check_convergence`` the singular values are recomputed on a mesh
    1.5x larger and must agree to 10 significant digits.
    """
    digits = nm.check_digits(digits)
    if int(n_max) != n_max or n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {n_max!r}")
    M = default_mesh_size(n_max) if mesh_size is None else int(mesh_size)
    if M < 4 * n_max:
        raise ParameterError(f"mesh size {M} must be at least 4 * n_max = {4 * n_max}")
    mesh, alphas, U = _nystrom(band, n_max, digits, M)
    if check_convergence:
        _, alphas_fine, _ = _nystrom(band, n_max, digits, (3 * M) // 2)
        rel = max(abs(float((x - y) / y)) for x, y in zip(alphas, alphas_fine))
        if rel > 1e-10:
            raise PrecisionError(
                f"singular values change by {rel:.2e} under mesh refinement {M} -> {3 * M // 2}; "
                "increase the mesh size or digits"
            )
    return _fix_signs(LaplaceSvd(band, digits, mesh, alphas, U, M))


def n_for_eps(alphas, eps: float) -> int | None:
    """Smallest ``n`` with ``alpha_n <= eps`` (``None`` if not reached)."""
    for n, a in enumerate(alphas):
        if float(a) <= eps:
            return n
    return None


# ---------------------------------------------------------------------------
# Quadrature rules from the roots of u_n / v_n


@dataclass(frozen=True)
class SideRule:
    """Nodes at the roots of ``u_n`` (side U) or ``v_n`` (side V) with matching weights."""

    side: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    def nodes_float(self) -> np.ndarray:
        return nm.to_float(self.nodes)

    def weights_float(self) -> np.ndarray:
        return nm.to_float(self.weights)


def _u_roots(svd: LaplaceSvd, n: int) -> list:
    if n == 0:
        return []
    d = float(svd.d)
    # uniform in log(t + d): the roots crowd towards t = 0 when d is small
    k = 8 * n + 16
    lo, hi = math.log(d), math.log(1 + d)
    grid = ["0"] + [repr(max(0.0, math.exp(lo + (hi - lo) * j / k) - d)) for j in range(1, k)] + ["1"]

    def f(t):
        return svd.u_matrix([t], [n])[0, 0]

    return nm.find_roots(f, 0, 1, n, svd.digits, grid=grid, method="illinois")


def _v_roots(svd: LaplaceSvd, n: int, max_doublings: int = 12) -> list:
    if n == 0:
        return []

    def f(x):
        return svd.v_matrix([x], [n])[0, 0]

    # the largest root grows roughly like n * log(gamma); overshooting is cheap,
    # undershooting costs a failed scan
    s_max = 20.0 * (n + 1) * max(1.0, math.log(svd.band.gamma))
    last = None
    for _ in range(max_doublings):
        k = 8 * n + 16
        # uniform in log(1 + x): roots spread out geometrically in x
        top = math.log1p(s_max)
        grid = ["0"] + [repr(math.expm1(top * j / k)) for j in range(1, k)] + [repr(s_max)]
        try:
            return nm.find_roots(f, 0, s_max, n, svd.digits, grid=grid, method="illinois", max_refinements=4)
        except RootCountError as exc:
            last = exc
            s_max *= 2
    raise RootCountError(f"v_{n}: {last}")


def nodes_and_weights(svd: LaplaceSvd, n: int, side: Side) -> SideRule:
    """``n``-point rule at the roots of ``u_n`` (side U) or ``v_n`` (side V).

    Weights make the rule exact for ``u_0..u_{n-1}`` on [0, 1] (side U), or
    for ``v_0..v_{n-1}`` on [0, inf) (side V).
    """
    if side not in ("U", "V"):
        raise ParameterError(f"side must be 'U' or 'V', got {side!r}")
    if int(n) != n or n < 1:
        raise ParameterError(f"rule size must be >= 1, got {n!r}")
    if n > svd.n_max:
        raise IndexError(f"rule of size {n} needs singular function {n}; n_max is {svd.n_max}")
    idx = list(range(n))
    if side == "U":
        nodes = _u_roots(svd, n)
        basis = svd.u_matrix(nodes, idx)
        rhs = svd.integral_u(idx)
    else:
        nodes = _v_roots(svd, n)
        basis = svd.v_matrix(nodes, idx)
        rhs = svd.integral_v(idx)
    weights = nm.solve(basis.T, rhs, svd.digits)
    if any(w <= 0 for w in weights):
        raise InvariantError(f"side {side}, n={n}: non-positive quadrature weight")
    return SideRule(side, n, np.array(nodes, dtype=object), weights)


# ---------------------------------------------------------------------------
# Diagnostics


def gram_error(svd: LaplaceSvd, n: int, rule: SideRule, halved: bool = False) -> gmpy2.mpfr:
    """Worst error of ``rule`` on the products ``alpha_i phi_i * alpha_j phi_j``, ``i, j < n``.

    ``phi = u`` (exact integrals ``alpha_i^2 delta_ij``) for side U, ``phi = v``
    for side V. ``halved`` evaluates side V at ``s_k / 2`` with weights
    ``w_k / 2``, the variant for which the product bound is provable.
    """
    idx = list(range(n))
    with nm.precision(svd.digits):
        if rule.side == "U":
            if halved:
                raise ParameterError("the halved-node variant only applies to side V")
            P = svd.u_matrix(rule.nodes, idx) * svd.alphas[idx][None, :]
            w = rule.weights
        else:
            nodes = rule.nodes / 2 if halved else rule.nodes
            P = svd.v_matrix(nodes, idx, scaled=True)
            w = rule.weights / 2 if halved else rule.weights
        G = P.T.dot(w[:, None] * P)
        a2 = svd.alphas[idx] ** 2
        err = gmpy2.mpfr(0)
        for i in range(n):
            for j in range(n):
                e = abs((a2[i] if i == j else 0) - G[i, j])
                if e > err:
                    err = e
    return err


def a_matrix(svd: LaplaceSvd, n: int, rule: SideRule) -> np.ndarray:
    """Interpolation matrix ``A[k, i] = v_i(s_k)`` rounded to double."""
    return nm.to_float(svd.v_matrix(rule.nodes, list(range(n))))


def interp_conditioning(svd: LaplaceSvd, n: int, rule: SideRule) -> tuple[float, float]:
    """``(||A^+||_2, sqrt(2) max_k sqrt(w_k))`` for the side-V rule."""
    if rule.side != "V":
        raise ParameterError("conditioning is defined for side-V rules")
    s = nm.svd_double(a_matrix(svd, n, rule)).s
    pinv = 1.0 / s[-1] if s[-1] > 0 else math.inf
    bound = math.sqrt(2.0) * math.sqrt(float(max(rule.weights)))
    return pinv, bound


def etilde(svd: LaplaceSvd, n: int, rule: SideRule, xs) -> np.ndarray:
    """Per-``i`` worst error of the side-U rule on ``exp(-x (t + d)) u_i(t)`` over ``xs``."""
    if rule.side != "U":
        raise ParameterError("etilde uses the side-U rule")
    idx = list(range(n))
    exact = svd.v_matrix(xs, idx, scaled=True)
    with nm.precision(svd.digits):
        wu = rule.weights[:, None] * svd.u_matrix(rule.nodes, idx)
        out = np.array([gmpy2.mpfr(0)] * n, dtype=object)
        for r, x in enumerate(xs):
            e = np.array([gmpy2.exp(-gmpy2.mpfr(x) * (t + svd.d)) for t in rule.nodes], dtype=object)
            diff = np.abs(exact[r] - e.dot(wu))
            out = np.maximum(out, diff)
    return out


@dataclass(frozen=True)
class SvdDiagnostics:
    """E1 or E2 with the per-function errors and the conditioning of A."""

    side: str
    n: int
    gram: float
    gram_exact: gmpy2.mpfr
    alpha_n: float
    etilde: np.ndarray | None = None
    a_pinv_norm: float | None = None
    a_pinv_bound: float | None = None

    @property
    def threshold_u(self) -> float:
        return self.alpha_n**2

    def thresholds_v(self, a: float) -> tuple[float, float]:
        """E2 thresholds ``alpha_n^2 / (a sqrt n)`` and ``alpha_n^2 / (2 sqrt n)``; both are reported."""
        r = math.sqrt(self.n)
        return self.alpha_n**2 / (a * r), self.alpha_n**2 / (2 * r)


def etilde_grid(n: int, points: int = 50) -> list[float]:
    top = math.log10(200.0 * (n + 1))
    return [0.0] + list(np.logspace(-2, top, points - 1))


def diagnostics(svd: LaplaceSvd, n: int, side: Side, rule: SideRule | None = None) -> SvdDiagnostics:
    rule = rule or nodes_and_weights(svd, n, side)
    g = gram_error(svd, n, rule)
    alpha_n = float(svd.alphas[n])
    if side == "U":
        et = nm.to_float(etilde(svd, n, rule, etilde_grid(n)))
        return SvdDiagnostics("U", n, float(g), g, alpha_n, etilde=et)
    pinv, bound = interp_conditioning(svd, n, rule)
    return SvdDiagnostics("V", n, float(g), g, alpha_n, a_pinv_norm=pinv, a_pinv_bound=bound)


def sup_norms(svd: LaplaceSvd, indices, points: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Grid estimates of ``||u_i||_inf`` on [0, 1] and ``||v_i||_inf`` on [0, inf)."""
    idx = list(indices)
    d = float(svd.d)
    ts = [min(1.0, max(0.0, math.exp(math.log(d) + (math.log(1 + d) - math.log(d)) * j / (points - 1)) - d)) for j in range(points)]
    xs = [0.0] + list(np.expm1(np.linspace(0, math.log1p(400.0 * (max(idx) + 1)), points - 1)[1:]))
    u = np.abs(nm.to_float(svd.u_matrix(ts, idx))).max(axis=0)
    v = np.abs(nm.to_float(svd.v_matrix(xs, idx))).max(axis=0)
    return u, v
