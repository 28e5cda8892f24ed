"""A-priori approximation schemes: non-integer powers and collocation points.

For a band ``[a, b]`` and a target accuracy ``eps`` the scheme stores powers
``t_j = a + (b - a) t~_j``, where ``t~_j`` are the roots of ``u_N``, and
collocation points ``x_j = exp(-s_j / (b - a))``, where ``s_j`` are the roots
of ``v_N``. A function with singular exponents in ``[a, b]`` is then fitted by
solving ``V c = F`` with ``V[i, j] = x_i^{t_j}`` through a truncated SVD.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import laplace_svd as ls
from . import numerics as nm
from .errors import BranchError, DomainError, ParameterError, PrecisionError
from .targets import Measure, eval_f, total_variation
from .tsvd import TsvdReport, tsvd_solve

#: Double-precision machine epsilon; the default target accuracy and TSVD threshold.
EPS0 = float(np.finfo(float).eps)
SCHEME_VERSION = 1


@dataclass(frozen=True)
class ApproxScheme:
    """Powers and collocation points for one band.

    ``n`` is the singular-value index with ``alpha_n <= eps_target``; ``size``
    is the number of powers (``n`` for the practical rule, ``2n`` for the
    theorem-grade one). ``e1``/``e2`` record the quadrature Gram errors of
    the rules that produced the powers and points, when available.
    """

    band: ls.Band
    n: int
    eps_target: float
    powers: np.ndarray
    collocation: np.ndarray
    alphas: np.ndarray
    size: int = 0
    e1: float | None = field(default=None, compare=False)
    e2: float | None = field(default=None, compare=False)

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=float)
        coll = np.asarray(self.collocation, dtype=float)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "collocation", coll)
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        if self.size == 0:
            object.__setattr__(self, "size", len(powers))
        if len(powers) != self.size or len(coll) != self.size:
            raise ParameterError("powers and collocation points must both have `size` entries")
        if self.size and (np.any(np.diff(powers) <= 0) or powers[0] < self.band.a or powers[-1] > self.band.b):
            raise ParameterError("powers must be strictly increasing inside [a, b]")
        if self.size and (np.any(coll <= 0) or np.any(coll >= 1) or np.any(np.diff(coll) >= 0)):
            raise ParameterError("collocation points must be strictly decreasing inside (0, 1)")

    @property
    def alpha_n(self) -> float:
        return float(self.alphas[self.n])

    def __eq__(self, other):
        if not isinstance(other, ApproxScheme):
            return NotImplemented
        return (
            self.band == other.band
            and self.n == other.n
            and self.size == other.size
            and self.eps_target == other.eps_target
            and np.array_equal(self.powers, other.powers)
            and np.array_equal(self.collocation, other.collocation)
            and np.array_equal(self.alphas, other.alphas)
        )

    __hash__ = None


def powers_from_nodes(band: ls.Band, nodes) -> np.ndarray:
    """``t_j = a + (b - a) t~_j``."""
    return band.a + band.width * np.asarray(nodes, dtype=float)


def collocation_from_nodes(band: ls.Band, nodes) -> np.ndarray:
    """``x_j = exp(-s_j / (b - a))``."""
    return np.exp(-np.asarray(nodes, dtype=float) / band.width)


def scheme_from_rules(svd: ls.LaplaceSvd, n: int, u_rule: ls.SideRule, v_rule: ls.SideRule,
                      eps_target: float = EPS0, diagnostics: bool = True) -> ApproxScheme:
    """Assemble a scheme from the side-U and side-V rules of the same size."""
    if u_rule.side != "U" or v_rule.side != "V" or u_rule.n != v_rule.n:
        raise ParameterError("need a side-U and a side-V rule of the same size")
    e1 = e2 = None
    if diagnostics:
        e1 = float(ls.gram_error(svd, u_rule.n, u_rule))
        e2 = float(ls.gram_error(svd, v_rule.n, v_rule))
    return ApproxScheme(
        band=svd.band,
        n=n,
        eps_target=float(eps_target),
        powers=powers_from_nodes(svd.band, u_rule.nodes_float()),
        collocation=collocation_from_nodes(svd.band, v_rule.nodes_float()),
        alphas=svd.alphas_float()[: n + 1],
        size=u_rule.n,
        e1=e1,
        e2=e2,
    )


def scheme_for_n(svd: ls.LaplaceSvd, n: int, theorem_rule: bool = False, eps_target: float | None = None,
                 diagnostics: bool = True) -> ApproxScheme:
    """Scheme with ``N = n`` powers (or ``N = 2n`` with ``theorem_rule``)."""
    size = 2 * n if theorem_rule else n
    if size > svd.n_max:
        raise PrecisionError(f"a rule of size {size} needs n_max >= {size}; rebuild with more singular functions")
    u_rule = ls.nodes_and_weights(svd, size, "U")
    v_rule = ls.nodes_and_weights(svd, size, "V")
    eps = float(svd.alphas[n]) if eps_target is None else eps_target
    return scheme_from_rules(svd, n, u_rule, v_rule, eps, diagnostics)


def estimate_n(band: ls.Band, eps_target: float) -> int:
    """Rough a-priori guess of ``min{m : alpha_m <= eps}``, used to size the build."""
    per_eps0 = 7.5 * math.log(band.gamma) + 11.0
    return max(4, math.ceil(per_eps0 * math.log(1 / eps_target) / math.log(1 / EPS0)))


def build_svd_for_eps(band: ls.Band, eps_target: float, digits: int = nm.DEFAULT_DIGITS,
                      mesh_size: int | None = None, extra: int = 1) -> tuple[ls.LaplaceSvd, int]:
    """Singular system deep enough to contain ``n = min{m : alpha_m <= eps}`` plus ``extra``.

    Returns the system and ``n``. The depth is grown until ``n`` is reached.
    """
    digits = nm.check_digits(digits)
    if not eps_target >= 10.0 ** (-digits + 20):
        raise ParameterError(f"eps_target {eps_target!r} is below 1e-{digits - 20}, unresolvable at {digits} digits")
    n_max = math.ceil(1.2 * estimate_n(band, eps_target)) + 4
    for _ in range(4):
        svd = ls.build(band, n_max, digits, mesh_size)
        n = ls.n_for_eps(svd.alphas, eps_target)
        if n is not None and n + extra <= n_max:
            return svd, n
        n_max = math.ceil(1.5 * n_max)
    raise PrecisionError(f"alpha_n did not reach {eps_target!r}; increase digits")


def build_scheme(band: ls.Band, eps_target: float = EPS0, digits: int = nm.DEFAULT_DIGITS,
                 mesh_size: int | None = None, theorem_rule: bool = False) -> ApproxScheme:
    """Scheme for ``band`` with ``n = min{m : alpha_m <= eps_target}``.

    The practical rule uses ``N = n`` powers; ``theorem_rule`` doubles that
    (needs enough ``digits`` to resolve ``alpha_{2n}``).
    """
    svd, n = build_svd_for_eps(band, eps_target, digits, mesh_size)
    if theorem_rule and 2 * n > svd.n_max:
        svd = ls.build(band, 2 * n, digits, mesh_size)
    return scheme_for_n(svd, n, theorem_rule, eps_target)


# ---------------------------------------------------------------------------
# Arcs and the collocation matrix


@dataclass(frozen=True)
class Arc:
    """Complex arc ``t -> t + alpha i (t^2 - t)`` from 0 to 1."""

    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ParameterError("arc parameter must be finite")
        object.__setattr__(self, "alpha", float(self.alpha))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.alpha == 0:
            # the straight arc is the real segment; staying real keeps results bitwise equal
            return t
        return t + 1j * self.alpha * (t * t - t)


def _powers_of(z: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """``z_i^{t_j}`` with the principal logarithm and ``0^t = 0``."""
    z = np.asarray(z)
    complex_path = np.iscomplexobj(z)
    if complex_path:
        bad = (z.imag == 0) & (z.real < 0)
        if bad.any():
            raise BranchError(f"points {z[bad]} lie on the branch cut of the principal logarithm")
    zero = z == 0
    with np.errstate(divide="ignore"):
        logz = np.log(np.where(zero, 1, z))
    with np.errstate(under="ignore"):
        out = np.exp(logz[:, None] * powers[None, :])
    out[zero, :] = 0
    return out


def vandermonde(scheme: ApproxScheme, arc: Arc | None = None) -> np.ndarray:
    """``V[i, j] = x_i^{t_j}``, or ``arc(x_i)^{t_j}`` on an arc."""
    z = scheme.collocation if arc is None else arc(scheme.collocation)
    return _powers_of(z, scheme.powers)


def inverse_norm(scheme: ApproxScheme) -> float:
    """``||V^{-1}||_2 = 1 / sigma_min(V)`` for the real collocation matrix."""
    s = nm.svd_double(vandermonde(scheme)).s
    return 1.0 / s[-1] if s[-1] > 0 else math.inf


# ---------------------------------------------------------------------------
# Fitting and evaluation


@dataclass(frozen=True, eq=False)
class FitResult:
    """Coefficients of ``sum_j c_j x^{t_j}`` and the TSVD report of the fit."""

    scheme: ApproxScheme
    coefficients: np.ndarray
    report: TsvdReport
    residual: float
    arc: Arc | None = None


def fit(scheme: ApproxScheme, f_values, eps: float = EPS0, arc: Arc | None = None) -> FitResult:
    """Collocation fit ``c = TSVD_eps(V) F``; ``F[i] = f(x_i)`` (or ``f(arc(x_i))``)."""
    F = np.asarray(f_values)
    if F.shape != (scheme.size,):
        raise ParameterError(f"need {scheme.size} function values, got shape {F.shape}")
    V = vandermonde(scheme, arc)
    c, report = tsvd_solve(V, F, eps)
    return FitResult(scheme, c, report, report.residual_norm, arc)


def fit_measure(scheme: ApproxScheme, measure: Measure, eps: float = EPS0, arc: Arc | None = None) -> FitResult:
    """Fit the function generated by ``measure``, sampled at the collocation points."""
    z = scheme.collocation if arc is None else arc(scheme.collocation)
    return fit(scheme, eval_f(measure, scheme.band, z), eps, arc)


def evaluate(result: FitResult, x):
    """``sum_j c_j x^{t_j}`` for ``x`` in [0, 1] (the arc parameter on arcs)."""
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all() or (x < 0).any() or (x > 1).any():
        raise DomainError("expansions are only evaluated on [0, 1]")
    flat = x.ravel()
    z = flat if result.arc is None else result.arc(flat)
    out = _powers_of(z, result.scheme.powers) @ result.coefficients
    out = out.reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def error_grid(points: int) -> np.ndarray:
    """Uniform grid on [0, 1] including both endpoints."""
    return np.linspace(0.0, 1.0, points)


def sup_error(result: FitResult, target: Measure, grid: int = 2000, exact=None, norm: float | None = None) -> float:
    """``E_N = max_grid |f - f_N| / |sigma|``.

    ``exact`` (values of ``f`` on the grid) and ``norm`` may be passed to
    reuse oracle work across fits.
    """
    xs = error_grid(grid)
    if exact is None:
        z = xs if result.arc is None else result.arc(xs)
        exact = eval_f(target, result.scheme.band, z)
    if norm is None:
        norm = total_variation(target, result.scheme.band)
    return float(np.max(np.abs(np.asarray(exact) - evaluate(result, xs))) / norm)


# ---------------------------------------------------------------------------
# Serialisation


def scheme_to_dict(scheme: ApproxScheme) -> dict:
    return {
        "version": SCHEME_VERSION,
        "a": scheme.band.a,
        "b": scheme.band.b,
        "n": scheme.n,
        "eps": scheme.eps_target,
        "powers": [float(v) for v in scheme.powers],
        "collocation": [float(v) for v in scheme.collocation],
        "alphas": [float(v) for v in scheme.alphas],
    }


def scheme_from_dict(data: dict) -> ApproxScheme:
    try:
        if data["version"] != SCHEME_VERSION:
            raise ParameterError(f"unsupported scheme version {data['version']!r}")
        return ApproxScheme(
            band=ls.Band(data["a"], data["b"]),
            n=int(data["n"]),
            eps_target=float(data["eps"]),
            powers=np.array(data["powers"], dtype=float),
            collocation=np.array(data["collocation"], dtype=float),
            alphas=np.array(data["alphas"], dtype=float),
        )
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed scheme: {exc}") from exc


def dumps_scheme(scheme: ApproxScheme) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(scheme_to_dict(scheme), indent=1) + "\n"


def save_scheme(scheme: ApproxScheme, path) -> None:
    Path(path).write_text(dumps_scheme(scheme))


def load_scheme(path) -> ApproxScheme:
    return scheme_from_dict(json.loads(Path(path).read_text()))


def fit_to_dict(result: FitResult) -> dict:
    c = np.asarray(result.coefficients)
    return {
        "version": SCHEME_VERSION,
        "scheme": scheme_to_dict(result.scheme),
        "arc_alpha": None if result.arc is None else result.arc.alpha,
        "coefficients_re": [float(v) for v in c.real],
        "coefficients_im": [float(v) for v in c.imag] if np.iscomplexobj(c) else None,
        "k": result.report.k,
        "sigma_k": result.report.sigma_k if math.isfinite(result.report.sigma_k) else None,
        "sigma_k1": result.report.sigma_k1,
        "solution_norm": result.report.solution_norm,
        "residual": result.residual,
    }


def fit_from_dict(data: dict) -> FitResult:
    try:
        scheme = scheme_from_dict(data["scheme"])
        c = np.array(data["coefficients_re"], dtype=float)
        if data.get("coefficients_im") is not None:
            c = c + 1j * np.array(data["coefficients_im"], dtype=float)
        arc = None if data.get("arc_alpha") is None else Arc(data["arc_alpha"])
        sigma_k = math.inf if data["sigma_k"] is None else float(data["sigma_k"])
        report = TsvdReport(int(data["k"]), sigma_k, float(data["sigma_k1"]),
                            float(data["solution_norm"]), float(data["residual"]))
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed fit file: {exc}") from exc
    if c.shape != (scheme.size,):
        raise ParameterError("coefficient count does not match the scheme")
    return FitResult(scheme, c, report, report.residual_norm, arc)
