"""Target functions ``f(z) = int_a^b z^mu sigma(mu) dmu`` and their norms.

A :class:`Measure` is a density on ``[a, b]``, a unit point mass, or a
derivative of a point mass. Densities are integrated numerically with a
panelled Gauss-Legendre rule whose panel count is doubled until two
successive values agree; point masses have closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import numerics as nm
from .errors import OracleError, ParameterError
from .laplace_svd import Band, LaplaceSvd

#: Gauss-Legendre order used on every panel of the oracle rule.
PANEL_ORDER = 40
ORACLE_RTOL = 1e-14
MAX_PANELS = 1 << 14

# Extended-precision nodes rounded to double: numpy's leggauss loses ~1e-13
# relative accuracy on the steep exponentials these integrands become.
_GL = nm.gauss_legendre(PANEL_ORDER, -1, 1, nm.MIN_DIGITS)
_GL_X, _GL_W = nm.to_float(_GL.nodes), nm.to_float(_GL.weights)


# ---------------------------------------------------------------------------
# Measures


@dataclass(frozen=True)
class Density:
    """Absolutely continuous measure ``sigma(mu) dmu``; ``func`` must accept arrays."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "user"


@dataclass(frozen=True)
class PointMass:
    """``delta(mu - c)``; generates ``f(z) = z^c``."""

    c: float
    outside_band: bool = False


@dataclass(frozen=True)
class DerivativePointMass:
    """``(-1)^k delta^(k)(mu - c)``; generates ``f(z) = z^c (log z)^k``."""

    c: float
    k: int
    outside_band: bool = False

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"derivative order must be an integer >= 1, got {self.k!r}")


Measure = Density | PointMass | DerivativePointMass


def _sigma1(mu):
    return 1.0 / mu


def _sigma2(mu):
    return np.sin(12.0 * mu)


def _sigma3(mu):
    return np.exp(-10.0 * mu)


def _sigma4(mu):
    return mu * np.sin(mu)


DENSITIES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigma1": _sigma1,
    "sigma2": _sigma2,
    "sigma3": _sigma3,
    "sigma4": _sigma4,
}

TARGET_IDS = ("sigma1", "sigma2", "sigma3", "sigma4", "sigma5", "sigma6")


def named_measure(target: str, band: Band, c: float | None = None, k: int | None = None,
                  allow_outside: bool = False) -> Measure:
    """Measure addressed by id ``"sigma1"`` .. ``"sigma6"``.

    ``sigma5`` is a point mass at ``c`` and ``sigma6`` the order-``k``
    derivative of one; ``c`` defaults to the band midpoint and ``k`` to 1.
    """
    if target in DENSITIES:
        return Density(DENSITIES[target], target)
    if target not in ("sigma5", "sigma6"):
        raise ParameterError(f"unknown target {target!r}; expected one of {', '.join(TARGET_IDS)}")
    c = 0.5 * (band.a + band.b) if c is None else float(c)
    check_support(c, band, allow_outside)
    outside = not band.a <= c <= band.b
    if target == "sigma5":
        return PointMass(c, outside)
    return DerivativePointMass(c, 1 if k is None else int(k), outside)


def check_support(c: float, band: Band, allow_outside: bool = False) -> None:
    if not math.isfinite(c) or c <= 0:
        raise ParameterError(f"point-mass location must be positive, got {c!r}")
    if not allow_outside and not band.a <= c <= band.b:
        raise ParameterError(f"point-mass location {c} outside the band [{band.a}, {band.b}]")


# ---------------------------------------------------------------------------
# Evaluation


def _log(z: np.ndarray) -> np.ndarray:
    """Real log on [0, 1], principal log for complex points; ``log 0 = -inf``."""
    with np.errstate(divide="ignore"):
        return np.log(z)


def _panel_rule(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def _density_integral(func, band: Band, logz: np.ndarray, panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Panelled rule for ``int z^mu sigma(mu) dmu`` and for the same integral of ``|.|``."""
    mu, w = _panel_rule(band.a, band.b, panels)
    sig = np.asarray(func(mu), dtype=float)
    if sig.shape != mu.shape or not np.isfinite(sig).all():
        raise ParameterError("density must return finite values of the same shape as its argument")
    vals = np.empty(logz.shape, dtype=logz.dtype)
    mags = np.empty(logz.shape, dtype=float)
    for start in range(0, logz.size, 256):
        block = slice(start, start + 256)
        with np.errstate(under="ignore"):
            integrand = np.exp(logz[block, None] * mu[None, :]) * (w * sig)[None, :]
        vals[block] = integrand.sum(axis=1)
        mags[block] = np.abs(integrand).sum(axis=1)
    return vals, mags


def eval_f(measure: Measure, band: Band, z, panels: int | None = None):
    """``f(z) = int_a^b z^mu sigma(mu) dmu`` for ``z`` in [0, 1] or on an arc.

    Densities use ``panels`` panels if given, otherwise the panel count is
    doubled from 8 until successive values agree to ``1e-14`` relative to
    ``int |z^mu sigma(mu)| dmu``. ``f(0) = 0`` for every measure.
    """
    z = np.asarray(z)
    shape = z.shape
    z = z.ravel()
    if np.iscomplexobj(z):
        z = z.astype(complex)
    else:
        z = z.astype(float)
        if (z < 0).any() or (z > 1).any() or not np.isfinite(z).all():
            raise ParameterError("real evaluation points must lie in [0, 1]")
    zero = z == 0
    logz = _log(np.where(zero, 1, z))

    base = np.where(zero, 1, z)
    if isinstance(measure, PointMass):
        out = base**measure.c
    elif isinstance(measure, DerivativePointMass):
        out = base**measure.c * logz**measure.k
    elif isinstance(measure, Density):
        if panels is not None:
            out, _ = _density_integral(measure.func, band, logz, int(panels))
        else:
            out = _converged_density(measure, band, logz)
    else:
        raise ParameterError(f"unsupported measure {measure!r}")
    out = np.where(zero, 0, out).reshape(shape)
    return out[()] if out.ndim == 0 else out


def _converged_density(measure: Density, band: Band, logz: np.ndarray) -> np.ndarray:
    panels = 8
    prev, _ = _density_integral(measure.func, band, logz, panels)
    while panels < MAX_PANELS:
        panels *= 2
        cur, mag = _density_integral(measure.func, band, logz, panels)
        if (np.abs(cur - prev) <= ORACLE_RTOL * np.maximum(mag, np.finfo(float).tiny)).all():
            return cur
        prev = cur
    raise OracleError(f"density {measure.name!r}: quadrature did not converge with {MAX_PANELS} panels")


# ---------------------------------------------------------------------------
# Norms


def _adaptive_integral(func, lo: float, hi: float) -> float:
    prev = None
    panels = 1
    while panels <= MAX_PANELS:
        mu, w = _panel_rule(lo, hi, panels)
        cur = float(np.dot(w, func(mu)))
        if prev is not None and abs(cur - prev) <= ORACLE_RTOL * max(abs(cur), np.finfo(float).tiny):
            return cur
        prev = cur
        panels *= 2
    raise OracleError("norm quadrature did not converge")


def total_variation(measure: Measure, band: Band | None = None, samples: int = 4096) -> float:
    """``|sigma|``: ``int_a^b |sigma|`` for densities, 1 for (derivative) point masses.

    The density is split at its sign changes, located on a ``samples``-point
    scan and refined with Brent's method, and integrated piecewise.
    """
    if isinstance(measure, (PointMass, DerivativePointMass)):
        return 1.0
    if band is None:
        raise ParameterError("the total variation of a density needs the band")
    func = measure.func
    mu = np.linspace(band.a, band.b, samples)
    s = np.asarray(func(mu), dtype=float)
    cuts = [band.a]
    for j in range(samples - 1):
        if s[j] == 0 and 0 < j:
            cuts.append(float(mu[j]))
        elif s[j] * s[j + 1] < 0:
            cuts.append(brentq(lambda m: float(func(np.array([m]))[0]), mu[j], mu[j + 1], xtol=1e-15, rtol=1e-15))
    cuts.append(band.b)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            total += abs(_adaptive_integral(func, lo, hi))
    return total


# ---------------------------------------------------------------------------
# C^k norms of the singular functions


@dataclass(frozen=True)
class DerivativeTable:
    """``max_t |(b-a)^-m u_i^(m)(t)|`` on a shared grid, for ``m <= kmax``, ``i <= n_max``.

    Computed once per singular system and reused for every ``n`` and ``k``.
    """

    grid_points: int
    kmax: int
    sups: np.ndarray = field(repr=False)  # shape (kmax + 1, n_max + 1)

    def bound(self, n: int, k: int) -> float:
        if not 1 <= n <= self.sups.shape[1]:
            raise ParameterError(f"n must be in 1..{self.sups.shape[1]}, got {n}")
        if not 0 <= k <= self.kmax:
            raise ParameterError(f"k must be in 0..{self.kmax}, got {k}")
        return float(self.sups[: k + 1, :n].sum(axis=0).max())


def derivative_table(svd: LaplaceSvd, kmax: int, grid_points: int | None = None) -> DerivativeTable:
    """Grid sup-norms of the scaled derivatives of every ``u_i``.

    The default grid has ``50 * n_max`` uniform intervals on [0, 1], which
    contains the endpoints and is at least as fine as a ``50 n`` grid for every
    ``n <= n_max``.
    """
    if kmax < 0:
        raise ParameterError("kmax must be >= 0")
    P = 50 * svd.n_max if grid_points is None else int(grid_points)
    scale = np.array([svd.band.width ** (-m) for m in range(kmax + 1)])
    sups = np.zeros((kmax + 1, svd.n_max + 1))
    idx = range(svd.n_max + 1)
    for p in range(P + 1):
        t = repr(p / P)
        vals = np.abs(np.array(svd.u_derivatives(t, idx, kmax), dtype=float))
        np.maximum(sups, vals * scale[:, None], out=sups)
    return DerivativeTable(P, kmax, sups)


def ck_norm_bound(svd: LaplaceSvd, n: int, k: int, table: DerivativeTable | None = None) -> float:
    """``U_{n,k} = max_{i<n} sum_{m<=k} sup_[a,b] |(b-a)^-m u_i^(m)((t-a)/(b-a))|``.

    The sup runs over a uniform grid of ``50 n`` intervals plus endpoints, or
    over ``table``'s shared grid when one is supplied.
    """
    if table is None:
        P = 50 * n
        scale = np.array([svd.band.width ** (-m) for m in range(k + 1)])
        sups = np.zeros((k + 1, n))
        for p in range(P + 1):
            vals = np.abs(np.array(svd.u_derivatives(repr(p / P), range(n), k), dtype=float))
            np.maximum(sups, vals * scale[:, None], out=sups)
        return float(sups.sum(axis=0).max())
    return table.bound(n, k)
