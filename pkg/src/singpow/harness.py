"""Experiment runner: deterministic result tables for every experiment family.

Builds of the singular system and the per-``n`` quadrature rules are the
expensive steps, so a :class:`Workspace` memoises them in memory and, when a
cache directory is configured, on disk (``SINGPOW_CACHE_DIR``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import laplace_svd as ls
from . import numerics as nm
from . import scheme as sc
from . import targets as tg
from .errors import ParameterError

DEFAULT_GAMMAS = (10.0, 50.0, 250.0)
DEFAULT_DIGITS = nm.DEFAULT_DIGITS
DEFAULT_MESH = 400
DENSITY_TARGETS = ("sigma1", "sigma2", "sigma3", "sigma4")
ERROR_GRID = 2000
SWEEP_GRID = 1000
DIST_ORDERS = tuple(range(1, 7))
DEFAULT_ARC_ALPHAS = (0.2, 0.4, 0.8)
CACHE_ENV = "SINGPOW_CACHE_DIR"
CACHE_FORMAT = 1

EXPERIMENTS = (
    "alpha_decay",
    "sing_norms",
    "gram_u",
    "gram_v_condition",
    "vnorm",
    "error_vs_n",
    "c_sweep",
    "dist_orders",
    "arc_error",
    "arc_c_sweep",
    "clustering",
)


# ---------------------------------------------------------------------------
# Cached builds


def default_cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


def depth_for(band: ls.Band, eps: float = sc.EPS0) -> int:
    """Number of singular functions built per band: comfortably past ``n(eps)``."""
    return math.ceil(1.2 * sc.estimate_n(band, eps)) + 4


class Workspace:
    """Memoised singular systems, rules, schemes and derivative tables.

    Everything is keyed by ``(a, b, digits, M, n_max)``; on-disk entries are
    pickles written atomically under the cache directory.
    """

    def __init__(self, cache_dir: str | Path | None = None, digits: int = DEFAULT_DIGITS,
                 mesh_size: int = DEFAULT_MESH, eps: float = sc.EPS0):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        self.digits = nm.check_digits(digits)
        self.mesh_size = int(mesh_size)
        self.eps = float(eps)
        self._memo: dict[str, object] = {}

    # -- storage --------------------------------------------------------

    def _path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(key.encode()).hexdigest()[:24]
        return self.cache_dir / f"{digest}.pkl"

    def _cached(self, key: str, compute):
        if key in self._memo:
            return self._memo[key]
        path = self._path(key)
        value = None
        if path is not None and path.exists():
            with path.open("rb") as fh:
                stored_key, value = pickle.load(fh)
            if stored_key != key:
                value = None
        if value is None:
            value = compute()
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".tmp{os.getpid()}")
                with tmp.open("wb") as fh:
                    pickle.dump((key, value), fh)
                tmp.replace(path)
        self._memo[key] = value
        return value

    def _svd_key(self, band: ls.Band, n_max: int) -> str:
        return f"v{CACHE_FORMAT}|a={band.a!r}|b={band.b!r}|digits={self.digits}|M={self.mesh_size}|n_max={n_max}"

    # -- objects --------------------------------------------------------

    def band(self, gamma: float) -> ls.Band:
        return ls.Band(1.0, float(gamma))

    def svd(self, band: ls.Band, n_max: int | None = None) -> ls.LaplaceSvd:
        n_max = depth_for(band, self.eps) if n_max is None else int(n_max)
        key = self._svd_key(band, n_max)
        return self._cached(key, lambda: ls.build(band, n_max, self.digits, self.mesh_size))

    def n_for(self, svd: ls.LaplaceSvd) -> int:
        """``N_max``: the smallest ``n`` with ``alpha_n <= eps``."""
        n = ls.n_for_eps(svd.alphas, self.eps)
        if n is None or n > svd.n_max - 1:
            raise ParameterError(f"alpha_n does not reach {self.eps!r} within n_max={svd.n_max}")
        return n

    def rule(self, svd: ls.LaplaceSvd, n: int, side: str) -> ls.SideRule:
        key = f"{self._svd_key(svd.band, svd.n_max)}|rule={side}{n}"
        return self._cached(key, lambda: ls.nodes_and_weights(svd, n, side))

    def scheme(self, svd: ls.LaplaceSvd, n: int) -> sc.ApproxScheme:
        key = f"{self._svd_key(svd.band, svd.n_max)}|scheme={n}"
        # below N_max the scheme is the one whose target accuracy is alpha_n itself
        eps = self.eps if n == self.n_for(svd) else float(svd.alphas[n])
        return self._cached(
            key, lambda: sc.scheme_from_rules(svd, n, self.rule(svd, n, "U"), self.rule(svd, n, "V"), eps)
        )

    def derivative_table(self, svd: ls.LaplaceSvd, kmax: int) -> tg.DerivativeTable:
        key = f"{self._svd_key(svd.band, svd.n_max)}|ck={kmax}"
        return self._cached(key, lambda: tg.derivative_table(svd, kmax))

    def system(self, gamma: float) -> tuple[ls.LaplaceSvd, int]:
        svd = self.svd(self.band(gamma))
        return svd, self.n_for(svd)


# ---------------------------------------------------------------------------
# Tables


@dataclass
class ResultTable:
    """Rectangular table with a provenance header."""

    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ParameterError(f"row {r!r} does not match columns {self.columns!r}")

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def where(self, **conditions) -> list[dict]:
        out = []
        for r in self.rows:
            rec = dict(zip(self.columns, r))
            if all(rec[k] == v for k, v in conditions.items()):
                out.append(rec)
        return out


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def _text(v) -> str:
    v = _cell(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    for k, v in table.meta.items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for r in table.rows:
        writer.writerow([_text(v) for v in r])
    return buf.getvalue()


def to_json(table: ResultTable) -> str:
    def clean(v):
        v = _cell(v)
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        return v

    doc = {"meta": table.meta, "columns": list(table.columns), "rows": [[clean(v) for v in r] for r in table.rows]}
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def read_json(text: str) -> ResultTable:
    doc = json.loads(text)
    return ResultTable(doc["columns"], [tuple(r) for r in doc["rows"]], doc["meta"])


def read_csv(text: str) -> ResultTable:
    meta, lines = {}, []
    for line in text.splitlines():
        if line.startswith("# ") and not lines:
            k, _, v = line[2:].partition(": ")
            meta[k] = json.loads(v)
        else:
            lines.append(line)
    rows = list(csv.reader(lines))
    return ResultTable(rows[0], [tuple(r) for r in rows[1:]], meta)


def export(table: ResultTable, fmt: str, path) -> Path:
    """Write ``table`` as CSV (comment-line provenance, then header) or JSON."""
    if fmt == "csv":
        text = to_csv(table)
    elif fmt == "json":
        text = to_json(table)
    else:
        raise ParameterError(f"unknown format {fmt!r}; expected csv or json")
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.

    ``n_range`` is an inclusive ``(lo, hi)`` window applied on top of
    ``1..N_max``; ``c_count`` overrides the number of sweep points (``full``
    selects 1000).
    """

    name: str
    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    targets: tuple[str, ...] | None = None
    n_range: tuple[int, int] | None = None
    arc_alphas: tuple[float, ...] | None = None
    c_count: int | None = None
    full: bool = False
    output: str | None = None
    fmt: str = "csv"
    digits: int = DEFAULT_DIGITS
    mesh_size: int = DEFAULT_MESH
    eps: float = sc.EPS0

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.name!r}; expected one of {', '.join(EXPERIMENTS)}")
        if self.fmt not in ("csv", "json"):
            raise ParameterError(f"unknown format {self.fmt!r}")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not self.gammas or any(not g > 1 for g in self.gammas):
            raise ParameterError("every gamma must exceed 1")
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))
            for t in self.targets:
                if t not in tg.TARGET_IDS:
                    raise ParameterError(f"unsupported target {t!r}")
        if self.arc_alphas is not None:
            object.__setattr__(self, "arc_alphas", tuple(float(a) for a in self.arc_alphas))
        if self.n_range is not None and (len(self.n_range) != 2 or self.n_range[0] > self.n_range[1]):
            raise ParameterError("n_range must be (lo, hi) with lo <= hi")
        if self.c_count is not None and self.c_count < 2:
            raise ParameterError("c_count must be at least 2")

    @property
    def sweep_count(self) -> int:
        if self.c_count is not None:
            return self.c_count
        return 1000 if self.full else 100

    def ns(self, n_max: int) -> list[int]:
        lo, hi = self.n_range or (1, n_max)
        return [n for n in range(max(1, lo), min(hi, n_max) + 1)]

    def provenance(self) -> dict:
        return {
            "tool": f"singpow {__version__}",
            "experiment": self.name,
            "gammas": list(self.gammas),
            "a": 1.0,
            "digits": self.digits,
            "mesh": self.mesh_size,
            "eps": self.eps,
            "targets": list(self.targets) if self.targets is not None else None,
            "n_range": list(self.n_range) if self.n_range is not None else None,
            "arc_alphas": list(self.arc_alphas) if self.arc_alphas is not None else None,
            "c_count": self.sweep_count if self.name in ("c_sweep", "arc_c_sweep") else None,
        }


def c_values(band: ls.Band, count: int, factor: float = 1.5) -> np.ndarray:
    """``count`` log-spaced point-mass locations in ``[a / factor, factor b]``."""
    return np.geomspace(band.a / factor, band.b * factor, count)


class _Oracle:
    """Target values on the error grid and their norms, computed once per (band, target)."""

    def __init__(self):
        self._memo = {}

    def grid_values(self, measure: tg.Measure, band: ls.Band, points: int, arc: sc.Arc | None = None):
        key = (repr(measure), band, points, None if arc is None else arc.alpha)
        if key not in self._memo:
            xs = sc.error_grid(points)
            z = xs if arc is None else arc(xs)
            self._memo[key] = (tg.eval_f(measure, band, z), tg.total_variation(measure, band))
        return self._memo[key]

    def error(self, scheme: sc.ApproxScheme, measure: tg.Measure, points: int, arc: sc.Arc | None = None) -> float:
        exact, norm = self.grid_values(measure, scheme.band, points, arc)
        result = sc.fit_measure(scheme, measure, sc.EPS0, arc)
        return sc.sup_error(result, measure, points, exact=exact, norm=norm)


def _measure(target: str, band: ls.Band, c=None, k=None, allow_outside=False) -> tg.Measure:
    return tg.named_measure(target, band, c=c, k=k, allow_outside=allow_outside)


def run_experiment(spec: ExperimentSpec, workspace: Workspace | None = None) -> ResultTable:
    """Run one experiment family over ``spec.gammas`` and return its table."""
    ws = workspace or Workspace(digits=spec.digits, mesh_size=spec.mesh_size, eps=spec.eps)
    if (ws.digits, ws.mesh_size, ws.eps) != (spec.digits, spec.mesh_size, spec.eps):
        raise ParameterError("workspace settings differ from the experiment spec")
    runner = _RUNNERS[spec.name]
    columns, keys, rows = runner(spec, ws)
    rows = sorted(rows, key=lambda r: tuple(r[:keys]))
    return ResultTable(list(columns), [tuple(_cell(v) for v in r) for r in rows], spec.provenance())


def _alpha_decay(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        for n, a in enumerate(svd.alphas_float()):
            rows.append((g, n, a, n == n_max))
    return ("gamma", "n", "alpha_n", "is_N_max"), 2, rows


def _sing_norms(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        idx = list(range(n_max + 1))
        u, v = ls.sup_norms(svd, idx)
        for i in idx:
            rows.append((g, i, u[i], v[i]))
    return ("gamma", "i", "u_sup", "v_sup"), 2, rows


def _gram_u(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        for n in spec.ns(n_max):
            rule = ws.rule(svd, n, "U")
            e1 = float(ls.gram_error(svd, n, rule))
            a = float(svd.alphas[n])
            et = nm.to_float(ls.etilde(svd, n, rule, ls.etilde_grid(n)))
            rows.append((g, n, a, e1, a * a, e1 / (a * a), float(np.max(et)), float(np.min(rule.weights_float()))))
    return ("gamma", "n", "alpha_n", "E1", "alpha_n_sq", "E1_over_alpha_n_sq", "Etilde_max", "min_weight"), 2, rows


def _gram_v_condition(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        band = svd.band
        for n in spec.ns(n_max):
            rule = ws.rule(svd, n, "V")
            e2 = float(ls.gram_error(svd, n, rule))
            a = float(svd.alphas[n])
            pinv, bound = ls.interp_conditioning(svd, n, rule)
            thr_a, thr_2 = ls.SvdDiagnostics("V", n, e2, None, a).thresholds_v(band.a)
            rows.append((g, n, a, e2, thr_a, thr_2, pinv, bound, float(np.min(rule.weights_float()))))
    return (
        ("gamma", "n", "alpha_n", "E2", "E2_threshold_a", "E2_threshold_2", "A_pinv_norm", "A_pinv_bound", "min_weight"),
        2,
        rows,
    )


def _vnorm(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        for n in spec.ns(n_max):
            s = ws.scheme(svd, n)
            a = float(svd.alphas[n])
            rows.append((g, n, a, sc.inverse_norm(s), 1.0 / a))
    return ("gamma", "n", "alpha_n", "V_inv_norm", "inv_alpha_n"), 2, rows


def _error_vs_n(spec, ws):
    oracle, rows = _Oracle(), []
    targets = spec.targets or DENSITY_TARGETS
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        for t in targets:
            m = _measure(t, svd.band)
            for n in spec.ns(n_max):
                rows.append((g, t, n, float(svd.alphas[n]), oracle.error(ws.scheme(svd, n), m, ERROR_GRID)))
    return ("gamma", "target", "n", "alpha_n", "E_N"), 3, rows


def _c_sweep(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        band = svd.band
        s = ws.scheme(svd, n_max)
        xs = sc.error_grid(SWEEP_GRID)
        for c in c_values(band, spec.sweep_count):
            m = tg.PointMass(float(c), not band.a <= c <= band.b)
            r = sc.fit_measure(s, m)
            e = sc.sup_error(r, m, SWEEP_GRID, exact=tg.eval_f(m, band, xs), norm=1.0)
            rows.append((g, n_max, float(c), e, band.a <= c <= band.b))
    return ("gamma", "n", "c", "E_N", "in_band"), 3, rows


def _dist_orders(spec, ws):
    oracle, rows = _Oracle(), []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        band = svd.band
        table = ws.derivative_table(svd, max(DIST_ORDERS))
        for c in (band.a, 0.5 * (band.a + band.b), band.b):
            for k in DIST_ORDERS:
                m = tg.DerivativePointMass(c, k)
                for n in spec.ns(n_max):
                    e = oracle.error(ws.scheme(svd, n), m, ERROR_GRID)
                    rows.append((g, c, k, n, float(svd.alphas[n]), table.bound(n, k), e))
    return ("gamma", "c", "k", "n", "alpha_n", "U_nk", "E_N"), 4, rows


def _arc_error(spec, ws):
    oracle, rows = _Oracle(), []
    targets = spec.targets or DENSITY_TARGETS
    alphas = spec.arc_alphas or DEFAULT_ARC_ALPHAS
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        for al in alphas:
            arc = sc.Arc(al)
            for t in targets:
                m = _measure(t, svd.band)
                for n in spec.ns(n_max):
                    e = oracle.error(ws.scheme(svd, n), m, ERROR_GRID, arc)
                    rows.append((g, al, t, n, float(svd.alphas[n]), e))
    return ("gamma", "arc_alpha", "target", "n", "alpha_n", "E_N"), 4, rows


def _arc_c_sweep(spec, ws):
    rows = []
    alphas = spec.arc_alphas or DEFAULT_ARC_ALPHAS
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        band = svd.band
        s = ws.scheme(svd, n_max)
        for al in alphas:
            arc = sc.Arc(al)
            z = arc(sc.error_grid(SWEEP_GRID))
            for c in c_values(band, spec.sweep_count):
                m = tg.PointMass(float(c), not band.a <= c <= band.b)
                r = sc.fit_measure(s, m, arc=arc)
                e = sc.sup_error(r, m, SWEEP_GRID, exact=tg.eval_f(m, band, z), norm=1.0)
                rows.append((g, al, n_max, float(c), e, band.a <= c <= band.b))
    return ("gamma", "arc_alpha", "n", "c", "E_N", "in_band"), 4, rows


def _clustering(spec, ws):
    rows = []
    for g in spec.gammas:
        svd, n_max = ws.system(g)
        s = ws.scheme(svd, n_max)
        for j, x in enumerate(s.collocation, start=1):
            rows.append((g, n_max, j, float(x)))
    return ("gamma", "n", "j", "x_j"), 3, rows


_RUNNERS = {
    "alpha_decay": _alpha_decay,
    "sing_norms": _sing_norms,
    "gram_u": _gram_u,
    "gram_v_condition": _gram_v_condition,
    "vnorm": _vnorm,
    "error_vs_n": _error_vs_n,
    "c_sweep": _c_sweep,
    "dist_orders": _dist_orders,
    "arc_error": _arc_error,
    "arc_c_sweep": _arc_c_sweep,
    "clustering": _clustering,
}


def largest_log_gap_index(points: Sequence[float]) -> tuple[int, int]:
    """Index ``j`` (in increasing order) of the widest gap ``log x_{j+1} - log x_j`` and the point count."""
    xs = np.sort(np.asarray(points, dtype=float))
    gaps = np.diff(np.log(xs))
    return int(np.argmax(gaps)), len(xs)


def iter_cells(table: ResultTable, keys: Iterable[str]) -> dict:
    """Group rows by the given key columns."""
    out: dict = {}
    for rec in table.where():
        out.setdefault(tuple(rec[k] for k in keys), []).append(rec)
    return out
