"""Replicate orchestration and the quantitative experiments.

Every experiment takes an :class:`ExperimentPlan` and returns an
:class:`ExperimentReport` whose payload is a pure function of the plan.
Wall-clock data lives in the separate ``provenance`` block.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .chemdist import distance_by_id, distance_field_ids, geodesic_ids
from .clusters import finite_radius_tail, hole_tail, label_clusters, nearest_giant_id
from .errors import DataQualityError, DomainError, InsufficientDataError, LawViolation, RangeError
from .fitting import line_fit, mean_stderr, tail_rate_fit, variance_stderr
from .lattice import LatticeBox, RenormScheme, derive_seed, sample_configuration
from .renorm import efron_stein_vminus, renorm_distance_ids, renorm_layout
from .subadd import (MAX_EXCLUDED, HTable, NormEstimate, QxMembership, build_norm, check_skeleton,
                     classify_increments, estimate_h_ball, estimate_mu, extract_skeleton, gap_check,
                     gap_regressor, l1, l1_norm, mu_from_samples, run_replicates, box_for,
                     support_functional)

__all__ = ["ExperimentPlan", "ExperimentReport", "Verdict", "KINDS", "run_experiment",
           "variance_scaling", "tail_profile", "mean_gap", "shape_corridor", "renorm_agreement",
           "efron_stein_experiment", "skeleton_count", "cluster_tails", "tail_rate_fit",
           "synthetic_moments", "synthetic_laplace", "synthetic_means"]

DEFAULT_TOLERANCES = {
    "variance": {"exponent_below": 2.0, "level": 0.95},
    "tail": {"r2_min": 0.8},
    "gap": {"z": 1.96},
    "shape": {"violation_max": 0.01},
    "renorm": {"n_se": 2.0},
    "efron-stein": {"n_se": 3.0},
    "skeleton": {"exceed_max": 0.05, "indeterminate_max": 0.20},
    "cluster-tails": {"r2_min": 0.9},
}


# ---------------------------------------------------------------- plans

@dataclass
class ExperimentPlan:
    """Everything an experiment needs; serializable to and from JSON.

    ``hook`` replaces sampled ``D*`` cells by synthetic samples
    ``hook(n, replicates, seed)``; it is a test device and is not serialized.
    """

    kind: str
    d: int = 2
    p: float = 0.7
    direction: tuple[int, ...] | None = None
    ns: tuple[int, ...] = ()
    n: int | None = None
    ts: tuple[int, ...] = ()
    replicates: int = 500
    seed: int = 0
    t: int = 4
    K: float | None = None
    rho: float = 4.0
    resamples: int = 10
    margin: int = 16
    side: int | None = None
    C: float | None = None
    M: float = 8.0
    C_prime: float | None = None
    window: tuple[float, float] | None = None
    grid_points: int = 16
    norm: list | None = None
    mu_ns: tuple[int, ...] = (16, 32, 64, 128)
    mu_replicates: int = 100
    h_replicates: int = 200
    tolerances: dict = field(default_factory=dict)
    workers: int = 1
    out: str | None = None
    csv: str | None = None
    hook: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.direction is None:
            self.direction = tuple(int(i == 0) for i in range(self.d))
        self.direction = tuple(int(c) for c in self.direction)
        self.ns = tuple(int(v) for v in self.ns)
        self.ts = tuple(int(v) for v in self.ts)
        self.mu_ns = tuple(int(v) for v in self.mu_ns)
        if self.window is not None:
            self.window = (float(self.window[0]), float(self.window[1]))
        tol = dict(DEFAULT_TOLERANCES[self.kind])
        tol.update(self.tolerances)
        self.tolerances = tol
        self.validate()

    def validate(self) -> None:
        if self.d < 1 or len(self.direction) != self.d or not any(self.direction):
            raise DomainError("direction must be a nonzero vector of length d")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        for name in ("ns", "ts", "mu_ns"):
            seq = getattr(self, name)
            if any(b <= a for a, b in zip(seq, seq[1:])) or any(v < 1 for v in seq):
                raise DomainError(f"{name} must be strictly increasing positive integers")
        if self.replicates < 30:
            raise InsufficientDataError("at least 30 replicates per cell are required")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "hook":
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> "ExperimentPlan":
        names = {f.name for f in dataclasses.fields(cls)} - {"hook"}
        unknown = set(doc) - names - {"schema"}
        if unknown:
            raise DomainError(f"unknown plan fields: {sorted(unknown)}")
        kw = {k: v for k, v in doc.items() if k != "schema"}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        for k in ("direction", "ns", "ts", "mu_ns", "window"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps({"schema": "percolab.plan/1", **self.to_dict()}, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- reports

@dataclass
class Verdict:
    """Outcome of one named criterion.

    ``status`` is ``pass``, ``fail``, ``degenerate`` or ``inconclusive``.
    """

    name: str
    status: str
    value: object
    tolerance: str
    n: int | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else ("inf" if math.isinf(x) and x > 0 else
                                           ("-inf" if math.isinf(x) else x))
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class ExperimentReport:
    kind: str
    plan: dict
    cells: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    excluded: int = 0
    series: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.status in ("pass", "degenerate") for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def payload(self) -> dict:
        """The reproducible part of the report (everything except provenance)."""
        return _clean({
            "schema": "percolab.report/1",
            "kind": self.kind,
            "plan": self.plan,
            "cells": self.cells,
            "fits": self.fits,
            "verdicts": [dataclasses.asdict(v) for v in self.verdicts],
            "excluded": self.excluded,
        })

    def payload_json(self) -> str:
        return json.dumps(self.payload(), indent=2, sort_keys=True) + "\n"

    def to_dict(self) -> dict:
        return {**self.payload(), "provenance": _clean(self.provenance)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, directory) -> list[Path]:
        """One CSV per series (``cells`` plus any extra series); header row, UTF-8, LF."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        tables = {"cells": self.cells, **self.series}
        for name, rows in tables.items():
            if not rows:
                continue
            path = directory / f"{self.kind}_{name}.csv"
            header = list(rows[0])
            tmp = path.with_name(path.name + ".tmp")
            with tmp.open("w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, header, lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: _clean(row.get(k)) for k in header})
            tmp.replace(path)
            written.append(path)
        return written


# ---------------------------------------------------------------- synthetic hooks

def synthetic_moments(var_fn: Callable, mean_fn: Callable = lambda n: float(n)) -> Callable:
    """Hook producing samples whose sample mean and variance equal ``mean_fn(n)``, ``var_fn(n)``."""
    def hook(n, replicates, seed):
        z = np.random.default_rng(seed).standard_normal(replicates)
        z = (z - z.mean()) / z.std(ddof=1)
        return mean_fn(n) + math.sqrt(var_fn(n)) * z
    hook.__name__ = "synthetic_moments"
    return hook


def synthetic_laplace(lam: float, mean_fn: Callable = lambda n: 1.3 * n) -> Callable:
    """Hook with ``(D - mean) / sqrt(n)`` Laplace of rate ``lam``, so ``|.|`` is Exp(``lam``)."""
    def hook(n, replicates, seed):
        rng = np.random.default_rng(seed)
        return mean_fn(n) + math.sqrt(n) * rng.laplace(0.0, 1.0 / lam, replicates)
    hook.__name__ = "synthetic_laplace"
    return hook


def synthetic_means(h_fn: Callable) -> Callable:
    """Hook returning the constant sample ``h_fn(n)``."""
    def hook(n, replicates, seed):
        return np.full(replicates, float(h_fn(n)))
    hook.__name__ = "synthetic_means"
    return hook


# ---------------------------------------------------------------- shared sampling

_CELLS: dict = {}
_MUS: dict = {}


def clear_caches() -> None:
    _CELLS.clear()
    _MUS.clear()


def dstar_cell(plan: ExperimentPlan, n: int) -> tuple[np.ndarray, int, list]:
    """Samples of ``D*(0, n y)``, the excluded count and per-replicate digests.

    Cells are cached on their defining parameters so experiments built on
    the same cells (variance and mean gap) sample once.
    """
    if plan.hook is not None:
        s = np.asarray(plan.hook(n, plan.replicates, derive_seed(plan.seed, n)), dtype=float)
        return s, 0, []
    key = (plan.d, plan.p, plan.direction, n, plan.replicates, plan.seed, plan.margin)
    if key in _CELLS:
        return _CELLS[key]
    box = box_for(plan.direction, n, plan.d, plan.margin)
    target = tuple(n * c for c in plan.direction)

    def one(r):
        config = sample_configuration(box, plan.p, derive_seed(plan.seed, n, r))
        lab = label_clusters(config)
        if not lab.valid:
            return None, config.digest()
        mask = lab.giant_mask
        a = nearest_giant_id(lab, box.vertex_id([0] * plan.d), mask)
        b = nearest_giant_id(lab, box.vertex_id(target), mask)
        return distance_by_id(config, a, b), None

    res = run_replicates(one, plan.replicates, plan.workers)
    samples = np.array([v for v, _ in res if v is not None], dtype=float)
    bad = [dg for v, dg in res if v is None]
    out = (samples, len(bad), bad)
    _CELLS[key] = out
    return out


def _check_excluded(excluded: int, total: int) -> None:
    if total and excluded / total > MAX_EXCLUDED:
        raise DataQualityError(f"{excluded}/{total} replicates lacked a valid infinite-cluster proxy")


def _cells(plan: ExperimentPlan, ns) -> tuple[list, list, int]:
    samples, cells, excluded = [], [], 0
    for n in ns:
        s, ex, _ = dstar_cell(plan, n)
        _check_excluded(ex, plan.replicates)
        excluded += ex
        samples.append(s)
        cells.append({"n": n, "count": int(s.size), "excluded": ex, "mean": float(s.mean()),
                      "stderr": mean_stderr(s), "variance": float(s.var(ddof=1)),
                      "variance_stderr": variance_stderr(s)})
    return samples, cells, excluded


def signed_permutations(y) -> list[tuple[int, ...]]:
    out = set()
    for perm in itertools.permutations(y):
        for signs in itertools.product((1, -1), repeat=len(y)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return sorted(out)


def _base_directions(d: int) -> list[tuple[int, ...]]:
    dirs = [tuple(int(i == 0) for i in range(d))]
    if d >= 2:
        dirs.append(tuple(int(i < 2) for i in range(d)))
    if d >= 3:
        dirs.append(tuple([1] * d))
    return dirs


def plan_norm(plan: ExperimentPlan) -> NormEstimate:
    """Norm from ``plan.norm`` rows, the exact l1 norm at ``p = 1``, or fresh estimates.

    Estimated directions are spread over their signed permutations, which
    the law of the percolation is invariant under.
    """
    if plan.norm:
        return build_norm([(tuple(r[0]), float(r[1]), tuple(r[2]) if len(r) > 2 else (r[1], r[1]))
                           for r in plan.norm])
    if plan.p == 1.0:
        return l1_norm(plan.d)
    rows = []
    for y in _base_directions(plan.d):
        key = (plan.d, plan.p, y, plan.mu_ns, plan.mu_replicates, plan.seed, plan.margin)
        if key not in _MUS:
            _MUS[key] = estimate_mu(y, plan.mu_ns, plan.p, plan.mu_replicates,
                                    derive_seed(plan.seed, 0x3B, *y), plan.margin, plan.workers)
        est = _MUS[key]
        rows.extend((z, est.mu, est.ci) for z in signed_permutations(y))
    return build_norm(rows)


def _report(plan: ExperimentPlan, started: float, **kw) -> ExperimentReport:
    rep = ExperimentReport(plan.kind, plan.to_dict(), **kw)
    rep.provenance = {"version": __version__, "seed": plan.seed,
                      "synthetic": getattr(plan.hook, "__name__", None),
                      "runtime_s": round(time.perf_counter() - started, 3),
                      "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **rep.provenance}
    return rep


# ---------------------------------------------------------------- experiments

def variance_scaling(plan: ExperimentPlan) -> ExperimentReport:
    """Power exponent ``a`` in ``Var D*(0, n y) ~ A n^a log(1 + n)``.

    The verdict uses the log-log slope of ``Var / log(1 + n)``, which
    recovers ``a = 1`` exactly on ``n log(1 + n)``; the raw log-log slope of
    ``Var`` is reported alongside.
    """
    t0 = time.perf_counter()
    if len(plan.ns) < 4:
        raise InsufficientDataError("variance scaling needs at least 4 n-cells")
    samples, cells, excluded = _cells(plan, plan.ns)
    ns = np.asarray(plan.ns, dtype=float)
    var = np.array([c["variance"] for c in cells])
    for c in cells:
        c["var_over_nlogn"] = c["variance"] / (c["n"] * math.log1p(c["n"]))
    tol = plan.tolerances
    if np.all(var == 0) or np.any(var <= 0):
        v = Verdict("variance_exponent_below_2", "degenerate", None, f"< {tol['exponent_below']}",
                    int(sum(c["count"] for c in cells)), "zero variance in some cell; fit skipped")
        return _report(plan, t0, cells=cells, verdicts=[v], excluded=excluded)
    fit = line_fit(np.log(ns), np.log(var), tol["level"])
    corr = line_fit(np.log(ns), np.log(var / np.log1p(ns)), tol["level"])
    fits = {"exponent": corr.slope, "exponent_ci": list(corr.ci), "exponent_stderr": corr.slope_stderr,
            "r2": corr.r2, "raw_exponent": fit.slope, "raw_exponent_ci": list(fit.ci)}
    v = Verdict("variance_exponent_below_2", "pass" if corr.ci[1] < tol["exponent_below"] else "fail",
                corr.ci[1], f"upper {tol['level']:.0%} CI bound of a < {tol['exponent_below']}",
                int(sum(c["count"] for c in cells)))
    return _report(plan, t0, cells=cells, fits=fits, verdicts=[v], excluded=excluded)


def tail_profile(plan: ExperimentPlan) -> ExperimentReport:
    """Exponential decay of ``P(|D* - mean| / sqrt(n) > x)`` over a window of ``x``."""
    t0 = time.perf_counter()
    if plan.n is None:
        raise DomainError("tail profile needs a single n")
    if plan.replicates < 2000:
        raise InsufficientDataError("tail profile needs at least 2000 replicates")
    n = plan.n
    s, ex, _ = dstar_cell(plan, n)
    _check_excluded(ex, plan.replicates)
    lo, hi = plan.window or (1 + math.log(n), math.sqrt(n))
    cell = {"n": n, "count": int(s.size), "excluded": ex, "mean": float(s.mean()),
            "stderr": mean_stderr(s), "window_lo": lo, "window_hi": hi}
    if np.ptp(s) == 0:
        v = Verdict("tail_exponential", "degenerate", None, f"slope < 0 and r2 >= {plan.tolerances['r2_min']}",
                    int(s.size), "all mass at the mean")
        return _report(plan, t0, cells=[cell], verdicts=[v], excluded=ex)
    z = np.abs(s - s.mean()) / math.sqrt(n)
    grid = np.linspace(lo, hi, plan.grid_points)
    counts = (z[None, :] > grid[:, None]).sum(axis=1)
    series = {"survival": [{"x": float(x), "exceed_count": int(c), "n_samples": int(s.size)}
                           for x, c in zip(grid, counts)]}
    sensitivity = {}
    for frac in (0.5, 0.75):
        g = np.linspace(lo * frac, hi, plan.grid_points)
        try:
            f = tail_rate_fit(z, g)
            sensitivity[f"{lo * frac:.3f}"] = {"slope": -f.rate, "r2": f.r2}
        except InsufficientDataError as err:
            sensitivity[f"{lo * frac:.3f}"] = {"error": str(err)}
    fit = tail_rate_fit(z, grid, min_exceed=10, min_points=5)
    slope = -fit.rate
    ok = slope < 0 and fit.r2 >= plan.tolerances["r2_min"]
    fits = {"slope": slope, "stderr": fit.stderr, "r2": fit.r2, "n_points": fit.n_points,
            "lower_cut_sensitivity": sensitivity}
    v = Verdict("tail_exponential", "pass" if ok else "fail", {"slope": slope, "r2": fit.r2},
                f"slope < 0 and r2 >= {plan.tolerances['r2_min']}", int(s.size))
    return _report(plan, t0, cells=[cell], fits=fits, verdicts=[v], excluded=ex, series=series)


def _direction_mu(plan: ExperimentPlan, ns, samples):
    if plan.norm:
        norm = plan_norm(plan)
        mu = norm(plan.direction)
        return mu, mu * norm.relative_halfwidth, None
    if plan.p == 1.0 and plan.hook is None:
        return float(l1(plan.direction)), 0.0, None
    est = mu_from_samples(plan.direction, ns, samples, seed=plan.seed)
    return est.mu, est.half_width, est


def mean_gap(plan: ExperimentPlan) -> ExperimentReport:
    """``g(n) = h(n y)/n - mu(y)``: nonnegativity and boundedness of ``g / (sqrt(n|y|) log(1+n|y|)/n)``."""
    t0 = time.perf_counter()
    samples, cells, excluded = _cells(plan, plan.ns)
    mu, mu_hw, est = _direction_mu(plan, plan.ns, samples)
    z = plan.tolerances["z"]
    norm_y = l1(plan.direction)
    reg = gap_regressor(plan.ns, norm_y)
    g = np.array([c["mean"] / c["n"] for c in cells]) - mu
    se = np.array([c["stderr"] / c["n"] for c in cells])
    ci = mu_hw + z * se
    r = np.where(reg > 0, g / reg, 0.0)
    for c, gi, ci_i, ri in zip(cells, g, ci, r):
        c.update(gap=gi, gap_ci=ci_i, normalized_gap=ri)
    c_fit = float(max(0.0, np.dot(g, reg) / np.dot(reg, reg)))
    fits = {"mu": mu, "mu_halfwidth": mu_hw, "gap_constant": c_fit, "normalized_gap_max": float(r.max())}
    if est is not None:
        fits["mu_warnings"] = est.warnings
    n_tot = int(sum(c["count"] for c in cells))
    verdicts = []
    if mu_hw > 0 and mu_hw > np.max(np.abs(g)):
        verdicts.append(Verdict("gap_nonnegative", "inconclusive", float(g.min()), f">= -CI (z={z})",
                                n_tot, "mu CI wider than every observed gap"))
    else:
        verdicts.append(Verdict("gap_nonnegative", "pass" if np.all(g >= -ci) else "fail",
                                float(np.min(g + ci)), f"g(n) >= -CI (z={z}) for every n", n_tot))
    if np.all(g == 0):
        verdicts.append(Verdict("normalized_gap_bounded", "degenerate", 0.0, "no growth in n", n_tot,
                                "gap identically zero"))
    elif len(plan.ns) >= 3:
        fit = line_fit(np.log(plan.ns), r)
        fits["normalized_gap_trend"] = {"slope": fit.slope, "ci": list(fit.ci)}
        verdicts.append(Verdict("normalized_gap_bounded", "pass" if fit.ci[0] <= 0 else "fail",
                                fit.ci[0], "95% CI of trend in log n includes or lies below 0", n_tot))
    return _report(plan, t0, cells=cells, fits=fits, verdicts=verdicts, excluded=excluded)


def corridor_fractions(mu_vals, dist, t, C) -> tuple[float, int, int]:
    """Violation fraction of the two inclusions at radius ``t`` with constant ``C``.

    ``mu_vals`` and ``dist`` are over giant vertices.  The denominator is the
    giant vertices inside the outer norm ball.
    """
    s = math.sqrt(t) * math.log(t)
    inner = (mu_vals <= t - C * s) & (dist > t)
    outer = (dist <= t) & (mu_vals > t + C * s)
    denom = int(np.count_nonzero(mu_vals <= t + C * s))
    bad = int(np.count_nonzero(inner | outer))
    return (bad / denom if denom else 0.0), bad, denom


def fit_corridor_constant(mu_vals, dist, t) -> float:
    """Smallest ``C >= 0`` with no violation of either inclusion at radius ``t``."""
    s = math.sqrt(t) * math.log(t)
    need = [0.0]
    out = dist <= t
    if np.any(out):
        need.append(float(np.max((mu_vals[out] - t) / s)))
    inn = dist > t
    if np.any(inn):
        # strict: C must exceed (t - mu) / s
        need.append(float(np.max((t - mu_vals[inn]) / s)) * (1 + 1e-9) + 1e-12)
    return max(need)


def shape_corridor(plan: ExperimentPlan) -> ExperimentReport:
    """Sandwich of the chemical ball from ``0*`` between two norm balls on one configuration."""
    t0 = time.perf_counter()
    if plan.side is None or len(plan.ts) < 2:
        raise DomainError("shape corridor needs side and at least two radii")
    box = LatticeBox.centered(plan.d, plan.side)
    config = sample_configuration(box, plan.p, plan.seed)
    lab = label_clusters(config)
    if not lab.valid:
        raise DataQualityError(f"configuration {config.digest()} has no crossing cluster")
    norm = plan_norm(plan)
    mask = lab.giant_mask
    src = nearest_giant_id(lab, box.vertex_id([0] * plan.d), mask)
    dist_all = distance_field_ids(config, src)
    coords = box.coords
    mu_all = norm.evaluate(coords)
    gm = np.flatnonzero(mask)
    dist, mu_vals = dist_all[gm].astype(float), mu_all[gm]
    ts = plan.ts
    C = plan.C if plan.C is not None else fit_corridor_constant(mu_vals, dist, ts[0])
    t_max = ts[-1]
    reach = t_max + C * math.sqrt(t_max) * math.log(t_max)
    edge = np.any((coords == box.lower) | (coords == box.upper), axis=1)
    if mu_all[edge].min() <= reach or np.any((dist_all[edge] >= 0) & (dist_all[edge] <= t_max)):
        raise RangeError(f"radius {t_max} (+ corridor) reaches the box boundary; enlarge side")
    cells, verdicts = [], []
    tol = plan.tolerances["violation_max"]
    for t in ts:
        frac, bad, denom = corridor_fractions(mu_vals, dist, t, C)
        frac0, bad0, _ = corridor_fractions(mu_vals, dist, t, 0.0)
        cells.append({"t": t, "violations": bad, "denominator": denom, "fraction": frac,
                      "fraction_C0": frac0, "ball_size": int(np.count_nonzero(dist <= t))})
        if t > ts[0]:
            verdicts.append(Verdict(f"corridor_t{t}", "pass" if frac <= tol else "fail", frac,
                                    f"violation fraction <= {tol}", denom))
    fits = {"C": C, "C_fitted_at": ts[0], "C_source": "plan" if plan.C is not None else "fit",
            "norm_facets": norm.facets.tolist()}
    rep = _report(plan, t0, cells=cells, fits=fits, verdicts=verdicts)
    rep.provenance["digests"] = [config.digest()]
    return rep


def renorm_agreement(plan: ExperimentPlan) -> ExperimentReport:
    """Frequency of ``D^t(0*, y*) != D*(0, y)`` per scale, with domination checked on every replicate."""
    t0 = time.perf_counter()
    if not plan.ts or plan.n is None:
        raise DomainError("renorm agreement needs ts and n")
    n = plan.n
    box = box_for(plan.direction, n, plan.d, plan.margin)
    target = tuple(n * c for c in plan.direction)
    layouts = [renorm_layout(RenormScheme(t, plan.K, plan.rho), box) for t in plan.ts]

    def one(r):
        config = sample_configuration(box, plan.p, derive_seed(plan.seed, n, r))
        lab = label_clusters(config)
        if not lab.valid:
            return None
        mask = lab.giant_mask
        a = nearest_giant_id(lab, box.vertex_id([0] * plan.d), mask)
        b = nearest_giant_id(lab, box.vertex_id(target), mask)
        D = distance_by_id(config, a, b)
        row = []
        for t, layout in zip(plan.ts, layouts):
            Dt = renorm_distance_ids(layout, config.open, a, b)
            if Dt > D + 1e-9:
                raise LawViolation(f"D^t = {Dt} exceeds D* = {D} at t = {t}", config.digest())
            row.append(Dt != D)
        return row

    rows = [v for v in run_replicates(one, plan.replicates, plan.workers) if v is not None]
    excluded = plan.replicates - len(rows)
    _check_excluded(excluded, plan.replicates)
    arr = np.asarray(rows, dtype=float)
    N = arr.shape[0]
    freq = arr.mean(axis=0)
    se = np.sqrt(freq * (1 - freq) / N)
    cells = [{"t": t, "disagreements": int(arr[:, i].sum()), "count": N, "frequency": float(f),
              "stderr": float(s)} for i, (t, f, s) in enumerate(zip(plan.ts, freq, se))]
    k = plan.tolerances["n_se"]
    worst = max((freq[i + 1] - freq[i] - k * math.hypot(se[i], se[i + 1])
                 for i in range(len(plan.ts) - 1)), default=-1.0)
    verdicts = [Verdict("disagreement_nonincreasing", "pass" if worst <= 0 else "fail", float(worst),
                        f"f(t') <= f(t) + {k} combined stderr for consecutive t < t'", N),
                Verdict("domination", "pass", 0, "D^t <= D* on every replicate (exact)", N)]
    return _report(plan, t0, cells=cells, verdicts=verdicts, excluded=excluded)


def efron_stein_experiment(plan: ExperimentPlan) -> ExperimentReport:
    """Empirical ``Var D^t(0, y)`` against the mean Efron-Stein lower proxy ``V_-``."""
    t0 = time.perf_counter()
    if plan.replicates < 300 or plan.resamples < 10:
        raise InsufficientDataError("Efron-Stein needs >= 300 replicates and >= 10 resamples per box")
    if plan.n is None:
        raise DomainError("Efron-Stein needs n")
    n = plan.n
    scheme = RenormScheme(plan.t, plan.K, plan.rho)
    box = box_for(plan.direction, n, plan.d, plan.margin)
    a = (0,) * plan.d
    b = tuple(n * c for c in plan.direction)

    def one(r):
        config = sample_configuration(box, plan.p, derive_seed(plan.seed, n, r))
        return efron_stein_vminus(config, scheme, a, b, plan.resamples, derive_seed(plan.seed, 0xE5, r))

    res = run_replicates(one, plan.replicates, plan.workers)
    S = np.array([e.S for e in res])
    V = np.array([e.v_minus for e in res])
    var = float(S.var(ddof=1))
    var_se = variance_stderr(S)
    ev = float(V.mean())
    ev_se = mean_stderr(V)
    k = plan.tolerances["n_se"]
    slack = k * math.hypot(var_se, ev_se)
    cells = [{"n": n, "t": plan.t, "K": scheme.K, "count": int(S.size), "var": var, "var_stderr": var_se,
              "mean_vminus": ev, "vminus_stderr": ev_se, "mean_S": float(S.mean()),
              "mean_boxes": float(np.mean([e.n_boxes for e in res])),
              "max_cap_ratio": float(max((e.v_minus / e.cap for e in res), default=0.0))}]
    v = Verdict("efron_stein_bound", "pass" if var <= ev + slack else "fail", var - ev,
                f"Var(D^t) <= E[V-] + {k} combined stderr", int(S.size))
    cap = Verdict("vminus_cap", "pass", cells[0]["max_cap_ratio"], "V- <= 3^d K^2 t (S+t) per sample (exact)",
                  int(S.size))
    return _report(plan, t0, cells=cells, verdicts=[v, cap])


def _exact_l1_h(y):
    return float(l1(y))


def unit_step_constant(norm: NormEstimate, h: HTable, x) -> float:
    """Smallest ``C`` putting every unit step in ``Q_x``, so skeletons of any path exist."""
    f = support_functional(norm, x)
    s = math.sqrt(l1(x)) * math.log(l1(x))
    need = 0.0
    for y in signed_permutations(tuple(int(i == 0) for i in range(len(x)))):
        need = max(need, (h.mean(y) - f(y)) / s)
    return need * (1 + 1e-9)


def skeleton_count(plan: ExperimentPlan) -> ExperimentReport:
    """Skeleton sizes of geodesics from ``0*`` to ``(n x)*`` against ``2n + 1``.

    ``plan.direction`` is ``x``.  The count adds the unprojected endpoints
    ``0`` and ``n x`` when they differ from their projections.
    """
    t0 = time.perf_counter()
    if not plan.ns:
        raise DomainError("skeleton count needs ns")
    x = plan.direction
    d = plan.d
    norm = plan_norm(plan)
    radius = (2 * d + 1) * l1(x)
    fits = {}
    if plan.p == 1.0:
        h = _exact_l1_h
        C = plan.C if plan.C is not None else 1.0
    else:
        h = estimate_h_ball(d, radius, plan.p, plan.h_replicates, derive_seed(plan.seed, 0x4B),
                            plan.margin, plan.workers)
        fits["h_excluded"] = h.n_excluded
        if plan.C is not None:
            C = plan.C
        else:
            gap = gap_check(norm, h, plan.M, 1.0, seed=plan.seed)
            C = max(gap.minimal_C, unit_step_constant(norm, h, x), 1e-6)
            fits["gap_minimal_C"] = gap.minimal_C
            fits["gap_minimal_C_ci"] = list(gap.minimal_C_ci)
    C_prime = plan.C_prime if plan.C_prime is not None else 48 * C
    fits.update({"C": C, "C_prime": C_prime, "mu_x": norm(x)})
    probe = QxMembership(norm, h, x, C)
    if any(probe(tuple(s * int(i == j) for j in range(d))) is False
           for i in range(d) for s in (1, -1)):
        fits["note"] = "some unit steps lie outside Q_x"

    cells, excluded = [], 0
    for n in plan.ns:
        box = box_for(x, n, d, plan.margin)
        nx = tuple(n * c for c in x)
        o_id, nx_id = box.vertex_id((0,) * d), box.vertex_id(nx)

        def one(r):
            config = sample_configuration(box, plan.p, derive_seed(plan.seed, n, r))
            lab = label_clusters(config)
            if not lab.valid:
                return None
            mask = lab.giant_mask
            a = nearest_giant_id(lab, o_id, mask)
            b = nearest_giant_id(lab, nx_id, mask)
            verts, _ = geodesic_ids(config, a, b)
            path = box.coords[verts]
            member = QxMembership(norm, h, x, C)
            skel = extract_skeleton(path, member)
            try:
                check_skeleton(path, member, skel)
            except AssertionError as err:
                raise LawViolation(f"skeleton structure: {err}", config.digest()) from None
            cls = classify_increments(norm, x, C_prime, skel)
            if cls.n_short + cls.n_long != len(skel) - 1:
                raise LawViolation("increment classes do not partition the skeleton", config.digest())
            count = len(skel) + int(a != o_id) + int(b != nx_id)
            return count, cls.n_short, cls.n_long, member.queries, member.indeterminate

        rows = [v for v in run_replicates(one, plan.replicates, plan.workers) if v is not None]
        ex = plan.replicates - len(rows)
        _check_excluded(ex, plan.replicates)
        excluded += ex
        arr = np.asarray(rows, dtype=float)
        queries, indet = arr[:, 3].sum(), arr[:, 4].sum()
        if queries and indet / queries > plan.tolerances["indeterminate_max"]:
            raise DataQualityError(f"{indet:.0f}/{queries:.0f} Q_x queries were indeterminate")
        counts = arr[:, 0]
        cells.append({"n": n, "count": len(rows), "excluded": ex, "bound": 2 * n + 1,
                      "mean_skeleton": float(counts.mean()), "max_skeleton": int(counts.max()),
                      "exceed_fraction": float(np.mean(counts > 2 * n + 1)),
                      "mean_short": float(arr[:, 1].mean()), "mean_long": float(arr[:, 2].mean()),
                      "indeterminate_fraction": float(indet / queries) if queries else 0.0})
    last = cells[-1]
    tol = plan.tolerances["exceed_max"]
    verdicts = [Verdict("skeleton_within_2n_plus_1", "pass" if last["exceed_fraction"] <= tol else "fail",
                        last["exceed_fraction"], f"fraction with count > 2n+1 at n={last['n']} <= {tol}",
                        last["count"]),
                Verdict("skeleton_structure", "pass", 0, "defining clauses hold on every extraction (exact)",
                        int(sum(c["count"] for c in cells)))]
    return _report(plan, t0, cells=cells, fits=fits, verdicts=verdicts, excluded=excluded)


def cluster_tails(plan: ExperimentPlan) -> ExperimentReport:
    """Exponential tails of the finite-cluster radius and of the hole radius at the origin."""
    t0 = time.perf_counter()
    if plan.side is None:
        raise DomainError("cluster tails need side")
    box = LatticeBox.centered(plan.d, plan.side)

    def one(r):
        return label_clusters(sample_configuration(box, plan.p, derive_seed(plan.seed, r)))

    labs = run_replicates(one, plan.replicates, plan.workers)
    fin = finite_radius_tail(labs)
    hole = hole_tail(labs)
    _check_excluded(hole.n_excluded, plan.replicates)
    r2_min = plan.tolerances["r2_min"]
    verdicts, cells, series = [], [], {}
    for name, th in (("finite_radius", fin), ("hole", hole)):
        f = th.fit
        ok = (not f.degenerate) and f.rate > 0 and f.r2 >= r2_min
        verdicts.append(Verdict(f"{name}_tail", "pass" if ok else "fail",
                                {"rate": f.rate, "r2": f.r2, "n_points": f.n_points},
                                f"rate > 0 and r2 >= {r2_min}", th.n_samples, f.reason))
        cells.append({"tail": name, "n_samples": th.n_samples, "n_events": th.n_events,
                      "n_excluded": th.n_excluded, **{k: v for k, v in f.to_dict().items()}})
        series[name] = [{"r": int(r), "exceed_count": int(c), "n_samples": th.n_samples}
                        for r, c in zip(th.thresholds, th.exceed)]
    return _report(plan, t0, cells=cells, verdicts=verdicts, excluded=hole.n_excluded, series=series)


KINDS = {
    "variance": variance_scaling,
    "tail": tail_profile,
    "gap": mean_gap,
    "shape": shape_corridor,
    "renorm": renorm_agreement,
    "efron-stein": efron_stein_experiment,
    "skeleton": skeleton_count,
    "cluster-tails": cluster_tails,
}


def run_experiment(plan: ExperimentPlan) -> ExperimentReport:
    return KINDS[plan.kind](plan)
