"""Subadditive-function machinery around ``h(y) = E[D*(0, y)]``.

Estimates ``h`` by Monte Carlo, extrapolates the time constant ``mu`` along
directions, assembles a polygonal norm, and implements the approximation
sets ``Q_x``, path skeletons, increment classes and the GAP check used to
compare ``h`` with ``mu``.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import lsq_linear
from scipy.spatial import ConvexHull

from . import _kernels
from .chemdist import distance_by_id, distance_field_ids
from .clusters import label_clusters, nearest_giant_id
from .errors import DataQualityError, DomainError, InsufficientDataError
from .fitting import mean_stderr, percentile_ci
from .lattice import LatticeBox, derive_seed, sample_configuration

MAX_EXCLUDED = 0.10


def _dec(x: float) -> str:
    return repr(float(x))


def l1(y) -> int:
    return int(np.abs(np.asarray(y, dtype=np.int64)).sum())


def canonical(y) -> tuple[int, ...]:
    """Representative of ``y`` under coordinate permutations and sign flips."""
    return tuple(sorted((abs(int(c)) for c in y), reverse=True))


def run_replicates(fn: Callable[[int], object], n: int, workers: int = 1) -> list:
    """``[fn(0), ..., fn(n - 1)]``, optionally on a thread pool; order is preserved."""
    if workers <= 1:
        return [fn(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


# ---------------------------------------------------------------- h table

@dataclass
class HEntry:
    mean: float
    stderr: float
    count: int
    samples: np.ndarray | None = field(default=None, repr=False)


@dataclass
class HTable:
    """Estimates of ``h(y)`` keyed by lattice vector.

    With ``symmetric=True`` keys are canonical representatives and lookups
    fold ``y`` onto its class, using the lattice symmetries of the law.
    """

    d: int
    rows: dict = field(default_factory=dict)
    symmetric: bool = False
    n_excluded: int = 0

    def key(self, y) -> tuple[int, ...]:
        return canonical(y) if self.symmetric else tuple(int(c) for c in y)

    def add(self, y, samples) -> None:
        samples = np.asarray(samples, dtype=float)
        se = mean_stderr(samples) if samples.size > 1 else 0.0
        self.rows[self.key(y)] = HEntry(float(samples.mean()), float(se), int(samples.size), samples)

    def get(self, y) -> HEntry | None:
        if not any(y):
            return HEntry(0.0, 0.0, 0)
        return self.rows.get(self.key(y))

    def mean(self, y) -> float | None:
        e = self.get(y)
        return None if e is None else e.mean

    def __contains__(self, y) -> bool:
        return self.get(y) is not None

    def __len__(self) -> int:
        return len(self.rows)

    def vectors(self) -> list[tuple[int, ...]]:
        return sorted(self.rows)

    def to_json(self) -> str:
        doc = {
            "schema": "percolab.htable/1",
            "d": self.d,
            "symmetric": self.symmetric,
            "n_excluded": self.n_excluded,
            "rows": [{"y": list(y), "mean": _dec(e.mean), "stderr": _dec(e.stderr), "count": e.count}
                     for y, e in sorted(self.rows.items())],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "HTable":
        doc = json.loads(text)
        table = cls(doc["d"], symmetric=doc["symmetric"], n_excluded=doc.get("n_excluded", 0))
        for row in doc["rows"]:
            table.rows[tuple(row["y"])] = HEntry(float(row["mean"]), float(row["stderr"]), row["count"])
        return table

    def subadditivity_violations(self, n_se: float = 2.0) -> list[tuple]:
        """Stored triples with ``h(a+b) > h(a) + h(b) + n_se * combined stderr``."""
        bad = []
        keys = list(self.rows)
        for a in keys:
            for b in keys:
                s = tuple(x + y for x, y in zip(a, b))
                es = self.get(s)
                if es is None or not any(s):
                    continue
                ea, eb = self.rows[a], self.rows[b]
                slack = n_se * math.sqrt(ea.stderr ** 2 + eb.stderr ** 2 + es.stderr ** 2)
                if es.mean > ea.mean + eb.mean + slack:
                    bad.append((a, b, s))
        return bad


def box_for(direction, n: int, d: int, margin: int = 16) -> LatticeBox:
    """Cube centred at 0 with side ``2 n |y|_1 + margin``."""
    return LatticeBox.centered(d, 2 * n * l1(direction) + margin)


def dstar_sample(box: LatticeBox, p: float, seed: int, target) -> float | None:
    """``D*(0, target)`` on one sampled configuration; None if the giant proxy is invalid."""
    config = sample_configuration(box, p, seed)
    lab = label_clusters(config)
    if not lab.valid:
        return None
    mask = lab.giant_mask
    a = nearest_giant_id(lab, box.vertex_id([0] * box.d), mask)
    b = nearest_giant_id(lab, box.vertex_id(target), mask)
    return distance_by_id(config, a, b)


def dstar_samples(direction, n: int, p: float, replicates: int, seed: int, margin: int = 16,
                  workers: int = 1) -> tuple[np.ndarray, int]:
    """Replicate samples of ``D*(0, n y)`` and the number of excluded replicates.

    Replicate ``r`` uses seed ``derive_seed(seed, n, r)``.
    """
    direction = np.asarray(direction, dtype=np.int64)
    box = box_for(direction, n, direction.size, margin)
    target = n * direction
    vals = run_replicates(lambda r: dstar_sample(box, p, derive_seed(seed, n, r), target),
                          replicates, workers)
    kept = np.array([v for v in vals if v is not None], dtype=float)
    return kept, replicates - kept.size


def _check_exclusions(excluded: int, total: int) -> None:
    if total and excluded / total > MAX_EXCLUDED:
        raise DataQualityError(f"{excluded}/{total} replicates lacked a valid infinite-cluster proxy")


def estimate_h(direction, ns: Sequence[int], p: float, replicates: int, seed: int,
               margin: int = 16, workers: int = 1) -> HTable:
    """Monte Carlo ``h(n y)`` for each ``n``; one independent configuration per replicate."""
    if replicates < 30:
        raise InsufficientDataError("estimate_h needs at least 30 replicates")
    direction = tuple(int(c) for c in direction)
    table = HTable(len(direction))
    for n in ns:
        samples, excluded = dstar_samples(direction, n, p, replicates, seed, margin, workers)
        _check_exclusions(excluded, replicates)
        table.n_excluded += excluded
        table.add(tuple(n * c for c in direction), samples)
    return table


def _ball_vectors(d: int, radius: int) -> np.ndarray:
    rng = np.arange(-radius, radius + 1)
    grid = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return grid[np.abs(grid).sum(axis=1) <= radius]


def estimate_h_ball(d: int, radius: int, p: float, replicates: int, seed: int, margin: int = 16,
                    workers: int = 1) -> HTable:
    """Symmetric table of ``h(y)`` for every ``|y|_1 <= radius``.

    One configuration per replicate gives ``D(0*, y*)`` for every target
    from a single BFS; within a replicate the images of a symmetry class are
    averaged so each class gets one sample per replicate.
    """
    if replicates < 30:
        raise InsufficientDataError("estimate_h_ball needs at least 30 replicates")
    box = LatticeBox.centered(d, 2 * radius + margin)
    ys = _ball_vectors(d, radius)
    classes = {}
    for i, y in enumerate(ys):
        classes.setdefault(canonical(y), []).append(i)
    keys = sorted(classes)
    index = [np.asarray(classes[k]) for k in keys]
    local = ys - box.lower
    sides = np.asarray(box.sides, dtype=np.int64)
    max_r = int(sides.sum())

    def one(r):
        config = sample_configuration(box, p, derive_seed(seed, radius, r))
        lab = label_clusters(config)
        if not lab.valid:
            return None
        mask = lab.giant_mask
        proj = _kernels.nearest_marked_many(mask, sides, box.strides, local, max_r)
        src = nearest_giant_id(lab, box.vertex_id([0] * d), mask)
        dist = distance_field_ids(config, src).astype(float)
        vals = dist[proj]
        return np.array([vals[ix].mean() for ix in index])

    rows = [v for v in run_replicates(one, replicates, workers) if v is not None]
    excluded = replicates - len(rows)
    _check_exclusions(excluded, replicates)
    mat = np.asarray(rows)
    table = HTable(d, symmetric=True, n_excluded=excluded)
    for j, k in enumerate(keys):
        if any(k):
            table.add(k, mat[:, j])
    return table


# ---------------------------------------------------------------- mu

@dataclass
class MuEstimate:
    """Extrapolated time constant along one lattice direction."""

    direction: tuple[int, ...]
    mu: float
    ci: tuple[float, float]
    correction: float
    ns: tuple[int, ...] = ()
    h_over_n: tuple[float, ...] = ()
    warnings: list = field(default_factory=list)
    table: HTable | None = field(default=None, repr=False)

    @property
    def half_width(self) -> float:
        return (self.ci[1] - self.ci[0]) / 2

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "mu": _dec(self.mu),
                "ci": [_dec(self.ci[0]), _dec(self.ci[1])], "correction": _dec(self.correction),
                "ns": list(self.ns), "h_over_n": [_dec(v) for v in self.h_over_n],
                "warnings": list(self.warnings)}


def gap_regressor(n, norm_y: int) -> np.ndarray:
    """``sqrt(n |y|) log(1 + n |y|) / n``, the shape of the bias of ``h(n y) / n``."""
    n = np.asarray(n, dtype=float)
    m = n * norm_y
    return np.sqrt(m) * np.log1p(m) / n


def fit_mu(ns, h_over_n, norm_y: int) -> tuple[float, float]:
    """Least squares of ``h(ny)/n = mu + c * gap_regressor(n)``.

    Constrained to ``c >= 0`` and ``mu >= |y|_1``; the latter holds for
    every configuration since chemical distance dominates l1 distance.
    """
    y = np.asarray(h_over_n, dtype=float)
    if np.ptp(y) == 0:
        return float(max(y[0], norm_y)), 0.0
    g = gap_regressor(ns, norm_y)
    A = np.column_stack([np.ones_like(g), g])
    res = lsq_linear(A, y, bounds=([float(norm_y), 0.0], [np.inf, np.inf]))
    mu, c = res.x
    return float(mu), float(c)


def mu_from_samples(direction, ns, samples: Sequence[np.ndarray], n_boot: int = 400,
                    seed: int = 0, level: float = 0.95) -> MuEstimate:
    """Fit ``mu`` from per-cell replicate samples of ``D*(0, n y)``; bootstrap CI."""
    direction = tuple(int(c) for c in direction)
    ns = tuple(int(n) for n in ns)
    if len(ns) < 4 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InsufficientDataError("need at least 4 strictly increasing n")
    norm_y = l1(direction)
    means = np.array([np.mean(s) for s in samples]) / np.asarray(ns)
    mu, c = fit_mu(ns, means, norm_y)
    rng = np.random.default_rng(derive_seed(seed, 0xB007))
    boots = np.empty(n_boot)
    for i in range(n_boot):
        bm = [np.mean(s[rng.integers(0, len(s), len(s))]) for s in samples]
        boots[i] = fit_mu(ns, np.asarray(bm) / np.asarray(ns), norm_y)[0]
    ci = (mu, mu) if np.ptp(boots) == 0 and boots[0] == mu else percentile_ci(boots, level)
    warnings = []
    resid = means - (mu + c * gap_regressor(ns, norm_y))
    se = np.array([mean_stderr(s) for s in samples]) / np.asarray(ns)
    if np.any(np.abs(resid) > 3 * np.maximum(se, 1e-12)):
        warnings.append("fit residual exceeds 3 stderr in some cell")
    return MuEstimate(direction, mu, ci, c, ns, tuple(float(v) for v in means), warnings)


def estimate_mu(direction, ns: Sequence[int], p: float, replicates: int, seed: int,
                margin: int = 16, workers: int = 1, n_boot: int = 400) -> MuEstimate:
    """Time constant along ``direction`` from ``h(n y) / n`` over a schedule of ``n``.

    Non-primitive directions are reduced by their gcd and the result scaled
    back, so ``mu(k y) = k mu(y)`` holds exactly.
    """
    direction = np.asarray(direction, dtype=np.int64)
    g = int(np.gcd.reduce(np.abs(direction)))
    if g == 0:
        raise DomainError("direction must be nonzero")
    if g > 1:
        base = estimate_mu(direction // g, ns, p, replicates, seed, margin, workers, n_boot)
        return MuEstimate(tuple(int(c) for c in direction), g * base.mu,
                          (g * base.ci[0], g * base.ci[1]), g * base.correction, base.ns,
                          tuple(g * v for v in base.h_over_n), base.warnings, base.table)
    table = estimate_h(direction, ns, p, replicates, seed, margin, workers)
    samples = [table.get(tuple(n * c for c in direction)).samples for n in ns]
    est = mu_from_samples(direction, ns, samples, n_boot, seed)
    est.table = table
    return est


# ---------------------------------------------------------------- norm

@dataclass(frozen=True, eq=False)
class NormEstimate:
    """Polygonal norm whose unit ball is the symmetric hull of ``y / mu(y)``.

    ``facets`` holds one row ``a`` per facet with ``a . z = 1`` on the facet,
    so the norm is ``max_f a_f . z``.
    """

    directions: tuple[tuple[int, ...], ...]
    mus: tuple[float, ...]
    cis: tuple[tuple[float, float], ...]
    facets: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.facets.shape[1]

    def __call__(self, z) -> float:
        return float(np.max(self.facets @ np.asarray(z, dtype=float)))

    def evaluate(self, zs) -> np.ndarray:
        """Norm of each row of an ``(n, d)`` array."""
        return np.max(np.asarray(zs, dtype=float) @ self.facets.T, axis=1)

    @property
    def relative_halfwidth(self) -> float:
        """Largest relative CI half-width among the input directions."""
        return max(((hi - lo) / 2 / m for m, (lo, hi) in zip(self.mus, self.cis)), default=0.0)

    def ci_halfwidth(self, z) -> float:
        return self.relative_halfwidth * self(z)

    def to_json(self) -> str:
        doc = {
            "schema": "percolab.norm/1",
            "d": self.d,
            "directions": [{"y": list(y), "mu": _dec(m), "ci": [_dec(lo), _dec(hi)]}
                           for y, m, (lo, hi) in zip(self.directions, self.mus, self.cis)],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NormEstimate":
        doc = json.loads(text)
        return build_norm([(tuple(r["y"]), float(r["mu"]), (float(r["ci"][0]), float(r["ci"][1])))
                           for r in doc["directions"]])


def _as_triplet(e):
    if isinstance(e, MuEstimate):
        return e.direction, e.mu, e.ci
    y, mu, *rest = e
    ci = tuple(rest[0]) if rest else (mu, mu)
    return tuple(int(c) for c in y), float(mu), ci


def build_norm(estimates: Iterable) -> NormEstimate:
    """Assemble a norm from direction estimates (``MuEstimate`` or ``(y, mu[, ci])``)."""
    trip = [_as_triplet(e) for e in estimates]
    if not trip:
        raise DomainError("no direction estimates")
    d = len(trip[0][0])
    Y = np.array([t[0] for t in trip], dtype=float)
    if np.linalg.matrix_rank(Y) < d:
        raise DomainError("direction estimates do not span R^d")
    mus = np.array([t[1] for t in trip])
    if np.any(mus <= 0):
        raise DomainError("mu estimates must be positive")
    pts = Y / mus[:, None]
    pts = np.unique(np.vstack([pts, -pts]), axis=0)
    hull = ConvexHull(pts)
    rows = []
    for simplex in hull.simplices:
        V = pts[simplex]
        try:
            a = np.linalg.solve(V, np.ones(d))
        except np.linalg.LinAlgError:
            a = np.linalg.lstsq(V, np.ones(d), rcond=None)[0]
        rows.append(a)
    rows = np.array(rows)
    rows = np.vstack([rows, -rows])
    rows = np.unique(np.round(rows, 12), axis=0)
    return NormEstimate(tuple(t[0] for t in trip), tuple(float(m) for m in mus),
                        tuple(t[2] for t in trip), rows)


def l1_norm(d: int) -> NormEstimate:
    """The l1 norm as a :class:`NormEstimate` (exact time constant at ``p = 1``)."""
    return build_norm([(tuple(int(i == j) for j in range(d)), 1.0) for i in range(d)])


@dataclass(frozen=True)
class SupportFunctional:
    """Linear form ``mu_x(y) = scale * <normal, y>`` tangent to the norm ball at ``x``."""

    normal: tuple[float, ...]
    scale: float
    x: tuple[int, ...]
    mu_x_value: float

    def __call__(self, y) -> float:
        return self.scale * float(np.dot(self.normal, np.asarray(y, dtype=float)))

    @property
    def gradient(self) -> np.ndarray:
        return self.scale * np.asarray(self.normal)


def support_functional(norm: NormEstimate, x, tol: float = 1e-9) -> SupportFunctional:
    """Supporting linear form of the norm at ``x``.

    Takes a facet whose closure contains ``x / mu(x)``; when ``x`` points at
    a vertex of the ball, the facet with the lexicographically largest unit
    normal among those pairing positively with ``x``.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DomainError("x must be nonzero")
    vals = norm.facets @ x
    m = float(vals.max())
    cand = norm.facets[vals >= m - tol * max(1.0, abs(m))]
    units = cand / np.linalg.norm(cand, axis=1)[:, None]
    pos = (cand @ x) > 0
    units, cand = units[pos], cand[pos]
    best = np.lexsort(units.T[::-1])[-1]
    a = cand[best]
    scale = float(np.linalg.norm(a))
    return SupportFunctional(tuple(float(c) for c in units[best]), scale,
                             tuple(int(c) for c in x), m)


# ---------------------------------------------------------------- Q_x and skeletons

def _h_lookup(h) -> Callable:
    if isinstance(h, HTable):
        return h.mean
    if isinstance(h, Mapping):
        return lambda y: 0.0 if not any(y) else h.get(tuple(int(c) for c in y))
    return h


def _slack(x_norm: int, C: float) -> float:
    return C * math.sqrt(x_norm) * math.log(x_norm) if x_norm > 0 else 0.0


class QxMembership:
    """Membership oracle for ``Q_x`` with a tally of indeterminate answers.

    ``y`` is in ``Q_x`` iff ``|y|_1 <= (2d+1)|x|_1``, ``mu_x(y) <= mu(x)`` and
    ``h(y) <= mu_x(y) + C |x|_1^{1/2} log |x|_1``.  Calls return None when
    ``h(y)`` is unknown.
    """

    def __init__(self, norm: NormEstimate, h, x, C: float):
        self.x = tuple(int(c) for c in x)
        self.d = len(self.x)
        self.norm = norm
        self.mu_x = support_functional(norm, self.x)
        self.mu_of_x = norm(self.x)
        self.x_norm = l1(self.x)
        self.slack = _slack(self.x_norm, C)
        self.C = C
        self._h = _h_lookup(h)
        self.queries = 0
        self.indeterminate = 0

    def __call__(self, y) -> bool | None:
        self.queries += 1
        if l1(y) > (2 * self.d + 1) * self.x_norm:
            return False
        my = self.mu_x(y)
        if my > self.mu_of_x + 1e-9 * self.mu_of_x:
            return False
        hy = 0.0 if not any(y) else self._h(tuple(int(c) for c in y))
        if hy is None:
            self.indeterminate += 1
            return None
        return hy <= my + self.slack + 1e-9 * max(1.0, abs(my))


def qx_membership(norm: NormEstimate, htable, x, C: float, y) -> bool | None:
    """Whether ``y`` lies in ``Q_x`` (None if ``h(y)`` is not tabulated)."""
    return QxMembership(norm, htable, x, C)(y)


class SkeletonError(DomainError):
    """A path step leaves ``Q_x`` immediately, so the skeleton is undefined."""


@dataclass(frozen=True, eq=False)
class Skeleton:
    indices: tuple[int, ...]
    vertices: np.ndarray = field(repr=False)
    indeterminate: int = 0

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)


def extract_skeleton(path, member: Callable) -> Skeleton:
    """Greedy ``Q``-skeleton of a simple lattice path.

    From the current index ``u`` the next index is the last ``j`` such that
    every ``gamma(j') - gamma(u)``, ``u < j' <= j``, is a member.  ``path``
    is a :class:`LatticePath` or an ``(n + 1, d)`` array; ``member``
    returns True, False or None (unknown, treated as False and counted).
    """
    verts = np.asarray(getattr(path, "vertices", path), dtype=np.int64)
    n = verts.shape[0] - 1
    indet = 0
    idx = [0]
    u = 0
    while u < n:
        j = u
        while j < n:
            ans = member(tuple(int(c) for c in verts[j + 1] - verts[u]))
            if ans is None:
                indet += 1
            if not ans:
                break
            j += 1
        if j == u:
            raise SkeletonError(f"step {u} -> {u + 1} already leaves Q")
        idx.append(j)
        u = j
    return Skeleton(tuple(idx), verts[idx], indet)


def check_skeleton(path, member: Callable, skel: Skeleton) -> None:
    """Assert the two defining clauses of a skeleton; raises AssertionError."""
    verts = np.asarray(getattr(path, "vertices", path), dtype=np.int64)
    n = verts.shape[0] - 1
    u = skel.indices
    assert u[0] == 0 and u[-1] == n, "skeleton must start at 0 and end at n"
    for a, b in zip(u[:-1], u[1:]):
        for j in range(a + 1, b + 1):
            assert member(tuple(int(c) for c in verts[j] - verts[a])), f"increment {a}->{j} not in Q"
        if b + 1 <= n:
            assert not member(tuple(int(c) for c in verts[b + 1] - verts[a])), f"block {a}->{b} not maximal"


@dataclass(frozen=True)
class IncrementClasses:
    n_short: int
    n_long: int
    labels: tuple[str, ...]
    C_prime: float


def classify_increments(norm: NormEstimate, x, C_prime: float, skeleton: Skeleton) -> IncrementClasses:
    """Label each skeleton increment ``long`` or ``short``.

    Long increments lie within l1 distance one of ``{z : mu_x(z) > mu(x)}``;
    since ``mu_x`` is linear that is ``mu_x(y) + max_i |grad_i| > mu(x)``.
    """
    f = support_functional(norm, x)
    mux = norm(x)
    reach = float(np.max(np.abs(f.gradient)))
    labels = []
    for y in skeleton.increments:
        labels.append("long" if f(y) + reach > mux else "short")
    n_long = labels.count("long")
    return IncrementClasses(len(labels) - n_long, n_long, tuple(labels), C_prime)


def skeleton_size(skeleton: Skeleton, start_projected: bool, end_projected: bool) -> int:
    """Vertices of the ``Q_x``-path from ``0`` to ``n x`` built on the skeleton.

    Adds the unprojected endpoints when they differ from their projections.
    """
    return len(skeleton) + int(start_projected) + int(end_projected)


# ---------------------------------------------------------------- GAP

@dataclass
class GapReport:
    M: float
    C: float
    eligible: list
    violations: list
    minimal_C: float
    minimal_C_ci: tuple[float, float]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"M": self.M, "C": self.C, "n_eligible": len(self.eligible),
                "violations": [list(v) for v in self.violations], "minimal_C": self.minimal_C,
                "minimal_C_ci": list(self.minimal_C_ci), "passed": self.passed}


def gap_check(norm: NormEstimate, htable, M: float, C: float, n_boot: int = 400,
              seed: int = 0) -> GapReport:
    """Check ``mu(x) - ci <= h(x) <= mu(x) + C |x|^{1/2} log|x| + ci`` for ``|x|_1 >= M``.

    ``ci`` combines 1.96 stderr of ``h`` with the norm's CI half-width.
    Reports the smallest ``C`` passing every check with a parametric
    bootstrap interval.
    """
    if isinstance(htable, HTable):
        items = [(y, e.mean, e.stderr) for y, e in sorted(htable.rows.items())]
    else:
        items = [(tuple(y), float(v), 0.0) for y, v in htable.items()]
    elig = [(y, m, s) for y, m, s in items if l1(y) >= M and l1(y) > 1]
    if not elig:
        raise InsufficientDataError(f"no tabulated vector with |x|_1 >= {M}")
    mus = np.array([norm(y) for y, _, _ in elig])
    hs = np.array([m for _, m, _ in elig])
    ses = np.array([s for _, _, s in elig])
    cis = 1.96 * ses + np.array([norm.ci_halfwidth(y) for y, _, _ in elig])
    scale = np.array([_slack(l1(y), 1.0) for y, _, _ in elig])
    tol = 1e-9 * np.maximum(1.0, mus)
    violations = []
    for (y, _, _), mu, h, ci, sc, tl in zip(elig, mus, hs, cis, scale, tol):
        if h < mu - ci - tl:
            violations.append((y, "below"))
        elif h > mu + C * sc + ci + tl:
            violations.append((y, "above"))

    def min_c(hv):
        return float(max(0.0, np.max((hv - mus - cis) / scale)))

    minimal = min_c(hs)
    rng = np.random.default_rng(derive_seed(seed, 0x6A9))
    boots = [min_c(hs + ses * rng.standard_normal(hs.size)) for _ in range(n_boot)]
    ci = (minimal, minimal) if not np.any(ses) else percentile_ci(boots)
    return GapReport(M, C, [y for y, _, _ in elig], violations, minimal, ci)
