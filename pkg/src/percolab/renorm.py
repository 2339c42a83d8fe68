"""Renormalized distance with red edges, good boxes and Efron-Stein resampling.

Every mesoscopic box ``k`` adds a red edge of length ``K t`` between any two
of its points.  The cliques are never built: each box gets one hub vertex
joined to its points by spokes of weight ``K t / 2``, so any two points of a
box are ``K t`` apart through the hub, exactly as through a red edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from . import _kernels
from .chemdist import distance_field_ids
from .clusters import ClusterLabeling, label_clusters
from .errors import DomainError, LawViolation, UnavailableError
from .lattice import (EdgeConfiguration, LatticeBox, RenormScheme, derive_seed, mesobox_indices,
                      mix64)


@dataclass(frozen=True, eq=False)
class RenormLayout:
    """Configuration-independent hub structure of a (scheme, box) pair."""

    scheme: RenormScheme
    box: LatticeBox
    hub_k: np.ndarray = field(repr=False)       # (H, d) mesoscopic index per hub
    edge_hub: np.ndarray = field(repr=False)    # (E,) hub of every edge
    vh_ptr: np.ndarray = field(repr=False)
    vh_idx: np.ndarray = field(repr=False)
    hv_ptr: np.ndarray = field(repr=False)
    hv_idx: np.ndarray = field(repr=False)

    @property
    def n_hubs(self) -> int:
        return int(self.hub_k.shape[0])

    def hub_of(self, k) -> int:
        k = np.asarray(k, dtype=np.int64)
        hit = np.flatnonzero(np.all(self.hub_k == k, axis=1))
        if hit.size == 0:
            raise DomainError(f"no mesoscopic box {k.tolist()} in this lattice box")
        return int(hit[0])

    def points(self, hub: int) -> np.ndarray:
        return self.hv_idx[self.hv_ptr[hub]:self.hv_ptr[hub + 1]]

    def edges(self, hub: int) -> np.ndarray:
        return np.flatnonzero(self.edge_hub == hub)


def _csr(rows, cols, n_rows):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), cols.astype(np.int64)


@lru_cache(maxsize=16)
def renorm_layout(scheme: RenormScheme, box: LatticeBox) -> RenormLayout:
    ks = mesobox_indices(scheme, box)
    hub_k, edge_hub = np.unique(ks, axis=0, return_inverse=True)
    edge_hub = edge_hub.reshape(-1).astype(np.int64)
    verts = np.concatenate([box.edge_tail, box.edge_head])
    hubs = np.concatenate([edge_hub, edge_hub])
    pairs = np.unique(np.stack([verts, hubs], axis=1), axis=0)
    vh_ptr, vh_idx = _csr(pairs[:, 0], pairs[:, 1], box.n_vertices)
    hv_ptr, hv_idx = _csr(pairs[:, 1], pairs[:, 0], hub_k.shape[0])
    return RenormLayout(scheme, box, hub_k, edge_hub, vh_ptr, vh_idx, hv_ptr, hv_idx)


def _dijkstra(layout: RenormLayout, open_, a: int, b: int):
    box = layout.box
    n = box.n_vertices + layout.n_hubs
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    pkey = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    nbr, nbr_edge = box.neighbors
    _kernels.dijkstra_hubs(nbr, nbr_edge, open_, layout.vh_ptr, layout.vh_idx, layout.hv_ptr,
                           layout.hv_idx, layout.scheme.red_weight / 2.0, box.n_edges, a, b,
                           dist, parent, pkey)
    return dist, parent, pkey


def renorm_distance_ids(layout: RenormLayout, open_, a: int, b: int) -> float:
    dist, _, _ = _dijkstra(layout, open_, a, b)
    return float(dist[b])


def renorm_distance(config: EdgeConfiguration, scheme: RenormScheme, a, b) -> float:
    """Shortest path length using open edges (length 1) and red edges (length ``K t``).

    Always finite: red edges connect every pair of points of a box and boxes
    overlap on their faces.
    """
    box = config.box
    layout = renorm_layout(scheme, box)
    return renorm_distance_ids(layout, config.open, box.vertex_id(a), box.vertex_id(b))


def materialized_renorm_distance(config: EdgeConfiguration, scheme: RenormScheme, a, b) -> float:
    """Debug route: Dijkstra on the graph with every red clique written out."""
    box = config.box
    layout = renorm_layout(scheme, box)
    rows = [box.edge_tail[config.open]]
    cols = [box.edge_head[config.open]]
    vals = [np.ones(int(config.open.sum()))]
    w = scheme.red_weight
    for hub in range(layout.n_hubs):
        pts = layout.points(hub)
        i, j = np.triu_indices(pts.size, 1)
        rows.append(pts[i])
        cols.append(pts[j])
        vals.append(np.full(i.size, w))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    # an open edge may also join two points of one box: keep the lighter weight
    order = np.lexsort((v, c, r))
    r, c, v = r[order], c[order], v[order]
    first = np.ones(r.size, dtype=bool)
    first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    g = coo_matrix((v[first], (r[first], c[first])), shape=(box.n_vertices,) * 2).tocsr()
    d = csgraph_dijkstra(g, directed=False, indices=box.vertex_id(a))
    return float(d[box.vertex_id(b)])


@dataclass(frozen=True, eq=False)
class RenormPath:
    """A path for the renormalized distance.

    ``step_edge[i]`` is the open edge of step ``i`` or ``-1`` for a red
    step; ``step_box[i]`` is the mesoscopic box of that edge.
    """

    vertices: np.ndarray = field(repr=False)
    step_edge: np.ndarray = field(repr=False)
    step_box: np.ndarray = field(repr=False)
    red_weight: float

    def __len__(self) -> int:
        return int(self.step_edge.shape[0])

    @property
    def n_red(self) -> int:
        return int((self.step_edge < 0).sum())

    @property
    def n_open(self) -> int:
        return len(self) - self.n_red

    @property
    def weight(self) -> float:
        return self.n_open + self.n_red * self.red_weight

    def boxes(self) -> np.ndarray:
        """Distinct mesoscopic indices whose edges (open or red) the path uses."""
        if len(self) == 0:
            return np.zeros((0, self.vertices.shape[1]), dtype=np.int64)
        return np.unique(self.step_box, axis=0)


def _renorm_path_from_parents(layout: RenormLayout, parent, pkey, a: int, b: int) -> RenormPath:
    box = layout.box
    n_vert = box.n_vertices
    nodes = [b]
    while nodes[-1] != a:
        nodes.append(int(parent[nodes[-1]]))
    nodes.reverse()
    verts, step_edge, step_box = [nodes[0]], [], []
    i = 1
    while i < len(nodes):
        v = nodes[i]
        if v >= n_vert:
            hub = v - n_vert
            w = nodes[i + 1]
            verts.append(w)
            step_edge.append(-1)
            step_box.append(layout.hub_k[hub])
            i += 2
        else:
            e = int(pkey[v])
            verts.append(v)
            step_edge.append(e)
            step_box.append(layout.hub_k[layout.edge_hub[e]])
            i += 1
    d = box.d
    return RenormPath(box.coords[np.asarray(verts, dtype=np.int64)],
                      np.asarray(step_edge, dtype=np.int64),
                      np.asarray(step_box, dtype=np.int64).reshape(-1, d),
                      layout.scheme.red_weight)


def renorm_geodesic(config: EdgeConfiguration, scheme: RenormScheme, a, b) -> RenormPath:
    """A shortest path for the renormalized distance.

    Among equal-length predecessors a vertex keeps the one reached through
    the open edge of smallest canonical index; arrivals through a red hub
    rank after every open edge.
    """
    box = config.box
    layout = renorm_layout(scheme, box)
    ai, bi = box.vertex_id(a), box.vertex_id(b)
    _, parent, pkey = _dijkstra(layout, config.open, ai, bi)
    return _renorm_path_from_parents(layout, parent, pkey, ai, bi)


def red_site_profile(path: RenormPath, scheme: RenormScheme | None = None) -> list[tuple[tuple[int, ...], bool]]:
    """Mesoscopic boxes crossed by ``path`` in order, each flagged if a red edge was used there.

    Consecutive steps in the same box form one site.
    """
    sites: list[tuple[tuple[int, ...], bool]] = []
    for k, e in zip(path.step_box, path.step_edge):
        k = tuple(int(c) for c in k)
        red = bool(e < 0)
        if sites and sites[-1][0] == k:
            sites[-1] = (k, sites[-1][1] or red)
        else:
            sites.append((k, red))
    return sites


# ---------------------------------------------------------------- good boxes

def _neighbourhood_clipped(scheme: RenormScheme, box: LatticeBox, k: np.ndarray) -> bool:
    t = scheme.t
    # edges of box l have midpoints within t/2 of t*l, so endpoints within t/2 + 1
    reach_lo = t * (k - 1) - t / 2 - 1
    reach_hi = t * (k + 1) + t / 2 + 1
    return bool(np.any(reach_lo < box.lower) or np.any(reach_hi > box.upper))


def is_good_box(config: EdgeConfiguration, scheme: RenormScheme, k,
                labeling: ClusterLabeling | None = None) -> bool:
    """Whether every communicating pair around box ``k`` is joined within ``4 rho t``.

    Pairs are ``x`` in box ``k`` and ``y`` in box ``k`` or one of its
    star-adjacent boxes.  Raises when that neighbourhood is cut by the
    lattice box boundary.
    """
    box = config.box
    k = np.asarray(k, dtype=np.int64)
    if k.shape != (box.d,):
        raise DomainError(f"index {k.tolist()} has wrong dimension")
    if _neighbourhood_clipped(scheme, box, k):
        raise UnavailableError(f"neighbourhood of mesoscopic box {k.tolist()} leaves the lattice box")
    layout = renorm_layout(scheme, box)
    if labeling is None:
        labeling = label_clusters(config)
    near = np.all(np.abs(layout.hub_k - k) <= 1, axis=1)
    targets = np.unique(np.concatenate([layout.points(h) for h in np.flatnonzero(near)]))
    limit = 4.0 * scheme.rho * scheme.t
    cutoff = int(math.floor(limit))
    for x in layout.points(layout.hub_of(k)):
        mates = targets[labeling.root[targets] == labeling.root[x]]
        if mates.size <= 1:
            continue
        dist = distance_field_ids(config, int(x), cutoff)
        dm = dist[mates]
        if np.any(dm < 0) or np.any(dm > limit):
            return False
    return True


# ---------------------------------------------------------------- Efron-Stein

def mesobox_key(k) -> int:
    """64-bit key of a mesoscopic index, used to seed its resamples."""
    zig = [(2 * int(c)) if c >= 0 else (-2 * int(c) - 1) for c in k]
    return derive_seed(len(zig), *zig)


def resample_seed(seed: int, box_key: int, r: int) -> int:
    """``mix64(seed ^ mix64(box_key) ^ mix64(r))``."""
    return mix64(seed ^ mix64(box_key) ^ mix64(r))


@dataclass(frozen=True)
class EfronSteinSample:
    """One configuration's contribution to the Efron-Stein lower variance proxy.

    ``v_minus`` estimates ``E[sum_i ((S - S_i)_-)^2 | U]`` where ``S_i`` is
    the distance after redrawing box ``i``, averaged over ``resamples``
    redraws per box.
    """

    S: float
    v_minus: float
    cap: float
    n_boxes: int
    resamples: int
    per_box: tuple[float, ...]


def efron_stein_vminus(config: EdgeConfiguration, scheme: RenormScheme, a, b,
                       resamples: int, seed: int) -> EfronSteinSample:
    """Resample each mesoscopic box used by the geodesic and record the increases of ``S``.

    Boxes the geodesic does not use cannot increase ``S`` (the path survives
    the redraw), so their terms are identically zero and are skipped.  The
    redraw of box ``k`` at round ``r`` uses the per-edge sampler keyed by
    :func:`resample_seed`.  Raises :class:`LawViolation` if the estimate
    exceeds ``3^d K^2 t (S + t)``.
    """
    if resamples < 1:
        raise DomainError("resamples must be >= 1")
    if not 0.0 <= config.p <= 1.0:
        raise DomainError("configuration has no sampling probability to redraw from")
    box = config.box
    layout = renorm_layout(scheme, box)
    ai, bi = box.vertex_id(a), box.vertex_id(b)
    dist, parent, pkey = _dijkstra(layout, config.open, ai, bi)
    S = float(dist[bi])
    path = _renorm_path_from_parents(layout, parent, pkey, ai, bi)
    work = config.open.copy()
    per_box = []
    for k in path.boxes():
        hub = layout.hub_of(k)
        edges = layout.edges(hub)
        saved = work[edges].copy()
        key = mesobox_key(k)
        acc = 0.0
        for r in range(resamples):
            s = resample_seed(seed, key, r)
            _kernels.resample_edges(work, edges, np.uint64(s), config.p)
            Si = renorm_distance_ids(layout, work, ai, bi)
            acc += max(Si - S, 0.0) ** 2
            work[edges] = saved
        per_box.append(acc / resamples)
    v = float(sum(per_box))
    t = scheme.t
    cap = 3 ** box.d * scheme.K ** 2 * t * (S + t)
    if v > cap * (1 + 1e-12):
        raise LawViolation(f"V- estimate {v} exceeds cap {cap}", config.digest())
    return EfronSteinSample(S, v, cap, len(per_box), resamples, tuple(per_box))
