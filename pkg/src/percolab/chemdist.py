"""Chemical distance: shortest open paths, distance fields, geodesics and D*.

Distances are Python ints, with :data:`INFINITY` (``math.inf``) between
different clusters; ``inf`` is absorbing under addition, which is exactly
what sums of path lengths need.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .clusters import ClusterLabeling, nearest_giant_id
from .errors import DomainError, UnavailableError
from .lattice import EdgeConfiguration, LatticeBox

INFINITY = math.inf

_local = threading.local()


def _scratch(n: int):
    """Per-thread BFS buffers: ``dist`` all -1 on hand-out, and a queue."""
    bufs = getattr(_local, "bufs", None)
    if bufs is None or bufs[0].shape[0] != n:
        bufs = (np.full(n, -1, dtype=np.int64), np.empty(n, dtype=np.int64))
        _local.bufs = bufs
    return bufs


def _bfs_ids(config: EdgeConfiguration, source: int, target: int = -1, cutoff: int = -1):
    """Run BFS into the thread scratch; caller must call ``_reset`` after reading."""
    nbr, nbr_edge = config.box.neighbors
    dist, queue = _scratch(config.box.n_vertices)
    count = _kernels.bfs(nbr, nbr_edge, config.open, source, target, cutoff, dist, queue)
    return dist, queue, count


def _reset(dist, queue, count):
    dist[queue[:count]] = -1


def distance_by_id(config: EdgeConfiguration, a: int, b: int) -> float:
    dist, queue, count = _bfs_ids(config, a, b)
    d = int(dist[b])
    _reset(dist, queue, count)
    return INFINITY if d < 0 else d


def chemical_distance(config: EdgeConfiguration, a, b):
    """Length of the shortest open path from ``a`` to ``b`` (``INFINITY`` if none)."""
    box = config.box
    return distance_by_id(config, box.vertex_id(a), box.vertex_id(b))


def distance_field_ids(config: EdgeConfiguration, source: int, cutoff: int = -1) -> np.ndarray:
    """Flat int64 distances from ``source``; ``-1`` marks unreachable vertices."""
    dist, queue, count = _bfs_ids(config, source, -1, cutoff)
    out = dist.copy()
    _reset(dist, queue, count)
    return out


def distance_field(config: EdgeConfiguration, source) -> np.ndarray:
    """Chemical distance from ``source`` to every vertex, shaped like the box.

    Float array so that unreachable vertices can hold ``inf``.
    """
    box = config.box
    flat = distance_field_ids(config, box.vertex_id(source)).astype(float)
    flat[flat < 0] = np.inf
    return flat.reshape(box.sides)


def write_distance_field_csv(field_: np.ndarray, box: LatticeBox, path) -> None:
    """CSV grid of a 2-d distance field; row ``i`` is axis-0 coordinate ``origin[0] + i``."""
    if field_.ndim != 2:
        raise DomainError("CSV grids are only defined for d = 2")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0\\x1"] + [str(box.origin[1] + j) for j in range(box.sides[1])])
        for i, row in enumerate(field_):
            w.writerow([str(box.origin[0] + i)] + ["inf" if np.isinf(v) else str(int(v)) for v in row])


@dataclass(frozen=True, eq=False)
class LatticePath:
    """Vertex sequence ``(n + 1, d)`` and the canonical index of each step's edge."""

    vertices: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.edges.shape[0])

    @property
    def length(self) -> int:
        return len(self)

    def points(self) -> list[tuple[int, ...]]:
        return [tuple(int(c) for c in v) for v in self.vertices]

    def is_simple(self) -> bool:
        return len({tuple(v) for v in self.vertices.tolist()}) == self.vertices.shape[0]

    def is_open_in(self, config: EdgeConfiguration) -> bool:
        """Steps are unit moves along open edges matching ``edges``."""
        box = config.box
        steps = np.abs(np.diff(self.vertices, axis=0)).sum(axis=1)
        if np.any(steps != 1):
            return False
        for (a, b), e in zip(zip(self.vertices[:-1], self.vertices[1:]), self.edges):
            if box.edge_between(a, b) != e or not config.open[e]:
                return False
        return True


def geodesic_ids(config: EdgeConfiguration, a: int, b: int):
    """(vertex ids, edge ids) of the canonical geodesic, or None if disconnected."""
    nbr, nbr_edge = config.box.neighbors
    dist, queue, count = _bfs_ids(config, a, b)
    try:
        if dist[b] < 0:
            return None
        # labels past level dist[b] - 1 are irrelevant for backtracking
        return _kernels.bfs_backtrack(nbr, nbr_edge, config.open, dist, b)
    finally:
        _reset(dist, queue, count)


def geodesic(config: EdgeConfiguration, a, b) -> LatticePath:
    """A shortest open path from ``a`` to ``b``.

    Walking back from ``b``, each vertex takes as predecessor the neighbour
    one level closer whose joining open edge has the smallest canonical
    index, so the result depends only on the configuration.
    """
    box = config.box
    res = geodesic_ids(config, box.vertex_id(a), box.vertex_id(b))
    if res is None:
        raise UnavailableError(f"{tuple(a)} and {tuple(b)} are not connected")
    verts, edges = res
    return LatticePath(box.coords[verts], edges)


def modified_distance(config: EdgeConfiguration, labeling: ClusterLabeling, x, y):
    """``D*(x, y) = D(x*, y*)`` with ``x*`` the l1-nearest point of the giant proxy."""
    if labeling.giant is None or not labeling.valid:
        raise UnavailableError("modified distance needs a valid infinite-cluster proxy")
    box = config.box
    mask = labeling.giant_mask
    xs = nearest_giant_id(labeling, box.vertex_id(x), mask)
    ys = nearest_giant_id(labeling, box.vertex_id(y), mask)
    return distance_by_id(config, xs, ys)


def ordered_waypoint_distance(config: EdgeConfiguration, waypoints):
    """Shortest open walk visiting ``waypoints`` in order.

    Any such walk splits at the waypoints into legs no shorter than the
    pairwise distances, and concatenated geodesics attain the sum.
    """
    if len(waypoints) < 2:
        raise DomainError("need at least two waypoints")
    total = 0
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        total += chemical_distance(config, a, b)
    return total
