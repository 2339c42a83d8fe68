"""Compiled inner loops.

Everything here works on flat integer vertex ids and canonical edge indices;
the public modules translate coordinates before calling in.  All kernels are
``nogil`` so replicate loops can run on a thread pool.
"""
import heapq

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


@njit(nogil=True, cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(nogil=True, cache=True)
def edge_uniform(seed, e):
    z = seed + (np.uint64(e) + np.uint64(1)) * GOLDEN
    return np.float64(mix64(z) >> _S11) * _TWO_M53


@njit(nogil=True, cache=True)
def sample_open(seed, p, n_edges):
    out = np.empty(n_edges, dtype=np.bool_)
    for e in range(n_edges):
        out[e] = edge_uniform(seed, e) < p
    return out


@njit(nogil=True, cache=True)
def resample_edges(open_, edges, seed, p):
    """Overwrite ``open_[edges]`` with the per-edge draw under ``seed``."""
    for i in range(edges.shape[0]):
        e = edges[i]
        open_[e] = edge_uniform(seed, e) < p


# ---------------------------------------------------------------- clusters

@njit(nogil=True, cache=True)
def _find(parent, v):
    while parent[v] != v:
        parent[v] = parent[parent[v]]
        v = parent[v]
    return v


@njit(nogil=True, cache=True)
def label_components(n_vertices, edge_tail, edge_head, open_):
    """Union-find by size with path halving.

    Returns the canonical label of every vertex, i.e. the smallest vertex id
    in its component.
    """
    parent = np.arange(n_vertices)
    size = np.ones(n_vertices, dtype=np.int64)
    for e in range(edge_tail.shape[0]):
        if not open_[e]:
            continue
        a = _find(parent, edge_tail[e])
        b = _find(parent, edge_head[e])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    smallest = np.full(n_vertices, n_vertices, dtype=np.int64)
    roots = np.empty(n_vertices, dtype=np.int64)
    for v in range(n_vertices):
        r = _find(parent, v)
        roots[v] = r
        if v < smallest[r]:
            smallest[r] = v
    label = np.empty(n_vertices, dtype=np.int64)
    for v in range(n_vertices):
        label[v] = smallest[roots[v]]
    return label


@njit(nogil=True, cache=True)
def nearest_marked(mask, sides, strides, coords, max_radius):
    """l1-nearest vertex with ``mask`` set, lexicographically smallest on ties.

    Scans l1 shells of increasing radius; inside a shell, candidates are
    visited in C order, which is lexicographic order of coordinates.
    Returns -1 when nothing is found within ``max_radius``.
    """
    d = sides.shape[0]
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    cur = np.empty(d, dtype=np.int64)
    for r in range(max_radius + 1):
        for i in range(d):
            lo[i] = max(coords[i] - r, 0)
            hi[i] = min(coords[i] + r, sides[i] - 1)
            cur[i] = lo[i]
        while True:
            dist = 0
            vid = 0
            for i in range(d):
                dist += abs(cur[i] - coords[i])
                vid += cur[i] * strides[i]
            if dist == r and mask[vid]:
                return vid
            # odometer increment, last axis fastest
            i = d - 1
            while i >= 0:
                cur[i] += 1
                if cur[i] <= hi[i]:
                    break
                cur[i] = lo[i]
                i -= 1
            if i < 0:
                break
    return -1


# ---------------------------------------------------------------- BFS

@njit(nogil=True, cache=True)
def bfs(nbr, nbr_edge, open_, source, target, cutoff, dist, queue):
    """Unit-weight BFS over open edges.

    ``dist`` must hold -1 everywhere on entry; visited entries are written
    and their ids listed in ``queue[:count]`` so callers can reset cheaply.
    The search stops once ``target`` is labelled (``target < 0`` disables
    this) and never labels vertices beyond level ``cutoff`` (``< 0``
    disables).  Returns the number of labelled vertices.
    """
    dist[source] = 0
    queue[0] = source
    head = 0
    tail = 1
    if source == target:
        return tail
    ndir = nbr.shape[1]
    while head < tail:
        v = queue[head]
        head += 1
        dv = dist[v]
        if cutoff >= 0 and dv >= cutoff:
            continue
        for j in range(ndir):
            w = nbr[v, j]
            if w < 0 or dist[w] >= 0 or not open_[nbr_edge[v, j]]:
                continue
            dist[w] = dv + 1
            queue[tail] = w
            tail += 1
            if w == target:
                return tail
    return tail


@njit(nogil=True, cache=True)
def bfs_backtrack(nbr, nbr_edge, open_, dist, target):
    """Walk back from ``target`` choosing the smallest discovering edge index.

    Returns (vertices, edges) from source to target.
    """
    n = dist[target]
    verts = np.empty(n + 1, dtype=np.int64)
    edges = np.empty(n, dtype=np.int64)
    v = target
    verts[n] = v
    ndir = nbr.shape[1]
    for step in range(n, 0, -1):
        best_e = -1
        best_u = -1
        for j in range(ndir):
            u = nbr[v, j]
            if u < 0:
                continue
            e = nbr_edge[v, j]
            if not open_[e] or dist[u] != step - 1:
                continue
            if best_e < 0 or e < best_e:
                best_e = e
                best_u = u
        edges[step - 1] = best_e
        verts[step - 1] = best_u
        v = best_u
    return verts, edges


# ---------------------------------------------------------------- Dijkstra

@njit(nogil=True, cache=True)
def dijkstra_hubs(nbr, nbr_edge, open_, vh_ptr, vh_idx, hv_ptr, hv_idx,
                  half_red, n_edges, source, target, dist, parent, pkey):
    """Dijkstra on open edges (weight 1) plus per-box red hubs.

    Nodes ``0..V-1`` are lattice vertices and ``V..V+H-1`` are hubs; every
    vertex of a box's point set is joined to the box hub by a spoke of
    weight ``half_red`` so two spokes cost one red edge.  ``dist`` must be
    +inf on entry.  Parent ties prefer the smaller key, where open edges key
    by their canonical index and hub arrivals by ``n_edges + hub``.
    Stops once ``target`` is settled (``target < 0`` runs to exhaustion).
    Returns the settled node ids in order.
    """
    n_vert = nbr.shape[0]
    ndir = nbr.shape[1]
    settled = np.zeros(dist.shape[0], dtype=np.bool_)
    order = np.empty(dist.shape[0], dtype=np.int64)
    n_settled = 0
    dist[source] = 0.0
    parent[source] = -1
    pkey[source] = -1
    heap = [(0.0, source)]
    while len(heap) > 0:
        dv, v = heapq.heappop(heap)
        if settled[v] or dv > dist[v]:
            continue
        settled[v] = True
        order[n_settled] = v
        n_settled += 1
        if v == target:
            break
        if v < n_vert:
            for j in range(ndir):
                w = nbr[v, j]
                if w < 0:
                    continue
                e = nbr_edge[v, j]
                if not open_[e] or settled[w]:
                    continue
                nd = dv + 1.0
                if nd < dist[w] or (nd == dist[w] and e < pkey[w]):
                    if nd < dist[w]:
                        heapq.heappush(heap, (nd, w))
                    dist[w] = nd
                    parent[w] = v
                    pkey[w] = e
            for k in range(vh_ptr[v], vh_ptr[v + 1]):
                hnode = n_vert + vh_idx[k]
                if settled[hnode]:
                    continue
                nd = dv + half_red
                if nd < dist[hnode] or (nd == dist[hnode] and v < pkey[hnode]):
                    if nd < dist[hnode]:
                        heapq.heappush(heap, (nd, hnode))
                    dist[hnode] = nd
                    parent[hnode] = v
                    pkey[hnode] = v
        else:
            hub = v - n_vert
            key = n_edges + hub
            for k in range(hv_ptr[hub], hv_ptr[hub + 1]):
                w = hv_idx[k]
                if settled[w]:
                    continue
                nd = dv + half_red
                if nd < dist[w] or (nd == dist[w] and key < pkey[w]):
                    if nd < dist[w]:
                        heapq.heappush(heap, (nd, w))
                    dist[w] = nd
                    parent[w] = v
                    pkey[w] = key
    return order[:n_settled]


@njit(nogil=True, cache=True)
def nearest_marked_many(mask, sides, strides, local_coords, max_radius):
    """:func:`nearest_marked` for each row of ``local_coords``."""
    n = local_coords.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        vid = 0
        for j in range(sides.shape[0]):
            vid += local_coords[i, j] * strides[j]
        if mask[vid]:
            out[i] = vid
        else:
            out[i] = nearest_marked(mask, sides, strides, local_coords[i], max_radius)
    return out
