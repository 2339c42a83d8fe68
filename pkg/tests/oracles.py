"""Independent reference implementations used as test oracles.

Nothing here imports the package's graph code: edges are rebuilt from
coordinates, and every distance is computed by a textbook algorithm.
"""
import heapq
import itertools
import math

import numpy as np

MASK = (1 << 64) - 1


def splitmix_finalizer(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def box_points(sides, origin):
    ranges = [range(o, o + s) for s, o in zip(sides, origin)]
    return list(itertools.product(*ranges))


def box_edges(sides, origin):
    """Canonical edge list: vertex-major in C order, then ascending axis."""
    out = []
    pts = box_points(sides, origin)
    inside = set(pts)
    for v in pts:
        for ax in range(len(sides)):
            w = list(v)
            w[ax] += 1
            w = tuple(w)
            if w in inside:
                out.append((v, w))
    return out


def sample_open(n_edges, p, seed):
    golden = 0x9E3779B97F4A7C15
    return [((splitmix_finalizer(seed + (e + 1) * golden) >> 11) * 2.0 ** -53) < p
            for e in range(n_edges)]


def floyd_warshall(points, edges, open_):
    idx = {v: i for i, v in enumerate(points)}
    n = len(points)
    D = np.full((n, n), math.inf)
    np.fill_diagonal(D, 0)
    for (a, b), o in zip(edges, open_):
        if o:
            D[idx[a], idx[b]] = D[idx[b], idx[a]] = 1
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D, idx


def dfs_components(points, edges, open_):
    """Component label per point: smallest point index reachable by iterative DFS."""
    idx = {v: i for i, v in enumerate(points)}
    adj = {i: [] for i in range(len(points))}
    for (a, b), o in zip(edges, open_):
        if o:
            adj[idx[a]].append(idx[b])
            adj[idx[b]].append(idx[a])
    label = [-1] * len(points)
    for s in range(len(points)):
        if label[s] >= 0:
            continue
        stack, comp = [s], []
        label[s] = s
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if label[w] < 0:
                    label[w] = s
                    stack.append(w)
    return label


def nearest_grid_index(twice_mid, t):
    """Brute force: grid index k minimising |mid - t k| per axis, ties to smaller k."""
    out = []
    for m2 in twice_mid:
        best = None
        for k in range(math.floor(m2 / (2 * t)) - 2, math.ceil(m2 / (2 * t)) + 3):
            dist = abs(m2 - 2 * t * k)
            if best is None or dist < best[0]:
                best = (dist, k)
        out.append(best[1])
    return tuple(out)


def mesobox_points(sides, origin, t):
    """Map k -> set of points that are endpoints of an edge assigned to k."""
    boxes = {}
    for a, b in box_edges(sides, origin):
        twice_mid = [x + y for x, y in zip(a, b)]
        k = nearest_grid_index(twice_mid, t)
        boxes.setdefault(k, set()).update((a, b))
    return boxes


def dijkstra(adj, source):
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for w, c in adj.get(v, ()):
            nd = d + c
            if nd < dist.get(w, math.inf):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def renorm_oracle(sides, origin, open_, t, K, a, b):
    """Renormalized distance on the explicit graph: open edges weight 1, red cliques K t."""
    adj = {}

    def add(u, v, c):
        adj.setdefault(u, []).append((v, c))
        adj.setdefault(v, []).append((u, c))

    for (u, v), o in zip(box_edges(sides, origin), open_):
        if o:
            add(u, v, 1.0)
    for pts in mesobox_points(sides, origin, t).values():
        for u, v in itertools.combinations(sorted(pts), 2):
            add(u, v, K * t)
    return dijkstra(adj, tuple(a)).get(tuple(b), math.inf)


def l1_nearest(points_in_giant, x):
    """l1-nearest point with lexicographic tie-break, by exhaustive search."""
    return min(points_in_giant, key=lambda z: (sum(abs(p - q) for p, q in zip(z, x)), z))
