"""Open clusters, the finite-volume infinite-cluster proxy and cluster tail statistics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import InsufficientDataError, UnavailableError
from .fitting import RateFit, fit_log_counts
from .lattice import EdgeConfiguration, LatticeBox


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Connected components of the open subgraph.

    ``root[v]`` is the smallest vertex id of ``v``'s cluster and ``size[r]``
    the cluster size for every root ``r`` (zero elsewhere).  ``giant`` is the
    root of the infinite-cluster proxy: the largest cluster touching both
    faces orthogonal to axis 0.  With no crossing cluster the largest
    cluster is reported with ``valid=False``.
    """

    box: LatticeBox
    root: np.ndarray = field(repr=False)
    size: np.ndarray = field(repr=False)
    giant: int | None
    valid: bool

    def cluster_id(self, v) -> int:
        return int(self.root[self.box.vertex_id(v)])

    def connected(self, a, b) -> bool:
        return self.cluster_id(a) == self.cluster_id(b)

    def cluster_size(self, v) -> int:
        return int(self.size[self.cluster_id(v)])

    def in_giant(self, v) -> bool:
        return self.giant is not None and self.cluster_id(v) == self.giant

    @property
    def giant_mask(self) -> np.ndarray:
        if self.giant is None:
            return np.zeros(self.box.n_vertices, dtype=bool)
        return self.root == self.giant

    def cluster_vertices(self, v) -> np.ndarray:
        """Coordinates of every vertex in ``v``'s cluster."""
        return self.box.coords[self.root == self.cluster_id(v)]


def label_clusters(config: EdgeConfiguration) -> ClusterLabeling:
    box = config.box
    root = _kernels.label_components(box.n_vertices, box.edge_tail, box.edge_head, config.open)
    size = np.bincount(root, minlength=box.n_vertices)
    face = int(box.strides[0])
    crossing = np.intersect1d(root[:face], root[-face:])
    if crossing.size:
        sizes = size[crossing]
        giant = int(crossing[np.flatnonzero(sizes == sizes.max())[0]])
        valid = True
    else:
        giant = int(np.argmax(size))
        valid = False
    root.flags.writeable = False
    size.flags.writeable = False
    return ClusterLabeling(box, root, size, giant, valid)


def nearest_giant_id(labeling: ClusterLabeling, vid: int, mask: np.ndarray | None = None) -> int:
    """Vertex-id form of :func:`nearest_giant_point`."""
    if labeling.giant is None:
        raise UnavailableError("no infinite-cluster proxy")
    if labeling.root[vid] == labeling.giant:
        return int(vid)
    box = labeling.box
    if mask is None:
        mask = labeling.giant_mask
    local = np.asarray(np.unravel_index(int(vid), box.sides), dtype=np.int64)
    max_r = int(np.sum(np.asarray(box.sides) - 1))
    found = _kernels.nearest_marked(mask, np.asarray(box.sides, dtype=np.int64),
                                    box.strides, local, max_r)
    return int(found)


def nearest_giant_point(labeling: ClusterLabeling, x) -> tuple[int, ...]:
    """The l1-closest vertex of the giant cluster to ``x``.

    Ties go to the lexicographically smallest coordinates; a vertex of the
    giant is its own projection.
    """
    box = labeling.box
    return box.vertex(nearest_giant_id(labeling, box.vertex_id(x)))


# ---------------------------------------------------------------- tails

@dataclass
class TailHistogram:
    """Exceedance counts ``#{radius > r}`` over a replicate stream, plus a rate fit."""

    thresholds: np.ndarray
    exceed: np.ndarray
    n_samples: int
    fit: RateFit
    n_events: int = 0
    n_excluded: int = 0

    @property
    def rate(self) -> float:
        return self.fit.rate

    def to_csv(self, path) -> None:
        """Write ``r,exceed_count,n_samples`` rows and a ``.json`` fit sidecar."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "exceed_count", "n_samples"])
            for r, c in zip(self.thresholds, self.exceed):
                w.writerow([int(r), int(c), self.n_samples])
        sidecar = {
            "rate": _num(self.fit.rate),
            "stderr": _num(self.fit.stderr),
            "r2": _num(self.fit.r2),
            "n_points": self.fit.n_points,
            "degenerate": self.fit.degenerate,
            "reason": self.fit.reason,
            "n_events": self.n_events,
            "n_excluded": self.n_excluded,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _histogram(radii, n_samples, n_excluded, min_replicates) -> TailHistogram:
    if n_samples < min_replicates:
        raise InsufficientDataError(f"{n_samples} usable replicates; need {min_replicates}")
    radii = np.asarray(radii, dtype=np.int64)
    if radii.size == 0:
        return TailHistogram(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), n_samples,
                             RateFit.undefined("no events"), 0, n_excluded)
    thresholds = np.arange(int(radii.max()) + 1)
    exceed = np.array([(radii > r).sum() for r in thresholds], dtype=np.int64)
    fit = fit_log_counts(thresholds, exceed, min_count=10, min_points=2)
    return TailHistogram(thresholds, exceed, n_samples, fit, int(radii.size), n_excluded)


def finite_cluster_radius(labeling: ClusterLabeling, x=None) -> int | None:
    """Smallest ``r`` with ``C(x)`` inside ``x + [-r, r]^d``, or None if ``x`` is in the giant.

    When the giant proxy is invalid every cluster counts as finite.
    """
    box = labeling.box
    x = np.zeros(box.d, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)
    if labeling.valid and labeling.in_giant(x):
        return None
    pts = labeling.cluster_vertices(x)
    return int(np.abs(pts - x).max())


def hole_radius(labeling: ClusterLabeling, x=None) -> int:
    """Smallest ``r`` such that the giant proxy meets ``x + [-r, r]^d``."""
    if labeling.giant is None or not labeling.valid:
        raise UnavailableError("no valid infinite-cluster proxy")
    box = labeling.box
    x = np.zeros(box.d, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)
    if labeling.in_giant(x):
        return 0
    pts = box.coords[labeling.giant_mask]
    return int(np.abs(pts - x).max(axis=1).min())


def _labelings(configs):
    for c in configs:
        yield c if isinstance(c, ClusterLabeling) else label_clusters(c)


def finite_radius_tail(configs: Iterable, min_replicates: int = 100) -> TailHistogram:
    """Tail of the radius of the origin's cluster when it is finite.

    ``configs`` yields configurations (or ready labelings) of boxes that
    contain the origin.  Exceedances are counted over all replicates.
    """
    radii, n = [], 0
    for lab in _labelings(configs):
        n += 1
        r = finite_cluster_radius(lab)
        if r is not None:
            radii.append(r)
    return _histogram(radii, n, 0, min_replicates)


def hole_tail(configs: Iterable, min_replicates: int = 100) -> TailHistogram:
    """Tail of the distance (sup norm) from the origin to the giant proxy.

    Replicates without a valid proxy are excluded and counted.
    """
    radii, excluded = [], 0
    for lab in _labelings(configs):
        if not lab.valid:
            excluded += 1
            continue
        radii.append(hole_radius(lab))
    return _histogram(radii, len(radii), excluded, min_replicates)
