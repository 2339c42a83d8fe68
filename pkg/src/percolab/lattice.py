"""Finite boxes of Z^d, canonical edge numbering and seeded bond configurations.

Vertices of a box are numbered in lexicographic (C) order of their
coordinates.  Edges are enumerated vertex by vertex in that order and, for
each vertex ``v``, axis by axis: edge ``(v, v + e_axis)`` exists when the
upper endpoint lies in the box.  All randomness is a pure function of
``(seed, edge index)`` through the SplitMix64 finalizer, so a configuration
is reproducible bit for bit from ``(box, p, seed)``.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, FormatError, RangeError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

MAGIC = b"PERCCFG1"
FORMAT_VERSION = 1


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer (taken mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for a sub-stream: ``s <- mix64(s ^ mix64(key))`` per key."""
    s = seed & MASK64
    for key in keys:
        s = mix64(s ^ mix64(key & MASK64))
    return s


def edge_uniform(seed: int, edge_index: int) -> float:
    """The uniform variate ``u_e`` that decides whether edge ``e`` is open."""
    z = mix64(seed + (edge_index + 1) * GOLDEN)
    return (z >> 11) * 2.0 ** -53


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned box ``origin + [0, sides)`` in Z^d with free boundary."""

    sides: tuple[int, ...]
    origin: tuple[int, ...] | None = None

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if len(sides) < 2:
            raise DomainError(f"dimension must be >= 2, got {len(sides)}")
        if min(sides) < 2:
            raise DomainError(f"every side must be >= 2, got {sides}")
        origin = (0,) * len(sides) if self.origin is None else tuple(int(o) for o in self.origin)
        if len(origin) != len(sides):
            raise DomainError("origin and sides differ in dimension")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, d: int, side: int) -> "LatticeBox":
        """A cube of the given side whose vertex set contains 0 at its center."""
        return cls((side,) * d, (-(side // 2),) * d)

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def n_vertices(self) -> int:
        return math.prod(self.sides)

    @property
    def n_edges(self) -> int:
        total = 0
        for i, s in enumerate(self.sides):
            total += (s - 1) * math.prod(self.sides[:i] + self.sides[i + 1:])
        return total

    @cached_property
    def strides(self) -> np.ndarray:
        st = np.ones(self.d, dtype=np.int64)
        for i in range(self.d - 2, -1, -1):
            st[i] = st[i + 1] * self.sides[i + 1]
        return st

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.int64)

    @property
    def upper(self) -> np.ndarray:
        """Largest coordinate on every axis (inclusive)."""
        return self.lower + np.asarray(self.sides, dtype=np.int64) - 1

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=np.int64)
        return v.shape == (self.d,) and bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def vertex_id(self, v) -> int:
        v = np.asarray(v, dtype=np.int64)
        if not self.contains(v):
            raise RangeError(f"vertex {tuple(v.tolist())} outside box {self}")
        return int(np.dot(v - self.lower, self.strides))

    def vertex_ids(self, vs) -> np.ndarray:
        """Vectorised :meth:`vertex_id` for an ``(n, d)`` array (no range check)."""
        vs = np.asarray(vs, dtype=np.int64)
        return (vs - self.lower) @ self.strides

    def vertex(self, vid: int) -> tuple[int, ...]:
        if not 0 <= vid < self.n_vertices:
            raise RangeError(f"vertex id {vid} out of range")
        local = np.unravel_index(int(vid), self.sides)
        return tuple(int(c) + o for c, o in zip(local, self.origin))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(V, d)`` absolute coordinates of every vertex, in id order."""
        grids = np.indices(self.sides, dtype=np.int64).reshape(self.d, -1).T
        return grids + self.lower

    @cached_property
    def _edge_table(self):
        local = self.coords - self.lower
        valid = local < (np.asarray(self.sides) - 1)
        edge_of = np.full(valid.shape, -1, dtype=np.int64)
        edge_of[valid] = np.arange(int(valid.sum()), dtype=np.int64)
        tail, axis = np.nonzero(valid)
        head = tail + self.strides[axis]
        return edge_of, tail.astype(np.int64), axis.astype(np.int64), head.astype(np.int64)

    @property
    def edge_tail(self) -> np.ndarray:
        return self._edge_table[1]

    @property
    def edge_head(self) -> np.ndarray:
        return self._edge_table[3]

    @property
    def edge_axis(self) -> np.ndarray:
        return self._edge_table[2]

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """``(nbr, nbr_edge)``, both ``(V, 2d)``; ``-1`` marks a missing neighbour.

        Columns ``0..d-1`` step by ``+e_i``, columns ``d..2d-1`` by ``-e_i``.
        """
        edge_of = self._edge_table[0]
        V, d = self.n_vertices, self.d
        nbr = np.full((V, 2 * d), -1, dtype=np.int64)
        nbr_edge = np.full((V, 2 * d), -1, dtype=np.int64)
        ids = np.arange(V, dtype=np.int64)
        for i in range(d):
            fwd = edge_of[:, i] >= 0
            nbr[fwd, i] = ids[fwd] + self.strides[i]
            nbr_edge[fwd, i] = edge_of[fwd, i]
            back = ids[fwd] + self.strides[i]
            nbr[back, d + i] = ids[fwd]
            nbr_edge[back, d + i] = edge_of[fwd, i]
        return nbr, nbr_edge

    def edge_codec(self, edge_index: int) -> tuple[tuple[int, ...], tuple[int, ...], int]:
        """Endpoints ``(v, v + e_axis)`` and ``axis`` of a canonical edge."""
        if not 0 <= edge_index < self.n_edges:
            raise RangeError(f"edge index {edge_index} out of range [0, {self.n_edges})")
        tail = int(self.edge_tail[edge_index])
        axis = int(self.edge_axis[edge_index])
        v = self.vertex(tail)
        w = list(v)
        w[axis] += 1
        return v, tuple(w), axis

    def edge_index(self, v, axis: int) -> int:
        """Inverse of :meth:`edge_codec`: the edge ``(v, v + e_axis)``."""
        if not 0 <= axis < self.d:
            raise RangeError(f"axis {axis} out of range")
        e = int(self._edge_table[0][self.vertex_id(v), axis])
        if e < 0:
            raise RangeError(f"edge from {tuple(v)} along axis {axis} leaves the box")
        return e

    def edge_between(self, a, b) -> int:
        """Canonical index of the edge joining two l1-adjacent vertices."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        diff = b - a
        if np.abs(diff).sum() != 1:
            raise DomainError(f"{a.tolist()} and {b.tolist()} are not adjacent")
        axis = int(np.flatnonzero(diff)[0])
        lo = a if diff[axis] > 0 else b
        return self.edge_index(lo, axis)


@dataclass(frozen=True, eq=False)
class EdgeConfiguration:
    """Open/closed state of every edge of a box.

    ``open`` is a read-only boolean array in canonical edge order; ``p`` and
    ``seed`` record how it was drawn.  Hand-built configurations (tests,
    resampled views) keep the provenance of their parent.
    """

    box: LatticeBox
    open: np.ndarray = field(repr=False)
    p: float = float("nan")
    seed: int = 0

    def __post_init__(self):
        bits = np.ascontiguousarray(self.open, dtype=np.bool_)
        if bits.shape != (self.box.n_edges,):
            raise DomainError(f"expected {self.box.n_edges} edge bits, got shape {bits.shape}")
        if bits.flags.writeable:
            bits = bits.copy()
            bits.flags.writeable = False
        object.__setattr__(self, "open", bits)

    def __eq__(self, other):
        if not isinstance(other, EdgeConfiguration):
            return NotImplemented
        return (self.box == other.box and np.array_equal(self.open, other.open)
                and self.seed == other.seed
                and (self.p == other.p or (math.isnan(self.p) and math.isnan(other.p))))

    __hash__ = None

    @classmethod
    def from_open_edges(cls, box: LatticeBox, edges: Sequence, p: float = float("nan"), seed: int = 0):
        """Configuration with exactly the given edges open.

        ``edges`` holds canonical indices or ``(a, b)`` vertex pairs.
        """
        bits = np.zeros(box.n_edges, dtype=np.bool_)
        for e in edges:
            if isinstance(e, (int, np.integer)):
                bits[int(e)] = True
            else:
                bits[box.edge_between(*e)] = True
        return cls(box, bits, p, seed)

    def is_open(self, edge_index: int) -> bool:
        return bool(self.open[edge_index])

    def with_edges(self, edges, values) -> "EdgeConfiguration":
        """Copy with ``open[edges] = values``; the original is untouched."""
        bits = self.open.copy()
        bits[np.asarray(edges, dtype=np.int64)] = values
        return EdgeConfiguration(self.box, bits, self.p, self.seed)

    def digest(self) -> str:
        return hashlib.sha256(serialize(self)).hexdigest()


def sample_configuration(box: LatticeBox, p: float, seed: int) -> EdgeConfiguration:
    """Bernoulli(p) bond configuration, edge ``e`` open iff ``u_e < p``.

    Coupled across ``p``: for a fixed seed the open set grows with ``p``.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    seed = int(seed) & MASK64
    bits = _kernels.sample_open(np.uint64(seed), p, box.n_edges)
    return EdgeConfiguration(box, bits, p, seed)


_HEAD = struct.Struct("<8sIB")


def serialize(config: EdgeConfiguration) -> bytes:
    """PERCCFG1 little-endian encoding, edge bits packed LSB-first."""
    box = config.box
    d = box.d
    parts = [
        _HEAD.pack(MAGIC, FORMAT_VERSION, d),
        struct.pack(f"<{d}Q", *box.sides),
        struct.pack(f"<{d}q", *box.origin),
        struct.pack("<dQQ", config.p, config.seed, box.n_edges),
        np.packbits(config.open, bitorder="little").tobytes(),
    ]
    return b"".join(parts)


def deserialize(data: bytes) -> EdgeConfiguration:
    """Inverse of :func:`serialize`; raises :class:`FormatError` on bad input."""
    data = bytes(data)
    if len(data) < 8 or data[:8] != MAGIC:
        raise FormatError("bad magic, expected PERCCFG1", 0)
    if len(data) < _HEAD.size:
        raise FormatError("truncated header", len(data))
    _, version, d = _HEAD.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 8)
    off = _HEAD.size
    need = off + 16 * d + 24
    if len(data) < need:
        raise FormatError("truncated header", len(data))
    sides = struct.unpack_from(f"<{d}Q", data, off)
    off += 8 * d
    origin = struct.unpack_from(f"<{d}q", data, off)
    off += 8 * d
    p, seed, n_edges = struct.unpack_from("<dQQ", data, off)
    off += 24
    try:
        box = LatticeBox(sides, origin)
    except DomainError as exc:
        raise FormatError(f"invalid box: {exc}", _HEAD.size) from None
    if n_edges != box.n_edges:
        raise FormatError(f"edge count {n_edges} does not match box ({box.n_edges})", off - 8)
    n_bytes = (n_edges + 7) // 8
    if len(data) < off + n_bytes:
        raise FormatError("truncated edge payload", len(data))
    if len(data) > off + n_bytes:
        raise FormatError("trailing bytes after payload", off + n_bytes)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=n_bytes, offset=off),
                         count=n_edges, bitorder="little").astype(np.bool_)
    return EdgeConfiguration(box, bits, p, seed)


# ------------------------------------------------------------ mesoscopic boxes

@dataclass(frozen=True)
class RenormScheme:
    """Mesoscopic scale ``t``, red-edge multiplier ``K`` and constant ``rho``.

    Red edges cost ``K * t``.  ``K`` must exceed ``4 * rho``; the default is
    ``4 * rho + 1``.
    """

    t: int
    K: float | None = None
    rho: float = 4.0

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise DomainError(f"t must be a positive integer, got {self.t}")
        if not self.rho >= 1:
            raise DomainError(f"rho must be >= 1, got {self.rho}")
        K = 4 * self.rho + 1 if self.K is None else float(self.K)
        if not K > 4 * self.rho:
            raise DomainError(f"K must exceed 4*rho = {4 * self.rho}, got {K}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def red_weight(self) -> float:
        return self.K * self.t


def _nearest_multiple(twice_mid: np.ndarray, t: int) -> np.ndarray:
    # k minimising |mid - t k| with ties to the smaller k: ceil((2 mid - t) / 2t)
    return -((t - twice_mid) // (2 * t))


def mesobox_indices(scheme: RenormScheme, box: LatticeBox) -> np.ndarray:
    """``(E, d)`` mesoscopic index of every edge (see :func:`box_of_edge`)."""
    tail = box.coords[box.edge_tail]
    twice_mid = 2 * tail
    twice_mid[np.arange(box.n_edges), box.edge_axis] += 1
    return _nearest_multiple(twice_mid, scheme.t)


def box_of_edge(scheme: RenormScheme, box: LatticeBox, edge_index: int) -> tuple[int, ...]:
    """Grid index ``k`` whose point ``t k`` is Euclidean-nearest to the edge midpoint.

    The nearest grid point factorises over axes; ties on an axis go to the
    smaller index, which gives the lexicographically smallest minimiser.
    """
    v, _, axis = box.edge_codec(edge_index)
    twice_mid = 2 * np.asarray(v, dtype=np.int64)
    twice_mid[axis] += 1
    return tuple(int(k) for k in _nearest_multiple(twice_mid, scheme.t))


def star_adjacent(k, l) -> bool:
    """Whether two mesoscopic indices are at max-norm distance exactly one."""
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    if k.shape != l.shape:
        raise DomainError(f"dimension mismatch: {k.shape} vs {l.shape}")
    return int(np.max(np.abs(k - l))) == 1


def mesobox_point_ids(scheme: RenormScheme, box: LatticeBox, k) -> np.ndarray:
    """Sorted vertex ids that are an endpoint of some edge assigned to ``k``."""
    k = np.asarray(k, dtype=np.int64)
    if k.shape != (box.d,):
        raise DomainError(f"index {k.tolist()} has wrong dimension")
    sel = np.all(mesobox_indices(scheme, box) == k, axis=1)
    return np.unique(np.concatenate([box.edge_tail[sel], box.edge_head[sel]]))


def points_of_mesobox(scheme: RenormScheme, box: LatticeBox, k) -> frozenset:
    """Coordinates of the vertices belonging to mesoscopic box ``k``.

    Boxes partition the edges but not the vertices: a vertex on a box face is
    an endpoint of edges from several boxes.
    """
    ids = mesobox_point_ids(scheme, box, k)
    return frozenset(tuple(int(c) for c in row) for row in box.coords[ids])
