"""Nearest-neighbor retrieval over feature vectors.

The index is a k-d tree (median split on the widest-spread dimension, leaf
size 16). Exact mode returns the true M nearest entries; approximate mode is
a best-first search that stops after inspecting `check_budget` leaves.
Distance ties always break toward the lower entry id, in every search path.

brute_force_knn is an intentionally naive linear scan kept as an independent
cross-check; batch_knn is a vectorized exact search used by the localization
hot loop. All three compute distances with the same formula so results are
bitwise comparable.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LEAF_SIZE = 16
DEFAULT_CHECK_BUDGET_FACTOR = 64


@dataclass(frozen=True)
class NeighborHit:
    id: int
    distance: float


class _Node:
    __slots__ = ("lo", "hi", "start", "end", "left", "right")

    def __init__(self, lo, hi, start, end, left=None, right=None):
        self.lo = lo
        self.hi = hi
        self.start = start
        self.end = end
        self.left = left
        self.right = right

    @property
    def is_leaf(self):
        return self.left is None


class NeighborIndex:
    """k-d tree over (id, vector) entries. Use build_index to construct."""

    def __init__(self, ids: np.ndarray, vectors: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise ValueError("index needs a non-empty (n, d) vector array")
        if ids.shape != (vectors.shape[0],):
            raise ValueError("ids and vectors must have matching length")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("index vectors must be finite")
        if np.unique(ids).shape[0] != ids.shape[0]:
            raise ValueError("entry ids must be unique")
        order = np.argsort(ids, kind="stable")
        self.ids = np.ascontiguousarray(ids[order])
        self.vectors = np.ascontiguousarray(vectors[order])
        self._build_tree()

    @property
    def size(self) -> int:
        return self.ids.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def _build_tree(self):
        perm_chunks: list[np.ndarray] = []

        def build(idxs: np.ndarray) -> _Node:
            pts = self.vectors[idxs]
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            spread = hi - lo
            if idxs.shape[0] <= LEAF_SIZE or not np.any(spread > 0.0):
                start = sum(c.shape[0] for c in perm_chunks)
                perm_chunks.append(idxs)
                return _Node(lo, hi, start, start + idxs.shape[0])
            dim = int(np.argmax(spread))
            order = np.lexsort((self.ids[idxs], pts[:, dim]))
            mid = idxs.shape[0] // 2
            left = build(idxs[order[:mid]])
            right = build(idxs[order[mid:]])
            return _Node(lo, hi, left.start, right.end, left, right)

        self._root = build(np.arange(self.size))
        perm = np.concatenate(perm_chunks)
        self._tree_pts = np.ascontiguousarray(self.vectors[perm])
        self._tree_ids = np.ascontiguousarray(self.ids[perm])

    # -- search ------------------------------------------------------------

    def _box_distance(self, node: _Node, q: np.ndarray) -> float:
        d = np.maximum(node.lo - q, 0.0) + np.maximum(q - node.hi, 0.0)
        return math.sqrt(float((d * d).sum()))

    def _scan_leaf(self, node: _Node, q: np.ndarray, m: int, heap: list) -> None:
        pts = self._tree_pts[node.start : node.end]
        diffs = pts - q
        dists = np.sqrt((diffs * diffs).sum(axis=1))
        ids = self._tree_ids[node.start : node.end]
        for pos in range(dists.shape[0]):
            d = float(dists[pos])
            i = int(ids[pos])
            if len(heap) < m:
                heapq.heappush(heap, (-d, -i))
            elif (d, i) < (-heap[0][0], -heap[0][1]):
                heapq.heappushpop(heap, (-d, -i))

    def _search_exact(self, q: np.ndarray, m: int) -> list:
        heap: list = []

        def visit(node: _Node):
            if node.is_leaf:
                self._scan_leaf(node, q, m, heap)
                return
            bl = self._box_distance(node.left, q)
            br = self._box_distance(node.right, q)
            children = [(bl, 0, node.left), (br, 1, node.right)]
            children.sort(key=lambda c: (c[0], c[1]))
            for bound, _, child in children:
                # equal bounds must still be visited: a tied distance with a
                # lower id can displace the current worst hit
                if len(heap) == m and bound > -heap[0][0]:
                    continue
                visit(child)

        visit(self._root)
        return heap

    def _search_approx(self, q: np.ndarray, m: int, budget: int) -> list:
        heap: list = []
        counter = 0
        pq = [(self._box_distance(self._root, q), counter, self._root)]
        checked = 0
        while pq and checked < budget:
            bound, _, node = heapq.heappop(pq)
            if len(heap) == m and bound > -heap[0][0]:
                break  # bounds pop in nondecreasing order; nothing can improve
            if node.is_leaf:
                self._scan_leaf(node, q, m, heap)
                checked += 1
            else:
                for child in (node.left, node.right):
                    counter += 1
                    heapq.heappush(pq, (self._box_distance(child, q), counter, child))
        return heap

    def query(self, vector, m: int, check_budget: int | None = None) -> list[NeighborHit]:
        q = np.asarray(vector, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dimension:
            raise ValueError(
                f"query dimension {q.shape[0]} does not match index dimension {self.dimension}"
            )
        if not isinstance(m, (int, np.integer)) or isinstance(m, bool):
            raise ValueError(f"M must be an integer, got {m!r}")
        if not 1 <= m <= self.size:
            raise ValueError(f"M must satisfy 1 <= M <= {self.size}, got {m}")
        if check_budget is None:
            heap = self._search_exact(q, int(m))
        else:
            if check_budget < 1:
                raise ValueError(f"check_budget must be >= 1, got {check_budget}")
            heap = self._search_approx(q, int(m), int(check_budget))
        hits = sorted((-d, -i) for d, i in heap)
        return [NeighborHit(id=i, distance=d) for d, i in hits]


def build_index(entries) -> NeighborIndex:
    """Build an index from (id, vector) pairs or an (ids, matrix) tuple."""
    if isinstance(entries, tuple) and len(entries) == 2 and not np.isscalar(entries[0]):
        ids, vectors = entries
        return NeighborIndex(np.asarray(ids), np.asarray(vectors))
    entries = list(entries)
    if not entries:
        raise ValueError("cannot build an index from zero entries")
    ids = np.array([e[0] for e in entries], dtype=np.int64)
    vectors = np.array([np.asarray(e[1], dtype=np.float64).reshape(-1) for e in entries])
    return NeighborIndex(ids, vectors)


def knn(
    index: NeighborIndex, query, m: int, check_budget: int | None = None
) -> list[NeighborHit]:
    """M nearest entries, ascending distance, ties toward the lower id.

    check_budget=None gives the exact result; an integer switches to the
    approximate best-first search bounded by that many leaf inspections.
    """
    return index.query(query, m, check_budget=check_budget)


def brute_force_knn(entries: Sequence, query, m: int) -> list[NeighborHit]:
    """Linear-scan oracle: definitionally correct, kept independent of the
    tree implementation."""
    entries = list(entries)
    if not 1 <= m <= len(entries):
        raise ValueError(f"M must satisfy 1 <= M <= {len(entries)}, got {m}")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    scored = []
    for entry_id, vec in entries:
        v = np.asarray(vec, dtype=np.float64).reshape(-1)
        if v.shape != q.shape:
            raise ValueError("entry/query dimension mismatch")
        diff = v - q
        scored.append((math.sqrt(float((diff * diff).sum())), int(entry_id)))
    scored.sort()
    return [NeighborHit(id=i, distance=d) for d, i in scored[:m]]


def batch_knn(index: NeighborIndex, queries: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact M-nearest search for many queries at once.

    Returns (ids, distances), each (n_queries, m), rows sorted by
    (distance, id). Equivalent to calling knn per row; vectorized for the
    scoring hot loop.
    """
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != index.dimension:
        raise ValueError(f"queries must be (n, {index.dimension}), got {Q.shape}")
    if not 1 <= m <= index.size:
        raise ValueError(f"M must satisfy 1 <= M <= {index.size}, got {m}")
    n = index.size
    pts = index.vectors
    all_ids = index.ids
    out_ids = np.empty((Q.shape[0], m), dtype=np.int64)
    out_d = np.empty((Q.shape[0], m), dtype=np.float64)

    rows_per_chunk = max(1, int(32_000_000 / (n * index.dimension * 8)))
    for start in range(0, Q.shape[0], rows_per_chunk):
        chunk = Q[start : start + rows_per_chunk]
        diff = chunk[:, None, :] - pts[None, :, :]
        dists = np.sqrt((diff * diff).sum(axis=2))
        if m == n:
            sel = np.broadcast_to(np.arange(n), dists.shape).copy()
            sel_d = dists.copy()
        else:
            part = np.argpartition(dists, m - 1, axis=1)
            sel = part[:, :m]
            sel_d = np.take_along_axis(dists, sel, axis=1)
            # a distance tie crossing the partition boundary can hide a lower
            # id among the discarded columns; repair those rows exactly
            rest_min = np.take_along_axis(dists, part[:, m:], axis=1).min(axis=1)
            for row in np.nonzero(rest_min <= sel_d.max(axis=1))[0]:
                order = np.lexsort((all_ids, dists[row]))[:m]
                sel[row] = order
                sel_d[row] = dists[row, order]
        sel_ids = all_ids[sel]
        o1 = np.argsort(sel_ids, axis=1, kind="stable")
        ids1 = np.take_along_axis(sel_ids, o1, axis=1)
        d1 = np.take_along_axis(sel_d, o1, axis=1)
        o2 = np.argsort(d1, axis=1, kind="stable")
        out_ids[start : start + chunk.shape[0]] = np.take_along_axis(ids1, o2, axis=1)
        out_d[start : start + chunk.shape[0]] = np.take_along_axis(d1, o2, axis=1)
    return out_ids, out_d
