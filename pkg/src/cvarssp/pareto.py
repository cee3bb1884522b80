"""Convex Pareto polygons of (reach probability, expected remaining cost) pairs.

A polygon is stored as its lower-left boundary: vertices with strictly increasing
``p`` and ``E`` and strictly increasing edge slopes. The represented set is the
convex hull of the vertices closed leftward (smaller ``p``) and upward (larger
``E``). Each vertex may carry a tag recording how it was produced.
"""

from __future__ import annotations

import heapq
from typing import Iterable, Sequence

from .model import Number


class ParetoPolygon:
    __slots__ = ("points", "tags")

    def __init__(self, points: Sequence[tuple[Number, Number]], tags: Sequence | None = None, check: bool = False):
        self.points = tuple(points)
        self.tags = tuple(tags) if tags is not None else (None,) * len(self.points)
        if not self.points:
            raise ValueError("a Pareto polygon needs at least one vertex")
        if check:
            self.check()

    @classmethod
    def point(cls, p: Number, e: Number, tag=None) -> "ParetoPolygon":
        return cls(((p, e),), (tag,))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        return isinstance(other, ParetoPolygon) and self.points == other.points

    def __hash__(self):
        return hash(self.points)

    def __repr__(self):
        return f"ParetoPolygon({[(str(p), str(e)) for p, e in self.points]})"

    def check(self, tol: float = 0) -> None:
        pts = self.points
        for (p0, e0), (p1, e1) in zip(pts, pts[1:]):
            if not (p1 - p0 > tol and e1 - e0 > tol):
                raise ValueError(f"vertices not strictly increasing: {(p0, e0)} -> {(p1, e1)}")
        for a, b, c in zip(pts, pts[1:], pts[2:]):
            if _cross(a, b, c) <= tol:
                raise ValueError(f"boundary not strictly convex at {b}")

    def scale(self, w: Number) -> "ParetoPolygon":
        if w <= 0:
            raise ValueError("scale factor must be positive")
        if w == 1:
            return self
        return ParetoPolygon([(w * p, w * e) for p, e in self.points], self.tags)

    def query_min_E(self, p: Number, tol: float = 0) -> Number | None:
        """Least E with (p, E) in the polygon, or None if ``p`` is out of reach."""
        pts = self.points
        if p <= pts[0][0]:
            return pts[0][1]
        if p > pts[-1][0] + tol:
            return None
        if p >= pts[-1][0]:
            return pts[-1][1]
        lo, hi = 0, len(pts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pts[mid][0] <= p:
                lo = mid
            else:
                hi = mid
        (p0, e0), (p1, e1) = pts[lo], pts[hi]
        return e0 + (e1 - e0) * (p - p0) / (p1 - p0)

    def bracket(self, p: Number) -> tuple[int, int, Number]:
        """Vertex indices ``(i, j)`` and weight ``lam`` on ``i`` such that the boundary
        point at abscissa ``p`` is ``lam * v_i + (1 - lam) * v_j``."""
        pts = self.points
        if p <= pts[0][0]:
            return 0, 0, 1
        if p >= pts[-1][0]:
            last = len(pts) - 1
            return last, last, 1
        for i in range(len(pts) - 1):
            if pts[i][0] <= p <= pts[i + 1][0]:
                p0, p1 = pts[i][0], pts[i + 1][0]
                lam = (p1 - p) / (p1 - p0)
                return i, i + 1, lam
        raise AssertionError("unreachable")

    def dominates(self, q: tuple[Number, Number], tol: float = 0) -> bool:
        """True if ``q`` lies in the polygon (up to ``tol`` in E)."""
        best = self.query_min_E(q[0], tol)
        return best is not None and best <= q[1] + tol

    def merge_vertices(self, tol: float) -> "ParetoPolygon":
        """Drop interior vertices while the boundary moves by at most ``tol`` in E."""
        if tol < 0:
            raise ValueError("tolerance must be nonnegative")
        pts = self.points
        if len(pts) <= 2:
            return self
        keep = [0]
        skipped: list[int] = []
        for i in range(1, len(pts) - 1):
            anchor, nxt = pts[keep[-1]], pts[i + 1]
            if all(_gap(anchor, nxt, pts[k]) <= tol for k in (*skipped, i)):
                skipped.append(i)
            else:
                keep.append(i)
                skipped = []
        keep.append(len(pts) - 1)
        if len(keep) == len(pts):
            return self
        return ParetoPolygon([pts[k] for k in keep], [self.tags[k] for k in keep])


def _cross(a, b, c) -> Number:
    """Twice the signed area of (a, b, c); positive for a left turn."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _gap(a, b, q) -> Number:
    """Vertical distance from ``q`` up to segment ``ab`` at ``q``'s abscissa."""
    if b[0] == a[0]:
        return abs(q[1] - a[1])
    line = a[1] + (b[1] - a[1]) * (q[0] - a[0]) / (b[0] - a[0])
    return line - q[1]


def minkowski_sum(polys: Sequence[ParetoPolygon], tol: float = 0) -> ParetoPolygon:
    """Boundary of the Minkowski sum, by merging all boundary edges by slope.

    Vertex tags are tuples holding, for each input, the index of the vertex it
    contributes.
    """
    if not polys:
        raise ValueError("empty Minkowski sum")
    idx = [0] * len(polys)
    p = sum(q.points[0][0] for q in polys)
    e = sum(q.points[0][1] for q in polys)
    points = [(p, e)]
    tags = [tuple(idx)]
    heap: list = []
    for k, q in enumerate(polys):
        if len(q.points) > 1:
            heap.append(_Edge(q, k, 0))
    heapq.heapify(heap)
    while heap:
        edge = heapq.heappop(heap)
        k = edge.owner
        (p0, e0), (p1, e1) = edge.poly.points[edge.i], edge.poly.points[edge.i + 1]
        p += p1 - p0
        e += e1 - e0
        idx[k] = edge.i + 1
        if edge.i + 2 < len(edge.poly.points):
            heapq.heappush(heap, _Edge(edge.poly, k, edge.i + 1))
        # equal slopes continue the same boundary edge
        if len(points) >= 2 and abs(_cross(points[-2], points[-1], (p, e))) <= tol:
            points[-1] = (p, e)
            tags[-1] = tuple(idx)
        else:
            points.append((p, e))
            tags.append(tuple(idx))
    return ParetoPolygon(points, tags)


class _Edge:
    __slots__ = ("poly", "owner", "i", "dp", "de")

    def __init__(self, poly: ParetoPolygon, owner: int, i: int):
        self.poly, self.owner, self.i = poly, owner, i
        (p0, e0), (p1, e1) = poly.points[i], poly.points[i + 1]
        self.dp, self.de = p1 - p0, e1 - e0

    def __lt__(self, other: "_Edge") -> bool:
        lhs, rhs = self.de * other.dp, other.de * self.dp
        if lhs != rhs:
            return lhs < rhs
        return self.owner < other.owner


def hull_union(polys: Iterable[ParetoPolygon], tol: float = 0) -> ParetoPolygon:
    """Lower-left convex hull of the union; dominated and collinear vertices go."""
    cand = [(pt, tag) for q in polys for pt, tag in zip(q.points, q.tags)]
    if not cand:
        raise ValueError("hull of an empty union")
    # larger p first; among equal p keep the smallest E
    cand.sort(key=lambda c: (-c[0][0], c[0][1]))
    frontier = []
    best_e = None
    for pt, tag in cand:
        if best_e is None or pt[1] < best_e - tol:
            if frontier and frontier[-1][0][0] - pt[0] <= tol:
                frontier[-1] = (pt, tag)
            else:
                frontier.append((pt, tag))
            best_e = pt[1]
    frontier.reverse()
    hull: list = []
    for pt, tag in frontier:
        while len(hull) >= 2 and _cross(hull[-2][0], hull[-1][0], pt) <= tol:
            hull.pop()
        hull.append((pt, tag))
    return ParetoPolygon([h[0] for h in hull], [h[1] for h in hull])
