"""Planar primitives shared by the tessellation, statistics and fitting code.

Coordinates are plain floats. Predicates compare against an absolute
tolerance that callers derive from the window size with :func:`tolerance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

REL_TOL = 1e-9


def tolerance(diameter: float) -> float:
    """Geometric tolerance used by alignment and coincidence predicates."""
    return REL_TOL * max(diameter, 1e-300)


class Point(NamedTuple):
    x: float
    y: float


class SegmentGeom(NamedTuple):
    a: Point
    b: Point

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])


def segment(ax, ay, bx, by) -> SegmentGeom:
    return SegmentGeom(Point(float(ax), float(ay)), Point(float(bx), float(by)))


@dataclass(frozen=True)
class LineGeom:
    """Line ``{p : p . normal = offset}`` with direction angle in [0, pi)."""

    angle: float
    offset: float

    def __post_init__(self):
        k = math.floor(self.angle / math.pi)
        a = self.angle - k * math.pi
        if a >= math.pi:
            a, k = a - math.pi, k + 1
        # each half-turn of the direction flips the normal
        off = -self.offset if k % 2 else self.offset
        object.__setattr__(self, "angle", float(a))
        object.__setattr__(self, "offset", float(off))

    @property
    def direction(self) -> tuple[float, float]:
        return (math.cos(self.angle), math.sin(self.angle))

    @property
    def normal(self) -> tuple[float, float]:
        return (-math.sin(self.angle), math.cos(self.angle))

    def signed_distance(self, p) -> float:
        nx, ny = self.normal
        return p[0] * nx + p[1] * ny - self.offset

    def point_at(self, t: float) -> Point:
        dx, dy = self.direction
        nx, ny = self.normal
        return Point(nx * self.offset + t * dx, ny * self.offset + t * dy)

    def aligned_with(self, other: "LineGeom", eps: float, scale: float = 1.0) -> bool:
        """Both fields agree within ``eps``; angles compared modulo pi.

        ``scale`` converts an angular difference into a length so that the
        angle test is as strict as the offset test at the window scale.
        """
        da = abs(self.angle - other.angle)
        if da <= eps / scale and abs(self.offset - other.offset) <= eps:
            return True
        if math.pi - da <= eps / scale and abs(self.offset + other.offset) <= eps:
            return True
        return False


def line_through(p, q) -> LineGeom:
    dx, dy = q[0] - p[0], q[1] - p[1]
    angle = math.atan2(dy, dx)
    if angle < 0:
        angle += math.pi
    if angle >= math.pi:
        angle -= math.pi
    nx, ny = -math.sin(angle), math.cos(angle)
    return LineGeom(angle, p[0] * nx + p[1] * ny)


def project_onto_line(p, line: LineGeom) -> float:
    """Signed coordinate of the orthogonal projection of ``p`` along ``line``."""
    dx, dy = line.direction
    return p[0] * dx + p[1] * dy


def total_least_squares_line(points: Sequence) -> LineGeom:
    """Line minimising the sum of squared orthogonal distances."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("at least two points are needed to fit a line")
    centroid = pts.mean(axis=0)
    centred = pts - centroid
    if np.max(np.abs(centred)) == 0.0:
        raise ValueError("all points coincide")
    # principal axis of the scatter matrix
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    dx, dy = vt[0]
    angle = math.atan2(dy, dx)
    return line_through(centroid, (centroid[0] + math.cos(angle), centroid[1] + math.sin(angle)))


def signed_area(ring) -> float:
    # plain loop: rings are short and numpy call overhead dominates
    n = len(ring)
    acc = 0.0
    x0, y0 = ring[n - 1]
    for x1, y1 in ring:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return 0.5 * float(acc)


def ring_perimeter(ring) -> float:
    n = len(ring)
    acc = 0.0
    x0, y0 = ring[n - 1]
    for x1, y1 in ring:
        acc += math.hypot(x1 - x0, y1 - y0)
        x0, y0 = x1, y1
    return float(acc)


def _hull(points) -> list:
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain); collinear points dropped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2).tolist()
    return np.asarray(_hull(pts), dtype=float).reshape(-1, 2)


def convex_hull_area(s1: SegmentGeom, s2: SegmentGeom) -> float:
    hull = convex_hull([s1.a, s1.b, s2.a, s2.b])
    if len(hull) < 3:
        return 0.0
    return abs(signed_area(hull))


def point_segment_distance(p, a, b) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / l2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(s1: SegmentGeom, s2: SegmentGeom) -> bool:
    a, b = s1
    c, d = s2
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0 > o2) or (o1 < 0 < o2)) and ((o3 > 0 > o4) or (o3 < 0 < o4)):
        return True
    # touching / collinear overlap
    return min(
        point_segment_distance(c, a, b),
        point_segment_distance(d, a, b),
        point_segment_distance(a, c, d),
        point_segment_distance(b, c, d),
    ) == 0.0


def min_segment_distance(s1: SegmentGeom, s2: SegmentGeom) -> float:
    if segments_intersect(s1, s2):
        return 0.0
    return min(
        point_segment_distance(s1.a, *s2),
        point_segment_distance(s1.b, *s2),
        point_segment_distance(s2.a, *s1),
        point_segment_distance(s2.b, *s1),
    )


@dataclass(frozen=True)
class PolygonGeom:
    """Polygon with a counter-clockwise outer ring and clockwise holes."""

    outer: tuple
    holes: tuple = field(default_factory=tuple)

    @classmethod
    def from_rings(cls, outer, holes=()) -> "PolygonGeom":
        out = [Point(float(x), float(y)) for x, y in _open_ring(outer)]
        if len(out) < 3:
            raise ValueError("outer ring needs at least three vertices")
        if signed_area(out) < 0:
            out.reverse()
        hs = []
        for h in holes:
            ring = [Point(float(x), float(y)) for x, y in _open_ring(h)]
            if len(ring) < 3:
                raise ValueError("hole ring needs at least three vertices")
            if signed_area(ring) > 0:
                ring.reverse()
            hs.append(tuple(ring))
        return cls(tuple(out), tuple(hs))

    @property
    def rings(self) -> list:
        return [self.outer, *self.holes]

    def area(self) -> float:
        return signed_area(self.outer) + sum(signed_area(h) for h in self.holes)

    def perimeter(self) -> float:
        return sum(ring_perimeter(r) for r in self.rings)

    def bbox(self) -> tuple[float, float, float, float]:
        o = np.asarray(self.outer)
        return float(o[:, 0].min()), float(o[:, 1].min()), float(o[:, 0].max()), float(o[:, 1].max())

    def diameter(self) -> float:
        o = np.asarray(self.outer)
        d = o[:, None, :] - o[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def sides(self) -> list[SegmentGeom]:
        out = []
        for r in self.rings:
            n = len(r)
            out.extend(SegmentGeom(r[i], r[(i + 1) % n]) for i in range(n))
        return out

    def is_convex(self) -> bool:
        if self.holes:
            return False
        r = self.outer
        n = len(r)
        return all(_orient(r[i], r[(i + 1) % n], r[(i + 2) % n]) >= 0 for i in range(n))

    def contains(self, p) -> bool:
        if not point_in_ring(p, self.outer):
            return False
        return not any(point_in_ring(p, h) for h in self.holes)

    def boundary_distance(self, p) -> float:
        return min(point_segment_distance(p, s.a, s.b) for s in self.sides())


def _open_ring(ring):
    pts = [tuple(map(float, p)) for p in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return pts


def point_in_ring(p, ring) -> bool:
    x, y = p
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if (yi > y) != (yj > y):
            xc = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xc:
                inside = not inside
        j = i
    return inside


def polygon_area(p: PolygonGeom) -> float:
    a = p.area()
    if a <= 0:
        raise ValueError("polygon has non-positive area")
    return a


def polygon_perimeter(p: PolygonGeom) -> float:
    return p.perimeter()


def rectangle_polygon(x0, y0, x1, y1) -> PolygonGeom:
    return PolygonGeom.from_rings([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


UNIT_SQUARE = rectangle_polygon(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True)
class BoundingRect:
    center: Point
    angle: float
    length: float
    width: float

    @property
    def ratio(self) -> float:
        return self.length / self.width

    @property
    def area(self) -> float:
        return self.length * self.width


def min_enclosing_rectangle(points) -> BoundingRect:
    """Smallest-area enclosing rectangle (one side flush with a hull edge)."""
    if isinstance(points, PolygonGeom):
        points = points.outer
    # cells have a handful of vertices, so plain Python beats numpy here
    hull = _hull(points)
    if len(hull) < 3 or abs(signed_area(hull)) <= 0.0:
        raise ValueError("degenerate polygon has no enclosing rectangle")
    n = len(hull)
    cands = []
    for i in range(n):
        (x0, y0), (x1, y1) = hull[i], hull[(i + 1) % n]
        ang = math.atan2(y1 - y0, x1 - x0)
        c, s_ = math.cos(ang), math.sin(ang)
        us = [c * x + s_ * y for x, y in hull]
        vs = [-s_ * x + c * y for x, y in hull]
        cands.append((ang, c, s_, min(us), max(us), min(vs), max(vs)))
    areas = [(c[4] - c[3]) * (c[6] - c[5]) for c in cands]
    amin = min(areas)
    best = None
    # minimal-area rectangles can tie (right triangles); take the least elongated
    for a, cand in zip(areas, cands):
        if a <= amin * (1 + 1e-9):
            du, dv = cand[4] - cand[3], cand[6] - cand[5]
            r = max(du, dv) / min(du, dv)
            if best is None or r < best[0]:
                best = (r, cand)
    ang, c, s_, u0, u1, v0, v1 = best[1]
    uc, vc = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    center = Point(uc * c - vc * s_, uc * s_ + vc * c)
    length, width = u1 - u0, v1 - v0
    if width > length:
        length, width = width, length
        ang += math.pi / 2
    return BoundingRect(center, ang % math.pi, length, width)


def elongation(points) -> float:
    """Length-to-width ratio of the minimum enclosing rectangle."""
    return min_enclosing_rectangle(points).ratio


def interior_angles(ring) -> np.ndarray:
    """Interior angle at every vertex of a counter-clockwise ring, in [0, 2pi)."""
    r = np.asarray(ring, dtype=float)
    prev = np.roll(r, 1, axis=0) - r
    nxt = np.roll(r, -1, axis=0) - r
    a_prev = np.arctan2(prev[:, 1], prev[:, 0])
    a_next = np.arctan2(nxt[:, 1], nxt[:, 0])
    # sweep counter-clockwise from the outgoing to the incoming edge
    return np.mod(a_prev - a_next, 2 * math.pi)
