"""T-tessellation data structure, validator and the three local updates.

A :class:`TTess` stores vertices, internal segments (ordered vertex chains),
window boundary rings (cyclic vertex chains) and cells (counter-clockwise
vertex cycles).  Edges are consecutive vertex pairs of a chain.  Directed
edges map to the cell on their left, which gives constant-time adjacency.

Public update methods return new tessellations; the ``_*_inplace`` methods
mutate and are reserved for the sampler, which owns a private copy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, NamedTuple, Union

import numpy as np

from .geometry import (
    LineGeom,
    Point,
    PolygonGeom,
    SegmentGeom,
    line_through,
    point_in_ring,
    ring_perimeter,
    signed_area,
    tolerance,
)

EXTERIOR = -1


class InvalidUpdate(ValueError):
    """A local update whose preconditions fail; the sampler rejects it."""


@dataclass
class Cell:
    boundary: list
    holes: list = field(default_factory=list)
    area: float = 0.0
    perimeter: float = 0.0


class Vertex(NamedTuple):
    id: int
    point: Point
    incident: tuple
    kind: str  # "border" or "internal"


class Edge(NamedTuple):
    u: int
    v: int
    owner: int  # segment id, or -1-k for boundary ring k
    left: int
    right: int


class Seg(NamedTuple):
    id: int
    vertices: tuple
    line: LineGeom
    blocked: tuple  # per end: terminates on another segment


@dataclass(frozen=True)
class Split:
    cell: int
    chord: SegmentGeom


@dataclass(frozen=True)
class Merge:
    segment: int


@dataclass(frozen=True)
class Flip:
    segment: int
    end: Literal["first", "last"]


LocalUpdate = Union[Split, Merge, Flip]


class Violation(NamedTuple):
    rule: str
    element: str
    detail: str


def _key(a: int, b: int) -> tuple:
    return (a, b) if a < b else (b, a)


class TTess:
    def __init__(self, window: PolygonGeom):
        self.window = window
        self.diameter = window.diameter()
        self.eps = tolerance(self.diameter)
        self.points: dict[int, tuple] = {}
        self.segments: dict[int, list] = {}
        self.rings: list[list] = []
        self.cells: dict[int, Cell] = {}
        self.half: dict[tuple, int] = {}
        self.owner: dict[tuple, int] = {}
        self.chains_at: dict[int, list] = {}
        self._next_vid = 0
        self._next_sid = 0
        self._next_cid = 0

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def empty(cls, window: PolygonGeom) -> "TTess":
        """Window-only tessellation: one cell per connected window."""
        from .arrangement import from_segments

        return from_segments(window, [])

    def copy(self) -> "TTess":
        t = TTess.__new__(TTess)
        t.window = self.window
        t.diameter = self.diameter
        t.eps = self.eps
        t.points = dict(self.points)
        t.segments = {k: list(v) for k, v in self.segments.items()}
        t.rings = [list(r) for r in self.rings]
        t.cells = {
            k: Cell(list(c.boundary), [list(h) for h in c.holes], c.area, c.perimeter)
            for k, c in self.cells.items()
        }
        t.half = dict(self.half)
        t.owner = dict(self.owner)
        t.chains_at = {k: list(v) for k, v in self.chains_at.items()}
        t._next_vid = self._next_vid
        t._next_sid = self._next_sid
        t._next_cid = self._next_cid
        return t

    def _new_vertex(self, pt) -> int:
        v = self._next_vid
        self._next_vid += 1
        self.points[v] = (float(pt[0]), float(pt[1]))
        self.chains_at[v] = []
        return v

    def _new_cell_id(self) -> int:
        c = self._next_cid
        self._next_cid += 1
        return c

    def _new_segment_id(self) -> int:
        s = self._next_sid
        self._next_sid += 1
        return s

    # ------------------------------------------------------------------
    # read access

    def chain(self, ch: int) -> list:
        return self.segments[ch] if ch >= 0 else self.rings[-1 - ch]

    def is_ring(self, ch: int) -> bool:
        return ch < 0

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def neighbors(self, v: int) -> list:
        out = []
        for ch in self.chains_at[v]:
            c = self.chain(ch)
            if ch < 0:
                i = c.index(v)
                n = len(c)
                out.append(c[(i - 1) % n])
                out.append(c[(i + 1) % n])
            else:
                i = c.index(v)
                if i > 0:
                    out.append(c[i - 1])
                if i < len(c) - 1:
                    out.append(c[i + 1])
        return out

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def on_boundary(self, v: int) -> bool:
        return any(ch < 0 for ch in self.chains_at[v])

    def vertices(self) -> Iterator[Vertex]:
        for v, p in self.points.items():
            kind = "border" if self.on_boundary(v) else "internal"
            yield Vertex(v, Point(*p), tuple(self.neighbors(v)), kind)

    def edges(self) -> Iterator[Edge]:
        for (a, b), ch in self.owner.items():
            yield Edge(a, b, ch, self.half.get((a, b), EXTERIOR), self.half.get((b, a), EXTERIOR))

    def segment_line(self, sid: int) -> LineGeom:
        c = self.segments[sid]
        return line_through(self.points[c[0]], self.points[c[-1]])

    def segment_geom(self, sid: int) -> SegmentGeom:
        c = self.segments[sid]
        return SegmentGeom(Point(*self.points[c[0]]), Point(*self.points[c[-1]]))

    def segment_geoms(self) -> list[SegmentGeom]:
        return [self.segment_geom(s) for s in sorted(self.segments)]

    def segment_info(self, sid: int) -> Seg:
        c = self.segments[sid]
        blocked = tuple(not self.on_boundary(v) for v in (c[0], c[-1]))
        return Seg(sid, tuple(c), self.segment_line(sid), blocked)

    def n_edges(self, sid: int) -> int:
        return len(self.segments[sid]) - 1

    def is_non_blocking(self, sid: int) -> bool:
        return len(self.segments[sid]) == 2

    def cell_ring(self, cid: int) -> np.ndarray:
        pts = self.points
        return np.array([pts[v] for v in self.cells[cid].boundary], dtype=float)

    def cell_polygon(self, cid: int) -> PolygonGeom:
        c = self.cells[cid]
        pts = self.points
        return PolygonGeom(
            tuple(Point(*pts[v]) for v in c.boundary),
            tuple(tuple(Point(*pts[v]) for v in h) for h in c.holes),
        )

    def total_internal_length(self) -> float:
        return sum(s.length for s in self.segment_geoms())

    def canonical_key(self, digits: int = 7) -> frozenset:
        """Id-free identity: the set of segment endpoint pairs, rounded."""
        scale = self.diameter
        out = []
        for s in self.segments.values():
            a = self.points[s[0]]
            b = self.points[s[-1]]
            ka = (round(a[0] / scale, digits) + 0.0, round(a[1] / scale, digits) + 0.0)
            kb = (round(b[0] / scale, digits) + 0.0, round(b[1] / scale, digits) + 0.0)
            out.append((ka, kb) if ka <= kb else (kb, ka))
        return frozenset(out)

    def _refresh_cell_geometry(self, cid: int) -> None:
        c = self.cells[cid]
        pts = self.points
        ring = [pts[v] for v in c.boundary]
        area = signed_area(ring) if len(ring) >= 3 else 0.0
        per = ring_perimeter(ring) if len(ring) >= 2 else 0.0
        for h in c.holes:
            hr = [pts[v] for v in h]
            if len(hr) >= 3:
                area += signed_area(hr)
            if len(hr) >= 2:
                per += ring_perimeter(hr)
        c.area = area
        c.perimeter = per

    # ------------------------------------------------------------------
    # low-level in-place primitives

    def _chain_insert(self, ch: int, a: int, b: int, v: int) -> None:
        c = self.chain(ch)
        n = len(c)
        for i in range(n if ch < 0 else n - 1):
            j = (i + 1) % n
            if (c[i] == a and c[j] == b) or (c[i] == b and c[j] == a):
                c.insert(i + 1, v)
                return
        raise KeyError(f"edge {a}-{b} not in chain {ch}")

    def _cycle_insert(self, cid: int, x: int, y: int, v: int) -> None:
        cell = self.cells[cid]
        for cyc in (cell.boundary, *cell.holes):
            n = len(cyc)
            for i in range(n):
                if cyc[i] == x and cyc[(i + 1) % n] == y:
                    cyc.insert(i + 1, v)
                    return
        raise KeyError(f"directed edge {x}->{y} not in cell {cid}")

    def _cycle_remove(self, cid: int, x: int, v: int, y: int) -> None:
        cell = self.cells[cid]
        for cyc in (cell.boundary, *cell.holes):
            n = len(cyc)
            for i in range(n):
                if cyc[i] == v and cyc[i - 1] == x and cyc[(i + 1) % n] == y:
                    del cyc[i]
                    return
        raise KeyError(f"path {x}->{v}->{y} not in cell {cid}")

    def _insert_on_edge(self, a: int, b: int, pt) -> int:
        """Subdivide edge a-b at ``pt``; both incident cells gain the vertex."""
        ch = self.owner.pop(_key(a, b))
        v = self._new_vertex(pt)
        self._chain_insert(ch, a, b, v)
        self.owner[_key(a, v)] = ch
        self.owner[_key(v, b)] = ch
        self.chains_at[v].append(ch)
        for x, y in ((a, b), (b, a)):
            c = self.half.pop((x, y))
            self.half[(x, v)] = c
            self.half[(v, y)] = c
            if c != EXTERIOR:
                self._cycle_insert(c, x, y, v)
        return v

    def _dissolve(self, v: int) -> bool:
        """Remove a straight-angle vertex lying inside a single chain."""
        if len(self.chains_at[v]) != 1:
            return False
        ch = self.chains_at[v][0]
        c = self.chain(ch)
        i = c.index(v)
        n = len(c)
        if ch >= 0 and (i == 0 or i == n - 1):
            return False
        a, b = c[i - 1], c[(i + 1) % n]
        pa, pv, pb = self.points[a], self.points[v], self.points[b]
        cross = (pv[0] - pa[0]) * (pb[1] - pa[1]) - (pv[1] - pa[1]) * (pb[0] - pa[0])
        if abs(cross) > self.eps * max(math.dist(pa, pb), self.eps):
            return False  # a genuine corner of the window
        del c[i]
        del self.owner[_key(a, v)]
        del self.owner[_key(v, b)]
        self.owner[_key(a, b)] = ch
        for x, y in ((a, b), (b, a)):
            cl = self.half.pop((x, v))
            del self.half[(v, y)]
            self.half[(x, y)] = cl
            if cl != EXTERIOR:
                self._cycle_remove(cl, x, v, y)
        del self.points[v]
        del self.chains_at[v]
        return True

    def _split_cell(self, cid: int, u: int, v: int, ch: int) -> tuple[int, int]:
        """Add edge u-v (owned by chain ``ch``) across cell ``cid``."""
        cell = self.cells.pop(cid)
        cyc = cell.boundary
        iu = cyc.index(u)
        r = cyc[iu:] + cyc[:iu]
        iv = r.index(v)
        ring_a = r[: iv + 1]
        ring_b = r[iv:] + [u]
        ca, cb = self._new_cell_id(), self._new_cell_id()
        self.cells[ca] = Cell(ring_a)
        self.cells[cb] = Cell(ring_b)
        for cid_new, ring in ((ca, ring_a), (cb, ring_b)):
            n = len(ring)
            for i in range(n):
                self.half[(ring[i], ring[(i + 1) % n])] = cid_new
        if cell.holes:
            pts = self.points
            poly_a = [pts[w] for w in ring_a]
            for h in cell.holes:
                target = ca if point_in_ring(pts[h[0]], poly_a) else cb
                self.cells[target].holes.append(h)
                for i in range(len(h)):
                    self.half[(h[i], h[(i + 1) % len(h)])] = target
        self.owner[_key(u, v)] = ch
        self._refresh_cell_geometry(ca)
        self._refresh_cell_geometry(cb)
        return ca, cb

    def _merge_cells(self, u: int, v: int) -> int:
        """Delete edge u-v and fuse the two cells on its sides."""
        ca = self.half.pop((v, u))
        cb = self.half.pop((u, v))
        del self.owner[_key(u, v)]
        if ca == cb:
            raise InvalidUpdate("edge has the same cell on both sides")
        a = self.cells.pop(ca)
        b = self.cells.pop(cb)
        ra = _rotate_after(a.boundary, v, u)  # starts at u, ends at v
        rb = _rotate_after(b.boundary, u, v)  # starts at v, ends at u
        fused = ra + rb[1:-1]
        c = self._new_cell_id()
        self.cells[c] = Cell(fused, a.holes + b.holes)
        n = len(fused)
        for i in range(n):
            self.half[(fused[i], fused[(i + 1) % n])] = c
        for h in self.cells[c].holes:
            for i in range(len(h)):
                self.half[(h[i], h[(i + 1) % len(h)])] = c
        self._refresh_cell_geometry(c)
        return c

    # ------------------------------------------------------------------
    # update planning (pure) and application (in place)

    def plan_split(self, cid: int, line: LineGeom, check_alignment: bool = True) -> "SplitPlan":
        """Chord of ``line`` across convex cell ``cid``; raises InvalidUpdate."""
        cell = self.cells.get(cid)
        if cell is None:
            raise InvalidUpdate(f"no cell {cid}")
        cyc = cell.boundary
        pts = self.points
        nx, ny = -math.sin(line.angle), math.cos(line.angle)
        off = line.offset
        eps = self.eps
        sd = [pts[v][0] * nx + pts[v][1] * ny - off for v in cyc]
        n = len(cyc)
        crossings = []
        for i in range(n):
            s0, s1 = sd[i], sd[(i + 1) % n]
            if abs(s0) <= eps:
                raise InvalidUpdate("chord passes through an existing vertex")
            if (s0 < 0) != (s1 < 0):
                t = s0 / (s0 - s1)
                p0, p1 = pts[cyc[i]], pts[cyc[(i + 1) % n]]
                x = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))
                # same rule as flips: cells thinner than this have no usable area
                if math.dist(x, p0) <= 10 * eps or math.dist(x, p1) <= 10 * eps:
                    raise InvalidUpdate("chord ends next to an existing vertex")
                crossings.append((i, x))
        if len(crossings) != 2:
            raise InvalidUpdate("line does not cut the cell into two parts")
        if check_alignment:
            for s in self.segments:
                if self._aligned(line, s):
                    raise InvalidUpdate("chord aligned with an existing segment")
        (i, p), (j, q) = crossings
        a, b = cyc[i], cyc[(i + 1) % n]
        c, d = cyc[j], cyc[(j + 1) % n]
        poly_a = [p] + [pts[cyc[k % n]] for k in range(i + 1, j + 1)] + [q]
        poly_b = [q] + [pts[cyc[k % n]] for k in range(j + 1, i + n + 1)] + [p]
        return SplitPlan(cid, line, (a, b), p, (c, d), q, (poly_a, poly_b))

    def _aligned(self, line: LineGeom, sid: int) -> bool:
        other = self.segment_line(sid)
        return line.aligned_with(other, max(self.eps, 1e-9 * self.diameter), self.diameter)

    def plan_split_chord(self, u: Split) -> "SplitPlan":
        line = line_through(u.chord.a, u.chord.b)
        plan = self.plan_split(u.cell, line)
        got = {plan.p, plan.q}
        tol = 1e-6 * self.diameter
        for end in (u.chord.a, u.chord.b):
            if min(math.dist(end, g) for g in got) > tol:
                raise InvalidUpdate("chord endpoints are not on the cell boundary")
        return plan

    def _apply_split(self, plan: "SplitPlan") -> int:
        (a, b), (c, d) = plan.edge_p, plan.edge_q
        vp = self._insert_on_edge(a, b, plan.p)
        vq = self._insert_on_edge(c, d, plan.q)
        sid = self._new_segment_id()
        self.segments[sid] = [vp, vq]
        self.chains_at[vp].append(sid)
        self.chains_at[vq].append(sid)
        self._split_cell(plan.cell, vp, vq, sid)
        return sid

    def plan_merge(self, sid: int) -> "MergePlan":
        chain = self.segments.get(sid)
        if chain is None:
            raise InvalidUpdate(f"no segment {sid}")
        if len(chain) != 2:
            raise InvalidUpdate("merge target is blocking (has more than one edge)")
        vp, vq = chain
        ca = self.half[(vq, vp)]
        cb = self.half[(vp, vq)]
        if ca == cb:
            raise InvalidUpdate("segment has the same cell on both sides")
        pts = self.points
        ra = _rotate_after(self.cells[ca].boundary, vq, vp)
        rb = _rotate_after(self.cells[cb].boundary, vp, vq)
        # the endpoints become straight-angle vertices; they are harmless here
        fused = [pts[v] for v in ra + rb[1:-1]]
        return MergePlan(sid, (ca, cb), fused, self.segment_line(sid))

    def _apply_merge(self, plan: "MergePlan") -> int:
        vp, vq = self.segments.pop(plan.segment)
        self.chains_at[vp].remove(plan.segment)
        self.chains_at[vq].remove(plan.segment)
        c = self._merge_cells(vp, vq)
        self._dissolve(vp)
        self._dissolve(vq)
        self._refresh_cell_geometry(c)
        return c

    def plan_flip(self, sid: int, end: str) -> "FlipPlan":
        chain = self.segments.get(sid)
        if chain is None:
            raise InvalidUpdate(f"no segment {sid}")
        if len(chain) < 3:
            raise InvalidUpdate("flip needs a segment with at least two edges")
        if end == "last":
            vk, w = chain[-1], chain[-2]
        elif end == "first":
            vk, w = chain[0], chain[1]
        else:
            raise InvalidUpdate(f"unknown end {end!r}")
        others = [ch for ch in self.chains_at[w] if ch != sid]
        if len(others) != 1 or others[0] < 0:
            raise InvalidUpdate("no segment terminates at the terminal edge's inner vertex")
        s2 = others[0]
        c2 = self.segments[s2]
        if c2[0] == w:
            nb, s2_end = c2[1], "first"
        elif c2[-1] == w:
            nb, s2_end = c2[-2], "last"
        else:
            raise InvalidUpdate("terminating segment does not end at the vertex")
        cl = self.half[(w, vk)]
        cr = self.half[(vk, w)]
        ra = _rotate_after(self.cells[cl].boundary, w, vk)  # vk ... w
        rb = _rotate_after(self.cells[cr].boundary, vk, w)  # w ... vk
        fused = ra + rb[1:-1]
        pts = self.points
        # vk becomes a straight-angle vertex of the chain it touched
        iv = fused.index(vk)
        if _is_flat(pts[fused[iv - 1]], pts[vk], pts[fused[(iv + 1) % len(fused)]], self.eps):
            fused.pop(iv)
        pw, pn = pts[w], pts[nb]
        dx, dy = pw[0] - pn[0], pw[1] - pn[1]
        norm = math.hypot(dx, dy)
        dx, dy = dx / norm, dy / norm
        n = len(fused)
        best = None
        for i in range(n):
            a, b = fused[i], fused[(i + 1) % n]
            # edges of the extended segment itself are collinear with the ray
            if a == w or b == w or self.owner.get(_key(a, b)) == s2:
                continue
            hit = _ray_segment(pw, (dx, dy), pts[a], pts[b])
            if hit is not None and (best is None or hit[0] < best[0]):
                best = (hit[0], hit[1], i)
        if best is None:
            raise InvalidUpdate("extension ray does not hit the cell boundary")
        tpar, u, i = best
        a, b = fused[i], fused[(i + 1) % n]
        pa, pb = pts[a], pts[b]
        x = (pa[0] + u * (pb[0] - pa[0]), pa[1] + u * (pb[1] - pa[1]))
        if math.dist(x, pa) <= 10 * self.eps or math.dist(x, pb) <= 10 * self.eps:
            raise InvalidUpdate("extension lands on an existing vertex")
        iw = fused.index(w)
        r = fused[iw:] + fused[:iw]
        ia = r.index(a)
        poly_p = [pts[v] for v in r[: ia + 1]] + [x]
        poly_q = [x] + [pts[v] for v in r[ia + 1:]] + [pw]
        return FlipPlan(sid, end, vk, w, s2, s2_end, (cl, cr), (a, b), x, (poly_p, poly_q))

    def _apply_flip(self, plan: "FlipPlan") -> tuple[int, str]:
        sid, vk, w = plan.segment, plan.removed_vertex, plan.pivot
        chain = self.segments[sid]
        if plan.end == "last":
            chain.pop()
        else:
            chain.pop(0)
        self.chains_at[vk].remove(sid)
        self._merge_cells(w, vk)
        self._dissolve(vk)
        a, b = plan.hit_edge
        vx = self._insert_on_edge(a, b, plan.hit_point)
        c2 = self.segments[plan.extended]
        if plan.extended_end == "first":
            c2.insert(0, vx)
        else:
            c2.append(vx)
        self.chains_at[vx].append(plan.extended)
        fused = self.half[(a, vx)]
        self._split_cell(fused, w, vx, plan.extended)
        return plan.extended, plan.extended_end

    # ------------------------------------------------------------------
    # public, value-returning updates

    def apply_split(self, u: Split) -> "TTess":
        plan = self.plan_split_chord(u)
        t = self.copy()
        t._apply_split(plan)
        return t

    def apply_merge(self, u: Merge) -> "TTess":
        plan = self.plan_merge(u.segment)
        t = self.copy()
        t._apply_merge(plan)
        return t

    def apply_flip(self, u: Flip) -> "TTess":
        plan = self.plan_flip(u.segment, u.end)
        t = self.copy()
        t._apply_flip(plan)
        return t

    def apply(self, u: LocalUpdate) -> "TTess":
        if isinstance(u, Split):
            return self.apply_split(u)
        if isinstance(u, Merge):
            return self.apply_merge(u)
        if isinstance(u, Flip):
            return self.apply_flip(u)
        raise TypeError(f"not a local update: {u!r}")

    def flippable_ends(self) -> list[tuple[int, str]]:
        out = []
        for sid in sorted(self.segments):
            if len(self.segments[sid]) >= 3:
                out.append((sid, "first"))
                out.append((sid, "last"))
        return out

    def non_blocking_segments(self) -> list[int]:
        return [s for s in sorted(self.segments) if len(self.segments[s]) == 2]

    # ------------------------------------------------------------------
    # serialisation

    def to_dict(self, metadata: dict | None = None) -> dict:
        out = {
            "window": [[list(p) for p in r] for r in self.window.rings],
            "segments": [[list(s.a), list(s.b)] for s in self.segment_geoms()],
        }
        if metadata:
            out["metadata"] = metadata
        return out

    def to_json(self, metadata: dict | None = None) -> str:
        return json.dumps(self.to_dict(metadata), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "TTess":
        from .arrangement import from_segments

        rings = data["window"]
        window = PolygonGeom.from_rings(rings[0], rings[1:])
        segs = []
        for line in data.get("segments", []):
            for a, b in zip(line[:-1], line[1:]):
                segs.append(SegmentGeom(Point(*map(float, a)), Point(*map(float, b))))
        return from_segments(window, segs)

    @classmethod
    def from_json(cls, text: str) -> "TTess":
        return cls.from_dict(json.loads(text))


class SplitPlan(NamedTuple):
    cell: int
    line: LineGeom
    edge_p: tuple
    p: tuple
    edge_q: tuple
    q: tuple
    new_polygons: tuple


class MergePlan(NamedTuple):
    segment: int
    cells: tuple
    fused: list
    line: LineGeom


class FlipPlan(NamedTuple):
    segment: int
    end: str
    removed_vertex: int
    pivot: int
    extended: int
    extended_end: str
    cells: tuple
    hit_edge: tuple
    hit_point: tuple
    new_polygons: tuple


def _rotate_after(cyc: list, x: int, y: int) -> list:
    """Rotate cycle so it starts at ``y`` right after the directed edge x->y."""
    n = len(cyc)
    for i in range(n):
        if cyc[i] == x and cyc[(i + 1) % n] == y:
            j = (i + 1) % n
            return cyc[j:] + cyc[:j]
    raise KeyError(f"directed edge {x}->{y} not in cycle")


def _is_flat(a, v, b, eps: float) -> bool:
    cross = (v[0] - a[0]) * (b[1] - a[1]) - (v[1] - a[1]) * (b[0] - a[0])
    return abs(cross) <= eps * max(math.dist(a, b), eps)


def _drop_flat(poly: list, eps: float) -> list:
    n = len(poly)
    return [poly[i] for i in range(n) if not _is_flat(poly[i - 1], poly[i], poly[(i + 1) % n], eps)]


def _ray_segment(o, d, a, b):
    """Ray o + t d (t > 0) against segment a-b: (t, u) or None."""
    ex, ey = b[0] - a[0], b[1] - a[1]
    den = d[0] * ey - d[1] * ex
    if abs(den) <= 1e-12 * math.hypot(ex, ey):
        return None
    wx, wy = a[0] - o[0], a[1] - o[1]
    t = (wx * ey - wy * ex) / den
    u = (wx * d[1] - wy * d[0]) / den
    if t <= 0.0 or u < 0.0 or u > 1.0:
        return None
    return t, u


# ----------------------------------------------------------------------
# validation


def validate(t: TTess) -> list[Violation]:
    """Violations of the T-tessellation conditions; empty when valid."""
    out: list[Violation] = []
    eps = t.eps
    pts = t.points
    for v in sorted(t.points):
        if t.on_boundary(v):
            continue
        nbrs = t.neighbors(v)
        deg = len(nbrs)
        straight = _has_straight_pair(pts[v], [pts[w] for w in nbrs], eps)
        if deg == 3 and straight:
            continue
        if deg == 1:
            kind = "I-vertex"
        elif deg == 2:
            kind = "L-vertex" if not straight else "straight degree-2 vertex"
        elif deg == 4 and _n_straight_pairs(pts[v], [pts[w] for w in nbrs], eps) == 2:
            kind = "X-vertex"
        else:
            kind = f"degree-{deg} vertex" if deg != 3 else "Y-vertex (no straight pair)"
        out.append(Violation("condition-1", f"vertex {v}", f"{kind} at {pts[v]}"))

    sids = sorted(t.segments)
    lines = {s: t.segment_line(s) for s in sids}
    for i, s in enumerate(sids):
        for s2 in sids[i + 1:]:
            if lines[s].aligned_with(lines[s2], max(eps, 1e-9 * t.diameter), t.diameter):
                out.append(Violation("condition-2", f"segments {s},{s2}", "distinct aligned segments"))
        chain = t.segments[s]
        a, b = pts[chain[0]], pts[chain[-1]]
        for v in chain[1:-1]:
            if _dist_to_line(pts[v], a, b) > 10 * eps:
                out.append(Violation("segment", f"segment {s}", f"vertex {v} off the supporting line"))

    for e in t.edges():
        if e.owner >= 0 and e.left == e.right:
            out.append(Violation("faces", f"edge {e.u}-{e.v}", "same face on both sides"))
        if e.owner >= 0 and EXTERIOR in (e.left, e.right):
            out.append(Violation("faces", f"edge {e.u}-{e.v}", "internal edge touches the exterior"))

    total = sum(c.area for c in t.cells.values())
    warea = t.window.area()
    if abs(total - warea) > 1e-8 * warea:
        out.append(Violation("partition", "cells", f"cell areas sum to {total}, window area {warea}"))
    for cid, c in t.cells.items():
        if c.area <= 0:
            out.append(Violation("partition", f"cell {cid}", "non-positive area"))
    return out


def _dist_to_line(p, a, b) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = math.hypot(dx, dy)
    return abs((p[0] - a[0]) * dy - (p[1] - a[1]) * dx) / n


def _straight(v, a, b, eps) -> bool:
    ax, ay = a[0] - v[0], a[1] - v[1]
    bx, by = b[0] - v[0], b[1] - v[1]
    if ax * bx + ay * by >= 0:
        return False
    la, lb = math.hypot(ax, ay), math.hypot(bx, by)
    cross = abs(ax * by - ay * bx)
    # distance of the far end from the other edge's line
    return cross / max(la, lb) <= 100 * eps


def _has_straight_pair(v, nbrs, eps) -> bool:
    return _n_straight_pairs(v, nbrs, eps) > 0


def _n_straight_pairs(v, nbrs, eps) -> int:
    k = 0
    for i in range(len(nbrs)):
        for j in range(i + 1, len(nbrs)):
            if _straight(v, nbrs[i], nbrs[j], eps):
                k += 1
    return k


def euler_characteristic(t: TTess) -> int:
    """V - E + F counting the exterior face(s) once per window component."""
    n_v = len(t.points)
    n_e = len(t.owner)
    n_f = len(t.cells) + 1
    return n_v - n_e + n_f
