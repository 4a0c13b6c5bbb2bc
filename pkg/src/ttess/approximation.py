"""Approximate a polygonal landscape by a T-tessellation.

Pipeline: cluster the polygon sides with single linkage on a dimensionless
dissimilarity, replace every cluster by one representative segment, build
the arrangement, then repair I-, L- and X-vertices until the result is a
valid T-tessellation.  Every repair edits a list of straight segments and
rebuilds the arrangement, which keeps the bookkeeping trivial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .arrangement import from_segments
from .geometry import (
    PolygonGeom,
    SegmentGeom,
    project_onto_line,
    ring_perimeter,
    segment,
    tolerance,
    total_least_squares_line,
)
from .tessellation import TTess, _n_straight_pairs, _straight, validate


class GeometryError(ValueError):
    """Input landscape is not usable."""


class RepairError(RuntimeError):
    """Vertex repair could not finish."""


@dataclass
class Landscape:
    domain: PolygonGeom
    fields: list

    def __post_init__(self):
        if not self.fields:
            raise GeometryError("landscape has no fields")


@dataclass(frozen=True)
class ApproxConfig:
    cut_threshold: float = 0.1
    # None means 1e-3 x domain diameter
    x_shift: float | None = None
    max_repair_iterations: int = 1_000_000

    def __post_init__(self):
        if not self.cut_threshold > 0:
            raise ValueError("cut threshold must be positive")
        if self.x_shift is not None and not self.x_shift > 0:
            raise ValueError("x shift must be positive")
        if self.max_repair_iterations < 1:
            raise ValueError("max_repair_iterations must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ApproxConfig":
        known = {"cut_threshold", "x_shift", "max_repair_iterations"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown approximation options: {sorted(extra)}")
        return cls(**d)


@dataclass
class SideCluster:
    members: list
    representative: SegmentGeom | None = None
    touches_domain: bool = False


@dataclass
class ApproxReport:
    counts: dict = field(default_factory=dict)
    input_cells: list = field(default_factory=list)
    output_cells: list = field(default_factory=list)


# ----------------------------------------------------------------------
# side dissimilarity and clustering


def side_dissimilarity(c1: SegmentGeom, c2: SegmentGeom) -> float:
    d = dissimilarity_rows(np.array([[*c1.a, *c1.b]]), np.array([[*c2.a, *c2.b]]))
    return float(d[0, 0])


def _cross(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _point_seg(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
    return np.hypot(ax + t * dx - px, ay + t * dy - py)


def dissimilarity_rows(s: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Dissimilarity of every row side in ``s`` against every side in ``o``."""
    ax, ay, bx, by = (s[:, k][:, None] for k in range(4))
    cx, cy, dx, dy = (o[:, k][None, :] for k in range(4))
    l1 = np.hypot(bx - ax, by - ay)
    l2 = np.hypot(dx - cx, dy - cy)
    p = [(ax, ay), (bx, by), (cx, cy), (dx, dy)]
    # hull area of four points: the largest triangle or simple quadrilateral
    hull = np.zeros(np.broadcast(ax, cx).shape)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        tri = 0.5 * np.abs(_cross(*p[i], *p[j], *p[k]))
        np.maximum(hull, tri, out=hull)
    for order in ((0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3)):
        acc = 0.0
        for q in range(4):
            x1, y1 = p[order[q]]
            x2, y2 = p[order[(q + 1) % 4]]
            acc = acc + x1 * y2 - x2 * y1
        np.maximum(hull, 0.5 * np.abs(acc), out=hull)
    o1, o2 = _cross(ax, ay, bx, by, cx, cy), _cross(ax, ay, bx, by, dx, dy)
    o3, o4 = _cross(cx, cy, dx, dy, ax, ay), _cross(cx, cy, dx, dy, bx, by)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    dmin = np.minimum.reduce(
        [
            _point_seg(ax, ay, cx, cy, dx, dy),
            _point_seg(bx, by, cx, cy, dx, dy),
            _point_seg(cx, cy, ax, ay, bx, by),
            _point_seg(dx, dy, ax, ay, bx, by),
        ]
    )
    dmin = np.where(crossing, 0.0, dmin)
    return hull / (l1 * l2) + 2.0 * dmin / (l1 + l2)


def single_linkage_clusters(sides: list, threshold: float, chunk: int = 512) -> list[list[int]]:
    """Indices of the sides in each cluster, cutting the single-linkage tree at ``threshold``.

    Two groups end up together iff a chain of pairwise dissimilarities
    below the threshold joins them, i.e. the connected components of the
    graph ``d < threshold``.
    """
    if not sides:
        raise ValueError("no sides to cluster")
    arr = np.array([[*s[0], *s[1]] for s in sides], dtype=float)
    n = len(arr)
    rows, cols = [], []
    for s in range(0, n, chunk):
        d = dissimilarity_rows(arr[s : s + chunk], arr)
        i, j = np.nonzero(d < threshold)
        rows.append(i + s)
        cols.append(j)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, label = connected_components(g, directed=False)
    groups: dict[int, list] = {}
    for i, lab in enumerate(label):
        groups.setdefault(lab, []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def representative_segment(members: list) -> SegmentGeom:
    """Shortest segment on the fitted line covering all endpoint projections."""
    pts = [p for s in members for p in (s[0], s[1])]
    try:
        line = total_least_squares_line(pts)
    except ValueError as e:
        raise GeometryError(f"degenerate cluster: {e}") from e
    proj = [project_onto_line(p, line) for p in pts]
    lo, hi = min(proj), max(proj)
    if hi - lo <= 0:
        raise GeometryError("degenerate cluster: all endpoints coincide")
    a, b = line.point_at(lo), line.point_at(hi)
    return segment(a.x, a.y, b.x, b.y)


def clip_to_window(s: SegmentGeom, window: PolygonGeom) -> SegmentGeom | None:
    """Longest piece of ``s`` inside the window."""
    (ax, ay), (bx, by) = s
    dx, dy = bx - ax, by - ay
    ts = [0.0, 1.0]
    for ring in window.rings:
        n = len(ring)
        for i in range(n):
            (px, py), (qx, qy) = ring[i], ring[(i + 1) % n]
            ex, ey = qx - px, qy - py
            den = dx * ey - dy * ex
            if den == 0.0:
                continue
            t = ((px - ax) * ey - (py - ay) * ex) / den
            u = ((px - ax) * dy - (py - ay) * dx) / den
            if 0.0 < t < 1.0 and -1e-12 <= u <= 1 + 1e-12:
                ts.append(t)
    ts = sorted(set(ts))
    best, cur = None, None
    for t0, t1 in zip(ts, ts[1:]):
        mid = 0.5 * (t0 + t1)
        if window.contains((ax + mid * dx, ay + mid * dy)):
            cur = (cur[0], t1) if cur else (t0, t1)
        else:
            cur = None
        if cur and (best is None or cur[1] - cur[0] > best[1] - best[0]):
            best = cur
    if best is None:
        return None
    t0, t1 = best
    return segment(ax + t0 * dx, ay + t0 * dy, ax + t1 * dx, ay + t1 * dy)


def cluster_sides(l: Landscape, cfg: ApproxConfig) -> tuple[list[SideCluster], dict]:
    eps = tolerance(l.domain.diameter())
    domain_sides = [s for s in l.domain.sides() if math.dist(*s) > eps]
    field_sides = [s for f in l.fields for s in f.sides()]
    kept = [s for s in field_sides if math.dist(*s) > eps]
    sides = domain_sides + kept
    groups = single_linkage_clusters(sides, cfg.cut_threshold)
    nd = len(domain_sides)
    clusters = []
    for g in groups:
        c = SideCluster([sides[i] for i in g], touches_domain=any(i < nd for i in g))
        if not c.touches_domain:
            c.representative = representative_segment(c.members)
        clusters.append(c)
    counts = {
        "sides": len(field_sides),
        "sides_dropped": len(field_sides) - len(kept),
        "clusters": len(clusters),
        "clusters_on_domain": sum(c.touches_domain for c in clusters),
    }
    return clusters, counts


# ----------------------------------------------------------------------
# vertex repair on a segment list


def _segments_of(t: TTess) -> dict:
    return {sid: t.segment_geom(sid) for sid in sorted(t.segments)}


def _rebuild(window: PolygonGeom, segs) -> TTess:
    return from_segments(window, [s for s in segs if s is not None])


def _interior(t: TTess):
    for v in sorted(t.points):
        if not t.on_boundary(v):
            yield v


def i_vertices(t: TTess) -> list[int]:
    return [v for v in _interior(t) if t.degree(v) == 1]


def l_vertices(t: TTess) -> list[int]:
    out = []
    for v in _interior(t):
        nb = t.neighbors(v)
        if len(nb) == 2 and not _straight(t.points[v], t.points[nb[0]], t.points[nb[1]], t.eps):
            out.append(v)
    return out


def x_vertices(t: TTess) -> list[int]:
    out = []
    for v in _interior(t):
        nb = t.neighbors(v)
        if len(nb) == 4 and _n_straight_pairs(t.points[v], [t.points[w] for w in nb], t.eps) == 2:
            out.append(v)
    return out


def _ray_hit(t: TTess, v: int, direction) -> tuple[float, tuple] | None:
    """First edge hit by the ray from vertex ``v``; edges at ``v`` are skipped."""
    ox, oy = t.points[v]
    dx, dy = direction
    best = None
    for (a, b) in t.owner:
        if a == v or b == v:
            continue
        (px, py), (qx, qy) = t.points[a], t.points[b]
        ex, ey = qx - px, qy - py
        den = dx * ey - dy * ex
        if den == 0.0:
            continue
        s = ((px - ox) * ey - (py - oy) * ex) / den
        u = ((px - ox) * dy - (py - oy) * dx) / den
        if s > t.eps and -1e-12 <= u <= 1 + 1e-12 and (best is None or s < best[0]):
            best = (s, (ox + s * dx, oy + s * dy))
    return best


def _unit(p, q):
    dx, dy = q[0] - p[0], q[1] - p[1]
    n = math.hypot(dx, dy)
    return dx / n, dy / n


def _end_chain(t: TTess, v: int) -> list[int]:
    return [ch for ch in t.chains_at[v] if ch >= 0]


def _extend_option(t: TTess, v: int, sid: int):
    """Lengthen segment ``sid`` through its end ``v`` until it meets an edge."""
    chain = t.segments[sid]
    far = chain[-1] if chain[0] == v else chain[0]
    nxt = chain[1] if chain[0] == v else chain[-2]
    hit = _ray_hit(t, v, _unit(t.points[nxt], t.points[v]))
    if hit is None:
        return None
    dist, pt = hit
    return dist, {sid: segment(*t.points[far], *pt)}


def _i_options(t: TTess, v: int):
    (sid,) = _end_chain(t, v)
    chain = t.segments[sid]
    nxt = chain[1] if chain[0] == v else chain[-2]
    far = chain[-1] if chain[0] == v else chain[0]
    drop = math.dist(t.points[v], t.points[nxt])
    if len(chain) == 2:
        opts = [(drop, {sid: None})]
    else:
        opts = [(drop, {sid: segment(*t.points[far], *t.points[nxt])})]
    ext = _extend_option(t, v, sid)
    if ext is not None:
        opts.append(ext)
    return opts


def _l_options(t: TTess, v: int):
    opts = []
    for sid in _end_chain(t, v):
        ext = _extend_option(t, v, sid)
        if ext is not None:
            opts.append(ext)
    return opts


def _greedy(t: TTess, finder, options, budget: list) -> tuple[TTess, int]:
    """Repeatedly apply the cheapest repair; ties go to the lowest vertex id."""
    done = 0
    while True:
        cands = []
        for v in finder(t):
            for cost, change in options(t, v):
                cands.append((abs(cost), v, change))
        if not cands:
            return t, done
        if budget[0] <= 0:
            raise RepairError("repair exceeded max_repair_iterations")
        budget[0] -= 1
        cost, v, change = min(cands, key=lambda c: (c[0], c[1]))
        segs = _segments_of(t)
        segs.update(change)
        t = _rebuild(t.window, segs.values())
        done += 1


def remove_I_vertices(t: TTess, max_iterations: int = 1_000_000) -> TTess:
    return _greedy(t, i_vertices, _i_options, [max_iterations])[0]


def remove_L_vertices(t: TTess, max_iterations: int = 1_000_000) -> TTess:
    return _greedy(t, l_vertices, _l_options, [max_iterations])[0]


def _half_interior_count(chain: list, i: int, toward_start: bool) -> int:
    return i - 1 if toward_start else len(chain) - i - 2


def _fix_x(t: TTess, v: int, shift: float, budget: list) -> TTess:
    """Break one segment at ``v`` and slide one half's end along the other segment."""
    chains = _end_chain(t, v)
    if len(chains) != 2:
        raise RepairError(f"vertex {v} is not a crossing of two segments")
    s1, s2 = chains
    best = None
    for sid, other in ((s1, s2), (s2, s1)):
        chain = t.segments[sid]
        i = chain.index(v)
        for toward_start in (True, False):
            far = chain[0] if toward_start else chain[-1]
            n_in = _half_interior_count(chain, i, toward_start)
            length = math.dist(t.points[v], t.points[far])
            key = (n_in, length, sid, not toward_start)
            if best is None or key < best[0]:
                best = (key, sid, other, toward_start)
    _, sid, other, toward_start = best
    chain = t.segments[sid]
    i = chain.index(v)
    ochain = t.segments[other]
    j = ochain.index(v)
    pv = t.points[v]
    # slide toward the farther neighbour on the other segment
    nbrs = [ochain[j - 1], ochain[j + 1]]
    gaps = [math.dist(pv, t.points[w]) for w in nbrs]
    k = 0 if gaps[0] >= gaps[1] else 1
    u = _unit(pv, t.points[nbrs[k]])
    eps = shift
    while eps >= 0.5 * gaps[k]:
        if budget[0] <= 0:
            raise RepairError("x shift collided too often")
        budget[0] -= 1
        eps *= 0.5
    moved = (pv[0] + eps * u[0], pv[1] + eps * u[1])
    p_start, p_end = t.points[chain[0]], t.points[chain[-1]]
    if toward_start:
        halves = [segment(*p_start, *moved), segment(*pv, *p_end)]
    else:
        halves = [segment(*p_start, *pv), segment(*moved, *p_end)]
    segs = list(_segments_of(t).items())
    out = [s for k2, s in segs if k2 != sid] + halves
    return _rebuild(t.window, out)


def remove_X_vertices(t: TTess, x_shift: float | None = None, max_iterations: int = 1_000_000) -> TTess:
    shift = 1e-3 * t.diameter if x_shift is None else x_shift
    budget = [max_iterations]
    while True:
        xs = x_vertices(t)
        if not xs:
            return t
        if budget[0] <= 0:
            raise RepairError("repair exceeded max_repair_iterations")
        budget[0] -= 1
        t = _fix_x(t, xs[0], shift, budget)


def repair(t: TTess, cfg: ApproxConfig, counts: dict | None = None) -> TTess:
    """Alternate I/L/X repairs until the arrangement is a T-tessellation."""
    counts = {} if counts is None else counts
    for k in ("I_removed", "L_removed", "X_removed"):
        counts.setdefault(k, 0)
    budget = [cfg.max_repair_iterations]
    shift = 1e-3 * t.diameter if cfg.x_shift is None else cfg.x_shift
    while True:
        t, n = _greedy(t, i_vertices, _i_options, budget)
        counts["I_removed"] += n
        t, n = _greedy(t, l_vertices, _l_options, budget)
        counts["L_removed"] += n
        if i_vertices(t):
            continue
        xs = x_vertices(t)
        if not xs:
            break
        if budget[0] <= 0:
            raise RepairError("repair exceeded max_repair_iterations")
        budget[0] -= 1
        t = _fix_x(t, xs[0], shift, budget)
        counts["X_removed"] += 1
    bad = validate(t)
    if bad:
        raise RepairError(f"repair left violations: {bad[0].rule} {bad[0].element} {bad[0].detail}")
    return t


def _cell_rows(rings_areas) -> list[dict]:
    return [
        {"area": a, "perimeter": ring_perimeter(r), "n_vertices": len(r)} for r, a in rings_areas
    ]


def approximate(l: Landscape, cfg: ApproxConfig | None = None) -> tuple[TTess, ApproxReport]:
    cfg = ApproxConfig() if cfg is None else cfg
    clusters, counts = cluster_sides(l, cfg)
    reps = []
    for c in clusters:
        if c.representative is None:
            continue
        s = clip_to_window(c.representative, l.domain)
        if s is not None and math.dist(*s) > tolerance(l.domain.diameter()):
            reps.append(s)
    counts["representatives"] = len(reps)
    t = _rebuild(l.domain, reps)
    counts["I_before"] = len(i_vertices(t))
    counts["L_before"] = len(l_vertices(t))
    counts["X_before"] = len(x_vertices(t))
    t = repair(t, cfg, counts)
    counts["cells"] = len(t.cells)
    counts["segments"] = len(t.segments)
    report = ApproxReport(
        counts=counts,
        input_cells=_cell_rows((f.outer, f.area()) for f in l.fields),
        output_cells=_cell_rows(
            ([t.points[v] for v in c.boundary], c.area) for c in t.cells.values()
        ),
    )
    return t, report


# ----------------------------------------------------------------------
# input / output


def _polygon_from_coords(coords) -> PolygonGeom:
    if not coords:
        raise GeometryError("polygon without rings")
    try:
        poly = PolygonGeom.from_rings(coords[0], coords[1:])
    except (ValueError, TypeError) as e:
        raise GeometryError(f"invalid polygon: {e}") from e
    if poly.area() <= 0:
        raise GeometryError("polygon with non-positive area")
    return poly


def landscape_from_geojson(data: dict) -> Landscape:
    """FeatureCollection of Polygons; the feature with ``role: domain`` is the window."""
    if data.get("type") != "FeatureCollection":
        raise GeometryError("input must be a GeoJSON FeatureCollection")
    domain, fields = None, []
    for i, f in enumerate(data.get("features", [])):
        geom = f.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise GeometryError(f"feature {i}: only Polygon geometries are supported")
        poly = _polygon_from_coords(geom.get("coordinates"))
        if (f.get("properties") or {}).get("role") == "domain":
            if domain is not None:
                raise GeometryError("more than one feature has role=domain")
            domain = poly
        else:
            fields.append(poly)
    if domain is None:
        raise GeometryError("missing domain: one feature must have properties.role = 'domain'")
    for i, f in enumerate(fields):
        if not all(domain.contains(p) or domain.boundary_distance(p) <= 1e-6 * domain.diameter() for p in f.outer):
            raise GeometryError(f"field {i} lies outside the domain")
    return Landscape(domain, fields)


def read_geojson(path) -> Landscape:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e
    return landscape_from_geojson(data)


def _ring_coords(ring) -> list:
    pts = [list(p) for p in ring]
    return pts + [pts[0]]


def landscape_to_geojson(l: Landscape) -> dict:
    def feat(poly, props):
        return {
            "type": "Feature",
            "properties": props,
            "geometry": {"type": "Polygon", "coordinates": [_ring_coords(r) for r in poly.rings]},
        }

    return {
        "type": "FeatureCollection",
        "features": [feat(l.domain, {"role": "domain"})] + [feat(f, {"id": i}) for i, f in enumerate(l.fields)],
    }


def tessellation_landscape(t: TTess) -> Landscape:
    """The cells of ``t`` drawn as polygons."""
    fields = [
        PolygonGeom.from_rings([t.points[v] for v in c.boundary], [[t.points[v] for v in h] for h in c.holes])
        for _, c in sorted(t.cells.items())
    ]
    return Landscape(t.window, fields)


def jittered_grid(k: int = 4, jitter: float = 0.01, seed: int = 0, redraw: float = 0.0) -> Landscape:
    """k x k grid of square fields over the unit square with jittered lattice points.

    ``jitter`` is relative to the cell size.  Shared boundaries appear in
    both adjacent fields; ``redraw > 0`` perturbs every field's copy of its
    corners independently (by up to ``redraw`` cell sizes), so duplicated
    boundaries no longer coincide.
    """
    from .geometry import UNIT_SQUARE

    rng = np.random.default_rng(seed)
    h = 1.0 / k

    def wiggle(p, i, j, amount):
        d = rng.uniform(-amount * h, amount * h, size=2)
        # lattice points on the window boundary slide along it
        if i in (0, k):
            d[0] = 0.0
        if j in (0, k):
            d[1] = 0.0
        return p + d

    g = np.array([[(i * h, j * h) for j in range(k + 1)] for i in range(k + 1)], dtype=float)
    for i in range(k + 1):
        for j in range(k + 1):
            g[i, j] = wiggle(g[i, j], i, j, jitter)
    fields = []
    for i in range(k):
        for j in range(k):
            idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            ring = [wiggle(g[a, b], a, b, redraw) if redraw else g[a, b] for a, b in idx]
            fields.append(PolygonGeom.from_rings(ring))
    return Landscape(UNIT_SQUARE, fields)


def write_report_csv(report: ApproxReport, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "item", "value"])
        for k, v in report.counts.items():
            w.writerow(["stage", k, v])
        for name, rows in (("input", report.input_cells), ("output", report.output_cells)):
            for col in ("area", "perimeter", "n_vertices"):
                vals = np.array([r[col] for r in rows], dtype=float)
                for q in (0.0, 0.25, 0.5, 0.75, 1.0):
                    w.writerow([name, f"{col}_q{int(q * 100)}", repr(float(np.quantile(vals, q)))])
                w.writerow([name, f"{col}_mean", repr(float(vals.mean()))])
