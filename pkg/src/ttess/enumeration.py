"""Exhaustive enumeration of the T-tessellations supported by a small line set.

Each line contributes either nothing or one contiguous run of its elementary
pieces (the chord cut at its crossings with the other lines).  Pairs of
lines that cross inside the window constrain each other: at the crossing
each line is ``absent``, ``end`` (its run stops there) or ``through``.  The
T-junction rule allows only (absent, absent), (absent, through) and
(end, through) up to order, which prunes the product before validation.
"""

from __future__ import annotations

import itertools
import math

from .arrangement import from_segments
from .geometry import LineGeom, PolygonGeom, segment
from .tessellation import TTess, validate

MAX_LINES = 6

ABSENT, END, THROUGH = 0, 1, 2
_ALLOWED = {(ABSENT, ABSENT), (ABSENT, THROUGH), (THROUGH, ABSENT), (END, THROUGH), (THROUGH, END)}


def clip_line(window: PolygonGeom, line: LineGeom) -> tuple[float, float] | None:
    """Parameter interval of ``line`` inside a convex window, or None."""
    dx, dy = line.direction
    o = line.point_at(0.0)
    lo, hi = -math.inf, math.inf
    r = window.outer
    n = len(r)
    for i in range(n):
        a, b = r[i], r[(i + 1) % n]
        # inward normal of a counter-clockwise edge
        nx, ny = -(b[1] - a[1]), b[0] - a[0]
        num = (o[0] - a[0]) * nx + (o[1] - a[1]) * ny
        den = dx * nx + dy * ny
        if den == 0.0:
            if num < 0:
                return None
            continue
        t = -num / den
        if den > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
    if hi - lo <= 1e-12 * window.diameter():
        return None
    return lo, hi


def _crossing(l1: LineGeom, l2: LineGeom):
    """Parameters (t1, t2) of the intersection point along each line."""
    d1, d2 = l1.direction, l2.direction
    o1, o2 = l1.point_at(0.0), l2.point_at(0.0)
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-14:
        return None
    wx, wy = o2[0] - o1[0], o2[1] - o1[1]
    t1 = (wx * d2[1] - wy * d2[0]) / den
    t2 = (wx * d1[1] - wy * d1[0]) / den
    return t1, t2


class _LineData:
    def __init__(self, line, lo, hi):
        self.line = line
        self.breaks = [lo, hi]
        self.cross: dict[int, float] = {}

    def finish(self):
        self.breaks = sorted(set(self.breaks))
        n = len(self.breaks) - 1
        self.runs = [None] + [(i, j) for i in range(n) for j in range(i, n)]

    def status(self, run, t):
        if run is None:
            return ABSENT
        a, b = self.breaks[run[0]], self.breaks[run[1] + 1]
        if t == a or t == b:
            return END
        if a < t < b:
            return THROUGH
        return ABSENT

    def geom(self, run):
        a = self.line.point_at(self.breaks[run[0]])
        b = self.line.point_at(self.breaks[run[1] + 1])
        return segment(a.x, a.y, b.x, b.y)


def _prepare(window: PolygonGeom, lines: list[LineGeom]) -> list[_LineData]:
    if len(lines) > MAX_LINES:
        raise ValueError(f"enumeration is limited to {MAX_LINES} lines, got {len(lines)}")
    if not window.is_convex():
        raise ValueError("enumeration needs a convex window")
    data = []
    for line in lines:
        iv = clip_line(window, line)
        if iv is None:
            raise ValueError(f"line {line} misses the window")
        data.append(_LineData(line, *iv))
    for i, j in itertools.combinations(range(len(data)), 2):
        c = _crossing(data[i].line, data[j].line)
        if c is None:
            continue
        t1, t2 = c
        a, b = data[i], data[j]
        if a.breaks[0] < t1 < a.breaks[1] and b.breaks[0] < t2 < b.breaks[1]:
            a.cross[j] = t1
            b.cross[i] = t2
    for d in data:
        d.breaks = d.breaks + list(d.cross.values())
        d.finish()
    return data


def _build(window, data, runs) -> TTess:
    segs = [d.geom(r) for d, r in zip(data, runs) if r is not None]
    return from_segments(window, segs)


def enumerate_supported(window: PolygonGeom, lines: list[LineGeom]) -> list[TTess]:
    """All T-tessellations whose internal segments lie on ``lines``."""
    data = _prepare(window, lines)
    out, seen = [], set()
    k = len(data)
    runs: list = [None] * k

    def rec(i):
        if i == k:
            t = _build(window, data, runs)
            if not validate(t):
                key = t.canonical_key()
                if key not in seen:
                    seen.add(key)
                    out.append(t)
            return
        for r in data[i].runs:
            ok = True
            for j, tj in data[i].cross.items():
                if j < i:
                    pair = (data[i].status(r, tj), data[j].status(runs[j], data[j].cross[i]))
                    if pair not in _ALLOWED:
                        ok = False
                        break
            if ok:
                runs[i] = r
                rec(i + 1)
        runs[i] = None

    rec(0)
    return out


def enumerate_supported_bruteforce(window: PolygonGeom, lines: list[LineGeom]) -> list[TTess]:
    """Unpruned product over all runs, filtered by the validator only."""
    data = _prepare(window, lines)
    out, seen = [], set()
    for runs in itertools.product(*(d.runs for d in data)):
        t = _build(window, data, runs)
        if validate(t):
            continue
        key = t.canonical_key()
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out
