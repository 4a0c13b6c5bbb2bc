"""Planar arrangement of a segment set inside a polygonal window.

The result is a :class:`TTess` that is not necessarily a T-tessellation:
I-, L- and X-vertices are kept and reported later by ``validate``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PolygonGeom, SegmentGeom, point_in_ring, signed_area
from .tessellation import EXTERIOR, Cell, TTess, _straight


def _pair_hits(p0: np.ndarray, d: np.ndarray, lens: np.ndarray, tol: float):
    """Yield (i, j, t_i, t_j) for every pair of pieces that meet."""
    n = len(p0)
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        i_idx = np.arange(start, stop)[:, None]
        j_idx = np.arange(n)[None, :]
        mask = j_idx > i_idx
        di = d[start:stop][:, None, :]
        dj = d[None, :, :]
        w = p0[None, :, :] - p0[start:stop][:, None, :]
        cross = di[..., 0] * dj[..., 1] - di[..., 1] * dj[..., 0]
        li = lens[start:stop][:, None]
        lj = lens[None, :]
        par = np.abs(cross) <= 1e-12 * li * lj
        with np.errstate(divide="ignore", invalid="ignore"):
            ti = (w[..., 0] * dj[..., 1] - w[..., 1] * dj[..., 0]) / cross
            tj = (w[..., 0] * di[..., 1] - w[..., 1] * di[..., 0]) / cross
        tol_i = tol / li
        tol_j = tol / lj
        ok = (
            mask
            & ~par
            & (ti >= -tol_i)
            & (ti <= 1 + tol_i)
            & (tj >= -tol_j)
            & (tj <= 1 + tol_j)
        )
        ii, jj = np.nonzero(ok)
        for a, b in zip(ii, jj):
            yield int(a + start), int(b), float(ti[a, b]), float(tj[a, b])
        # parallel pieces: collinear overlaps contribute endpoint projections
        pi_, pj_ = np.nonzero(mask & par)
        for a, b in zip(pi_, pj_):
            yield int(a + start), int(b), None, None


def _project(p, a, d, length):
    t = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (length * length)
    q = (a[0] + t * d[0], a[1] + t * d[1])
    return t, math.dist(p, q)


def from_segments(window: PolygonGeom, segs: list, snap: float | None = None) -> TTess:
    """Arrangement of ``segs`` (straight segments) with the window boundary."""
    t = TTess(window)
    eps = t.eps
    snap = 10 * eps if snap is None else snap

    starts, ends, tags = [], [], []
    for k, ring in enumerate(window.rings):
        n = len(ring)
        for i in range(n):
            starts.append(ring[i])
            ends.append(ring[(i + 1) % n])
            tags.append(-1 - k)
    for i, s in enumerate(segs):
        s = SegmentGeom(*s)
        if math.dist(s.a, s.b) <= eps:
            continue
        starts.append(s.a)
        ends.append(s.b)
        tags.append(i)

    p0 = np.asarray(starts, dtype=float).reshape(-1, 2)
    p1 = np.asarray(ends, dtype=float).reshape(-1, 2)
    d = p1 - p0
    lens = np.hypot(d[:, 0], d[:, 1])
    n = len(p0)

    # split parameters per piece: (t, point)
    cuts: list[list] = [[(0.0, tuple(p0[i])), (1.0, tuple(p1[i]))] for i in range(n)]
    for i, j, ti, tj in _pair_hits(p0, d, lens, snap):
        if ti is None:
            for a, b in ((i, j), (j, i)):
                for end in (p0[b], p1[b]):
                    tt, dist = _project(end, p0[a], d[a], lens[a])
                    if dist <= snap and -snap / lens[a] <= tt <= 1 + snap / lens[a]:
                        cuts[a].append((min(1.0, max(0.0, tt)), tuple(end)))
            continue
        ti_c = min(1.0, max(0.0, ti))
        tj_c = min(1.0, max(0.0, tj))
        # snap to the exact endpoint when the hit is an endpoint of one piece
        if ti_c in (0.0, 1.0):
            pt = tuple(p0[i] if ti_c == 0.0 else p1[i])
        elif tj_c in (0.0, 1.0):
            pt = tuple(p0[j] if tj_c == 0.0 else p1[j])
        else:
            pt = (p0[i, 0] + ti * d[i, 0], p0[i, 1] + ti * d[i, 1])
        cuts[i].append((ti_c, pt))
        cuts[j].append((tj_c, pt))

    # snap coincident points; ring corners come first and win
    flat = [pt for c in cuts for _, pt in c]
    coords = np.asarray(flat, dtype=float)
    parent = list(range(len(flat)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in sorted(cKDTree(coords).query_pairs(snap)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    rep_of: dict[int, int] = {}
    vid_of_flat = []
    for k in range(len(flat)):
        r = find(k)
        if r not in rep_of:
            rep_of[r] = len(rep_of)
        vid_of_flat.append(rep_of[r])
    vpts = [None] * len(rep_of)
    for k in range(len(flat)):
        v = vid_of_flat[k]
        if vpts[v] is None:
            vpts[v] = tuple(map(float, flat[find(k)]))

    # edges
    edge_tag: dict[tuple, int] = {}
    ring_dir: set = set()
    k = 0
    for i in range(n):
        c = cuts[i]
        ids = vid_of_flat[k : k + len(c)]
        k += len(c)
        order = sorted(range(len(c)), key=lambda m: c[m][0])
        seq = []
        for m in order:
            if not seq or seq[-1] != ids[m]:
                seq.append(ids[m])
        for a, b in zip(seq[:-1], seq[1:]):
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            old = edge_tag.get(key)
            if old is None or (tags[i] < 0 and old >= 0):
                edge_tag[key] = tags[i]
            if tags[i] < 0:
                ring_dir.add((a, b))

    adj: dict[int, set] = {v: set() for v in range(len(vpts))}
    for a, b in edge_tag:
        adj[a].add(b)
        adj[b].add(a)

    # drop straight degree-2 vertices inside internal segments
    changed = True
    while changed:
        changed = False
        for v in list(adj):
            nb = adj[v]
            if len(nb) != 2:
                continue
            a, b = sorted(nb)
            ka, kb = (min(a, v), max(a, v)), (min(b, v), max(b, v))
            if edge_tag[ka] < 0 or edge_tag[kb] < 0:
                continue
            if not _straight(vpts[v], vpts[a], vpts[b], eps):
                continue
            tag = edge_tag.pop(ka)
            edge_tag.pop(kb)
            edge_tag[(min(a, b), max(a, b))] = tag
            adj[a].discard(v)
            adj[b].discard(v)
            adj[a].add(b)
            adj[b].add(a)
            del adj[v]
            changed = True

    for (a, b), tag in edge_tag.items():
        if tag >= 0:
            mid = (0.5 * (vpts[a][0] + vpts[b][0]), 0.5 * (vpts[a][1] + vpts[b][1]))
            if not window.contains(mid) and window.boundary_distance(mid) > snap:
                raise ValueError(f"segment {tag} leaves the window")

    # angular order and face tracing (face on the left)
    order: dict[int, list] = {}
    for v, nb in adj.items():
        pv = vpts[v]
        order[v] = sorted(nb, key=lambda w: math.atan2(vpts[w][1] - pv[1], vpts[w][0] - pv[0]))
    pos = {v: {w: i for i, w in enumerate(ws)} for v, ws in order.items()}

    def nxt(u, v):
        ws = order[v]
        return ws[(pos[v][u] - 1) % len(ws)]

    seen: set = set()
    cycles = []
    for a, b in sorted(edge_tag):
        for u, v in ((a, b), (b, a)):
            if (u, v) in seen:
                continue
            cyc = []
            x, y = u, v
            while (x, y) not in seen:
                seen.add((x, y))
                cyc.append(x)
                x, y = y, nxt(x, y)
            cycles.append(cyc)

    # classify cycles
    faces, inner = [], []
    for cyc in cycles:
        m = len(cyc)
        directed = [(cyc[i], cyc[(i + 1) % m]) for i in range(m)]
        if any((y, x) in ring_dir and (x, y) not in ring_dir for x, y in directed):
            continue  # exterior or inside a window hole
        area = signed_area([vpts[v] for v in cyc]) if m >= 3 else 0.0
        if area > eps * eps:
            faces.append((cyc, area))
        else:
            inner.append(cyc)

    # vertex ids: compact over used vertices
    used = sorted(adj)
    vmap = {v: i for i, v in enumerate(used)}
    for v in used:
        t.points[vmap[v]] = vpts[v]
        t.chains_at[vmap[v]] = []
    t._next_vid = len(used)

    # boundary rings in ring order
    for kring, ring in enumerate(window.rings):
        tag = -1 - kring
        succ = {}
        for a, b in ring_dir:
            key = (min(a, b), max(a, b))
            if edge_tag.get(key) == tag and a in adj and b in adj:
                succ[a] = b
        if not succ:
            continue
        start = min(succ)
        chain = [start]
        while True:
            nxt_v = succ[chain[-1]]
            if nxt_v == start:
                break
            chain.append(nxt_v)
        t.rings.append([vmap[v] for v in chain])
        for v in chain:
            t.chains_at[vmap[v]].append(tag)
    for (a, b), tag in edge_tag.items():
        if tag < 0:
            t.owner[(min(vmap[a], vmap[b]), max(vmap[a], vmap[b]))] = tag

    # internal segments: maximal straight chains of internal edges
    internal = {key for key, tag in edge_tag.items() if tag >= 0}
    inc: dict[int, list] = {}
    for a, b in sorted(internal):
        inc.setdefault(a, []).append(b)
        inc.setdefault(b, []).append(a)

    def partner(v, frm):
        for w in inc[v]:
            if w != frm and _straight(vpts[v], vpts[frm], vpts[w], eps):
                return w
        return None

    done: set = set()
    for a, b in sorted(internal):
        if (a, b) in done:
            continue
        chain = [a, b]
        done.add((a, b))
        while True:
            w = partner(chain[-1], chain[-2])
            key = (min(chain[-1], w), max(chain[-1], w)) if w is not None else None
            if w is None or key in done:
                break
            done.add(key)
            chain.append(w)
        while True:
            w = partner(chain[0], chain[1])
            key = (min(chain[0], w), max(chain[0], w)) if w is not None else None
            if w is None or key in done:
                break
            done.add(key)
            chain.insert(0, w)
        sid = t._new_segment_id()
        ids = [vmap[v] for v in chain]
        t.segments[sid] = ids
        for v in ids:
            t.chains_at[v].append(sid)
        for x, y in zip(ids[:-1], ids[1:]):
            t.owner[(min(x, y), max(x, y))] = sid

    # cells
    for (a, b) in edge_tag:
        t.half[(vmap[a], vmap[b])] = EXTERIOR
        t.half[(vmap[b], vmap[a])] = EXTERIOR
    cell_of_face = []
    for cyc, area in faces:
        cid = t._new_cell_id()
        ids = [vmap[v] for v in cyc]
        t.cells[cid] = Cell(ids)
        m = len(ids)
        for i in range(m):
            t.half[(ids[i], ids[(i + 1) % m])] = cid
        cell_of_face.append((cid, [vpts[v] for v in cyc], area))
    for cyc in inner:
        probe = vpts[cyc[0]]
        best = None
        for cid, ring, area in cell_of_face:
            if point_in_ring(probe, ring) and (best is None or area < best[1]):
                best = (cid, area)
        if best is None:
            continue
        ids = [vmap[v] for v in cyc]
        t.cells[best[0]].holes.append(ids)
        m = len(ids)
        for i in range(m):
            t.half[(ids[i], ids[(i + 1) % m])] = best[0]
    for cid in t.cells:
        t._refresh_cell_geometry(cid)
    return t
