"""Empty-space function and the global MAD envelope test.

F(r) is the probability that a point lies within distance r of the edge
set (cell boundaries and the window boundary).  The border-corrected
estimate only uses probe points at least r away from the window boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path as MplPath

from .geometry import PolygonGeom
from .model import GibbsModel
from .sampler import ChainConfig, run_parallel
from .tessellation import TTess

GRID_SIZE = 256


@dataclass
class FEstimate:
    r_grid: np.ndarray
    values: np.ndarray
    eligible_counts: np.ndarray

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.eligible_counts = np.asarray(self.eligible_counts, dtype=int)

    @property
    def undefined(self) -> np.ndarray:
        """Grid positions where no probe point is eligible."""
        return self.eligible_counts == 0


@dataclass
class EnvelopeResult:
    f_obs: FEstimate
    f_ref: FEstimate
    mad_obs: float
    mad_sims: np.ndarray
    rank: int
    p_value: float
    half_width: float
    r_max: float
    m: int
    seed: int = 0
    sim_curves: np.ndarray | None = field(default=None, repr=False)

    @property
    def lower(self) -> np.ndarray:
        return self.f_ref.values - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.f_ref.values + self.half_width

    @property
    def inside_band(self) -> bool:
        v = self.f_obs.values
        return bool(np.all((v >= self.lower) & (v <= self.upper)))

    @property
    def rejected(self) -> bool:
        return self.mad_obs > self.half_width

    def summary(self) -> dict:
        return {
            "X_obs": self.mad_obs,
            "max_X_i": self.half_width,
            "rank": self.rank,
            "p_value": self.p_value,
            "m": self.m,
            "r_max": self.r_max,
            "seed": self.seed,
            "rejected": self.rejected,
            "inside_band": self.inside_band,
            "mad_sims": self.mad_sims.tolist(),
        }


# ----------------------------------------------------------------------
# geometry of the probe set


def edge_array(t: TTess) -> np.ndarray:
    """All boundary edges of the tessellation as rows (ax, ay, bx, by)."""
    pts = t.points
    rows = [(*pts[u], *pts[v]) for (u, v) in t.owner]
    return np.array(rows, dtype=float).reshape(-1, 4)


def window_edges(window: PolygonGeom) -> np.ndarray:
    rows = []
    for ring in window.rings:
        n = len(ring)
        rows += [(*ring[i], *ring[(i + 1) % n]) for i in range(n)]
    return np.array(rows, dtype=float)


def _brute_distances(px, py, edges, chunk: int = 64) -> np.ndarray:
    px, py = px[:, None], py[:, None]
    best = np.full(len(px), np.inf)
    for s in range(0, len(edges), chunk):
        e = edges[s : s + chunk]
        ax, ay, bx, by = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
        dx, dy = bx - ax, by - ay
        ll = dx * dx + dy * dy
        ll = np.where(ll > 0, ll, 1.0)
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / ll, 0.0, 1.0)
        qx = ax + t * dx - px
        qy = ay + t * dy - py
        np.minimum(best, np.min(qx * qx + qy * qy, axis=1), out=best)
    return np.sqrt(best)


def distances_to_edges(points: np.ndarray, edges: np.ndarray, block_points: int = 256) -> np.ndarray:
    """Euclidean distance from each point to the nearest edge.

    Points are bucketed on a uniform grid; each bucket only tests the edges
    that can beat the best distance from its centre.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    if n == 0 or len(edges) == 0:
        return np.full(n, np.inf)
    if n <= 2 * block_points or len(edges) <= 8:
        return _brute_distances(points[:, 0], points[:, 1], edges)
    lo = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - lo, 1e-300)
    k = max(1, int(math.sqrt(n / block_points)))
    ij = np.minimum((k * (points - lo) / span).astype(int), k - 1)
    bid = ij[:, 0] * k + ij[:, 1]
    order = np.argsort(bid, kind="stable")
    cuts = np.searchsorted(bid[order], np.arange(k * k + 1))
    out = np.empty(n)
    for b in range(k * k):
        idx = order[cuts[b] : cuts[b + 1]]
        if len(idx) == 0:
            continue
        pts = points[idx]
        bmin, bmax = pts.min(axis=0), pts.max(axis=0)
        c = 0.5 * (bmin + bmax)
        h = 0.5 * float(np.hypot(*(bmax - bmin)))
        # any edge farther from the centre than best + 2h cannot be nearest
        ax, ay, bx, by = edges.T
        dx, dy = bx - ax, by - ay
        ll = np.where(dx * dx + dy * dy > 0, dx * dx + dy * dy, 1.0)
        t = np.clip(((c[0] - ax) * dx + (c[1] - ay) * dy) / ll, 0.0, 1.0)
        de = np.hypot(ax + t * dx - c[0], ay + t * dy - c[1])
        cand = edges[de <= de.min() + 2 * h + 1e-12]
        out[idx] = _brute_distances(pts[:, 0], pts[:, 1], cand)
    return out


def distance_to_tessellation(u, t: TTess) -> float:
    return float(distances_to_edges(np.array([u], dtype=float), edge_array(t))[0])


def inside_window(points: np.ndarray, window: PolygonGeom) -> np.ndarray:
    inside = MplPath(np.asarray(window.outer)).contains_points(points)
    for h in window.holes:
        inside &= ~MplPath(np.asarray(h)).contains_points(points)
    return inside


def probe_points(window: PolygonGeom, n: int = GRID_SIZE, jitter: bool = True, seed: int = 0) -> np.ndarray:
    """One probe per cell of an n x n grid over the bounding box, kept inside the window.

    With ``jitter`` each probe sits at a uniform (seeded) position in its cell
    instead of the centre, which avoids aliasing with axis-aligned edges.
    """
    x0, y0, x1, y1 = window.bbox()
    gx, gy = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5)
    if jitter:
        off = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(2, n, n))
        gx, gy = gx + off[0], gy + off[1]
    pts = np.column_stack([x0 + gx.ravel() * (x1 - x0) / n, y0 + gy.ravel() * (y1 - y0) / n])
    return pts[inside_window(pts, window)]


def inradius(window: PolygonGeom, n: int = GRID_SIZE) -> float:
    pts = probe_points(window, n)
    return float(distances_to_edges(pts, window_edges(window)).max())


def default_r_grid(window: PolygonGeom, n: int = 50) -> np.ndarray:
    """``n`` equally spaced radii in (0, R], R = 0.2 diameter capped below the inradius."""
    r_max = min(0.2 * window.diameter(), 0.95 * inradius(window))
    return r_max * np.arange(1, n + 1) / n


@dataclass
class ProbeSet:
    """Probe points with their distances to the window boundary, reused across tessellations."""

    points: np.ndarray
    boundary_distance: np.ndarray

    @classmethod
    def for_window(cls, window: PolygonGeom, n: int = GRID_SIZE) -> "ProbeSet":
        pts = probe_points(window, n)
        return cls(pts, distances_to_edges(pts, window_edges(window)))


def f_from_distances(d_t: np.ndarray, d_w: np.ndarray, r_grid) -> FEstimate:
    r_grid = np.asarray(r_grid, dtype=float)
    elig = d_w[None, :] >= r_grid[:, None]
    counts = elig.sum(axis=1)
    hits = (elig & (d_t[None, :] <= r_grid[:, None])).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return FEstimate(r_grid, vals, counts)


def estimate_F(t: TTess, r_grid, probes: ProbeSet | None = None, grid_size: int = GRID_SIZE) -> FEstimate:
    """Border-corrected estimate of F over a fixed probe grid."""
    probes = ProbeSet.for_window(t.window, grid_size) if probes is None else probes
    d_t = distances_to_edges(probes.points, edge_array(t))
    return f_from_distances(d_t, probes.boundary_distance, r_grid)


def mad_statistic(f: FEstimate, f_ref: FEstimate) -> float:
    if f.r_grid.shape != f_ref.r_grid.shape or not np.allclose(f.r_grid, f_ref.r_grid):
        raise ValueError("F estimates use different r grids")
    return float(np.nanmax(np.abs(f.values - f_ref.values)))


def mean_curve(curves: list[FEstimate]) -> FEstimate:
    vals = np.array([c.values for c in curves])
    return FEstimate(curves[0].r_grid, vals.mean(axis=0), curves[0].eligible_counts)


def reference_F(
    m: GibbsModel,
    window: PolygonGeom,
    r_grid,
    n_sims: int,
    chain: ChainConfig,
    threads: int = 1,
    probes: ProbeSet | None = None,
) -> tuple[FEstimate, list[FEstimate]]:
    """Pointwise mean of F estimates over independent simulations of ``m``."""
    probes = ProbeSet.for_window(window) if probes is None else probes
    sets = run_parallel(m, window, chain.replace(burn_in=chain.n_steps - 1, thin=1), n_sims, threads)
    curves = [estimate_F(s.last, r_grid, probes) for s in sets]
    return mean_curve(curves), curves


def rank_p_value(mad_obs: float, mad_sims) -> tuple[int, float]:
    """Rank counted conservatively: ties with simulations count against rejection."""
    mad_sims = np.asarray(mad_sims, dtype=float)
    m = len(mad_sims) + 1
    ge = int(np.sum(mad_sims >= mad_obs))
    return ge + 1, (ge + 1) / m


def envelope_from_curves(f_obs: FEstimate, sim_curves: list[FEstimate], seed: int = 0) -> EnvelopeResult:
    f_ref = mean_curve(sim_curves)
    x_obs = mad_statistic(f_obs, f_ref)
    x_sims = np.array([mad_statistic(c, f_ref) for c in sim_curves])
    rank, p = rank_p_value(x_obs, x_sims)
    res = EnvelopeResult(
        f_obs=f_obs,
        f_ref=f_ref,
        mad_obs=x_obs,
        mad_sims=x_sims,
        rank=rank,
        p_value=p,
        half_width=float(x_sims.max()),
        r_max=float(f_obs.r_grid[-1]),
        m=len(sim_curves) + 1,
        seed=seed,
        sim_curves=np.array([c.values for c in sim_curves]),
    )
    if (not res.rejected) != res.inside_band:
        raise AssertionError("band equivalence violated")
    return res


def envelope_test(
    observed: TTess,
    m: GibbsModel,
    n_total: int,
    chain: ChainConfig,
    r_grid=None,
    window: PolygonGeom | None = None,
    threads: int = 1,
    grid_size: int = GRID_SIZE,
) -> EnvelopeResult:
    """MAD test of ``observed`` against ``n_total - 1`` simulations of ``m``.

    Each simulation is the final state of an independent chain derived from
    ``chain.seed``.
    """
    if n_total < 2:
        raise ValueError("the envelope test needs m >= 2")
    window = observed.window if window is None else window
    r_grid = default_r_grid(window) if r_grid is None else np.asarray(r_grid, float)
    probes = ProbeSet.for_window(window, grid_size)
    f_obs = estimate_F(observed, r_grid, probes)
    _, curves = reference_F(m, window, r_grid, n_total - 1, chain, threads, probes)
    bad = f_obs.undefined | np.any([c.undefined for c in curves], axis=0)
    if bad.any():
        raise ValueError(f"no eligible probe points at r = {f_obs.r_grid[bad][0]:.4g}")
    return envelope_from_curves(f_obs, curves, chain.seed)


def ks_distance_discrete_uniform(p_values, m: int) -> float:
    """Sup distance between the empirical CDF of p-values and uniform on {1/m, ..., 1}."""
    p = np.sort(np.asarray(p_values, dtype=float))
    grid = np.arange(1, m + 1) / m
    emp = np.searchsorted(p, grid + 1e-12, side="right") / len(p)
    return float(np.max(np.abs(emp - grid)))
