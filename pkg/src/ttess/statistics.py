"""Tessellation statistics as sums of per-cell and per-segment contributions.

A feature vector is a plain float array; entry ``i`` is the raw statistic of
``specs[i]`` times its sign.  Local updates change only the cells they touch
(vertices they insert or dissolve on neighbouring cells are straight and
contribute nothing), so deltas are computed from the cells removed and the
polygons created by an update plan.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .geometry import min_enclosing_rectangle, signed_area
from .tessellation import (
    Flip,
    FlipPlan,
    LocalUpdate,
    Merge,
    MergePlan,
    Split,
    SplitPlan,
    TTess,
)

NAMES = ("n_cells", "sum_sq_areas", "angle_acute", "n_long_cells", "n_segments")
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    l0: float | None = None
    sign: float = 1.0

    def __post_init__(self):
        if self.name not in NAMES:
            raise ValueError(f"unknown statistic {self.name!r}")
        if self.name == "n_long_cells":
            if self.l0 is None:
                object.__setattr__(self, "l0", 4.0)
            if not self.l0 > 1:
                raise ValueError("l0 must exceed 1")
        if self.sign not in (1.0, -1.0):
            raise ValueError("sign must be +1 or -1")

    @property
    def kind(self) -> str:
        return "perSegment" if self.name == "n_segments" else "perCell"

    @property
    def label(self) -> str:
        base = f"n_long_cells(l0={self.l0:g})" if self.name == "n_long_cells" else self.name
        return base if self.sign > 0 else f"-{base}"

    @classmethod
    def parse(cls, item) -> "FeatureSpec":
        """From ``"n_long_cells(l0=4)"`` or ``{"name": ..., "sign": -1, "l0": 4}``."""
        if isinstance(item, FeatureSpec):
            return item
        if isinstance(item, str):
            item = {"name": item}
        name = str(item["name"]).strip()
        sign = float(item.get("sign", 1))
        l0 = item.get("l0")
        if name.startswith("-"):
            name, sign = name[1:], -sign
        m = re.fullmatch(r"n_long_cells\(\s*l0\s*=\s*([0-9.eE+-]+)\s*\)", name)
        if m:
            name, l0 = "n_long_cells", float(m.group(1))
        return cls(name, None if l0 is None else float(l0), sign)

    def to_dict(self) -> dict:
        d = {"name": self.name, "sign": int(self.sign)}
        if self.l0 is not None:
            d["l0"] = self.l0
        return d


def parse_specs(items) -> list[FeatureSpec]:
    specs = [FeatureSpec.parse(x) for x in items]
    labels = [s.label.lstrip("-") for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("statistic names must be unique within a model")
    return specs


def model10_specs() -> list[FeatureSpec]:
    """Energy -theta1 * n_s + theta2 * angle statistic."""
    return [FeatureSpec("n_segments", sign=-1.0), FeatureSpec("angle_acute")]


def model11_specs(l0: float = 4.0) -> list[FeatureSpec]:
    return [
        FeatureSpec("n_cells"),
        FeatureSpec("sum_sq_areas"),
        FeatureSpec("angle_acute"),
        FeatureSpec("n_long_cells", l0=l0),
    ]


# ----------------------------------------------------------------------
# per-cell contributions


def acute_angle_sum(ring) -> float:
    """Sum of (pi/2 - interior angle) over acute corners; cell on the left."""
    total = 0.0
    n = len(ring)
    for i in range(n):
        vx, vy = ring[i]
        px, py = ring[i - 1]
        qx, qy = ring[(i + 1) % n]
        e1x, e1y = qx - vx, qy - vy
        e2x, e2y = px - vx, py - vy
        a = math.atan2(e1x * e2y - e1y * e2x, e1x * e2x + e1y * e2y)
        if a < 0:
            a += 2 * math.pi
        if a < HALF_PI:
            total += HALF_PI - a
    return total


def is_long(ring, l0: float) -> bool:
    return min_enclosing_rectangle(ring).ratio > l0


def cell_values(specs, ring, area: float, holes=()) -> np.ndarray:
    """Signed contribution of one cell to every statistic."""
    out = np.zeros(len(specs))
    for k, s in enumerate(specs):
        if s.name == "n_cells":
            v = 1.0
        elif s.name == "sum_sq_areas":
            v = area * area
        elif s.name == "angle_acute":
            v = acute_angle_sum(ring) + sum(acute_angle_sum(h) for h in holes)
        elif s.name == "n_long_cells":
            v = 1.0 if is_long(ring, s.l0) else 0.0
        else:
            v = 0.0
        out[k] = s.sign * v
    return out


def segment_values(specs) -> np.ndarray:
    return np.array([s.sign if s.name == "n_segments" else 0.0 for s in specs])


def _cell_rings(t: TTess, cid: int):
    c = t.cells[cid]
    pts = t.points
    return [pts[v] for v in c.boundary], [[pts[v] for v in h] for h in c.holes], c.area


def cell_contribution(specs, t: TTess, cid: int) -> np.ndarray:
    ring, holes, area = _cell_rings(t, cid)
    return cell_values(specs, ring, area, holes)


# ----------------------------------------------------------------------
# raw statistics


def num_cells(t: TTess) -> int:
    return len(t.cells)


def sum_squared_areas(t: TTess) -> float:
    return float(sum(c.area ** 2 for c in t.cells.values()))


def angle_statistic(t: TTess) -> float:
    total = 0.0
    for cid in t.cells:
        ring, holes, _ = _cell_rings(t, cid)
        total += acute_angle_sum(ring) + sum(acute_angle_sum(h) for h in holes)
    return total


def long_cell_count(t: TTess, l0: float = 4.0) -> int:
    if not l0 > 1:
        raise ValueError("l0 must exceed 1")
    return sum(is_long(_cell_rings(t, cid)[0], l0) for cid in t.cells)


def num_internal_segments(t: TTess) -> int:
    return len(t.segments)


def raw_statistic(spec: FeatureSpec, t: TTess) -> float:
    if spec.name == "n_cells":
        return float(num_cells(t))
    if spec.name == "sum_sq_areas":
        return sum_squared_areas(t)
    if spec.name == "angle_acute":
        return angle_statistic(t)
    if spec.name == "n_long_cells":
        return float(long_cell_count(t, spec.l0))
    return float(num_internal_segments(t))


def feature_vector(specs, t: TTess) -> np.ndarray:
    return np.array([s.sign * raw_statistic(s, t) for s in specs], dtype=float)


# ----------------------------------------------------------------------
# deltas


def plan_delta(specs, t: TTess, plan, cache: dict | None = None) -> np.ndarray:
    """Feature change of a planned update; ``cache`` maps cell id -> contribution."""

    def old(cid):
        if cache is not None and cid in cache:
            return cache[cid]
        return cell_contribution(specs, t, cid)

    d = np.zeros(len(specs))
    if isinstance(plan, SplitPlan):
        removed, dseg = (plan.cell,), 1
    elif isinstance(plan, MergePlan):
        removed, dseg = plan.cells, -1
    elif isinstance(plan, FlipPlan):
        removed, dseg = plan.cells, 0
    else:
        raise TypeError(f"not an update plan: {plan!r}")
    for cid in removed:
        d -= old(cid)
    for poly in new_polygons(plan):
        d += cell_values(specs, poly, signed_area(poly))
    if dseg:
        d += dseg * segment_values(specs)
    return d


def new_polygons(plan) -> tuple:
    if isinstance(plan, MergePlan):
        return (plan.fused,)
    return plan.new_polygons


def _has_holes(t: TTess, plan) -> bool:
    cells = (plan.cell,) if isinstance(plan, SplitPlan) else plan.cells
    return any(t.cells[c].holes for c in cells)


def plan_update(t: TTess, u: LocalUpdate):
    if isinstance(u, Split):
        return t.plan_split_chord(u)
    if isinstance(u, Merge):
        return t.plan_merge(u.segment)
    if isinstance(u, Flip):
        return t.plan_flip(u.segment, u.end)
    raise TypeError(f"not a local update: {u!r}")


def delta_features(specs, t: TTess, u: LocalUpdate) -> np.ndarray:
    """featureVector(apply(t, u)) - featureVector(t) without a full recompute."""
    plan = plan_update(t, u)
    if _has_holes(t, plan):
        # plans carry outer rings only; fall back to local recomputation
        t2 = t.apply(u)
        return feature_vector(specs, t2) - feature_vector(specs, t)
    return plan_delta(specs, t, plan)
