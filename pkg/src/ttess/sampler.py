"""Metropolis-Hastings-Green sampler for Gibbs T-tessellation models.

Moves: split a cell by a random line, merge the two cells along a
non-blocking segment, or flip the terminal edge of a multi-edge segment.
In continuous mode split lines are drawn from the (angle, offset) line
measure; in line-pool mode they are drawn uniformly from a fixed finite
pool, so the chain lives on the enumerable set of pool-supported
tessellations.

The target is exp(-<theta, s(T)> + lambda * n_s(T)) with respect to the
reference measure (``lambda`` is ``GibbsModel.line_intensity``).
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import LineGeom, Point, PolygonGeom, SegmentGeom, point_in_ring, signed_area
from .model import GibbsModel
from .statistics import FeatureSpec, cell_values, feature_vector, plan_delta, segment_values
from .tessellation import (
    Flip,
    FlipPlan,
    InvalidUpdate,
    LocalUpdate,
    Merge,
    MergePlan,
    Split,
    SplitPlan,
    TTess,
    _key,
)

LOG_PI = math.log(math.pi)
MOVES = ("split", "merge", "flip")


@dataclass(frozen=True)
class ChainConfig:
    seed: int = 0
    n_steps: int = 200_000
    burn_in: int = 100_000
    thin: int = 1
    move_probabilities: tuple = (0.4, 0.4, 0.2)
    line_pool: tuple | None = None

    def __post_init__(self):
        p = tuple(float(x) for x in self.move_probabilities)
        if len(p) != 3 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError("move probabilities must be three nonnegative numbers summing to 1")
        object.__setattr__(self, "move_probabilities", p)
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.n_steps < 0 or self.burn_in < 0:
            raise ValueError("step counts must be nonnegative")
        if self.burn_in > self.n_steps:
            raise ValueError("burn_in exceeds n_steps")
        if self.line_pool is not None:
            object.__setattr__(self, "line_pool", tuple(self.line_pool))

    @property
    def mode(self) -> str:
        return "continuous" if self.line_pool is None else "linePool"

    @property
    def n_retained(self) -> int:
        return (self.n_steps - self.burn_in) // self.thin

    def replace(self, **kw) -> "ChainConfig":
        d = dict(
            seed=self.seed,
            n_steps=self.n_steps,
            burn_in=self.burn_in,
            thin=self.thin,
            move_probabilities=self.move_probabilities,
            line_pool=self.line_pool,
        )
        d.update(kw)
        return ChainConfig(**d)

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "n_steps": self.n_steps,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "move_probabilities": list(self.move_probabilities),
            "mode": self.mode,
        }
        if self.line_pool is not None:
            d["line_pool"] = [[ln.angle, ln.offset] for ln in self.line_pool]
        return d


@dataclass
class SampleSet:
    tessellations: list
    features: np.ndarray
    acceptance: dict
    seed: int
    specs: tuple = ()
    energies: np.ndarray | None = None
    state_keys: list | None = None
    proposals: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tessellations)

    @property
    def last(self) -> TTess:
        return self.tessellations[-1]


def rng_for(seed: int, index: int = 0) -> random.Random:
    """Independent per-chain generator derived from a master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return random.Random(int.from_bytes(ss.generate_state(4, np.uint32).tobytes(), "little"))


def sub_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)]


# ----------------------------------------------------------------------
# geometry helpers shared by proposals


def projection_width(ring, angle: float) -> float:
    nx, ny = -math.sin(angle), math.cos(angle)
    vals = [p[0] * nx + p[1] * ny for p in ring]
    return max(vals) - min(vals)


def projection_range(ring, angle: float) -> tuple[float, float]:
    nx, ny = -math.sin(angle), math.cos(angle)
    vals = [p[0] * nx + p[1] * ny for p in ring]
    return min(vals), max(vals)


def lines_crossing(ring, lines, eps: float) -> list[int]:
    """Indices of pool lines that cut the polygon's interior."""
    out = []
    for k, ln in enumerate(lines):
        nx, ny = -math.sin(ln.angle), math.cos(ln.angle)
        lo = hi = None
        for p in ring:
            s = p[0] * nx + p[1] * ny - ln.offset
            lo = s if lo is None or s < lo else lo
            hi = s if hi is None or s > hi else hi
        if lo < -eps and hi > eps:
            out.append(k)
    return out


# ----------------------------------------------------------------------
# proposal densities


def _edge_changes(t: TTess, plan) -> tuple[dict, int]:
    """Per-segment change in edge count caused by ``plan``; plus new segments."""
    ch: dict[int, int] = {}

    def add(s, d):
        if s >= 0:
            ch[s] = ch.get(s, 0) + d

    if isinstance(plan, SplitPlan):
        add(t.owner[_key(*plan.edge_p)], 1)
        add(t.owner[_key(*plan.edge_q)], 1)
        return ch, 1
    if isinstance(plan, MergePlan):
        vp, vq = t.segments[plan.segment]
        add(plan.segment, -1)
        for v in (vp, vq):
            for s in t.chains_at[v]:
                if s != plan.segment:
                    add(s, -1)
        return ch, 0
    if isinstance(plan, FlipPlan):
        add(plan.segment, -1)
        add(plan.extended, 1)
        for s in t.chains_at[plan.removed_vertex]:
            if s != plan.segment:
                add(s, -1)
        owner = t.owner.get(_key(*plan.hit_edge))
        if owner is None:
            # the hit edge only exists once the removed vertex is dissolved
            owner = next(s for s in t.chains_at[plan.removed_vertex] if s != plan.segment)
        add(owner, 1)
        return ch, 0
    raise TypeError(f"not an update plan: {plan!r}")


def _bag_counts_after(t: TTess, plan, nb: int, multi: int) -> tuple[int, int]:
    ch, new = _edge_changes(t, plan)
    for s, d in ch.items():
        old = len(t.segments[s]) - 1
        newc = old + d
        nb += (newc == 1) - (old == 1)
        multi += (newc >= 2) - (old >= 2)
    return nb + new, multi


def _split_line_log_density(ring, angle: float, pool, pool_eps: float) -> float:
    """Log density of drawing the split line given the cell."""
    if pool is None:
        return -LOG_PI - math.log(projection_width(ring, angle))
    m = len(lines_crossing(ring, pool, pool_eps))
    return -math.log(m)


def plan_log_densities(t: TTess, plan, config: ChainConfig, counts=None) -> tuple[float, float]:
    """(forward, reverse) log proposal densities of a planned update.

    ``counts`` optionally supplies (n_cells, n_nonblocking, n_multi) for ``t``.
    """
    ps, pm, pf = config.move_probabilities
    pool = config.line_pool
    peps = 10 * t.eps
    if counts is None:
        nb = sum(1 for c in t.segments.values() if len(c) == 2)
        counts = (len(t.cells), nb, len(t.segments) - nb)
    n_c, nb, multi = counts
    nb2, multi2 = _bag_counts_after(t, plan, nb, multi)
    pts = t.points
    if isinstance(plan, SplitPlan):
        ring = [pts[v] for v in t.cells[plan.cell].boundary]
        fwd = math.log(ps) - math.log(n_c) + _split_line_log_density(ring, plan.line.angle, pool, peps)
        rev = math.log(pm) - math.log(nb2) if pm > 0 else -math.inf
        return fwd, rev
    if isinstance(plan, MergePlan):
        fwd = math.log(pm) - math.log(nb)
        if ps > 0:
            rev = math.log(ps) - math.log(n_c - 1) + _split_line_log_density(
                plan.fused, plan.line.angle, pool, peps
            )
        else:
            rev = -math.inf
        return fwd, rev
    if isinstance(plan, FlipPlan):
        return math.log(pf) - math.log(2 * multi), math.log(pf) - math.log(2 * multi2)
    raise TypeError(f"not an update plan: {plan!r}")


def _plan_for(t: TTess, u: LocalUpdate, config: ChainConfig):
    if isinstance(u, Split):
        return t.plan_split_chord(u)
    if isinstance(u, Merge):
        return t.plan_merge(u.segment)
    if isinstance(u, Flip):
        return t.plan_flip(u.segment, u.end)
    raise TypeError(f"not a local update: {u!r}")


def proposal_log_densities(t: TTess, u: LocalUpdate, config: ChainConfig) -> tuple[float, float]:
    """Forward and reverse log proposal densities of a given update."""
    return plan_log_densities(t, _plan_for(t, u, config), config)


def inverse_update(t_before: TTess, u: LocalUpdate, t_after: TTess, created: int | None = None) -> LocalUpdate:
    """The update of ``t_after`` that undoes ``u``.

    ``created`` is the id of the segment a split created (required for Split).
    """
    if isinstance(u, Split):
        if created is None:
            raise ValueError("split inverse needs the created segment id")
        return Merge(created)
    if isinstance(u, Merge):
        chord = t_before.segment_geom(u.segment)
        mid = ((chord.a[0] + chord.b[0]) / 2, (chord.a[1] + chord.b[1]) / 2)
        for cid, c in t_after.cells.items():
            if point_in_ring(mid, [t_after.points[v] for v in c.boundary]):
                return Split(cid, chord)
        raise ValueError("merged cell not found")
    if isinstance(u, Flip):
        plan = t_before.plan_flip(u.segment, u.end)
        return Flip(plan.extended, plan.extended_end)
    raise TypeError(f"not a local update: {u!r}")


def acceptance_log_ratio(m: GibbsModel, t: TTess, u: LocalUpdate, fwd: float, rev: float) -> float:
    """log of exp(-dU + lambda * dn_s) * exp(rev - fwd)."""
    plan = _plan_for(t, u, ChainConfig(burn_in=0, n_steps=0))
    d = plan_delta(m.specs, t, plan)
    dn = 1 if isinstance(u, Split) else (-1 if isinstance(u, Merge) else 0)
    return float(-np.dot(m.theta, d) + m.line_intensity * dn + rev - fwd)


# ----------------------------------------------------------------------
# engines


class IndexedSet:
    """Set with O(1) add, remove and uniform pick."""

    def __init__(self, items=()):
        self.items: list = []
        self.pos: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x) -> None:
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, x) -> bool:
        return x in self.pos

    def pick(self, rng: random.Random):
        return self.items[int(rng.random() * len(self.items))]


@dataclass
class Proposal:
    kind: str
    plan: object
    fwd: float
    rev: float
    delta: np.ndarray
    new_cells: tuple  # contributions of created cells, in creation order
    log_ratio: float


class ContinuousEngine:
    """In-place chain state with cached cell contributions and move bags."""

    def __init__(self, model: GibbsModel, t: TTess, config: ChainConfig, rng: random.Random):
        if not t.window.is_convex():
            raise ValueError("the sampler needs a convex window")
        self.model = model
        self.specs = model.specs
        self.theta = model.theta
        self.lam = model.line_intensity
        self.config = config
        self.rng = rng
        self.t = t.copy()
        self.cells = IndexedSet(sorted(self.t.cells))
        self.nb = IndexedSet()
        self.multi = IndexedSet()
        for s in sorted(self.t.segments):
            self._classify(s)
        self.contrib = {c: self._cell_vec(c) for c in self.t.cells}
        self.seg_vec = segment_values(self.specs)
        self.features = feature_vector(self.specs, self.t)
        self.proposed = dict.fromkeys(MOVES, 0)
        self.accepted = dict.fromkeys(MOVES, 0)
        ps, pm, _ = config.move_probabilities
        self._c1 = ps
        self._c2 = ps + pm

    def _cell_vec(self, cid):
        c = self.t.cells[cid]
        pts = self.t.points
        return cell_values(self.specs, [pts[v] for v in c.boundary], c.area)

    def _classify(self, s):
        self.nb.discard(s)
        self.multi.discard(s)
        c = self.t.segments.get(s)
        if c is None:
            return
        (self.nb if len(c) == 2 else self.multi).add(s)

    @property
    def counts(self):
        return len(self.cells), len(self.nb), len(self.multi)

    # proposals ---------------------------------------------------------

    def _draw_split(self):
        t = self.t
        cid = self.cells.pick(self.rng)
        ring = [t.points[v] for v in t.cells[cid].boundary]
        angle = self.rng.random() * math.pi
        lo, hi = projection_range(ring, angle)
        off = lo + self.rng.random() * (hi - lo)
        return t.plan_split(cid, LineGeom(angle, off), check_alignment=False)

    def _draw_line_pool_split(self):
        t = self.t
        cid = self.cells.pick(self.rng)
        ring = [t.points[v] for v in t.cells[cid].boundary]
        hits = lines_crossing(ring, self.config.line_pool, 10 * t.eps)
        if not hits:
            return None
        line = self.config.line_pool[hits[int(self.rng.random() * len(hits))]]
        return t.plan_split(cid, line, check_alignment=True)

    def propose(self) -> Proposal | None:
        r = self.rng.random()
        t = self.t
        try:
            if r < self._c1:
                kind = "split"
                self.proposed[kind] += 1
                if self.config.line_pool is None:
                    plan = self._draw_split()
                else:
                    plan = self._draw_line_pool_split()
                if plan is None:
                    return None
                removed = (plan.cell,)
                polys = plan.new_polygons
                dn = 1
            elif r < self._c2:
                kind = "merge"
                self.proposed[kind] += 1
                if not self.nb:
                    return None
                plan = t.plan_merge(self.nb.pick(self.rng))
                removed = plan.cells
                polys = (plan.fused,)
                dn = -1
            else:
                kind = "flip"
                self.proposed[kind] += 1
                if not self.multi:
                    return None
                s = self.multi.pick(self.rng)
                end = "first" if self.rng.random() < 0.5 else "last"
                plan = t.plan_flip(s, end)
                removed = plan.cells
                polys = plan.new_polygons
                dn = 0
        except InvalidUpdate:
            return None
        new_vecs = tuple(cell_values(self.specs, p, signed_area(p)) for p in polys)
        delta = sum(new_vecs) - sum(self.contrib[c] for c in removed) + dn * self.seg_vec
        fwd, rev = plan_log_densities(t, plan, self.config, self.counts)
        log_ratio = float(-np.dot(self.theta, delta)) + self.lam * dn + rev - fwd
        return Proposal(kind, plan, fwd, rev, delta, new_vecs, log_ratio)

    # application ------------------------------------------------------

    def apply(self, prop: Proposal) -> int | None:
        t = self.t
        plan = prop.plan
        ch, _ = _edge_changes(t, plan)
        affected = set(ch)
        created = None
        if prop.kind == "split":
            created = t._apply_split(plan)
            removed = (plan.cell,)
            new = (t._next_cid - 2, t._next_cid - 1)
            affected.add(created)
        elif prop.kind == "merge":
            c = t._apply_merge(plan)
            removed = plan.cells
            new = (c,)
        else:
            t._apply_flip(plan)
            removed = plan.cells
            new = (t._next_cid - 2, t._next_cid - 1)
        for c in removed:
            self.cells.discard(c)
            del self.contrib[c]
        for c, vec in zip(new, prop.new_cells):
            self.cells.add(c)
            self.contrib[c] = vec
        for s in affected:
            self._classify(s)
        self.features = self.features + prop.delta
        self.accepted[prop.kind] += 1
        return created

    def step(self) -> bool:
        prop = self.propose()
        if prop is None:
            return False
        lr = prop.log_ratio
        if lr >= 0 or self.rng.random() < math.exp(lr):
            self.apply(prop)
            return True
        return False

    def acceptance_rates(self) -> dict:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0) for k in MOVES}


class _PoolState:
    __slots__ = ("t", "key", "features", "cell_ids", "cell_lines", "nb", "multi")

    def __init__(self, t: TTess, specs, pool):
        self.t = t
        self.key = t.canonical_key()
        self.features = feature_vector(specs, t)
        self.cell_ids = sorted(t.cells)
        eps = 10 * t.eps
        self.cell_lines = [
            lines_crossing([t.points[v] for v in t.cells[c].boundary], pool, eps) for c in self.cell_ids
        ]
        self.nb = [s for s in sorted(t.segments) if len(t.segments[s]) == 2]
        self.multi = [s for s in sorted(t.segments) if len(t.segments[s]) > 2]


class PoolEngine:
    """Line-pool chain with memoised states and transitions (finite state space)."""

    def __init__(self, model: GibbsModel, t: TTess, config: ChainConfig, rng: random.Random):
        if config.line_pool is None:
            raise ValueError("PoolEngine needs a line pool")
        if not t.window.is_convex():
            raise ValueError("the sampler needs a convex window")
        self.model = model
        self.config = config
        self.rng = rng
        self.pool = config.line_pool
        self.states: dict = {}
        self.memo: dict = {}
        self.state = self._register(t.copy())
        self.proposed = dict.fromkeys(MOVES, 0)
        self.accepted = dict.fromkeys(MOVES, 0)
        ps, pm, _ = config.move_probabilities
        self._c1 = ps
        self._c2 = ps + pm

    def _register(self, t: TTess) -> _PoolState:
        st = _PoolState(t, self.model.specs, self.pool)
        return self.states.setdefault(st.key, st)

    @property
    def t(self) -> TTess:
        return self.state.t

    @property
    def features(self) -> np.ndarray:
        return self.state.features

    def _transition(self, st: _PoolState, kind: str, a: int, b: int):
        key = (st.key, kind, a, b)
        hit = self.memo.get(key)
        if hit is not None or key in self.memo:
            return hit
        t = st.t
        try:
            if kind == "split":
                plan = t.plan_split(st.cell_ids[a], self.pool[st.cell_lines[a][b]], check_alignment=True)
            elif kind == "merge":
                plan = t.plan_merge(st.nb[a])
            else:
                plan = t.plan_flip(st.multi[a], "first" if b == 0 else "last")
        except InvalidUpdate:
            self.memo[key] = None
            return None
        counts = (len(st.cell_ids), len(st.nb), len(st.multi))
        fwd, rev = plan_log_densities(t, plan, self.config, counts)
        t2 = t.copy()
        if kind == "split":
            t2._apply_split(plan)
        elif kind == "merge":
            t2._apply_merge(plan)
        else:
            t2._apply_flip(plan)
        st2 = self._register(t2)
        dn = {"split": 1, "merge": -1, "flip": 0}[kind]
        m = self.model
        lr = float(-np.dot(m.theta, st2.features - st.features)) + m.line_intensity * dn + rev - fwd
        self.memo[key] = (st2, lr)
        return self.memo[key]

    def step(self) -> bool:
        rng = self.rng
        st = self.state
        r = rng.random()
        if r < self._c1:
            kind = "split"
            i = int(rng.random() * len(st.cell_ids))
            m = len(st.cell_lines[i])
            if m == 0:
                self.proposed[kind] += 1
                return False
            j = int(rng.random() * m)
        elif r < self._c2:
            kind = "merge"
            if not st.nb:
                self.proposed[kind] += 1
                return False
            i, j = int(rng.random() * len(st.nb)), 0
        else:
            kind = "flip"
            if not st.multi:
                self.proposed[kind] += 1
                return False
            i = int(rng.random() * len(st.multi))
            j = 0 if rng.random() < 0.5 else 1
        self.proposed[kind] += 1
        tr = self._transition(st, kind, i, j)
        if tr is None:
            return False
        st2, lr = tr
        if lr >= 0 or rng.random() < math.exp(lr):
            self.state = st2
            self.accepted[kind] += 1
            return True
        return False

    def acceptance_rates(self) -> dict:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0) for k in MOVES}


def make_engine(model: GibbsModel, t: TTess, config: ChainConfig, rng: random.Random):
    if config.line_pool is None:
        return ContinuousEngine(model, t, config, rng)
    return PoolEngine(model, t, config, rng)


# ----------------------------------------------------------------------
# functional surface


def propose_update(t: TTess, config: ChainConfig, rng: random.Random, model: GibbsModel | None = None):
    """Draw one candidate: (update or None for REJECT, forward, reverse)."""
    if model is None:
        model = GibbsModel((FeatureSpec("n_cells"),), [0.0])
    eng = ContinuousEngine(model, t, config, rng)
    prop = eng.propose()
    if prop is None:
        return None, -math.inf, -math.inf
    plan = prop.plan
    if prop.kind == "split":
        u = Split(plan.cell, SegmentGeom(Point(*plan.p), Point(*plan.q)))
    elif prop.kind == "merge":
        u = Merge(plan.segment)
    else:
        u = Flip(plan.segment, plan.end)
    return u, prop.fwd, prop.rev


def step(t: TTess, m: GibbsModel, config: ChainConfig, rng: random.Random) -> TTess:
    """One MHG transition from ``t``; returns ``t`` itself on rejection."""
    eng = ContinuousEngine(m, t, config, rng)
    return eng.t if eng.step() else t


def run(
    m: GibbsModel,
    window: PolygonGeom,
    config: ChainConfig,
    initial: TTess | None = None,
    chain_index: int = 0,
    record_trace: bool = False,
) -> SampleSet:
    """Run one chain and keep every ``thin``-th state after burn-in."""
    rng = rng_for(config.seed, chain_index)
    t0 = TTess.empty(window) if initial is None else initial
    eng = make_engine(m, t0, config, rng)
    pool_mode = isinstance(eng, PoolEngine)
    tess, feats, keys = [], [], []
    trace = []
    for k in range(1, config.n_steps + 1):
        eng.step()
        if record_trace:
            trace.append(float(np.dot(m.theta, eng.features)))
        if k > config.burn_in and (k - config.burn_in) % config.thin == 0:
            if pool_mode:
                tess.append(eng.state.t)
                keys.append(eng.state.key)
            else:
                tess.append(eng.t.copy())
            feats.append(eng.features.copy())
    features = np.array(feats, dtype=float).reshape(len(feats), m.dim)
    out = SampleSet(
        tessellations=tess,
        features=features,
        acceptance=eng.acceptance_rates(),
        seed=config.seed,
        specs=m.specs,
        energies=features @ m.theta,
        state_keys=keys if pool_mode else None,
        proposals=dict(eng.proposed),
    )
    if record_trace:
        out.trace = np.array(trace)
    return out


def _run_job(args):
    m, window, config, initial, index = args
    return run(m, window, config, initial, chain_index=index)


def run_parallel(
    m: GibbsModel,
    window: PolygonGeom,
    config: ChainConfig,
    n_chains: int,
    threads: int = 1,
    initial: TTess | list | None = None,
) -> list[SampleSet]:
    """Independent chains; chain ``i`` uses the sub-stream ``i`` of the master seed."""
    if n_chains < 1:
        raise ValueError("n_chains must be at least 1")
    inits = initial if isinstance(initial, list) else [initial] * n_chains
    jobs = [(m, window, config, inits[i], i) for i in range(n_chains)]
    if threads <= 1 or n_chains == 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_run_job, jobs))


def merge_samples(sets: list[SampleSet]) -> SampleSet:
    acc = {}
    for k in MOVES:
        prop = sum(s.proposals.get(k, 0) for s in sets)
        accd = sum(s.acceptance[k] * s.proposals.get(k, 0) for s in sets)
        acc[k] = accd / prop if prop else 0.0
    feats = np.vstack([s.features for s in sets])
    return SampleSet(
        tessellations=[t for s in sets for t in s.tessellations],
        features=feats,
        acceptance=acc,
        seed=sets[0].seed,
        specs=sets[0].specs,
        energies=np.concatenate([s.energies for s in sets]),
        proposals={k: sum(s.proposals.get(k, 0) for s in sets) for k in MOVES},
    )
