import json
import math

import numpy as np
import pytest

from conftest import random_tessellation
from ttess.approximation import (
    ApproxConfig,
    GeometryError,
    RepairError,
    approximate,
    clip_to_window,
    i_vertices,
    jittered_grid,
    l_vertices,
    landscape_from_geojson,
    landscape_to_geojson,
    remove_I_vertices,
    remove_L_vertices,
    remove_X_vertices,
    repair,
    representative_segment,
    side_dissimilarity,
    single_linkage_clusters,
    tessellation_landscape,
    write_report_csv,
    x_vertices,
)
from ttess.arrangement import from_segments
from ttess.geometry import UNIT_SQUARE, segment
from ttess.tessellation import validate


def test_dissimilarity_examples():
    a = segment(0, 0, 1, 0)
    assert side_dissimilarity(a, segment(0, 0, 1, 0)) == pytest.approx(0.0)
    # parallel at distance h: hull h, gap term 2h / 2
    assert side_dissimilarity(a, segment(0, 0.01, 1, 0.01)) == pytest.approx(0.02)
    # perpendicular sides meeting at a corner
    assert side_dissimilarity(a, segment(1, 0, 1, 1)) == pytest.approx(0.5)
    # crossing sides have zero gap
    assert side_dissimilarity(segment(0, 0, 2, 2), segment(0, 2, 2, 0)) == pytest.approx(4 / 8)
    # scale free and symmetric
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, q = segment(*rng.random(4)), segment(*rng.random(4))
        d = side_dissimilarity(p, q)
        assert d == pytest.approx(side_dissimilarity(q, p))
        s = 7.3
        assert side_dissimilarity(segment(*(s * np.array([*p.a, *p.b]))), segment(*(s * np.array([*q.a, *q.b])))) == pytest.approx(d)


def naive_single_linkage(sides, threshold):
    """Agglomerate while some pair of clusters has a linkage below the threshold."""
    clusters = [[i] for i in range(len(sides))]
    while True:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                link = min(side_dissimilarity(sides[a], sides[b]) for a in clusters[i] for b in clusters[j])
                if link < threshold and (best is None or link < best[0]):
                    best = (link, i, j)
        if best is None:
            return sorted(sorted(c) for c in clusters)
        _, i, j = best
        clusters[i] += clusters.pop(j)


def test_clustering_matches_naive_agglomeration():
    rng = np.random.default_rng(3)
    for trial in range(3):
        base = rng.random((8, 4))
        sides = []
        for b in base:
            for _ in range(3):
                sides.append(segment(*(b + rng.normal(scale=0.01, size=4))))
        got = single_linkage_clusters(sides, 0.1, chunk=7)
        assert sorted(got) == naive_single_linkage(sides, 0.1)


def test_representative_covers_projections():
    r = representative_segment([segment(0, 0, 1, 0), segment(2, 0, 3, 0)])
    assert sorted([r.a[0], r.b[0]]) == pytest.approx([0.0, 3.0])
    assert r.a[1] == pytest.approx(0.0, abs=1e-12)
    r2 = representative_segment([segment(0, 0.01, 1, 0.01), segment(0, -0.01, 1, -0.01)])
    assert r2.a[1] == pytest.approx(0.0, abs=1e-12) and math.dist(r2.a, r2.b) == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        representative_segment([segment(1, 1, 1, 1)])


def test_clip_to_window():
    s = clip_to_window(segment(-1, 0.5, 2, 0.5), UNIT_SQUARE)
    assert sorted([s.a[0], s.b[0]]) == pytest.approx([0.0, 1.0])
    assert clip_to_window(segment(2, 2, 3, 3), UNIT_SQUARE) is None


def test_dangling_segment_is_dropped_or_extended():
    # short stub: dropping costs less than reaching the far side
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 0.2, 0.5)])
    assert len(i_vertices(t)) == 1
    fixed = remove_I_vertices(t)
    assert validate(fixed) == [] and len(fixed.segments) == 0
    # long stub: extending to the boundary is cheaper
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 0.9, 0.5)])
    fixed = remove_I_vertices(t)
    assert validate(fixed) == [] and len(fixed.cells) == 2


def test_L_corner_is_extended():
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 0.6, 0.5), segment(0.6, 0.5, 0.6, 0)])
    assert len(l_vertices(t)) == 1
    fixed = remove_L_vertices(t)
    assert l_vertices(fixed) == [] and validate(fixed) == []
    assert len(fixed.cells) == 3


def test_X_vertex_becomes_two_T_vertices():
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 1, 0.5), segment(0.5, 0, 0.5, 1)])
    assert len(x_vertices(t)) == 1
    fixed = remove_X_vertices(t)
    assert validate(fixed) == []
    assert len(fixed.cells) == 4 and len(fixed.segments) == 3


def test_repair_budget():
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 1, 0.5), segment(0.5, 0, 0.5, 1), segment(0.2, 0.1, 0.3, 0.1)])
    with pytest.raises(RepairError):
        repair(t, ApproxConfig(max_repair_iterations=1))
    assert validate(repair(t, ApproxConfig())) == []


@pytest.mark.parametrize("redraw", [0.0, 0.005])
def test_jittered_grid_benchmark(redraw):
    l = jittered_grid(4, 0.01, seed=1, redraw=redraw)
    t, rep = approximate(l)
    assert validate(t) == []
    assert rep.counts["cells"] == 16
    ia = np.median([r["area"] for r in rep.input_cells])
    oa = np.median([r["area"] for r in rep.output_cells])
    assert oa == pytest.approx(ia, rel=0.05)


def test_valid_tessellation_is_a_fixed_point():
    for seed in range(3):
        t = random_tessellation(seed, 200)
        t2, _ = approximate(tessellation_landscape(t), ApproxConfig(cut_threshold=0.01))
        assert validate(t2) == []
        assert len(t2.cells) == len(t.cells)
        assert sorted(c.area for c in t2.cells.values()) == pytest.approx(sorted(c.area for c in t.cells.values()), abs=1e-6)


def test_geojson_round_trip_and_errors(tmp_path):
    l = jittered_grid(3, 0.02, seed=2)
    data = json.loads(json.dumps(landscape_to_geojson(l)))
    l2 = landscape_from_geojson(data)
    assert len(l2.fields) == 9
    assert l2.domain.area() == pytest.approx(1.0)
    no_domain = {"type": "FeatureCollection", "features": data["features"][1:]}
    with pytest.raises(GeometryError, match="domain"):
        landscape_from_geojson(no_domain)
    with pytest.raises(GeometryError):
        landscape_from_geojson({"type": "Feature"})
    t, rep = approximate(l2)
    write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "section,item,value"
    assert any(x.startswith("stage,cells,") for x in lines)


def test_config_validation():
    with pytest.raises(ValueError):
        ApproxConfig(cut_threshold=0)
    with pytest.raises(ValueError):
        ApproxConfig.from_dict({"delta": 0.1})
    assert ApproxConfig.from_dict({"cut_threshold": 0.2}).cut_threshold == 0.2
