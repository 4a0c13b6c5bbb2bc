import numpy as np
import pytest
from scipy import ndimage

from conftest import random_tessellation
from ttess.arrangement import from_segments
from ttess.geometry import UNIT_SQUARE, segment
from ttess.gof import (
    FEstimate,
    _brute_distances,
    default_r_grid,
    distance_to_tessellation,
    distances_to_edges,
    edge_array,
    envelope_from_curves,
    envelope_test,
    estimate_F,
    inradius,
    ks_distance_discrete_uniform,
    rank_p_value,
)
from ttess.model import GibbsModel
from ttess.sampler import ChainConfig
from ttess.statistics import model10_specs
from ttess.tessellation import TTess


def test_bucketed_distances_match_brute_force():
    rng = np.random.default_rng(0)
    t = random_tessellation(1, 800)
    edges = edge_array(t)
    pts = rng.random((5000, 2))
    np.testing.assert_allclose(distances_to_edges(pts, edges), _brute_distances(pts[:, 0], pts[:, 1], edges), atol=1e-12)


def test_window_only_gives_zero():
    t = TTess.empty(UNIT_SQUARE)
    f = estimate_F(t, default_r_grid(UNIT_SQUARE), grid_size=128)
    assert np.nanmax(f.values) <= 1e-3


def test_default_grid():
    r = default_r_grid(UNIT_SQUARE)
    assert len(r) == 50
    assert r[-1] == pytest.approx(0.2 * np.sqrt(2), rel=1e-9)
    assert inradius(UNIT_SQUARE) == pytest.approx(0.5, abs=1 / 256)


def test_horizontal_chord_closed_form():
    # eligible points fill [r, 1-r]^2 and hits are the band |y - 1/2| <= r
    t = from_segments(UNIT_SQUARE, [segment(0, 0.5, 1, 0.5)])
    r = np.linspace(0.01, 0.24, 24)
    f = estimate_F(t, r)
    exact = 2 * r / (1 - 2 * r)
    h = 1 / 256
    assert np.max(np.abs(f.values - exact)) <= 2 * h / (1 - 2 * r.max())


def test_tilted_chord_against_pixel_distance_transform():
    t = from_segments(UNIT_SQUARE, [segment(0, 0.2, 1, 0.7), segment(0.4, 0.4, 0.6, 1.0)])
    n = 2000
    x = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(x, x)
    # rasterise the segments into a mask and measure pixel distances to it
    mask = np.ones((n, n), bool)
    for s in t.segment_geoms():
        k = np.linspace(0, 1, 4 * n)
        px = np.clip(((s.a[0] + k * (s.b[0] - s.a[0])) * n).astype(int), 0, n - 1)
        py = np.clip(((s.a[1] + k * (s.b[1] - s.a[1])) * n).astype(int), 0, n - 1)
        mask[py, px] = False
    d_t = ndimage.distance_transform_edt(mask) / n
    d_w = np.minimum.reduce([gx, gy, 1 - gx, 1 - gy])
    r = np.linspace(0.02, 0.2, 10)
    oracle = np.array([np.mean(d_t[d_w >= rr] <= rr) for rr in r])
    f = estimate_F(t, r)
    assert np.max(np.abs(f.values - oracle)) < 0.02


def test_rank_p_value_identities():
    assert rank_p_value(1.0, [0.5, 0.2, 0.3]) == (1, 0.25)
    assert rank_p_value(0.1, [0.5, 0.2, 0.3]) == (4, 1.0)
    # ties count against rejection
    assert rank_p_value(0.3, [0.3, 0.3, 0.1]) == (3, 0.75)


def _curve(vals):
    r = np.linspace(0.01, 0.1, len(vals))
    return FEstimate(r, vals, np.ones(len(vals), int))


def test_band_equivalence_on_random_curves():
    rng = np.random.default_rng(5)
    for _ in range(200):
        sims = [_curve(rng.random(8)) for _ in range(19)]
        obs = _curve(rng.random(8) * rng.uniform(0.5, 1.5))
        res = envelope_from_curves(obs, sims)
        assert res.m == 20
        assert (not res.rejected) == res.inside_band
        assert res.p_value == pytest.approx(res.rank / 20)
        assert res.half_width == pytest.approx(max(res.mad_sims))


def test_ks_distance():
    m = 20
    assert ks_distance_discrete_uniform(np.arange(1, m + 1) / m, m) == pytest.approx(0.0)
    assert ks_distance_discrete_uniform([1.0] * 10, m) == pytest.approx(1 - 1 / m)


def test_envelope_test_smoke():
    m = GibbsModel(tuple(model10_specs()), (0.0, 1.0), -1.0)
    obs = random_tessellation(9, 300)
    chain = ChainConfig(seed=3, n_steps=300, burn_in=0)
    res = envelope_test(obs, m, 6, chain, grid_size=64)
    assert res.m == 6 and len(res.mad_sims) == 5
    assert 1 <= res.rank <= 6
    res2 = envelope_test(obs, m, 6, chain, grid_size=64)
    assert res2.mad_obs == res.mad_obs and np.array_equal(res2.mad_sims, res.mad_sims)
    with pytest.raises(ValueError):
        envelope_test(obs, m, 1, chain)


def test_fine_grid_is_covered_beyond_half_diagonal():
    k = 8
    s = 1 / k
    segs = [segment(i * s, 0, i * s, 1) for i in range(1, k)] + [segment(0, i * s, 1, i * s) for i in range(1, k)]
    t = from_segments(UNIT_SQUARE, segs)
    r = np.array([s / np.sqrt(2), 0.12, 0.2])
    assert np.all(estimate_F(t, r).values == 1.0)


def test_point_distances():
    t = TTess.empty(UNIT_SQUARE)
    assert distance_to_tessellation((0.5, 0.5), t) == pytest.approx(0.5)
    t2 = from_segments(UNIT_SQUARE, [segment(0.3, 0, 0.3, 1)])
    assert distance_to_tessellation((0.3, 0.7), t2) == 0.0
    assert distance_to_tessellation((0.5, 0.5), t2) == pytest.approx(0.2)
