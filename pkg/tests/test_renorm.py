import math

import numpy as np
import pytest

import oracles
from percolab.chemdist import INFINITY, chemical_distance, modified_distance
from percolab.clusters import label_clusters, nearest_giant_point
from percolab.errors import UnavailableError
from percolab.lattice import EdgeConfiguration, LatticeBox, RenormScheme, sample_configuration
from percolab.renorm import (efron_stein_vminus, is_good_box, materialized_renorm_distance, mesobox_key,
                             red_site_profile, renorm_distance, renorm_geodesic, renorm_layout,
                             resample_seed)


def test_hub_dijkstra_matches_explicit_clique_oracle():
    rng = np.random.default_rng(11)
    for i in range(100):
        sides = tuple(int(s) for s in rng.integers(3, 7, 2))
        origin = tuple(int(o) for o in rng.integers(-3, 1, 2))
        box = LatticeBox(sides, origin)
        t = int(rng.integers(1, 4))
        K = float(rng.choice([4.5, 5.0, 17.0]))
        scheme = RenormScheme(t, K, rho=1.0)
        config = sample_configuration(box, float(rng.choice([0.2, 0.5, 0.8])), int(rng.integers(2 ** 63)))
        a = box.vertex(int(rng.integers(box.n_vertices)))
        b = box.vertex(int(rng.integers(box.n_vertices)))
        want = oracles.renorm_oracle(sides, origin, config.open.tolist(), t, K, a, b)
        assert renorm_distance(config, scheme, a, b) == pytest.approx(want, abs=1e-9)
        assert materialized_renorm_distance(config, scheme, a, b) == pytest.approx(want, abs=1e-9)


def test_examples():
    box = LatticeBox((9, 9), (-4, -4))
    full = sample_configuration(box, 1.0, 0)
    assert renorm_distance(full, RenormScheme(4, 17), (0, 0), (4, 0)) == 4
    big = LatticeBox((12, 12), (-6, -6))
    assert renorm_distance(sample_configuration(big, 1.0, 0), RenormScheme(4, 17), (-6, 0), (0, 0)) == 6
    single = RenormScheme(20, 17)
    empty = sample_configuration(box, 0.0, 0)
    assert renorm_distance(empty, single, (-4, -4), (4, 4)) == 17 * 20
    path = renorm_geodesic(empty, single, (-4, -4), (4, 4))
    assert path.n_red == 1 and path.n_open == 0
    assert red_site_profile(path) == [((0, 0), True)]


def test_geodesic_weight_and_structure():
    rng = np.random.default_rng(12)
    box = LatticeBox((14, 14), (-7, -7))
    for _ in range(1000):
        t = int(rng.integers(1, 5))
        scheme = RenormScheme(t, 17.0)
        config = sample_configuration(box, 0.55, int(rng.integers(2 ** 63)))
        a = box.vertex(int(rng.integers(box.n_vertices)))
        b = box.vertex(int(rng.integers(box.n_vertices)))
        d = renorm_distance(config, scheme, a, b)
        path = renorm_geodesic(config, scheme, a, b)
        assert path.weight == pytest.approx(d)
        l1 = sum(abs(x - y) for x, y in zip(a, b))
        assert d <= scheme.K * (l1 + t) + 1e-9
        layout = renorm_layout(scheme, box)
        verts = box.vertex_ids(path.vertices)
        for v, w, e, k in zip(verts[:-1], verts[1:], path.step_edge, path.step_box):
            if e >= 0:
                assert config.open[e] and {box.edge_tail[e], box.edge_head[e]} == {v, w}
            else:
                pts = layout.points(layout.hub_of(k))
                assert v in pts and w in pts
        sites = red_site_profile(path)
        assert len(sites) <= 3 ** box.d * (1 + d / t)
        if path.n_red == 0:
            assert not any(flag for _, flag in sites)
        cd = chemical_distance(config, a, b)
        if cd != INFINITY:
            assert d <= cd


def test_p1_geodesic_is_all_open():
    box = LatticeBox((10, 10), (-5, -5))
    full = sample_configuration(box, 1.0, 0)
    path = renorm_geodesic(full, RenormScheme(3, 17), (-2, -2), (2, 1))
    assert path.n_red == 0 and path.weight == 7


def test_domination_by_modified_distance():
    box = LatticeBox((24, 24), (-12, -12))
    rng = np.random.default_rng(13)
    for _ in range(200):
        config = sample_configuration(box, 0.65, int(rng.integers(2 ** 63)))
        lab = label_clusters(config)
        if not lab.valid:
            continue
        y = (8, 0)
        xs, ys = nearest_giant_point(lab, (0, 0)), nearest_giant_point(lab, y)
        dstar = modified_distance(config, lab, (0, 0), y)
        for t in (2, 4, 8):
            assert renorm_distance(config, RenormScheme(t, 17), xs, ys) <= dstar


def test_good_boxes():
    box = LatticeBox((20, 20))
    scheme = RenormScheme(2, 5.0, rho=1.0)
    assert is_good_box(sample_configuration(box, 1.0, 0), scheme, (5, 5))
    assert is_good_box(sample_configuration(box, 0.0, 0), scheme, (5, 5))
    # a U-shaped corridor of length 9 > 4 rho t = 8 is the only link between (10,10) and (11,10)
    corridor = [((10, j), (10, j + 1)) for j in range(10, 14)] + [((10, 14), (11, 14))] + \
               [((11, j), (11, j + 1)) for j in range(10, 14)]
    config = EdgeConfiguration.from_open_edges(box, corridor)
    assert chemical_distance(config, (10, 10), (11, 10)) == 9
    assert not is_good_box(config, scheme, (5, 5))
    with pytest.raises(UnavailableError):
        is_good_box(config, scheme, (0, 0))


def test_resample_seed_chain():
    from percolab.lattice import derive_seed, mix64
    assert mesobox_key((0, 0)) == derive_seed(2, 0, 0)
    assert mesobox_key((-1, 2)) == derive_seed(2, 1, 4)
    assert resample_seed(7, 11, 3) == mix64(7 ^ mix64(11) ^ mix64(3))


def test_efron_stein_extremes_and_cap():
    box = LatticeBox((30, 30), (-15, -15))
    scheme = RenormScheme(4, 17)
    for p in (0.0, 1.0):
        es = efron_stein_vminus(sample_configuration(box, p, 3), scheme, (0, 0), (10, 0), 5, 9)
        assert es.v_minus == 0
    rng = np.random.default_rng(14)
    for _ in range(20):
        config = sample_configuration(box, 0.7, int(rng.integers(2 ** 63)))
        es = efron_stein_vminus(config, scheme, (0, 0), (10, 0), 4, 1)
        assert 0 <= es.v_minus <= es.cap
        assert es.cap == 9 * 17 ** 2 * 4 * (es.S + 4)
        again = efron_stein_vminus(config, scheme, (0, 0), (10, 0), 4, 1)
        assert again == es


def test_efron_stein_skipping_unused_boxes_is_exact():
    # resampling a box the geodesic never touches cannot increase the distance
    box = LatticeBox((16, 16), (-8, -8))
    scheme = RenormScheme(4, 17)
    config = sample_configuration(box, 0.7, 21)
    S = renorm_distance(config, scheme, (0, 0), (6, 0))
    path = renorm_geodesic(config, scheme, (0, 0), (6, 0))
    used = {tuple(k) for k in path.boxes().tolist()}
    layout = renorm_layout(scheme, box)
    for hub in range(layout.n_hubs):
        if tuple(layout.hub_k[hub].tolist()) in used:
            continue
        edges = layout.edges(hub)
        for r in range(3):
            alt = sample_configuration(box, 0.7, 1000 + r).open[edges]
            redrawn = config.with_edges(edges, alt)
            assert renorm_distance(redrawn, scheme, (0, 0), (6, 0)) <= S
