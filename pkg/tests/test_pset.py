import json
import math

import numpy as np
import pytest

from conftest import bfs_components, random_space
from rootpeel import pset
from rootpeel.space import AugmentedMetricSpace


@pytest.fixture
def forest4(line4):
    return pset.build(line4)


class TestBuild:
    def test_grid_of_line_example(self, forest4):
        grid, _ = forest4
        assert grid.eps_values.tolist() == [0, 2, 2.5, 3, 4.5, 5, 7.5]
        assert grid.sigma_values.tolist() == [0, 1, 2, 3]

    def test_level_rows_match_hand_clustering(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        # densest level: only the first point, alone at every scale
        assert v.cluster_at(100.0, 0.0, 0) == {0}
        # top level at scale 2: exactly the two closest points are merged
        assert v.cluster_at(2.0, 3.0, 3) == {2, 3}
        assert v.cluster_at(2.0, 3.0, 0) == {0}
        assert v.cluster_at(2.0, 3.0, 1) == {1}
        # at 2.5 the chain x1-x3-x2 is connected but x0 is not
        assert v.cluster_at(2.5, 3.0, 1) == {1, 2, 3}
        assert v.cluster_at(3.0, 3.0, 0) == {0, 1, 2, 3}

    def test_singleton_space(self):
        sp = AugmentedMetricSpace(points=[[1.0]], density=[0.5])
        grid, fo = pset.build(sp)
        assert fo.num_levels == 1
        assert grid.eps_values.tolist() == [0.0]
        assert fo.merge_events(0) == []

    def test_equal_densities_collapse_to_one_level(self):
        sp = AugmentedMetricSpace(points=[[0.0], [1.0], [5.0]], density=[2, 2, 2])
        _, fo = pset.build(sp)
        assert fo.num_levels == 1
        assert fo.level_sizes.tolist() == [3]

    def test_memory_budget_enforced(self):
        rng = np.random.default_rng(0)
        sp = AugmentedMetricSpace(points=rng.random((40, 2)), density=rng.random(40))
        with pytest.raises(pset.ForestMemoryError):
            pset.build(sp, max_bytes=1000)

    def test_direct_and_incremental_builders_agree(self):
        rng = np.random.default_rng(8)
        pts = rng.random((90, 2))
        sp = AugmentedMetricSpace(points=pts, density=np.zeros(90))
        _, fo = pset.build(sp)  # single big level takes the direct path
        u_direct = fo.levels[0]
        u_inc = np.zeros((90, 90))
        for q in range(90):
            pset._add_point(u_inc, fo.dist, q)
        assert np.array_equal(u_direct, u_inc)

    def test_mixed_builder_paths_agree(self):
        # small first level built incrementally, then a big jump that takes
        # the direct path; both levels must match a pure incremental build
        rng = np.random.default_rng(9)
        pts = rng.random((100, 2))
        dens = np.concatenate([np.zeros(10), np.ones(90)])
        sp = AugmentedMetricSpace(points=pts, density=dens)
        _, fo = pset.build(sp)
        assert fo.level_sizes.tolist() == [10, 100]
        work = np.zeros((100, 100))
        for q in range(100):
            pset._add_point(work, fo.dist, q)
            if q == 9:
                assert np.array_equal(fo.levels[0], work[:10, :10])
        assert np.array_equal(fo.levels[1], work)


class TestUltrametric:
    def test_line_example_values(self, forest4):
        _, fo = forest4
        assert fo.ultrametric(3.0, 0, 3) == 3.0
        assert fo.ultrametric(1.0, 0, 1) == 7.5
        assert fo.ultrametric(3.0, 2, 2) == 0.0

    def test_absent_point_rejected(self, forest4):
        _, fo = forest4
        with pytest.raises(pset.QueryError, match="absent"):
            fo.ultrametric(1.0, 0, 3)

    def test_strong_triangle_inequality(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            sp = random_space(rng, mode="random", duplicates=True)
            _, fo = pset.build(sp)
            for j, sigma in enumerate(fo.sigma_levels):
                m = int(fo.level_sizes[j])
                pts = fo.perm[:m]
                for x in pts:
                    for y in pts:
                        for z in pts:
                            uxz = fo.ultrametric(sigma, x, z)
                            uxy = fo.ultrametric(sigma, x, y)
                            uyz = fo.ultrametric(sigma, y, z)
                            assert uxz <= max(uxy, uyz) + 0


class TestClusterOracle:
    def test_matches_bfs_on_random_spaces(self):
        rng = np.random.default_rng(4)
        for t in range(30):
            sp = random_space(rng, n=int(rng.integers(2, 13)), duplicates=(t % 3 == 0))
            grid, fo = pset.build(sp)
            v = pset.fresh_view(fo)
            f = sp.density
            for sigma in grid.sigma_values:
                active = [i for i in range(sp.n) if f[i] <= sigma]
                for eps in grid.eps_values:
                    comp = bfs_components(sp.distance_matrix(), active, eps)
                    for x in active:
                        assert v.cluster_at(eps, sigma, x) == comp[x]

    def test_restricted_view_matches_filtered_bfs(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            sp = random_space(rng, n=int(rng.integers(3, 11)))
            grid, fo = pset.build(sp)
            from rootpeel.rooted import peel_all

            trace = peel_all(sp, forest=fo)
            view = trace.final_view
            removed = set(view.removed)
            f = sp.density
            survivors = set(view.survivors())
            for sigma in grid.sigma_values:
                active = [i for i in range(sp.n) if f[i] <= sigma]
                for eps in grid.eps_values:
                    comp = bfs_components(sp.distance_matrix(), active, eps)
                    for x in active:
                        if x in removed:
                            continue
                        assert view.cluster_at(eps, sigma, x) == comp[x] & survivors


class TestMonotonicity:
    def test_clusters_nested_in_both_parameters(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            sp = random_space(rng, n=int(rng.integers(2, 10)))
            grid, fo = pset.build(sp)
            v = pset.fresh_view(fo)
            f = sp.density
            es = grid.eps_values
            ss = grid.sigma_values
            for x in range(sp.n):
                for si, sigma in enumerate(ss):
                    if f[x] > sigma:
                        continue
                    for ei, eps in enumerate(es):
                        c = v.cluster_at(eps, sigma, x)
                        if ei + 1 < len(es):
                            assert c <= v.cluster_at(es[ei + 1], sigma, x)
                        if si + 1 < len(ss):
                            assert c <= v.cluster_at(eps, ss[si + 1], x)

    def test_cross_level_ultrametrics_shrink(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            sp = random_space(rng, n=int(rng.integers(2, 12)))
            _, fo = pset.build(sp)
            for j in range(fo.num_levels - 1):
                m = int(fo.level_sizes[j])
                assert np.all(fo.levels[j + 1][:m, :m] <= fo.levels[j])


class TestFirstMergeScale:
    def test_line_example(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        assert v.first_merge_scale(3.0, 3) == (2.0, frozenset({2, 3}))
        assert v.first_merge_scale(1.0, 1) == (7.5, frozenset({0, 1}))

    def test_singleton_stays_alone(self):
        sp = AugmentedMetricSpace(points=[[0.0]], density=[0.0])
        _, fo = pset.build(sp)
        v = pset.fresh_view(fo)
        eps, cluster = v.first_merge_scale(0.0, 0)
        assert math.isinf(eps) and cluster == {0}

    def test_birth_grade_cluster_is_singleton(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        for x in range(4):
            assert v.cluster_at(0.0, float(x), x) == {x}


class TestRestrict:
    def test_valid_peel(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        v2 = v.restrict(3, 2)
        assert not v2.survives(3)
        assert v2.root_of == {3: 2}
        # connectivity through the removed point is preserved
        assert v2.cluster_at(2.5, 3.0, 1) == {1, 2}

    def test_invalid_pair_rejected(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        with pytest.raises(pset.QueryError):
            v.restrict(1, 0)

    def test_double_removal_rejected(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo).restrict(3, 2)
        with pytest.raises(pset.QueryError):
            v._restrict_unchecked(3, 2)

    def test_queries_on_removed_point_fail(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo).restrict(3, 2)
        with pytest.raises(pset.QueryError, match="removed"):
            v.cluster_at(2.0, 3.0, 3)

    def test_views_are_independent(self, forest4):
        _, fo = forest4
        v = pset.fresh_view(fo)
        v.restrict(3, 2)
        assert v.survives(3)

    def test_survivor_connectivity_unchanged_by_peels(self):
        rng = np.random.default_rng(31)
        from rootpeel.rooted import peel_all

        for _ in range(10):
            sp = random_space(rng, n=int(rng.integers(3, 10)))
            grid, fo = pset.build(sp)
            trace = peel_all(sp, forest=fo)
            views = [pset.fresh_view(fo)]
            for r in trace.records:
                if r.reason != "bottom":
                    views.append(views[-1]._restrict_unchecked(r.generator, r.root))
            final = views[-1]
            keep = final.survivors()
            f = sp.density
            for eps in grid.eps_values:
                for sigma in grid.sigma_values:
                    for a in keep:
                        if f[a] > sigma:
                            continue
                        expect = None
                        for v in views:
                            got = {b for b in v.cluster_at(eps, sigma, a) if b in keep}
                            if expect is None:
                                expect = got
                            assert got == expect


class TestSerialization:
    def test_merge_events_sorted_and_complete(self, forest4):
        _, fo = forest4
        top = fo.merge_events(3)
        assert top == [(2.0, 2, 3), (2.5, 1, 2), (3.0, 0, 1)]

    def test_json_round_readable(self, forest4):
        _, fo = forest4
        data = json.loads(fo.to_json())
        assert data["n"] == 4
        assert len(data["levels"]) == 4
        assert data["levels"][1]["merges"] == [[7.5, 0, 1]]

    def test_duplicates_merge_at_zero(self):
        sp = AugmentedMetricSpace(points=[[1.0], [1.0]], density=[0, 1])
        _, fo = pset.build(sp)
        assert fo.merge_events(1) == [(0.0, 0, 1)]


def test_merge_event_count_matches_component_count():
    # events per level = active points minus components at the largest scale
    rng = np.random.default_rng(55)
    for t in range(20):
        sp = random_space(rng, n=int(rng.integers(2, 12)), duplicates=(t % 3 == 0))
        grid, fo = pset.build(sp)
        top = float(grid.eps_values[-1])
        f = sp.density
        for j, sigma in enumerate(fo.sigma_levels):
            active = [i for i in range(sp.n) if f[i] <= sigma]
            comp = bfs_components(sp.distance_matrix(), active, top)
            n_comp = len({comp[i] for i in active})
            assert len(fo.merge_events(j)) == len(active) - n_comp
