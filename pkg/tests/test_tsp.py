import numpy as np
import pytest

from linsat.apps.tsp import (
    HEURISTICS,
    TSP_CONFIG,
    TspInstance,
    beam_search_decode,
    heuristic_tour,
    is_feasible_tour,
    make_tsp_instance,
    tour_to_matrix,
    tsp_build_constraints,
    tsp_objective,
    tsp_objective_grad,
    tsp_train_matrix,
)
from linsat.layer import project
from linsat.oracles import finite_diff_grad, path_length, tsp_exhaustive

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)


class TestInstance:
    def test_json_round_trip(self):
        inst = make_tsp_instance(0, 6, priority=True)
        again = TspInstance.from_json(__import__("json").dumps(inst.to_dict()))
        np.testing.assert_array_equal(again.coords, inst.coords)
        assert (again.s, again.e, again.p, again.m) == (inst.s, inst.e, inst.p, inst.m)

    @pytest.mark.parametrize("kwargs, match", [
        ({"s": 0, "e": 0}, "differ"),
        ({"s": 0, "e": 9}, "out of range"),
        ({"s": 0, "e": 1, "p": 1, "m": 2}, "priority"),
        ({"s": 0, "e": 1, "p": 2}, "budget"),
    ])
    def test_invalid(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            TspInstance(SQUARE, **kwargs)

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing"):
            TspInstance.from_dict({"coords": SQUARE.tolist(), "s": 0})

    def test_se_and_pri_share_cities(self):
        a = make_tsp_instance(3, 8)
        b = make_tsp_instance(3, 8, priority=True)
        np.testing.assert_array_equal(a.coords, b.coords)
        assert (a.s, a.e) == (b.s, b.e)


class TestConstraints:
    def test_counts(self):
        se = tsp_build_constraints(TspInstance(SQUARE[:3], 0, 2))
        assert se.l == 9 and se.E.shape[0] == 8 and se.A.shape[0] == se.C.shape[0] == 0
        pri = tsp_build_constraints(TspInstance(SQUARE, 0, 2, 1, 1))
        assert pri.E.shape[0] == 2 * 4 + 2 + 1

    def test_tours_are_feasible_points(self):
        inst = TspInstance(SQUARE, 0, 2, 3, 1)
        sys_ = tsp_build_constraints(inst)
        assert sys_.is_satisfied(tour_to_matrix([0, 3, 1, 2], 4).ravel())
        assert not sys_.is_satisfied(tour_to_matrix([0, 1, 3, 2], 4).ravel())

    def test_projection_sums(self):
        inst = make_tsp_instance(1, 5)
        y = np.random.default_rng(1).normal(size=25)
        r = project(y, tsp_build_constraints(inst), TSP_CONFIG)
        assert r.converged
        X = r.x.reshape(5, 5)
        np.testing.assert_allclose(X.sum(0), 1.0, atol=1e-4)
        np.testing.assert_allclose(X.sum(1), 1.0, atol=1e-4)


class TestObjective:
    def test_permutation(self):
        inst = make_tsp_instance(2, 6)
        tour = [inst.s] + [c for c in range(6) if c not in (inst.s, inst.e)] + [inst.e]
        assert tsp_objective(tour_to_matrix(tour, 6), inst.D) == pytest.approx(
            path_length(inst.D, tour))

    def test_uniform(self):
        D = make_tsp_instance(4, 7).D
        X = np.full((7, 7), 1 / 7)
        assert tsp_objective(X, D) == pytest.approx(D.sum() / 49 * 6)

    def test_linear_in_distance(self):
        D = make_tsp_instance(5, 5).D
        X = np.random.default_rng(5).uniform(size=(5, 5))
        assert tsp_objective(X, 3 * D) == pytest.approx(3 * tsp_objective(X, D))

    def test_gradient(self):
        D = make_tsp_instance(6, 4).D
        X = np.random.default_rng(6).uniform(size=(4, 4))
        fd = finite_diff_grad(lambda z: tsp_objective(z.reshape(4, 4), D), X.ravel())
        np.testing.assert_allclose(tsp_objective_grad(X, D).ravel(), fd, atol=1e-8)


class TestTraining:
    def test_smoothed_objective_non_increasing(self):
        res = tsp_train_matrix(make_tsp_instance(0, 6), lr=0.1, iters=300, train_max_iters=100)
        h = np.convolve(res.history, np.ones(10) / 10, mode="valid")
        assert np.all(np.diff(h) <= 1e-9)
        assert h[-1] < h[0]
        assert res.converged and res.violation <= 1e-4

    def test_two_cities(self):
        res = tsp_train_matrix(TspInstance(SQUARE[:2], 1, 0))
        assert res.history == []
        np.testing.assert_allclose(res.X, [[0, 1], [1, 0]], atol=1e-4)

    def test_unknown_optimizer(self):
        with pytest.raises(ValueError, match="optimizer"):
            tsp_train_matrix(make_tsp_instance(0, 4), optimizer="lbfgs")


class TestBeamSearch:
    def test_exact_permutation(self):
        inst = TspInstance(SQUARE, 0, 2)
        tour, length, _ = beam_search_decode(tour_to_matrix([0, 3, 1, 2], 4), inst)
        assert tour == [0, 3, 1, 2]
        assert length == pytest.approx(path_length(inst.D, tour))

    @pytest.mark.parametrize("priority", [False, True])
    def test_feasible_on_noise(self, priority):
        rng = np.random.default_rng(9)
        for _ in range(20):
            inst = make_tsp_instance(rng, 10, priority=priority)
            tour, _, _ = beam_search_decode(rng.uniform(size=(10, 10)), inst, width=8)
            assert is_feasible_tour(tour, inst)
            if priority:
                assert tour.index(inst.p) <= inst.m

    def test_shape_check(self):
        with pytest.raises(ValueError):
            beam_search_decode(np.ones((3, 3)), TspInstance(SQUARE, 0, 2))


class TestHeuristics:
    def test_nearest_neighbor_hand_trace(self):
        # from (0,0): nearest of the free corners (1,0),(1,1) is (1,0), then (1,1), end (0,1)
        tour, length = heuristic_tour(TspInstance(SQUARE, 0, 3), "nearest_neighbor")
        assert tour == [0, 1, 2, 3] and length == pytest.approx(3.0)

    def test_nearest_neighbor_priority(self):
        inst = TspInstance(SQUARE, 0, 1, 2, 1)
        tour, _ = heuristic_tour(inst, "nearest_neighbor")
        assert tour[1] == 2

    @pytest.mark.parametrize("mode", HEURISTICS)
    @pytest.mark.parametrize("priority", [False, True])
    def test_feasible_and_not_better_than_optimum(self, mode, priority):
        rng = np.random.default_rng(12)
        for seed in range(10):
            inst = make_tsp_instance(rng, 8, priority=priority)
            tour, length = heuristic_tour(inst, mode, seed)
            assert is_feasible_tour(tour, inst)
            opt = tsp_exhaustive(inst.D, inst.s, inst.e, inst.p, inst.m)[1]
            assert length >= opt - 1e-12

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown heuristic"):
            heuristic_tour(TspInstance(SQUARE, 0, 2), "two_opt")
