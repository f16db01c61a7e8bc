import numpy as np
import pytest

from linsat.apps.rounding import round_at, rounding_study, tsp_rounding_family
from linsat.apps.tsp import TSP_CONFIG, make_tsp_instance, tour_to_matrix, tsp_build_constraints


class TestRoundAt:
    def test_threshold(self):
        np.testing.assert_array_equal(round_at([0.2, 0.5, 0.9]), [0, 1, 1])
        np.testing.assert_array_equal(round_at([0.2, 0.5, 0.9], 0.6), [0, 0, 1])


class TestStudy:
    def test_permutation_input(self):
        problems = []
        for seed in range(4):
            inst = make_tsp_instance(seed, 5)
            tour = [inst.s] + [c for c in range(5) if c not in (inst.s, inst.e)] + [inst.e]
            problems.append((tsp_build_constraints(inst), tour_to_matrix(tour, 5)))
        table = rounding_study(problems, (0.1, 0.05, 0.01), cfg=TSP_CONFIG)
        np.testing.assert_array_equal(table.ratios, 1.0)

    def test_table_dict(self):
        fam = tsp_rounding_family(2, n=5, iters=20)
        table = rounding_study(fam, (0.1, 0.01), cfg=TSP_CONFIG)
        d = table.to_dict()
        assert d["total"] == 2 and [r["tau"] for r in d["rows"]] == [0.1, 0.01]
        assert all(0 <= r["ratio"] <= 1 for r in d["rows"])

    def test_empty(self):
        assert rounding_study([], (0.1,)).total == 0
