"""Acceptance criteria 1-12.

Each test prints one ``[PASS]``/``[FAIL]`` line (also collected into the
terminal summary) and then asserts the same condition, so a red criterion
shows both the verdict and the measured numbers.
"""

import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from linsat.apps.matching import gm_solve, make_matching_instance
from linsat.apps.portfolio import make_portfolio_instance, pf_optimize
from linsat.apps.rounding import rounding_study, tsp_rounding_family
from linsat.apps.tsp import (TSP_CONFIG, beam_search_decode, is_feasible_tour, make_tsp_instance,
                             tsp_train_matrix)
from linsat.cli import main
from linsat.constraints import LinearConstraintSystem, compile_to_marginals
from linsat.instances import infeasible_example, random_feasible_system
from linsat.layer import project
from linsat.oracles import linsat_gradient_check, tsp_exhaustive
from linsat.sinkhorn import MarginalSets, SolverConfig, classic_sinkhorn, multi_set_sinkhorn
from linsat.theory import check_lemma1, convergence_curve, make_feasible_instance


def verdict(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def theory_audits():
    """Criteria 4-6 share one batch of 100 constructed-Z instances."""
    t0 = time.perf_counter()
    rows = []
    for s in range(100):
        rng = np.random.default_rng([4, s])
        m, n, k = int(rng.integers(2, 5)), int(rng.integers(3, 9)), int(rng.integers(1, 5))
        inst = make_feasible_instance(rng, m, n, k)
        audit = convergence_curve(inst, SolverConfig(max_iters=500)).audit()
        audit["k"] = k
        audit["bound"] = check_lemma1(inst)
        rows.append(audit)
    return rows, time.perf_counter() - t0


class TestAcceptance:
    def test_criterion_01_k1_equivalence(self):
        t0 = time.perf_counter()
        worst = 0.0
        for s in range(100):
            rng = np.random.default_rng([1, s])
            m, n = (int(v) for v in rng.integers(2, 21, size=2))
            Z = rng.uniform(0.05, 1.0, size=(m, n))
            Z /= Z.sum(0)
            u = rng.uniform(0.1, 1.0, size=n)
            u[rng.uniform(size=n) < 0.2] = 0.0
            S = rng.uniform(0.01, 1.0, size=(m, n))
            a, _ = multi_set_sinkhorn(S, MarginalSets(u[None], (Z @ u)[None]))
            b, _ = classic_sinkhorn(S, u, Z @ u)
            worst = max(worst, float(np.abs(a.gamma - b.gamma).max()))
        dt = time.perf_counter() - t0
        ok = worst <= 1e-12 and dt < 10
        verdict(1, ok, f"k=1 multi-set vs classic max-abs {worst:.1e} (<= 1e-12), {dt:.1f} s")
        assert ok

    def test_criterion_02_feasibility(self):
        cfg = SolverConfig(max_iters=20_000)
        t0 = time.perf_counter()
        converged, worst = 0, 0.0
        for s in range(200):
            rng = np.random.default_rng([2, s])
            system, _ = random_feasible_system(rng)
            res = project(rng.normal(size=system.l), system, cfg)
            converged += res.converged
            if res.converged:
                worst = max(worst, system.violation(res.x))
        dt = time.perf_counter() - t0
        # Real-valued coefficients are reported, not gated (see the decisions ledger).
        real_conv = 0
        for s in range(200):
            rng = np.random.default_rng([2, s])
            system, _ = random_feasible_system(rng, coefficients="real")
            real_conv += project(rng.normal(size=system.l), system, cfg).converged
        print(f"    diagnostic: real-coefficient systems converged {real_conv}/200")
        ok = converged == 200 and worst <= 1e-4 and dt < 60
        verdict(2, ok, f"{converged}/200 converged, worst violation {worst:.1e} (<= 1e-4), "
                       f"{dt:.1f} s")
        assert ok

    def test_criterion_03_gradients(self):
        t0 = time.perf_counter()
        errs = []
        for s in range(50):
            rng = np.random.default_rng([3, s])
            system, _ = random_feasible_system(rng, max_l=12, max_k=4)
            tau = float(rng.uniform(0.05, 1.0))
            y, w = rng.normal(size=system.l), rng.normal(size=system.l)
            errs.append(linsat_gradient_check(system, y, w, SolverConfig(tau=tau)).max_rel_error)
        dt = time.perf_counter() - t0
        ok = max(errs) <= 1e-4 and dt < 60
        verdict(3, ok, f"max rel. error {max(errs):.1e} (median {np.median(errs):.1e}) "
                       f"<= 1e-4 over 50 instances, {dt:.1f} s")
        assert ok

    def test_criterion_04_step_identities(self, theory_audits):
        rows, dt = theory_audits
        row_res = max(r["max_row_identity_residual"] for r in rows)
        col_res = max(r["max_col_identity_residual"] for r in rows)
        same = max(r["max_col_identity_residual_same_set"] for r in rows)
        gap = max(r["telescoped_gap"] for r in rows)
        gap1 = max(r["telescoped_gap"] for r in rows if r["k"] == 1)
        ok = row_res <= 1e-8 and col_res <= 1e-8 and gap <= 1e-6 and dt < 60
        verdict(4, ok, f"row residual {row_res:.1e}, column residual {col_res:.1e} "
                       f"(same-set form {same:.1e}), telescoping gap {gap:.1e} "
                       f"(k=1 only: {gap1:.1e}), {dt:.1f} s")
        assert ok

    def test_criterion_05_budget(self, theory_audits):
        rows, _ = theory_audits
        potential_bound_ok = all(r["bound"].ok for r in rows)
        within = sum(r["budget_ok"] for r in rows)
        within1 = sum(r["budget_ok"] for r in rows if r["k"] == 1)
        n1 = sum(r["k"] == 1 for r in rows)
        ok = potential_bound_ok and within == len(rows)
        verdict(5, ok, f"initial potential bound holds on {sum(r['bound'].ok for r in rows)}"
                       f"/100; cumulative step-KL within budget on {within}/100 "
                       f"(k=1: {within1}/{n1})")
        assert ok

    def test_criterion_06_pinsker(self, theory_audits):
        rows, _ = theory_audits
        slack = min(r["min_pinsker_slack"] for r in rows)
        steps = sum(r["steps"] for r in rows)
        ok = slack >= -1e-9
        verdict(6, ok, f"min KL - L1^2/(2h^2) = {slack:.1e} over {steps} steps (>= -1e-9)")
        assert ok

    def test_criterion_07_ranking(self):
        bad = 0
        for s in range(1000):
            rng = np.random.default_rng([7, s])
            l = int(rng.integers(2, 21))
            y = rng.normal(size=l)
            system = LinearConstraintSystem.from_rows(l, equality=[(np.ones(l), 1.0)])
            x = project(y, system).x
            bad += not np.array_equal(np.argsort(x, kind="stable"), np.argsort(y, kind="stable"))
        ok = bad == 0
        verdict(7, ok, f"{bad}/1000 ranking violations")
        assert ok

    @pytest.mark.slow
    def test_criterion_08_rounding_trend(self):
        t0 = time.perf_counter()
        family = tsp_rounding_family(50, n=8, seed=0)
        taus = (0.1, 0.05, 0.01, 0.005)
        ratios = rounding_study(family, taus, cfg=TSP_CONFIG).ratios
        dt = time.perf_counter() - t0
        drops = np.diff(ratios[:3])
        inversions = drops[drops < 0]
        trend = len(inversions) == 0 or (len(inversions) == 1 and inversions[0] >= -0.02)
        ok = trend and dt < 300
        table = ", ".join(f"{t:g}: {r:.2f}" for t, r in zip(taus, ratios))
        verdict(8, ok, f"feasible ratio by tau {{{table}}}, {dt:.0f} s")
        assert ok

    @pytest.mark.slow
    def test_criterion_09_tsp(self):
        t0 = time.perf_counter()
        stats = {}
        for priority in (False, True):
            lengths, optima, feasible = [], [], 0
            for s in range(50):
                inst = make_tsp_instance(np.random.default_rng([9, s]), 10, priority=priority)
                trained = tsp_train_matrix(inst, TSP_CONFIG, lr=0.1, iters=200, seed=s,
                                           train_max_iters=100)
                tour, length, _ = beam_search_decode(trained.X, inst, width=128)
                feasible += is_feasible_tour(tour, inst)
                lengths.append(length)
                optima.append(tsp_exhaustive(inst.D, inst.s, inst.e, inst.p, inst.m)[1])
            stats[priority] = (feasible, np.mean(lengths), np.mean(optima),
                               np.mean(np.divide(lengths, optima)))
        dt = time.perf_counter() - t0
        (f_se, l_se, o_se, r_se), (f_pri, l_pri, o_pri, r_pri) = stats[False], stats[True]
        ok = (f_se == 50 and f_pri == 50 and l_se <= 1.6 * o_se and l_pri <= 1.6 * o_pri
              and l_pri >= l_se and dt < 900)
        verdict(9, ok, f"feasible SE {f_se}/50 PRI {f_pri}/50; mean length / optimum "
                       f"SE {l_se / o_se:.3f} PRI {l_pri / o_pri:.3f} (<= 1.6); "
                       f"PRI {l_pri:.3f} >= SE {l_se:.3f}; {dt:.0f} s")
        assert ok

    def test_criterion_10_matching(self):
        t0 = time.perf_counter()
        clean = [gm_solve(make_matching_instance(np.random.default_rng([10, s]), 12, 12, 8))
                 for s in range(10)]
        noisy = [gm_solve(make_matching_instance(np.random.default_rng([11, s]), 12, 12, 8, 0.1))
                 for s in range(30)]
        dt = time.perf_counter() - t0
        counts_ok = all(len(r.pairs) == 8 for r in clean + noisy)
        clean_f1 = min(r.f1 for r in clean)
        noisy_f1 = float(np.mean([r.f1 for r in noisy]))
        ok = clean_f1 == 1.0 and noisy_f1 >= 0.9 and counts_ok and dt < 120
        verdict(10, ok, f"noise-free min F1 {clean_f1:.3f}; sigma=0.1 mean F1 {noisy_f1:.3f} "
                        f"(>= 0.9); match count always 8: {counts_ok}; {dt:.1f} s")
        assert ok

    def test_criterion_11_portfolio(self):
        t0 = time.perf_counter()
        wins, worst = 0, 0.0
        for s in range(20):
            inst = make_portfolio_instance(np.random.default_rng([12, s]))
            res = pf_optimize(inst, seed=s)
            wins += res.sharpe_in > res.uniform_sharpe_in
            worst = max(worst, res.max_violation)
        dt = time.perf_counter() - t0
        ok = wins >= 18 and worst <= 1e-4 and dt < 120
        verdict(11, ok, f"beats uniform in-sample Sharpe on {wins}/20 (>= 18); worst "
                        f"constraint violation {worst:.1e} (<= 1e-4); {dt:.1f} s")
        assert ok

    def test_criterion_12_infeasible(self, tmp_path, capsys):
        system = infeasible_example()
        stack = compile_to_marginals(system)
        (tmp_path / "inf.json").write_text(json.dumps(system.to_dict()))
        api_flagged = cli_flagged = 0
        runs = 20
        for s in range(runs):
            y = np.random.default_rng([13, s]).normal(size=4)
            api_flagged += not project(y, system, stack=stack).converged
            (tmp_path / "y.csv").write_text(",".join(repr(float(v)) for v in y) + "\n")
            code = main(["project", "--constraints", str(tmp_path / "inf.json"),
                         "--y", str(tmp_path / "y.csv"), "--out", str(tmp_path / f"r{s}")])
            report = json.loads((tmp_path / f"r{s}" / "report.json").read_text())
            cli_flagged += code == 2 and report["converged"] is False
        capsys.readouterr()
        ok = api_flagged == runs and cli_flagged == runs
        verdict(12, ok, f"converged=false {api_flagged}/{runs}; CLI exit 2 {cli_flagged}/{runs}")
        assert ok
