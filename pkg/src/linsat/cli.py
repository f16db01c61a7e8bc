"""Command-line entry point.

Exit status: 0 on success, 2 when a solve ran cleanly but did not converge,
1 on malformed input.  Every command writes its artifacts and a
``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as lio
from .constraints import InvalidSystemError, LinearConstraintSystem
from .layer import project
from .sinkhorn import MarginalSets, SolverConfig, multi_set_sinkhorn

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _config(args, base: SolverConfig | None = None) -> SolverConfig:
    base = base or SolverConfig()
    changes = {}
    if args.tau is not None:
        changes["tau"] = args.tau
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.max_iters is not None:
        changes["max_iters"] = args.max_iters
    return base.replace(**changes)


def _cfg_echo(cfg: SolverConfig, **extra) -> dict:
    out = {"tau": cfg.tau, "tol": cfg.tol, "max_iters": cfg.max_iters}
    out.update(extra)
    return out


class _Run:
    """Collects outputs and writes the manifest last."""

    def __init__(self, args, command: str):
        self.out = Path(args.out)
        self.manifest = lio.RunManifest(command, args.seed, {})

    def json(self, name, data):
        path = lio.write_json(self.out / name, data)
        self.manifest.outputs.append(str(path))
        return path

    def csv(self, name, M):
        path = lio.write_csv_matrix(self.out / name, M)
        self.manifest.outputs.append(str(path))
        return path

    def text(self, name, text):
        path = lio.atomic_write_text(self.out / name, text)
        self.manifest.outputs.append(str(path))
        return path

    def finish(self):
        lio.write_json(self.out / "manifest.json", self.manifest.to_dict())


def cmd_project(args) -> int:
    run = _Run(args, "project")
    cfg = _config(args)
    system = LinearConstraintSystem.from_dict(lio.read_json(args.constraints))
    y = lio.read_csv_vector(args.y)
    run.manifest.add_input("constraints", args.constraints)
    run.manifest.add_input("y", args.y)
    run.manifest.config = _cfg_echo(cfg, beta=args.beta)
    res = project(y, system, cfg, beta=args.beta)
    run.csv("x.csv", res.x[None, :])
    report = {"x": res.x, "violation": system.violation(res.x), "eps_lin": res.eps_lin,
              **res.report.to_dict()}
    run.json("report.json", report)
    run.finish()
    print(f"converged={res.converged} iterations={res.report.iterations} "
          f"violation={report['violation']:.3e}")
    print("x = " + np.array2string(res.x, precision=6))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_sinkhorn(args) -> int:
    run = _Run(args, "sinkhorn")
    cfg = _config(args)
    S = lio.read_csv_matrix(args.scores)
    data = lio.read_json(args.marginals)
    for key in ("U", "V"):
        if key not in data:
            raise lio.InputError(f"{args.marginals}: missing field '{key}'")
    stack = MarginalSets(np.asarray(data["U"], dtype=float), np.asarray(data["V"], dtype=float))
    if stack.U.shape[1] != S.shape[1] or stack.V.shape[1] != S.shape[0]:
        raise lio.InputError(f"{args.marginals}: U must be k x {S.shape[1]} and V k x {S.shape[0]}")
    run.manifest.add_input("scores", args.scores)
    run.manifest.add_input("marginals", args.marginals)
    run.manifest.config = _cfg_echo(cfg)
    plan, report = multi_set_sinkhorn(S, stack, cfg)
    run.csv("gamma.csv", plan.gamma)
    run.json("report.json", report.to_dict())
    run.finish()
    print(f"converged={report.converged} iterations={report.iterations} "
          f"max_error={report.max_error:.3e}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_grad_check(args) -> int:
    from .instances import random_feasible_system
    from .oracles import linsat_gradient_check

    run = _Run(args, "grad-check")
    cfg = _config(args)
    rng = np.random.default_rng(args.seed)
    system, _ = random_feasible_system(rng, l=args.l, k=args.k, max_l=12, max_k=4)
    y = rng.normal(size=system.l)
    w = rng.normal(size=system.l)
    run.manifest.config = _cfg_echo(cfg, l=system.l, k=system.n_constraints, step=args.step)
    check = linsat_gradient_check(system, y, w, cfg, step=args.step)
    out = {"max_rel_error": check.max_rel_error, "iterations": check.iterations,
           "analytic": check.analytic, "numeric": check.numeric, "l": system.l,
           "k": system.n_constraints, "ok": check.max_rel_error <= 1e-4}
    run.json("grad_check.json", out)
    run.finish()
    print(f"max relative error = {check.max_rel_error:.3e}")
    return EXIT_OK


def cmd_theory(args) -> int:
    from .theory import check_lemma1, convergence_curve, make_feasible_instance

    run = _Run(args, "theory")
    cfg = _config(args)
    inst = make_feasible_instance(args.seed, args.m, args.n, args.k)
    run.manifest.config = _cfg_echo(cfg, m=args.m, n=args.n, k=args.k)
    curve = convergence_curve(inst, cfg)
    lines = ["step,eta,phase,l1,kl,D"]
    for r in curve.trajectory.rows():
        lines.append(f"{r['step']},{r['eta']},{r['phase']},{r['l1']!r},{r['kl']!r},{r['D']!r}")
    run.text("trajectory.csv", "\n".join(lines) + "\n")
    audit = curve.audit()
    bound = check_lemma1(inst)
    audit["potential_bound_values"] = bound.values
    audit["potential_bound_ok"] = bound.ok
    run.json("audit.json", audit)
    run.finish()
    print(f"steps={audit['steps']} converged={audit['converged']} "
          f"budget_ok={audit['budget_ok']} potential_bound_ok={bound.ok}")
    return EXIT_OK if curve.converged else EXIT_NOT_CONVERGED


def cmd_tsp(args) -> int:
    from .apps.tsp import (HEURISTICS, TSP_CONFIG, TspInstance, beam_search_decode,
                           heuristic_tour, is_feasible_tour, make_tsp_instance,
                           tsp_train_matrix)
    from .oracles import MAX_TSP_CITIES, tsp_exhaustive

    run = _Run(args, "tsp")
    cfg = _config(args, TSP_CONFIG)
    if args.instance:
        try:
            inst = TspInstance.from_dict(lio.read_json(args.instance))
        except (TypeError, ValueError) as exc:
            raise lio.InputError(f"{args.instance}: {exc}") from None
        run.manifest.add_input("instance", args.instance)
    else:
        inst = make_tsp_instance(np.random.default_rng(args.seed), args.n,
                                 priority=args.priority, m=args.m)
    run.manifest.config = _cfg_echo(cfg, lr=args.lr, iters=args.iters, width=args.width)
    trained = tsp_train_matrix(inst, cfg, lr=args.lr, iters=args.iters, seed=args.seed,
                               train_max_iters=args.train_max_iters)
    tour, length, score = beam_search_decode(trained.X, inst, args.width)
    out = {"instance": inst.to_dict(), "tour": tour, "length": length, "beam_score": score,
           "feasible": is_feasible_tour(tour, inst), "converged": trained.converged,
           "relaxed_violation": trained.violation, "objective_history": trained.history,
           "heuristics": {m: heuristic_tour(inst, m, args.seed)[1] for m in HEURISTICS}}
    if inst.n <= MAX_TSP_CITIES:
        out["optimum"] = tsp_exhaustive(inst.D, inst.s, inst.e, inst.p, inst.m)[1]
    run.csv("X.csv", trained.X)
    run.json("solution.json", out)
    run.finish()
    print(f"tour={tour} length={length:.4f} feasible={out['feasible']}")
    return EXIT_OK if trained.converged else EXIT_NOT_CONVERGED


def cmd_match(args) -> int:
    from .apps.matching import MatchingInstance, gm_solve, make_matching_instance

    run = _Run(args, "match")
    cfg = _config(args)
    if args.instance:
        try:
            inst = MatchingInstance.from_dict(lio.read_json(args.instance))
        except (TypeError, ValueError) as exc:
            raise lio.InputError(f"{args.instance}: {exc}") from None
        run.manifest.add_input("instance", args.instance)
    else:
        inst = make_matching_instance(np.random.default_rng(args.seed), args.n1, args.n2,
                                      args.phi, args.sigma)
    run.manifest.config = _cfg_echo(cfg, phi=inst.phi)
    res = gm_solve(inst, cfg)
    out = {"pairs": res.pairs, "f1": None if np.isnan(res.f1) else res.f1,
           "n_pairs": len(res.pairs), "converged": res.converged, "violation": res.violation}
    run.csv("M_hat.csv", res.M_hat)
    run.json("solution.json", out)
    run.finish()
    print(f"pairs={len(res.pairs)} f1={out['f1']}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_portfolio(args) -> int:
    from .apps.portfolio import (PortfolioInstance, make_portfolio_instance, pf_optimize,
                                 read_prices_csv)

    run = _Run(args, "portfolio")
    cfg = _config(args)
    if args.prices:
        try:
            names, prices = read_prices_csv(Path(args.prices).read_text())
        except OSError as exc:
            raise lio.InputError(f"{args.prices}: {exc.strerror}") from None
        except ValueError as exc:
            raise lio.InputError(f"{args.prices}: {exc}") from None
        if not args.preferred:
            raise lio.InputError("--preferred is required with --prices")
        try:
            inst = PortfolioInstance(prices, tuple(args.preferred), args.p_pref, args.rf, names)
        except ValueError as exc:
            raise lio.InputError(str(exc)) from None
        run.manifest.add_input("prices", args.prices)
    else:
        inst = make_portfolio_instance(np.random.default_rng(args.seed), n=args.n_assets,
                                       p_pref=args.p_pref)
    run.manifest.config = _cfg_echo(cfg, lr=args.lr, iters=args.iters, p_pref=inst.p_pref,
                                    rf=inst.rf)
    res = pf_optimize(inst, cfg, lr=args.lr, iters=args.iters, seed=args.seed)
    out = {"x": res.x, "preferred": list(inst.preferred), "sharpe_in": res.sharpe_in,
           "sharpe_out": res.sharpe_out, "uniform_sharpe_in": res.uniform_sharpe_in,
           "uniform_sharpe_out": res.uniform_sharpe_out, "max_violation": res.max_violation,
           "converged": res.converged, "sharpe_history": res.history}
    run.json("solution.json", out)
    run.finish()
    print(f"sharpe in-sample={res.sharpe_in:.3f} (uniform {res.uniform_sharpe_in:.3f}) "
          f"held-out={res.sharpe_out:.3f}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_round_study(args) -> int:
    from .apps.rounding import rounding_study, tsp_rounding_family
    from .apps.tsp import TSP_CONFIG

    run = _Run(args, "round-study")
    cfg = _config(args, TSP_CONFIG)
    run.manifest.config = _cfg_echo(cfg, count=args.count, n=args.n, taus=args.taus)
    family = tsp_rounding_family(args.count, n=args.n, seed=args.seed)
    table = rounding_study(family, tuple(args.taus), cfg=cfg)
    run.json("rounding.json", table.to_dict())
    run.finish()
    for t, r in zip(table.taus, table.ratios):
        print(f"tau={t:g} feasible ratio={r:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tau", type=float, default=None, help="entropic temperature")
    common.add_argument("--tol", type=float, default=None, help="per-set L1 stopping tolerance")
    common.add_argument("--max-iters", type=int, default=None, help="cap on Sinkhorn cycles")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")

    parser = argparse.ArgumentParser(prog="linsat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", parents=[common], help="project y onto a constraint system")
    p.add_argument("--constraints", required=True, help="constraint system JSON")
    p.add_argument("--y", required=True, help="scores CSV (one row or column)")
    p.add_argument("--beta", type=float, default=0.0, help="dummy fill value")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("sinkhorn", parents=[common], help="multi-set Sinkhorn on S")
    p.add_argument("--scores", required=True, help="positive score matrix CSV")
    p.add_argument("--marginals", required=True, help='JSON {"U": [[...]], "V": [[...]]}')
    p.set_defaults(func=cmd_sinkhorn)

    p = sub.add_parser("grad-check", parents=[common], help="tape gradient vs finite differences")
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--step", type=float, default=1e-6)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("theory", parents=[common], help="convergence probes on a random instance")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--k", type=int, default=1)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("tsp", parents=[common], help="train, decode and score one TSP instance")
    p.add_argument("--instance", help="instance JSON (coords, s, e, optional p, m)")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--priority", action="store_true")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--train-max-iters", type=int, default=100)
    p.add_argument("--width", type=int, default=128)
    p.set_defaults(func=cmd_tsp)

    p = sub.add_parser("match", parents=[common], help="partial matching with top-phi pairs")
    p.add_argument("--instance", help="instance JSON (M, phi, optional truth)")
    p.add_argument("--n1", type=int, default=12)
    p.add_argument("--n2", type=int, default=12)
    p.add_argument("--phi", type=int, default=8)
    p.add_argument("--sigma", type=float, default=0.1)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("portfolio", parents=[common], help="Sharpe ascent with a preference floor")
    p.add_argument("--prices", help="CSV: date column then one column per asset")
    p.add_argument("--preferred", type=int, nargs="*", default=None)
    p.add_argument("--p-pref", type=float, default=0.5)
    p.add_argument("--rf", type=float, default=0.03)
    p.add_argument("--n-assets", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--iters", type=int, default=200)
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("round-study", parents=[common], help="feasible ratio of rounded TSP outputs")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--taus", type=float, nargs="+", default=[0.1, 0.05, 0.01, 0.005])
    p.set_defaults(func=cmd_round_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (lio.InputError, InvalidSystemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
