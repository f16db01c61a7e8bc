"""How often does thresholding the projection give an exactly feasible 0/1 point?

Scores are trained once; the same scores are then re-projected at each
temperature of a grid and rounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constraints import compile_to_marginals
from ..layer import project
from ..sinkhorn import SolverConfig
from .tsp import TSP_CONFIG, make_tsp_instance, tsp_build_constraints, tsp_train_matrix

DEFAULT_TAUS = (0.1, 0.05, 0.01, 0.005)


@dataclass
class RoundingTable:
    taus: tuple
    feasible: np.ndarray
    total: int
    threshold: float

    @property
    def ratios(self) -> np.ndarray:
        return self.feasible / max(self.total, 1)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "total": self.total,
                "rows": [{"tau": t, "feasible": int(c), "ratio": float(r)}
                         for t, c, r in zip(self.taus, self.feasible, self.ratios)]}


def round_at(x, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(x, dtype=float) >= threshold).astype(float)


def rounding_study(problems, tau_grid=DEFAULT_TAUS, threshold: float = 0.5,
                   cfg: SolverConfig | None = None) -> RoundingTable:
    """Feasible ratio of rounded projections per temperature.

    Args:
        problems: iterable of ``(system, scores)`` pairs.
        tau_grid: temperatures to re-project at.
        threshold: entries ``>= threshold`` round to 1.
        cfg: solver settings; ``tau`` is overridden from the grid.
    """
    cfg = cfg or SolverConfig()
    problems = list(problems)
    counts = np.zeros(len(tau_grid), dtype=int)
    for system, scores in problems:
        stack = compile_to_marginals(system)
        for t, tau in enumerate(tau_grid):
            res = project(np.ravel(scores), system, cfg.replace(tau=tau), stack=stack)
            counts[t] += system.is_satisfied(round_at(res.x, threshold), atol=1e-9)
    return RoundingTable(tuple(tau_grid), counts, len(problems), threshold)


def tsp_rounding_family(count: int, n: int = 8, seed=0, iters: int = 200, lr: float = 0.1,
                        train_max_iters: int = 100, priority: bool = False, m: int = 3):
    """Trained ``(system, scores)`` pairs for seeded TSP instances."""
    seeds = np.random.SeedSequence(seed).spawn(count)
    out = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        inst = make_tsp_instance(rng, n, priority=priority, m=m)
        trained = tsp_train_matrix(inst, TSP_CONFIG, lr=lr, iters=iters, seed=rng,
                                   train_max_iters=train_max_iters)
        out.append((tsp_build_constraints(inst), trained.scores))
    return out

