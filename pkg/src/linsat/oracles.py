"""Brute-force references for checking the main algorithms.

Ties are broken toward the lowest index order everywhere so that results are
deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constraints import LinearConstraintSystem

MAX_TSP_CITIES = 11
MAX_ENUM_VARS = 16


def finite_diff_grad(f, y, step: float = 1e-6) -> np.ndarray:
    """Central differences ``(f(y + h e_i) - f(y - h e_i)) / 2h`` per coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    y = np.asarray(y, dtype=float)
    grad = np.empty(y.size)
    flat = y.ravel()
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += step
        minus[i] -= step
        fp, fm = float(f(plus.reshape(y.shape))), float(f(minus.reshape(y.shape)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite evaluation at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad.reshape(y.shape)


@dataclass(frozen=True)
class AssignmentProblem:
    scores: np.ndarray
    maximize: bool = True

    def __post_init__(self):
        M = np.asarray(self.scores, dtype=float)
        if M.ndim != 2:
            raise ValueError("assignment matrix must be 2-D")
        if not np.all(np.isfinite(M)):
            raise ValueError("assignment matrix must be finite")
        object.__setattr__(self, "scores", M)


@dataclass(frozen=True)
class Assignment:
    """``cols[i]`` is the column given to row ``i`` (``-1`` if unmatched)."""

    cols: np.ndarray
    value: float

    def pairs(self):
        return [(i, int(j)) for i, j in enumerate(self.cols) if j >= 0]


def _optimum(M, maximize):
    if M.size == 0:
        return 0.0
    r, c = linear_sum_assignment(M, maximize=maximize)
    return float(M[r, c].sum())


def hungarian(problem: AssignmentProblem | np.ndarray, maximize: bool = True,
              rtol: float = 1e-12) -> Assignment:
    """Optimal one-to-one assignment with the lowest-lexicographic optimum.

    scipy finds the optimal value; the rows are then fixed one by one to the
    lowest column that still admits an optimal completion.  Rectangular input
    is zero-padded to square.
    """
    if not isinstance(problem, AssignmentProblem):
        problem = AssignmentProblem(problem, maximize)
    M, maximize = problem.scores, problem.maximize
    n1, n2 = M.shape
    n = max(n1, n2)
    P = np.zeros((n, n))
    P[:n1, :n2] = M
    best = _optimum(P, maximize)
    tol = rtol * max(1.0, np.abs(P).sum())
    rows = list(range(n))
    free_cols = list(range(n))
    acc = 0.0
    chosen = np.empty(n, dtype=int)
    for i in rows:
        rest_rows = list(range(i + 1, n))
        for j in free_cols:
            cols_left = [c for c in free_cols if c != j]
            sub = P[np.ix_(rest_rows, cols_left)]
            total = acc + P[i, j] + _optimum(sub, maximize)
            if abs(total - best) <= tol:
                chosen[i] = j
                acc += P[i, j]
                free_cols.remove(j)
                break
        else:  # pragma: no cover - the optimum always admits a completion
            raise RuntimeError("no optimal completion found")
    cols = np.where(chosen[:n1] < n2, chosen[:n1], -1)
    value = float(sum(M[i, c] for i, c in enumerate(cols) if c >= 0))
    return Assignment(cols, value)


def brute_force_assignment(M, maximize: bool = True) -> Assignment:
    """Enumerate every permutation of a square matrix (first optimum in lexicographic order)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("brute force needs a square matrix")
    sign = 1.0 if maximize else -1.0
    best_val, best_perm = -np.inf, None
    tol = 1e-12 * max(1.0, np.abs(M).sum())
    for perm in itertools.permutations(range(n)):
        val = sign * M[np.arange(n), perm].sum()
        if val > best_val + tol:
            best_val, best_perm = val, perm
    return Assignment(np.array(best_perm, dtype=int), float(sign * best_val))


@lru_cache(maxsize=8)
def _middle_orders(n_mid: int) -> np.ndarray:
    if n_mid == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.permutations(range(n_mid))), dtype=np.int64)


def path_length(D, tour) -> float:
    tour = np.asarray(tour, dtype=int)
    return float(np.asarray(D)[tour[:-1], tour[1:]].sum())


def tsp_exhaustive(D, s: int, e: int, priority: int | None = None, m: int | None = None):
    """Shortest Hamiltonian path from ``s`` to ``e`` by full enumeration.

    With ``priority`` set, city ``priority`` must sit at (0-based) position
    ``<= m``, i.e. among the first ``m + 1`` cities counting ``s``.

    Returns:
        ``(tour, length)`` with ``tour`` a list of city indices.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if n > MAX_TSP_CITIES:
        raise ValueError(f"exhaustive TSP limited to n <= {MAX_TSP_CITIES}, got {n}")
    if s == e:
        raise ValueError("start and end must differ")
    mids = np.array([c for c in range(n) if c not in (s, e)], dtype=np.int64)
    orders = mids[_middle_orders(len(mids))]
    paths = np.hstack([np.full((len(orders), 1), s), orders, np.full((len(orders), 1), e)])
    if priority is not None:
        if m is None:
            raise ValueError("priority needs a step budget m")
        if priority in (s, e):
            raise ValueError("priority city must differ from start and end")
        pos = np.argmax(paths == priority, axis=1)
        paths = paths[pos <= m]
        if len(paths) == 0:
            raise ValueError("no tour meets the priority rule")
    lengths = D[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    best = int(np.argmin(lengths))
    return paths[best].tolist(), float(lengths[best])


@dataclass(frozen=True)
class DiscreteOptimum:
    x: np.ndarray | None
    score: float | None
    n_feasible: int

    @property
    def empty(self) -> bool:
        return self.x is None


def binary_points(l: int) -> np.ndarray:
    """All of ``{0,1}^l`` in lexicographic order."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=l)))


def discrete_limit_enumeration(system: LinearConstraintSystem, w, atol: float = 1e-9
                               ) -> DiscreteOptimum:
    """Best binary point satisfying ``system`` exactly, maximizing ``w · x``."""
    l = system.l
    if l > MAX_ENUM_VARS:
        raise ValueError(f"enumeration limited to l <= {MAX_ENUM_VARS}, got {l}")
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != l:
        raise ValueError(f"w has length {w.shape[0]}, expected {l}")
    X = binary_points(l)
    ok = np.ones(len(X), dtype=bool)
    if system.A.shape[0]:
        ok &= np.all(X @ system.A.T <= system.b + atol, axis=1)
    if system.C.shape[0]:
        ok &= np.all(X @ system.C.T >= system.d - atol, axis=1)
    if system.E.shape[0]:
        ok &= np.all(np.abs(X @ system.E.T - system.f) <= atol, axis=1)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return DiscreteOptimum(None, None, 0)
    scores = X[idx] @ w
    best = idx[int(np.argmax(scores))]
    return DiscreteOptimum(X[best].copy(), float(X[best] @ w), int(idx.size))


@dataclass(frozen=True)
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    iterations: int

    # Central differences with a 1e-6 step cannot resolve gradients much below
    # this in float64, so smaller ones are compared on an absolute basis.
    resolution: float = 1e-6

    @property
    def max_rel_error(self) -> float:
        """``max|analytic - numeric| / max(max|numeric|, max|analytic|, resolution)``."""
        scale = max(float(np.abs(self.numeric).max()), float(np.abs(self.analytic).max()),
                    self.resolution)
        return float(np.abs(self.analytic - self.numeric).max() / scale)


def linsat_gradient_check(system: LinearConstraintSystem, y, w=None, cfg=None,
                          step: float = 1e-6, beta: float = 0.0) -> GradientCheck:
    """Compare ``d(w · x)/dy`` from the tape with central differences.

    The finite-difference evaluations run exactly as many Sinkhorn cycles as
    the taped forward pass, so both sides differentiate the same map.
    """
    from .constraints import compile_to_marginals
    from .layer import project, project_backward
    from .sinkhorn import SolverConfig

    cfg = cfg or SolverConfig()
    stack = compile_to_marginals(system)
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones(system.l) if w is None else np.asarray(w, dtype=float).ravel()
    res = project(y, system, cfg.replace(record_tape=True), beta=beta, stack=stack)
    analytic = project_backward(res, w)
    fixed = cfg.replace(record_tape=False, fixed_iters=True, max_iters=res.report.iterations)
    numeric = finite_diff_grad(lambda z: w @ project(z, system, fixed, beta=beta, stack=stack).x,
                               y, step)
    return GradientCheck(analytic, numeric, res.report.iterations)
