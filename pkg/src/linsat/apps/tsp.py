"""TSP with a fixed start/end (SE) and optionally a priority city (PRI).

A tour is an ``n x n`` permutation matrix ``X`` with ``X[i, k] = 1`` when city
``i`` is the ``k``-th visited (0-based).  The flat variable index is
``i * n + k``.  The relaxed matrix comes from projecting a trainable score
table through the layer; beam search then extracts a discrete tour.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..constraints import LinearConstraintSystem, compile_to_marginals
from ..layer import project, project_backward
from ..oracles import path_length
from ..sinkhorn import SolverConfig
from .optim import Adam

# Pinned entries force exact zeros, so Sinkhorn approaches the constraint set
# at a sublinear rate; the layer tolerance 1e-4 is met after ~2e4 cycles.
TSP_CONFIG = SolverConfig(tau=0.1, tol=1e-4, max_iters=100_000)

HEURISTICS = ("nearest_neighbor", "nearest_insertion", "farthest_insertion", "random_insertion")


@dataclass(frozen=True)
class TspInstance:
    coords: np.ndarray
    s: int
    e: int
    p: int | None = None
    m: int | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must be an n x 2 array")
        n = coords.shape[0]
        object.__setattr__(self, "coords", coords)
        for name in ("s", "e"):
            if not 0 <= getattr(self, name) < n:
                raise ValueError(f"{name} out of range")
        if self.s == self.e:
            raise ValueError("start and end cities must differ")
        if self.p is not None:
            if self.p in (self.s, self.e) or not 0 <= self.p < n:
                raise ValueError("priority city must be a valid city other than s and e")
            if self.m is None or self.m < 1:
                raise ValueError("priority needs a step budget m >= 1")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def D(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))

    @property
    def priority(self) -> bool:
        return self.p is not None

    def to_dict(self) -> dict:
        out = {"coords": self.coords.tolist(), "s": self.s, "e": self.e}
        if self.p is not None:
            out.update(p=self.p, m=self.m)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TspInstance":
        missing = [k for k in ("coords", "s", "e") if k not in data]
        if missing:
            raise ValueError(f"TSP instance missing fields: {missing}")
        return cls(np.asarray(data["coords"], dtype=float), int(data["s"]), int(data["e"]),
                   None if data.get("p") is None else int(data["p"]),
                   None if data.get("m") is None else int(data["m"]))

    @classmethod
    def from_json(cls, text: str) -> "TspInstance":
        return cls.from_dict(json.loads(text))


def make_tsp_instance(rng, n: int, priority: bool = False, m: int = 3) -> TspInstance:
    """Uniform cities in the unit square with random distinct s, e (and p)."""
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(rng)
    coords = rng.uniform(size=(n, 2))
    # Three picks even for SE so both variants share cities, s and e.
    picks = rng.choice(n, size=min(3, n), replace=False)
    if priority:
        return TspInstance(coords, int(picks[0]), int(picks[1]), int(picks[2]), m)
    return TspInstance(coords, int(picks[0]), int(picks[1]))


def tsp_build_constraints(inst: TspInstance) -> LinearConstraintSystem:
    n = inst.n
    l = n * n
    rows = []
    for k in range(n):  # one city per position
        e = np.zeros(l)
        e[k::n] = 1.0
        rows.append((e, 1.0))
    for i in range(n):  # one position per city
        e = np.zeros(l)
        e[i * n:(i + 1) * n] = 1.0
        rows.append((e, 1.0))
    for city, pos in ((inst.s, 0), (inst.e, n - 1)):
        e = np.zeros(l)
        e[city * n + pos] = 1.0
        rows.append((e, 1.0))
    if inst.priority:
        e = np.zeros(l)
        e[inst.p * n:inst.p * n + min(inst.m, n - 1) + 1] = 1.0
        rows.append((e, 1.0))
    return LinearConstraintSystem.from_rows(l, equality=rows)


def tsp_objective(X, D) -> float:
    """``Σ_ij D_ij Σ_k X_ik X_j,k+1``: exact tour length when ``X`` is a permutation."""
    X = np.asarray(X, dtype=float)
    return float((np.asarray(D) * (X[:, :-1] @ X[:, 1:].T)).sum())


def tsp_objective_grad(X, D) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    D = np.asarray(D, dtype=float)
    G = np.zeros_like(X)
    G[:, :-1] += D @ X[:, 1:]
    G[:, 1:] += D.T @ X[:, :-1]
    return G


def tour_to_matrix(tour, n: int) -> np.ndarray:
    X = np.zeros((n, n))
    X[np.asarray(tour), np.arange(n)] = 1.0
    return X


def is_feasible_tour(tour, inst: TspInstance) -> bool:
    tour = list(tour)
    if sorted(tour) != list(range(inst.n)):
        return False
    if tour[0] != inst.s or tour[-1] != inst.e:
        return False
    if inst.priority and tour.index(inst.p) > inst.m:
        return False
    return True


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainResult:
    X: np.ndarray
    scores: np.ndarray
    history: list = field(default_factory=list)
    converged: bool = True
    violation: float = 0.0


def tsp_train_matrix(inst: TspInstance, cfg: SolverConfig | None = None, lr: float = 0.1,
                     iters: int = 300, seed=0, train_max_iters: int | None = None,
                     optimizer: str = "sgd") -> TrainResult:
    """Gradient descent on a raw score table through the projection.

    Training steps may cap the Sinkhorn cycle count (``train_max_iters``) to
    bound cost; the returned ``X`` always comes from a final projection run
    with the full ``cfg``.
    """
    cfg = cfg or TSP_CONFIG
    n = inst.n
    system = tsp_build_constraints(inst)
    stack = compile_to_marginals(system)
    D = inst.D
    rng = np.random.default_rng(seed)
    y = rng.normal(scale=0.1, size=n * n)
    train_cfg = cfg.replace(record_tape=True)
    if train_max_iters is not None:
        train_cfg = train_cfg.replace(max_iters=min(cfg.max_iters, train_max_iters))
    if optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    opt = Adam(lr) if optimizer == "adam" else None
    history = []
    for it in range(iters if n > 2 else 0):
        res = project(y, system, train_cfg, stack=stack)
        X = res.x.reshape(n, n)
        obj = tsp_objective(X, D)
        if not np.isfinite(obj):
            raise TrainingDivergedError(f"objective became {obj} at step {it}")
        history.append(obj)
        dy = project_backward(res, tsp_objective_grad(X, D).ravel())
        if not np.all(np.isfinite(dy)):
            raise TrainingDivergedError(f"non-finite gradient at step {it}")
        y = opt.step(y, dy) if opt else y - lr * dy
    final = project(y, system, cfg.replace(record_tape=False), stack=stack)
    return TrainResult(final.x.reshape(n, n), y.reshape(n, n), history,
                       final.converged, system.violation(final.x))


class BeamExhaustedError(RuntimeError):
    pass


def _beam(logX, inst: TspInstance, width: int):
    n = inst.n
    beams = [(0.0, (inst.s,))]
    for pos in range(1, n):
        cand = []
        for score, seq in beams:
            used = set(seq)
            if pos == n - 1:
                options = [inst.e] if inst.e not in used else []
            elif inst.priority and pos == inst.m and inst.p not in used:
                options = [inst.p]
            else:
                options = [c for c in range(n) if c not in used and c != inst.e]
            for c in options:
                cand.append((score + logX[c, pos], seq + (c,)))
        if not cand:
            return []
        cand.sort(key=lambda t: (-t[0], t[1]))
        beams = cand[:width]
    return beams


def beam_search_decode(X, inst: TspInstance, width: int = 128):
    """Left-to-right beam search on ``log X``.

    Returns:
        ``(tour, length, score)`` for the best-scoring feasible tour.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (inst.n, inst.n):
        raise ValueError(f"X must be {inst.n} x {inst.n}")
    logX = np.log(np.maximum(X, 1e-300))
    beams = _beam(logX, inst, width)
    if not beams:
        beams = _beam(logX, inst, width * 4)
    if not beams:
        raise BeamExhaustedError("beam search found no feasible tour")
    score, tour = beams[0]
    return list(tour), path_length(inst.D, tour), float(score)


def _insertion_cost(D, tour, u, lo):
    best, best_i = math.inf, None
    for i in range(lo, len(tour) - 1):
        a, b = tour[i], tour[i + 1]
        cost = D[a, u] + D[u, b] - D[a, b]
        if cost < best:
            best, best_i = cost, i
    return best_i


def heuristic_tour(inst: TspInstance, mode: str = "nearest_neighbor", seed=0):
    """Classical constructive baselines adapted to fixed start/end and priority.

    Returns:
        ``(tour, length)``.
    """
    if mode not in HEURISTICS:
        raise ValueError(f"unknown heuristic {mode!r}; expected one of {HEURISTICS}")
    D = inst.D
    n = inst.n
    if mode == "nearest_neighbor":
        tour = [inst.s]
        left = set(range(n)) - {inst.s, inst.e}
        while left:
            if inst.priority and len(tour) == inst.m and inst.p in left:
                nxt = inst.p
            else:
                cur = tour[-1]
                nxt = min(left, key=lambda c: (D[cur, c], c))
            tour.append(nxt)
            left.remove(nxt)
        tour.append(inst.e)
        return tour, path_length(D, tour)

    rng = np.random.default_rng(seed)
    tour = [inst.s, inst.e]
    left = set(range(n)) - {inst.s, inst.e}
    if inst.priority:
        tour.insert(1, inst.p)
        left.remove(inst.p)
    while left:
        if mode == "nearest_insertion":
            u = min(left, key=lambda c: (min(D[c, t] for t in tour), c))
        elif mode == "farthest_insertion":
            u = min(left, key=lambda c: (-min(D[c, t] for t in tour), c))
        else:
            u = sorted(left)[int(rng.integers(len(left)))]
        lo = 0
        if inst.priority and tour.index(inst.p) >= inst.m:
            lo = tour.index(inst.p)  # nothing may go in front of p any more
        i = _insertion_cost(D, tour, u, lo)
        tour.insert(i + 1, u)
        left.remove(u)
    return tour, path_length(D, tour)
