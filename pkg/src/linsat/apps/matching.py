"""Partial matching: at most one partner per node and at most ``phi`` pairs overall.

The flat variable index of pair ``(i, j)`` is ``i * n2 + j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..constraints import LinearConstraintSystem
from ..layer import project
from ..oracles import hungarian
from ..sinkhorn import SolverConfig


@dataclass(frozen=True)
class MatchingInstance:
    M: np.ndarray
    phi: int
    truth: tuple = ()

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2:
            raise ValueError("score matrix must be 2-D")
        if not 0 < self.phi <= min(M.shape):
            raise ValueError(f"phi={self.phi} must lie in [1, {min(M.shape)}]")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "truth", tuple((int(i), int(j)) for i, j in self.truth))

    @property
    def shape(self):
        return self.M.shape

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "phi": self.phi, "truth": [list(t) for t in self.truth]}

    @classmethod
    def from_dict(cls, data: dict) -> "MatchingInstance":
        missing = [k for k in ("M", "phi") if k not in data]
        if missing:
            raise ValueError(f"matching instance missing fields: {missing}")
        return cls(np.asarray(data["M"], dtype=float), int(data["phi"]),
                   tuple(tuple(t) for t in data.get("truth", [])))

    @classmethod
    def from_json(cls, text: str) -> "MatchingInstance":
        return cls.from_dict(json.loads(text))


def make_matching_instance(rng, n1: int = 12, n2: int = 12, phi: int = 8,
                           sigma: float = 0.0) -> MatchingInstance:
    """``phi`` hidden pairs scored 1, everything else 0, plus Gaussian noise."""
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(rng)
    rows = rng.choice(n1, size=phi, replace=False)
    cols = rng.choice(n2, size=phi, replace=False)
    M = np.zeros((n1, n2))
    M[rows, cols] = 1.0
    if sigma > 0:
        M = M + sigma * rng.normal(size=M.shape)
    truth = tuple(sorted(zip(rows.tolist(), cols.tolist())))
    return MatchingInstance(M, phi, truth)


def gm_build_constraints(n1: int, n2: int, phi: int) -> LinearConstraintSystem:
    if not 0 < phi <= min(n1, n2):
        raise ValueError(f"phi={phi} must lie in [1, {min(n1, n2)}]")
    l = n1 * n2
    rows = []
    for j in range(n2):
        a = np.zeros(l)
        a[j::n2] = 1.0
        rows.append((a, 1.0))
    for i in range(n1):
        a = np.zeros(l)
        a[i * n2:(i + 1) * n2] = 1.0
        rows.append((a, 1.0))
    rows.append((np.ones(l), float(phi)))
    return LinearConstraintSystem.from_rows(l, packing=rows)


def f1_score(pred, truth) -> float:
    pred, truth = set(map(tuple, pred)), set(map(tuple, truth))
    hits = len(pred & truth)
    if hits == 0:
        return 0.0
    precision = hits / len(pred)
    recall = hits / len(truth)
    return 2 * precision * recall / (precision + recall)


@dataclass
class MatchingResult:
    pairs: list
    f1: float
    M_hat: np.ndarray
    converged: bool
    violation: float


def gm_solve(inst: MatchingInstance, cfg: SolverConfig | None = None) -> MatchingResult:
    """Project, assign with Hungarian, keep the ``phi`` best-scored pairs."""
    cfg = cfg or SolverConfig()
    n1, n2 = inst.shape
    system = gm_build_constraints(n1, n2, inst.phi)
    res = project(inst.M.ravel(), system, cfg)
    M_hat = res.x.reshape(n1, n2)
    assigned = hungarian(M_hat, maximize=True).pairs()
    # Stable sort keeps index order among equal scores.
    assigned.sort(key=lambda ij: -M_hat[ij])
    pairs = sorted(assigned[:inst.phi])
    f1 = f1_score(pairs, inst.truth) if inst.truth else float("nan")
    return MatchingResult(pairs, f1, M_hat, res.converged, system.violation(res.x))
