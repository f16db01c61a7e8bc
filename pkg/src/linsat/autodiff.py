"""Reverse-mode gradients through the unrolled multi-set Sinkhorn iterations.

The forward pass records the plan before every row and column step together
with the normalizer denominators.  ``backward`` walks the tape in reverse and
applies the quotient-rule vector-Jacobian product of each step, then of the
initial column normalization.  What is differentiated is the truncated
iteration the forward actually ran, not its fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .sinkhorn import UNDERFLOW_FLOOR, SolverConfig, TransportPlan, run_engine

ROW, COLUMN = "row", "column"


@dataclass(frozen=True)
class StepRecord:
    set_index: int
    phase: str
    snapshot: np.ndarray
    denominators: np.ndarray


@dataclass
class IterationTape:
    S: np.ndarray
    U: np.ndarray
    V: np.ndarray
    floor: float
    gamma0: np.ndarray
    snapshots: np.ndarray
    row_denominators: np.ndarray
    col_denominators: np.ndarray
    final: np.ndarray

    @property
    def k(self) -> int:
        return self.U.shape[0]

    @property
    def cycles(self) -> int:
        return len(self.row_denominators) // self.k if self.k else 0

    def __len__(self) -> int:
        return len(self.snapshots)

    def records(self) -> Iterator[StepRecord]:
        for s in range(len(self)):
            p, phase = divmod(s, 2)
            dens = self.col_denominators[p] if phase else self.row_denominators[p]
            yield StepRecord(p % self.k, COLUMN if phase else ROW, self.snapshots[s], dens)

    def replay(self) -> np.ndarray:
        """Re-run the recorded steps from the initial plan."""
        G = self.gamma0.copy()
        if self.k and self.cycles:
            m, n = G.shape
            _kernels.run(G, self.U, self.V, self.floor, 1.0, self.cycles, True,
                         np.zeros((0, m, n)), np.zeros((0, m)), np.zeros((0, n)))
        return G


def forward_with_tape(S, stack, cfg: SolverConfig | None = None):
    """Same result as ``multi_set_sinkhorn`` plus the tape for ``backward``."""
    cfg = cfg or SolverConfig(record_tape=True)
    S = np.asarray(S, dtype=float)
    U = np.ascontiguousarray(stack.U, dtype=float)
    V = np.ascontiguousarray(stack.V, dtype=float)
    G, report, rec = run_engine(S, U, V, cfg, record=True)
    tape = IterationTape(S=S.copy(), U=U, V=V, floor=cfg.floor, gamma0=rec.gamma0,
                         snapshots=rec.snapshots, row_denominators=rec.row_denominators,
                         col_denominators=rec.col_denominators, final=G.copy())
    return TransportPlan(G), report, tape


def _init_vjp(S, g):
    colsum = S.sum(axis=0)
    out = np.zeros_like(S)
    nz = colsum > 0
    Sn, gn, cn = S[:, nz], g[:, nz], colsum[nz]
    out[:, nz] = gn / cn - (gn * Sn).sum(axis=0) / cn**2
    return out


def backward(tape: IterationTape, d_gamma) -> np.ndarray:
    """Gradient w.r.t. the score matrix ``S`` given ``dL/dΓ`` of the final plan."""
    g = np.ascontiguousarray(d_gamma, dtype=float)
    if g.shape != tape.final.shape:
        raise ValueError(f"gradient shape {g.shape} does not match plan {tape.final.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite")
    if tape.k and len(tape.row_denominators):
        g = _kernels.backward(tape.snapshots, tape.row_denominators, tape.col_denominators,
                              tape.U, tape.V, tape.floor, g)
    return _init_vjp(tape.S, g)


def grad_entropic(dS, W, tau: float, floor: float = UNDERFLOW_FLOOR) -> np.ndarray:
    """Chain ``dL/dS`` through ``S = max(exp(W / tau), floor)``.

    Entries clamped at the floor sit on a flat region and get zero gradient.
    """
    W = np.asarray(W, dtype=float)
    dS = np.asarray(dS, dtype=float)
    if dS.shape != W.shape:
        raise ValueError(f"shape mismatch: dS {dS.shape} vs W {W.shape}")
    with np.errstate(under="ignore"):
        S = np.exp(W / tau)
    return np.where(S < floor, 0.0, dS * S / tau)
