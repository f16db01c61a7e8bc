"""Classic and multi-set Sinkhorn iterations over proportion plans.

Plans follow the proportion convention: ``Γ[i, j]`` is the share of column
mass ``u_j`` routed to row target ``v_i``, so every column carrying mass sums
to one.  A set only rescales the columns it gives positive mass; all other
entries are left bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

# Smallest normal double.  A larger clamp on S erases score gaps wider than
# tau * log(1 / floor) and visibly distorts small-tau projections.
UNDERFLOW_FLOOR = float(np.finfo(float).tiny)

# Cap on the up-front tape buffer; larger runs are recorded in a second pass.
_TAPE_BUDGET_BYTES = 64 * 2**20


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 0.1
    tol: float = 1e-6
    max_iters: int = 2000
    floor: float = UNDERFLOW_FLOOR
    record_tape: bool = False
    # Run exactly ``max_iters`` cycles; used by finite-difference oracles so the
    # perturbed forward maps share one iteration count.
    fixed_iters: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")

    def replace(self, **changes) -> "SolverConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SolverConfig(**values)


@dataclass(frozen=True)
class MarginalSets:
    """Plain ``k`` sets of marginals: ``U`` is ``k x n``, ``V`` is ``k x m``."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        if U.shape[0] != V.shape[0]:
            raise ValueError(f"U has {U.shape[0]} sets but V has {V.shape[0]}")
        if np.any(U < 0) or np.any(V < 0) or not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise ValueError("marginals must be finite and non-negative")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def k(self):
        return self.U.shape[0]

    @property
    def h(self):
        return self.U.sum(axis=1)


@dataclass
class TransportPlan:
    gamma: np.ndarray
    phase: str = "column"

    @property
    def shape(self):
        return self.gamma.shape


@dataclass
class ConvergenceReport:
    iterations: int
    row_errors: np.ndarray
    col_errors: np.ndarray
    converged: bool
    alpha: float
    delta: int
    tol: float
    degenerate_sets: tuple = ()

    @property
    def set_errors(self) -> np.ndarray:
        return np.maximum(self.row_errors, self.col_errors)

    @property
    def max_error(self) -> float:
        return float(self.set_errors.max()) if len(self.row_errors) else 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "tol": float(self.tol),
            "max_error": self.max_error,
            "set_errors": [float(e) for e in self.set_errors],
            "row_errors": [float(e) for e in self.row_errors],
            "col_errors": [float(e) for e in self.col_errors],
            "alpha": float(self.alpha),
            "delta": int(self.delta),
            "degenerate_sets": [int(s) for s in self.degenerate_sets],
        }


def apply_entropic(W, tau: float, floor: float = UNDERFLOW_FLOOR) -> np.ndarray:
    """``S = exp(W / tau)`` clamped below at ``floor``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(W))[0])
        raise ValueError(f"non-finite score at index {bad}")
    with np.errstate(over="ignore", under="ignore"):
        S = np.exp(W / tau)
    if not np.all(np.isfinite(S)):
        raise ValueError("exp(W / tau) overflows; shift W by its column maxima first")
    return np.maximum(S, floor)


def score_stats(S) -> tuple[float, int]:
    """``alpha`` = min positive / max entry, ``delta`` = most non-zeros in a column."""
    S = np.asarray(S)
    pos = S[S > 0]
    alpha = float(pos.min() / S.max()) if pos.size else 0.0
    delta = int((S > 0).sum(axis=0).max()) if S.size else 0
    return alpha, delta


def init_plan(S) -> np.ndarray:
    """Column-normalize ``S``; all-zero columns stay zero."""
    S = np.asarray(S, dtype=float)
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise ValueError("score matrix must be finite and non-negative")
    colsum = S.sum(axis=0)
    G = np.zeros_like(S)
    nz = colsum > 0
    G[:, nz] = S[:, nz] / colsum[nz]
    return G


@dataclass(frozen=True)
class PairStep:
    mid: np.ndarray
    gamma: np.ndarray
    row_denominators: np.ndarray
    col_denominators: np.ndarray
    degenerate_rows: tuple = ()
    degenerate_cols: tuple = ()


def normalize_pair_step(gamma, u, v, floor: float = UNDERFLOW_FLOOR) -> PairStep:
    """One row step towards ``v`` followed by one column step towards ``u``."""
    G = np.ascontiguousarray(gamma, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    m, n = G.shape
    if u.shape != (n,) or v.shape != (m,):
        raise ValueError(f"marginal shapes {u.shape}, {v.shape} do not fit plan {G.shape}")
    mid = np.empty_like(G)
    out = np.empty_like(G)
    rden = np.empty(m)
    cden = np.empty(n)
    _kernels.row_step(G, u, v, floor, rden, mid)
    _kernels.col_step(mid, u, floor, cden, out)
    bad_rows = tuple(int(i) for i in np.flatnonzero((rden < floor) & (v > 0)))
    bad_cols = tuple(int(j) for j in np.flatnonzero((cden < floor) & (u > 0)))
    return PairStep(mid, out, rden, cden, bad_rows, bad_cols)


def l1_violation(gamma, stack, eta: int, mid=None) -> tuple[float, float]:
    """``(row_err, col_err)`` of set ``eta``.

    ``row_err`` is measured on ``gamma``; ``col_err`` on ``mid`` (the post-row-step
    plan) when given, else on ``gamma``.
    """
    u = np.asarray(stack.U[eta], dtype=float)
    v = np.asarray(stack.V[eta], dtype=float)
    G = np.asarray(gamma, dtype=float)
    row_err = float(np.abs(G @ u - v).sum())
    Gc = G if mid is None else np.asarray(mid, dtype=float)
    col_err = float(np.abs((Gc * u).sum(axis=0) - u).sum())
    return row_err, col_err


def _check_inputs(S, U, V):
    S = np.ascontiguousarray(S, dtype=float)
    if S.ndim != 2:
        raise ValueError(f"score matrix must be 2-d, got shape {S.shape}")
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise ValueError("score matrix must be finite and non-negative")
    U = np.ascontiguousarray(U, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    if U.shape[1:] != (S.shape[1],) or V.shape[1:] != (S.shape[0],):
        raise ValueError(f"marginals U{U.shape}, V{V.shape} do not fit scores {S.shape}")
    return S, U, V


def _finish_report(S, iters, errors, degenerate, cfg):
    alpha, delta = score_stats(S)
    set_err = errors.max(axis=1) if len(errors) else np.zeros(0)
    return ConvergenceReport(
        iterations=int(iters),
        row_errors=errors[:, 0].copy(),
        col_errors=errors[:, 1].copy(),
        converged=bool(np.all(set_err <= cfg.tol)),
        alpha=alpha,
        delta=delta,
        tol=cfg.tol,
        degenerate_sets=tuple(int(e) for e in np.flatnonzero(degenerate)),
    )


@dataclass
class _Recording:
    gamma0: np.ndarray
    snapshots: np.ndarray
    row_denominators: np.ndarray
    col_denominators: np.ndarray


def _empty_tape(m, n):
    return np.zeros((0, m, n)), np.zeros((0, m)), np.zeros((0, n))


def run_engine(S, U, V, cfg: SolverConfig, record: bool = False):
    """Shared forward pass; returns ``(gamma, report, recording | None)``."""
    S, U, V = _check_inputs(S, U, V)
    m, n = S.shape
    k = U.shape[0]
    G0 = init_plan(S)
    if k == 0:
        report = _finish_report(S, 0, np.zeros((0, 2)), np.zeros(0), cfg)
        rec = _Recording(G0, *_empty_tape(m, n)) if record else None
        return G0.copy(), report, rec

    G = G0.copy()
    max_iters = int(cfg.max_iters)
    if not record:
        iters, errors, degenerate = _kernels.run(
            G, U, V, cfg.floor, cfg.tol, max_iters, cfg.fixed_iters, *_empty_tape(m, n))
        return G, _finish_report(S, iters, errors, degenerate, cfg), None

    pairs = max_iters * k
    if pairs * (2 * m * n + m + n) * 8 <= _TAPE_BUDGET_BYTES:
        snaps = np.empty((2 * pairs, m, n))
        rden = np.empty((pairs, m))
        cden = np.empty((pairs, n))
        iters, errors, degenerate = _kernels.run(
            G, U, V, cfg.floor, cfg.tol, max_iters, cfg.fixed_iters, snaps, rden, cden)
        used = iters * k
        snaps, rden, cden = snaps[:2 * used], rden[:used], cden[:used]
    else:
        # Sizing pass, then a deterministic replay of exactly that many cycles.
        iters, errors, degenerate = _kernels.run(
            G, U, V, cfg.floor, cfg.tol, max_iters, cfg.fixed_iters, *_empty_tape(m, n))
        used = iters * k
        snaps = np.empty((2 * used, m, n))
        rden = np.empty((used, m))
        cden = np.empty((used, n))
        G = G0.copy()
        _kernels.run(G, U, V, cfg.floor, cfg.tol, iters, True, snaps, rden, cden)
    report = _finish_report(S, iters, errors, degenerate, cfg)
    return G, report, _Recording(G0, snaps, rden, cden)


def multi_set_sinkhorn(S, stack, cfg: SolverConfig | None = None):
    """Sinkhorn over ``k`` marginal sets, cycling ``eta = 1..k`` per iteration.

    Convergence is judged once per full cycle: every set's L1 gap must be
    ``<= cfg.tol``.  Hitting ``cfg.max_iters`` returns ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    G, report, _ = run_engine(S, stack.U, stack.V, cfg)
    return TransportPlan(G), report


def classic_sinkhorn(S, u, v, cfg: SolverConfig | None = None):
    """Single-set Sinkhorn written directly with array operations."""
    cfg = cfg or SolverConfig()
    S, U, V = _check_inputs(S, np.atleast_2d(u), np.atleast_2d(v))
    u, v = U[0], V[0]
    mask = u > 0
    G = init_plan(S)
    floor = cfg.floor
    degenerate = False
    row_err = col_err = 0.0
    iters = 0
    for it in range(int(cfg.max_iters)):
        r = G @ u
        degenerate |= bool(np.any((r < floor) & (v > 0)))
        Gp = G.copy()
        Gp[:, mask] = G[:, mask] * (v / np.maximum(r, floor))[:, None]
        c = (Gp[:, mask] * u[mask]).sum(axis=0)
        degenerate |= bool(np.any(c < floor))
        G = Gp.copy()
        G[:, mask] = Gp[:, mask] * u[mask] / np.maximum(c, floor)
        iters = it + 1
        row_err = float(np.abs(G @ u - v).sum())
        col_err = float(np.abs((G * u).sum(axis=0) - u).sum())
        if not cfg.fixed_iters and max(row_err, col_err) <= cfg.tol:
            break
    errors = np.array([[row_err, col_err]])
    report = _finish_report(S, iters, errors, np.array([degenerate]), cfg)
    return TransportPlan(G), report
