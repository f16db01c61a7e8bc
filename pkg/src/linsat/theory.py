"""Numerical probes of the multi-set Sinkhorn convergence analysis.

Instances are built around a known feasible plan ``Z`` so that the matrix KL
potential ``D(Z, Γ, η)`` can be tracked step by step.  The probes measure:

* the initial-potential bound ``D(Z, Γ0, η) <= log(1 + 2Δ/α)``;
* the per-step identities linking the potential drop to the marginal KL;
* the cumulative KL budget and Pinsker consistency along a whole run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import forward_with_tape
from .sinkhorn import MarginalSets, SolverConfig, init_plan, l1_violation, score_stats


@dataclass(frozen=True)
class FeasibleInstance:
    S: np.ndarray
    stack: MarginalSets
    Z: np.ndarray

    @property
    def alpha(self) -> float:
        return score_stats(self.S)[0]

    @property
    def delta(self) -> int:
        return score_stats(self.S)[1]

    @property
    def h_hat(self) -> float:
        return float(self.stack.h.max())

    @property
    def budget(self) -> float:
        return math.log(1.0 + 2.0 * self.delta / self.alpha)

    def audit(self, atol: float = 1e-12) -> list[str]:
        problems = []
        U, V, Z = self.stack.U, self.stack.V, self.Z
        if np.any(Z < 0) or np.any(Z > 1):
            problems.append("Z leaves [0, 1]")
        for eta in range(self.stack.k):
            u = U[eta]
            cols = (Z * u).sum(axis=0)
            if np.max(np.abs(cols - u)) > atol * max(1.0, u.max()):
                problems.append(f"set {eta}: column masses of Z miss u")
            if np.max(np.abs(Z @ u - V[eta])) > atol * max(1.0, self.stack.h[eta]):
                problems.append(f"set {eta}: row marginals of Z miss v")
            if abs(u.sum() - V[eta].sum()) > atol * max(1.0, self.stack.h[eta]):
                problems.append(f"set {eta}: Σu != Σv")
        return problems


def make_feasible_instance(seed, m: int, n: int, k: int, Z=None, U=None, S=None) -> FeasibleInstance:
    """Random instance whose marginals are read off a random feasible plan ``Z``.

    ``Z`` has unit column sums with entries in ``(0, 1)``; each ``u_η`` is
    strictly positive; ``v_η = Z u_η``; ``S`` is strictly positive.  Any of
    ``Z``, ``U``, ``S`` can be supplied instead of drawn.
    """
    if min(m, n, k) < 1:
        raise ValueError("m, n and k must be positive")
    rng = np.random.default_rng(seed)
    if Z is None:
        Z = rng.uniform(0.05, 1.0, size=(m, n))
        Z = Z / Z.sum(axis=0)
    Z = np.asarray(Z, dtype=float)
    if U is None:
        U = rng.uniform(0.1, 1.0, size=(k, n))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if S is None:
        S = rng.uniform(0.05, 1.0, size=(m, n))
    V = U @ Z.T
    return FeasibleInstance(S=np.asarray(S, dtype=float), stack=MarginalSets(U, V), Z=Z)


def matrix_kl(Z, gamma, u, h: float | None = None) -> float:
    """``(1/h) Σ_ij z_ij u_j log(z_ij / Γ_ij)`` with ``0 log 0 = 0``."""
    Z = np.asarray(Z, dtype=float)
    G = np.asarray(gamma, dtype=float)
    u = np.asarray(u, dtype=float)
    h = float(u.sum()) if h is None else float(h)
    w = Z * u
    live = w > 0
    if np.any(G[live] <= 0):
        i, j = np.argwhere(live & (G <= 0))[0]
        raise ValueError(f"log of zero: Γ[{i}, {j}] = 0 where z u > 0")
    return float((w[live] * np.log(Z[live] / G[live])).sum() / h)


def marginal_kl(target, achieved, h: float | None = None) -> float:
    """``KL(π_target || π_achieved)``, both normalized by the target mass ``h``."""
    target = np.asarray(target, dtype=float)
    achieved = np.asarray(achieved, dtype=float)
    h = float(target.sum()) if h is None else float(h)
    live = target > 0
    p = target[live] / h
    q = achieved[live] / h
    return float((p * np.log(p / q)).sum())


@dataclass
class PotentialBoundReport:
    values: np.ndarray
    bound: float
    slack: float = 1e-9

    @property
    def ok(self) -> bool:
        return bool(np.all(self.values <= self.bound + self.slack))

    @property
    def violations(self) -> list[tuple[int, float, float]]:
        return [(eta, float(v), self.bound) for eta, v in enumerate(self.values)
                if v > self.bound + self.slack]


def check_lemma1(instance: FeasibleInstance, gamma0=None) -> PotentialBoundReport:
    """Evaluate ``D(Z, Γ0, η)`` for every set against ``log(1 + 2Δ/α)``."""
    G0 = init_plan(instance.S) if gamma0 is None else np.asarray(gamma0, dtype=float)
    U, h = instance.stack.U, instance.stack.h
    values = np.array([matrix_kl(instance.Z, G0, U[eta], h[eta]) for eta in range(len(U))])
    return PotentialBoundReport(values, instance.budget)


@dataclass(frozen=True)
class StepIdentityCheck:
    """Residuals of the two potential-drop identities for one row+column pair.

    ``residual_col`` compares against the next set's potential ``D(Z, Γ⁺, η')``;
    ``residual_col_same_set`` keeps ``η`` on both sides.
    """

    kl_row: float
    kl_col: float
    residual_row: float
    residual_col: float
    residual_col_same_set: float


def check_lemma2_step(instance: FeasibleInstance, before, mid, after, eta: int,
                      eta_next: int) -> StepIdentityCheck:
    Z = instance.Z
    U, V, h = instance.stack.U, instance.stack.V, instance.stack.h
    u, v = U[eta], V[eta]
    kl_row = marginal_kl(v, np.asarray(before) @ u, h[eta])
    kl_col = marginal_kl(u, (np.asarray(mid) * u).sum(axis=0), h[eta])
    d_before = matrix_kl(Z, before, u, h[eta])
    d_mid = matrix_kl(Z, mid, u, h[eta])
    d_after_same = matrix_kl(Z, after, u, h[eta])
    d_after_next = matrix_kl(Z, after, U[eta_next], h[eta_next])
    return StepIdentityCheck(
        kl_row=kl_row,
        kl_col=kl_col,
        residual_row=abs(d_before - d_mid - kl_row),
        residual_col=abs(d_mid - d_after_next - kl_col),
        residual_col_same_set=abs(d_mid - d_after_same - kl_col),
    )


@dataclass
class TrajectoryRecord:
    """Per half-step diagnostics; ``potential`` is ``D(Z, ·, η)`` of the pre-step plan."""

    step: np.ndarray
    eta: np.ndarray
    phase: np.ndarray
    l1: np.ndarray
    kl: np.ndarray
    potential: np.ndarray
    h: np.ndarray
    identities: list = field(default_factory=list)

    def __len__(self):
        return len(self.step)

    def rows(self):
        for i in range(len(self)):
            yield {"step": int(self.step[i]), "eta": int(self.eta[i]), "phase": str(self.phase[i]),
                   "l1": float(self.l1[i]), "kl": float(self.kl[i]),
                   "D": float(self.potential[i])}


def record_trajectory(instance: FeasibleInstance, cfg: SolverConfig | None = None):
    """Run the engine with a tape and evaluate every recorded step.

    Returns ``(trajectory, tape, report)``.
    """
    cfg = (cfg or SolverConfig()).replace(record_tape=True)
    plan, report, tape = forward_with_tape(instance.S, instance.stack, cfg)
    k = instance.stack.k
    U, V, h = instance.stack.U, instance.stack.V, instance.stack.h
    Z = instance.Z
    n_pairs = len(tape.row_denominators)
    steps, etas, phases, l1s, kls, pots, hs, identities = [], [], [], [], [], [], [], []
    for p in range(n_pairs):
        eta = p % k
        before = tape.snapshots[2 * p]
        mid = tape.snapshots[2 * p + 1]
        after = tape.snapshots[2 * p + 2] if 2 * p + 2 < len(tape.snapshots) else tape.final
        u, v = U[eta], V[eta]
        achieved_v = before @ u
        achieved_u = (mid * u).sum(axis=0)
        step = check_lemma2_step(instance, before, mid, after, eta, (p + 1) % k)
        identities.append(step)
        for phase, l1, kl, plan_ in (("row", np.abs(achieved_v - v).sum(), step.kl_row, before),
                                     ("column", np.abs(achieved_u - u).sum(), step.kl_col, mid)):
            steps.append(p)
            etas.append(eta)
            phases.append(phase)
            l1s.append(l1)
            kls.append(kl)
            pots.append(matrix_kl(Z, plan_, u, h[eta]))
            hs.append(h[eta])
    traj = TrajectoryRecord(np.array(steps, dtype=int), np.array(etas, dtype=int),
                            np.array(phases), np.array(l1s), np.array(kls), np.array(pots),
                            np.array(hs), identities)
    return traj, tape, report


@dataclass
class ConvergenceCurve:
    eps_grid: tuple
    iterations_to_eps: dict
    trajectory: TrajectoryRecord
    cycle_errors: np.ndarray
    budget: float
    cumulative_kl: np.ndarray
    telescoped_gap: float
    converged: bool

    @property
    def budget_ok(self) -> bool:
        return bool(np.all(self.cumulative_kl <= self.budget + 1e-6))

    def audit(self) -> dict:
        traj = self.trajectory
        pinsker = traj.kl - traj.l1**2 / (2.0 * traj.h**2)
        return {
            "steps": int(len(traj)),
            "converged": self.converged,
            "budget": self.budget,
            "max_cumulative_kl": float(self.cumulative_kl.max()) if len(traj) else 0.0,
            "budget_ok": self.budget_ok,
            "min_step_kl": float(traj.kl.min()) if len(traj) else 0.0,
            "min_pinsker_slack": float(pinsker.min()) if len(traj) else 0.0,
            "max_row_identity_residual": max((s.residual_row for s in traj.identities), default=0.0),
            "max_col_identity_residual": max((s.residual_col for s in traj.identities), default=0.0),
            "max_col_identity_residual_same_set": max(
                (s.residual_col_same_set for s in traj.identities), default=0.0),
            "telescoped_gap": self.telescoped_gap,
            "iterations_to_eps": {str(e): v for e, v in self.iterations_to_eps.items()},
        }


def convergence_curve(instance: FeasibleInstance, cfg: SolverConfig | None = None,
                      eps_grid=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)) -> ConvergenceCurve:
    """Cycles needed to reach each L1 level, plus the full KL/L1 trajectory.

    The error of a cycle boundary is the worst row or column L1 gap over all
    sets; ``iterations_to_eps[ε]`` is the first boundary at or below ``ε``
    (``None`` if never reached).
    """
    traj, tape, report = record_trajectory(instance, cfg)
    k = instance.stack.k
    plans = [tape.snapshots[2 * k * c] for c in range(tape.cycles)] + [tape.final]
    cycle_errors = np.array([
        max(max(l1_violation(G, instance.stack, eta)) for eta in range(k)) for G in plans])
    hits = {}
    for eps in eps_grid:
        below = np.flatnonzero(cycle_errors <= eps)
        hits[eps] = int(below[0]) if below.size else None
    cumulative = np.cumsum(traj.kl)
    u0, h0 = instance.stack.U[0], instance.stack.h[0]
    drop = matrix_kl(instance.Z, tape.gamma0, u0, h0) - matrix_kl(instance.Z, tape.final, u0, h0)
    gap = abs(float(cumulative[-1]) - drop) if len(cumulative) else abs(drop)
    return ConvergenceCurve(tuple(eps_grid), hits, traj, cycle_errors, instance.budget,
                            cumulative, gap, report.converged)
