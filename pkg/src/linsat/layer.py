"""The LinSAT projection: scores ``y`` to ``x in [0, 1]^l`` meeting positive linear constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import IterationTape, backward, forward_with_tape, grad_entropic
from .constraints import LinearConstraintSystem, MarginalStack, compile_to_marginals
from .sinkhorn import (UNDERFLOW_FLOOR, ConvergenceReport, SolverConfig, apply_entropic,
                       multi_set_sinkhorn)


@dataclass
class ProjectionResult:
    x: np.ndarray
    gamma: np.ndarray
    report: ConvergenceReport
    stack: MarginalStack
    eps_lin: float
    tape: IterationTape | None = None
    # Column-shifted pre-exponent matrix, kept for the backward pass.
    W: np.ndarray | None = None
    tau: float = 0.1

    @property
    def converged(self) -> bool:
        return self.report.converged


def build_score_matrix(y, stack: MarginalStack, beta: float = 0.0, tau: float = 0.1,
                       floor: float = UNDERFLOW_FLOOR) -> np.ndarray:
    """``exp(W / tau)`` for ``W = [[y, β..], [β, ..., β]]`` of shape ``2 x n_cols``."""
    W = build_w(y, stack, beta)
    return apply_entropic(W, tau, floor)


def build_w(y, stack: MarginalStack, beta: float = 0.0) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != stack.l:
        raise ValueError(f"y has length {y.shape[0]}, the constraint system has l={stack.l}")
    W = np.full((2, stack.n_cols), float(beta))
    W[0, :stack.l] = y
    return W


def constraint_tolerance(stack: MarginalStack, tol: float) -> float:
    """Constraint-space slack implied by a marginal-space L1 tolerance."""
    hmax = float(stack.h.max()) if stack.k else 0.0
    return tol * max(1.0, hmax)


def project(y, system: LinearConstraintSystem, cfg: SolverConfig | None = None,
            beta: float = 0.0, stack: MarginalStack | None = None) -> ProjectionResult:
    """Project scores ``y`` onto ``{A x <= b, C x >= d, E x = f, x in [0, 1]^l}``.

    A run that hits ``cfg.max_iters`` still returns its best-effort ``x`` with
    ``report.converged == False``.  Pass a precompiled ``stack`` to skip
    recompiling the same system.
    """
    cfg = cfg or SolverConfig()
    stack = stack if stack is not None else compile_to_marginals(system)
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    W = build_w(y, stack, beta)
    # The plan only depends on S up to per-column scaling, so shifting each
    # column to a zero maximum avoids overflow without changing the result.
    W = W - W.max(axis=0)
    S = apply_entropic(W, cfg.tau, cfg.floor)
    tape = None
    if cfg.record_tape:
        plan, report, tape = forward_with_tape(S, stack, cfg)
    else:
        plan, report = multi_set_sinkhorn(S, stack, cfg)
    G = plan.gamma
    x = np.clip(G[0, :stack.l], 0.0, 1.0)
    return ProjectionResult(x=x, gamma=G, report=report, stack=stack,
                            eps_lin=constraint_tolerance(stack, cfg.tol), tape=tape,
                            W=W, tau=cfg.tau)


def project_backward(result: ProjectionResult, dx) -> np.ndarray:
    """``dL/dy`` from ``dL/dx`` through the recorded projection."""
    if result.tape is None:
        raise ValueError("projection was run without record_tape=True; no tape to differentiate")
    dx = np.asarray(dx, dtype=float).ravel()
    l = result.stack.l
    if dx.shape[0] != l:
        raise ValueError(f"dx has length {dx.shape[0]}, expected {l}")
    d_gamma = np.zeros_like(result.gamma)
    d_gamma[0, :l] = dx
    dS = backward(result.tape, d_gamma)
    dW = grad_entropic(dS, result.W, result.tau, result.tape.floor)
    return dW[0, :l].copy()


def linsat(y, system: LinearConstraintSystem, tau: float = 0.1, **kwargs) -> np.ndarray:
    """Convenience wrapper returning only ``x``."""
    return project(y, system, SolverConfig(tau=tau, **kwargs)).x
