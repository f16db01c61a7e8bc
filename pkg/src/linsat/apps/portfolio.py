"""Long-only allocation with a minimum share in a preferred asset set.

The allocation ``x`` is the projection of a trainable vector ``y`` onto
``Σ x = 1, Σ_{i in C} x_i >= p``; training climbs the in-sample Sharpe ratio
of the daily-rebalanced portfolio.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..constraints import LinearConstraintSystem, compile_to_marginals
from ..layer import project, project_backward
from ..sinkhorn import SolverConfig
from .optim import Adam

TRADING_DAYS = 252


class UndefinedSharpeError(ArithmeticError):
    """Raised when a return series has zero volatility."""


@dataclass(frozen=True)
class PortfolioInstance:
    prices: np.ndarray
    preferred: tuple
    p_pref: float
    rf: float = 0.03
    names: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.prices, dtype=float)
        # Both halves of the 2/3 split need two returns for a sample std.
        if P.ndim != 2 or P.shape[0] < 7:
            raise ValueError("prices must be a T x n array with T >= 7")
        if not np.all(np.isfinite(P)) or np.any(P <= 0):
            raise ValueError("prices must be finite and positive")
        pref = tuple(sorted({int(i) for i in self.preferred}))
        if not pref or pref[0] < 0 or pref[-1] >= P.shape[1]:
            raise ValueError("preferred set must be non-empty indices into the assets")
        if not 0 < self.p_pref <= 1:
            raise ValueError("p_pref must lie in (0, 1]")
        object.__setattr__(self, "prices", P)
        object.__setattr__(self, "preferred", pref)

    @property
    def n(self) -> int:
        return self.prices.shape[1]

    @property
    def returns(self) -> np.ndarray:
        return self.prices[1:] / self.prices[:-1] - 1.0

    def split(self, frac: float = 2 / 3):
        """In-sample and held-out daily returns."""
        R = self.returns
        cut = int(round(len(R) * frac))
        return R[:cut], R[cut:]


def make_portfolio_instance(rng, n: int = 8, n_pref: int = 3, days: int = 756,
                            p_pref: float = 0.5, pref_drift: float = 0.35,
                            base_drift: float = 0.02) -> PortfolioInstance:
    """Geometric Brownian motion prices; preferred assets get the higher drift."""
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(rng)
    pref = np.sort(rng.choice(n, size=n_pref, replace=False))
    drift = np.full(n, base_drift)
    drift[pref] = pref_drift
    vol = rng.uniform(0.15, 0.30, size=n)
    dt = 1.0 / TRADING_DAYS
    log_ret = (drift - 0.5 * vol**2) * dt + vol * math.sqrt(dt) * rng.normal(size=(days - 1, n))
    start = rng.uniform(20, 200, size=n)
    prices = np.vstack([start, start * np.exp(np.cumsum(log_ret, axis=0))])
    return PortfolioInstance(prices, tuple(pref.tolist()), p_pref)


def read_prices_csv(text: str):
    """Parse ``date,asset1,asset2,...`` CSV text into ``(names, prices)``."""
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise ValueError("price CSV needs a header and at least one row")
    names = tuple(rows[0][1:])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 1:
            raise ValueError(f"line {lineno}: expected {len(names) + 1} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return names, np.array(data)


def pf_build_constraints(n: int, preferred, p_pref: float) -> LinearConstraintSystem:
    pref = sorted(set(int(i) for i in preferred))
    if not pref:
        raise ValueError("preferred set must be non-empty")
    c = np.zeros(n)
    c[pref] = 1.0
    return LinearConstraintSystem.from_rows(n, covering=[(c, p_pref)],
                                            equality=[(np.ones(n), 1.0)])


def sharpe_ratio(returns, rf: float = 0.03) -> float:
    """Annualized ``(252 mean - rf) / (sqrt(252) std)`` of a daily return series."""
    r = np.asarray(returns, dtype=float).ravel()
    if r.size < 2 or not np.all(np.isfinite(r)):
        raise ValueError("need at least two finite returns")
    sd = r.std(ddof=1)
    if sd <= 1e-15 * max(1.0, np.abs(r).max()):
        raise UndefinedSharpeError("return series has zero volatility")
    return float((TRADING_DAYS * r.mean() - rf) / (math.sqrt(TRADING_DAYS) * sd))


def sharpe_grad(R, x, rf: float = 0.03):
    """Sharpe of ``R @ x`` and its gradient with respect to ``x``."""
    r = R @ x
    T = len(r)
    mu = r.mean()
    sd = r.std(ddof=1)
    if sd <= 0:
        raise UndefinedSharpeError("return series has zero volatility")
    dmu = R.mean(axis=0)
    dsd = (R - R.mean(axis=0)).T @ (r - mu) / ((T - 1) * sd)
    k = math.sqrt(TRADING_DAYS)
    value = (TRADING_DAYS * mu - rf) / (k * sd)
    grad = TRADING_DAYS * dmu / (k * sd) - (TRADING_DAYS * mu - rf) / (k * sd**2) * dsd
    return float(value), grad


@dataclass
class PortfolioResult:
    x: np.ndarray
    sharpe_in: float
    sharpe_out: float
    uniform_sharpe_in: float
    uniform_sharpe_out: float
    history: list = field(default_factory=list)
    max_violation: float = 0.0
    converged: bool = True


def pf_optimize(inst: PortfolioInstance, cfg: SolverConfig | None = None, lr: float = 0.05,
                iters: int = 200, seed=0) -> PortfolioResult:
    cfg = (cfg or SolverConfig()).replace(record_tape=True)
    system = pf_build_constraints(inst.n, inst.preferred, inst.p_pref)
    stack = compile_to_marginals(system)
    R_in, R_out = inst.split()
    rng = np.random.default_rng(seed)
    y = np.zeros(inst.n)
    opt = Adam(lr)
    history, worst = [], 0.0
    restarted = False
    all_converged = True
    res = None
    for _ in range(iters):
        res = project(y, system, cfg, stack=stack)
        all_converged &= res.converged
        worst = max(worst, system.violation(res.x))
        try:
            value, gx = sharpe_grad(R_in, res.x, inst.rf)
        except UndefinedSharpeError:
            if restarted:
                raise
            restarted = True
            y = y + rng.normal(scale=0.1, size=y.shape)
            continue
        history.append(value)
        dy = project_backward(res, -gx)  # ascent on Sharpe
        y = opt.step(y, dy)
    final = project(y, system, cfg.replace(record_tape=False), stack=stack)
    worst = max(worst, system.violation(final.x))
    u = np.full(inst.n, 1.0 / inst.n)
    return PortfolioResult(
        x=final.x,
        sharpe_in=sharpe_ratio(R_in @ final.x, inst.rf),
        sharpe_out=sharpe_ratio(R_out @ final.x, inst.rf),
        uniform_sharpe_in=sharpe_ratio(R_in @ u, inst.rf),
        uniform_sharpe_out=sharpe_ratio(R_out @ u, inst.rf),
        history=history,
        max_violation=worst,
        converged=bool(all_converged and final.converged),
    )
