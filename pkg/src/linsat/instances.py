"""Seeded random constraint systems with a known interior feasible point."""

from __future__ import annotations

import numpy as np

from .constraints import LinearConstraintSystem

COEFFICIENTS = ("binary", "real")


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_feasible_system(seed, l: int | None = None, k: int | None = None,
                           coefficients: str = "binary", max_l: int = 30, max_k: int = 10):
    """A mixed packing/covering/equality system satisfied by a hidden ``x*``.

    ``x*`` is drawn in ``[0.1, 0.9]^l``.  Packing rows get slack above
    ``a · x*``, covering rows get slack below ``c · x*`` and equality rows pass
    through ``x*`` exactly.  When ``k >= 3`` the first three rows cover all
    three kinds.

    Args:
        seed: int, SeedSequence or Generator.
        l, k: sizes; drawn from ``[2, max_l]`` and ``[1, max_k]`` when omitted.
        coefficients: ``"binary"`` for 0/1 rows, ``"real"`` for entries in
            ``[0.5, 2]`` on the support.

    Returns:
        ``(system, x_star)``.
    """
    if coefficients not in COEFFICIENTS:
        raise ValueError(f"coefficients must be one of {COEFFICIENTS}")
    rng = _as_rng(seed)
    l = int(rng.integers(2, max_l + 1)) if l is None else int(l)
    k = int(rng.integers(1, max_k + 1)) if k is None else int(k)
    x_star = rng.uniform(0.1, 0.9, l)
    rows = {"p": [], "c": [], "e": []}
    for r in range(k):
        kind = "pce"[r] if r < 3 else str(rng.choice(list("pce")))
        mask = rng.uniform(size=l) < rng.uniform(0.2, 0.7)
        mask[rng.integers(l)] = True
        coeffs = mask * (1.0 if coefficients == "binary" else rng.uniform(0.5, 2.0, l))
        val = float(coeffs @ x_star)
        if kind == "p":
            rows["p"].append((coeffs, val + rng.uniform(0, 0.15) * coeffs.sum()))
        elif kind == "c":
            rows["c"].append((coeffs, val * (1.0 - rng.uniform(0, 0.3))))
        else:
            rows["e"].append((coeffs, val))
    system = LinearConstraintSystem.from_rows(l, rows["p"], rows["c"], rows["e"])
    return system, x_star


def random_interval_system(seed, max_l: int = 10, max_k: int = 4) -> LinearConstraintSystem:
    """Rows of consecutive ones with integer right-hand sides.

    Interval matrices are totally unimodular, so the LP over ``[0, 1]^l`` has
    integral vertices and small-τ projections round to the discrete optimum.
    The system may have no binary solution; callers check.
    """
    rng = _as_rng(seed)
    l = int(rng.integers(4, max_l + 1))
    rows = {"packing": [], "covering": [], "equality": []}
    for _ in range(int(rng.integers(1, max_k + 1))):
        lo, hi = sorted(rng.choice(l + 1, 2, replace=False))
        row = np.zeros(l)
        row[lo:hi] = 1.0
        kind = str(rng.choice(list(rows)))
        rhs = float(rng.integers(1 if kind == "covering" else 0, hi - lo + 1))
        rows[kind].append((row, rhs))
    return LinearConstraintSystem.from_rows(l, **rows)


def infeasible_example() -> LinearConstraintSystem:
    """``x1 + x2 >= 2, x3 + x4 >= 2, x1 + x3 <= 1, x2 + x4 <= 1``: no solution in ``[0,1]^4``."""
    return LinearConstraintSystem.from_rows(
        4,
        packing=[([1, 0, 1, 0], 1), ([0, 1, 0, 1], 1)],
        covering=[([1, 1, 0, 0], 2), ([0, 0, 1, 1], 2)],
    )


def feasible_example() -> LinearConstraintSystem:
    """Four pairwise packing rows over four variables; ``[1, 0, 0, 1]`` is feasible."""
    return LinearConstraintSystem.from_rows(
        4,
        packing=[([1, 1, 0, 0], 1), ([0, 0, 1, 1], 1), ([1, 0, 1, 0], 1), ([0, 1, 0, 1], 1)],
    )
