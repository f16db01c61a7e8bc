"""Positive linear constraint systems and their compilation to marginal stacks.

A system describes ``A x <= b``, ``C x >= d``, ``E x = f`` over ``x in [0, 1]^l``
with every coefficient and right-hand side non-negative.  Each constraint row
becomes one set of Sinkhorn marginals over a ``2 x (l + n_ineq)`` plan, where
every inequality owns a private dummy column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

PACKING = "packing"
COVERING = "covering"
EQUALITY = "equality"
KINDS = (PACKING, COVERING, EQUALITY)

_RHS_KEY = {PACKING: ("a", "b"), COVERING: ("c", "d"), EQUALITY: ("e", "f")}


class InvalidSystemError(ValueError):
    """Raised when a constraint system breaks one of its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid constraint system: {lines}")


def _frozen(arr, ndim):
    out = np.array(arr, dtype=np.float64, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LinearConstraintSystem:
    """Dense description of ``A x <= b, C x >= d, E x = f`` over ``l`` variables."""

    l: int
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    d: np.ndarray
    E: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        for mat, vec in (("A", "b"), ("C", "d"), ("E", "f")):
            raw = getattr(self, mat)
            M = _frozen(raw, 2) if np.size(raw) else _frozen(np.zeros((0, self.l)), 2)
            object.__setattr__(self, mat, M)
            object.__setattr__(self, vec, _frozen(np.ravel(getattr(self, vec)), 1))

    @classmethod
    def from_rows(cls, l, packing=(), covering=(), equality=()):
        """Build a system from ``(coeffs, rhs)`` pairs per family."""

        def stack(rows):
            rows = list(rows)
            if not rows:
                return np.zeros((0, l)), np.zeros(0)
            return (np.array([np.asarray(r[0], dtype=float) for r in rows]),
                    np.array([float(r[1]) for r in rows]))

        A, b = stack(packing)
        C, d = stack(covering)
        E, f = stack(equality)
        return cls(int(l), A, b, C, d, E, f)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LinearConstraintSystem":
        """Parse the JSON layout ``{"l", "packing": [{"a","b"}], ...}``."""
        if "l" not in data:
            raise ValueError("constraint JSON: missing field 'l'")
        l = data["l"]
        if not isinstance(l, int) or isinstance(l, bool):
            raise ValueError(f"constraint JSON: field 'l' must be an integer, got {l!r}")
        families = {}
        for kind in KINDS:
            ckey, rkey = _RHS_KEY[kind]
            rows = []
            for idx, row in enumerate(data.get(kind, [])):
                if not isinstance(row, dict) or ckey not in row or rkey not in row:
                    raise ValueError(f"constraint JSON: {kind}[{idx}] needs fields "
                                     f"'{ckey}' and '{rkey}'")
                coeffs = row[ckey]
                if not isinstance(coeffs, list) or len(coeffs) != l:
                    raise ValueError(f"constraint JSON: {kind}[{idx}].{ckey} must be a "
                                     f"list of length l={l}")
                rows.append((coeffs, row[rkey]))
            families[kind] = rows
        unknown = set(data) - {"l", *KINDS}
        if unknown:
            raise ValueError(f"constraint JSON: unknown fields {sorted(unknown)}")
        return cls.from_rows(l, families[PACKING], families[COVERING], families[EQUALITY])

    @classmethod
    def from_json(cls, text: str) -> "LinearConstraintSystem":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"l": self.l}
        for kind, (M, v) in self.families().items():
            ckey, rkey = _RHS_KEY[kind]
            out[kind] = [{ckey: row.tolist(), rkey: float(rhs)} for row, rhs in zip(M, v)]
        return out

    def families(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {PACKING: (self.A, self.b), COVERING: (self.C, self.d), EQUALITY: (self.E, self.f)}

    @property
    def n_constraints(self) -> int:
        return len(self.b) + len(self.d) + len(self.f)

    @property
    def n_inequalities(self) -> int:
        return len(self.b) + len(self.d)

    def violation(self, x) -> float:
        """Largest amount by which ``x`` breaks any row (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if len(self.b):
            worst = max(worst, float(np.max(self.A @ x - self.b)))
        if len(self.d):
            worst = max(worst, float(np.max(self.d - self.C @ x)))
        if len(self.f):
            worst = max(worst, float(np.max(np.abs(self.E @ x - self.f))))
        return worst

    def is_satisfied(self, x, atol=0.0) -> bool:
        return self.violation(x) <= atol


@dataclass(frozen=True)
class Violation:
    kind: str
    row: int | None
    rule: str

    def __str__(self):
        where = self.kind if self.row is None else f"{self.kind}[{self.row}]"
        return f"{where}: {self.rule}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_system(system: LinearConstraintSystem) -> ValidationReport:
    """Check the invariants of a constraint system without raising."""
    found = []
    l = system.l
    if l < 1:
        found.append(Violation("system", None, "l must be a positive integer"))
    if system.n_constraints < 1:
        found.append(Violation("system", None, "at least one constraint is required"))
    for kind, (M, v) in system.families().items():
        if M.shape[0] != v.shape[0]:
            found.append(Violation(kind, None, f"{M.shape[0]} coefficient rows but "
                                               f"{v.shape[0]} right-hand sides"))
            continue
        if M.shape[1] != l:
            found.append(Violation(kind, None, f"coefficient rows have length {M.shape[1]}, expected {l}"))
            continue
        for r in range(M.shape[0]):
            row, rhs = M[r], v[r]
            if not (np.all(np.isfinite(row)) and math.isfinite(rhs)):
                found.append(Violation(kind, r, "non-finite value"))
                continue
            if np.any(row < 0):
                found.append(Violation(kind, r, "negative coefficient"))
            if rhs < 0:
                found.append(Violation(kind, r, "negative right-hand side"))
            total = float(row.sum())
            if kind == COVERING and total < rhs:
                found.append(Violation(kind, r, f"Σc < d ({total:g} < {rhs:g})"))
            if kind == EQUALITY and rhs > total:
                found.append(Violation(kind, r, f"f > Σe ({rhs:g} > {total:g})"))
    return ValidationReport(tuple(found))


@dataclass(frozen=True)
class MarginalStack:
    """Stacked marginals ``(U, V)`` for the multi-set Sinkhorn engine.

    ``origin[eta]`` names the constraint ``(kind, row)`` that produced set ``eta``.
    Constraints that cannot bind (covering with ``d = 0``, all-zero rows) keep
    their dummy column but contribute no set.
    """

    l: int
    n_cols: int
    U: np.ndarray
    V: np.ndarray
    h: np.ndarray
    origin: tuple[tuple[str, int], ...]
    dummy_map: dict = field(default_factory=dict)
    gamma: tuple = ()

    @property
    def k(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[1]

    def audit(self) -> list[str]:
        problems = []
        if np.any(self.U < 0) or np.any(self.V < 0):
            problems.append("negative marginal entry")
        for eta in range(self.k):
            su, sv = self.U[eta].sum(), self.V[eta].sum()
            if abs(su - sv) > 4 * np.finfo(float).eps * max(self.h[eta], 1.0):
                problems.append(f"set {eta}: Σu={su!r} != Σv={sv!r}")
        owned = {col: key for key, col in self.dummy_map.items()}
        for eta, key in enumerate(self.origin):
            for col, owner in owned.items():
                if owner != key and self.U[eta, col] != 0:
                    problems.append(f"set {eta} touches dummy column {col} of {owner}")
        return problems


def compile_to_marginals(system: LinearConstraintSystem) -> MarginalStack:
    """Encode every constraint row as one set of marginals.

    Packing ``a.x <= b``:  ``u = [a, b@dummy]``,   ``v = [b, Σa]``.
    Covering ``c.x >= d``: ``u = [c, γd@dummy]``,  ``v = [(γ+1)d, Σc - d]``, ``γ = ⌊Σc/d⌋``.
    Equality ``e.x = f``:  ``u = [e, 0...]``,      ``v = [f, Σe - f]``.
    """
    report = validate_system(system)
    if not report.ok:
        raise InvalidSystemError(report.violations)

    l = system.l
    n_cols = l + system.n_inequalities
    dummy_map = {}
    col = l
    for kind in (PACKING, COVERING):
        for r in range(len(system.families()[kind][1])):
            dummy_map[(kind, r)] = col
            col += 1

    rows_u, rows_v, origin = [], [], []
    gamma = []

    def add(key, coeffs, dummy_val, v):
        u = np.zeros(n_cols)
        u[:l] = coeffs
        if key in dummy_map:
            u[dummy_map[key]] = dummy_val
        if u.sum() == 0.0 and sum(v) == 0.0:
            return
        rows_u.append(u)
        rows_v.append(v)
        origin.append(key)

    for r, (a, b) in enumerate(zip(system.A, system.b)):
        add((PACKING, r), a, b, [b, a.sum()])
    for r, (c, d) in enumerate(zip(system.C, system.d)):
        if d == 0:
            gamma.append(None)
            continue
        g = math.floor(c.sum() / d)
        gamma.append(g)
        add((COVERING, r), c, g * d, [(g + 1) * d, c.sum() - d])
    for r, (e, f) in enumerate(zip(system.E, system.f)):
        add((EQUALITY, r), e, 0.0, [f, e.sum() - f])

    U = np.array(rows_u).reshape(len(rows_u), n_cols)
    V = np.array(rows_v, dtype=float).reshape(len(rows_v), 2)
    for arr in (U, V):
        arr.setflags(write=False)
    h = U.sum(axis=1)
    h.setflags(write=False)
    return MarginalStack(l=l, n_cols=n_cols, U=U, V=V, h=h, origin=tuple(origin),
                         dummy_map=dummy_map, gamma=tuple(gamma))


def plan_from_solution(system: LinearConstraintSystem, stack: MarginalStack, x) -> np.ndarray:
    """Transport plan whose first row carries ``x`` and whose dummies absorb the slack.

    For a feasible ``x`` the returned plan meets every compiled marginal set
    exactly (up to rounding).  Dummy entries are clipped into ``[0, 1]``, so an
    infeasible ``x`` yields a plan that visibly misses its marginals.
    """
    x = np.asarray(x, dtype=float)
    G = np.zeros((2, stack.n_cols))
    G[0, :stack.l] = x
    for (kind, r), col in stack.dummy_map.items():
        if kind == PACKING:
            b = system.b[r]
            val = 1.0 - system.A[r] @ x / b if b > 0 else 0.0
        else:
            g, d = stack.gamma[r], system.d[r]
            val = ((g + 1) * d - system.C[r] @ x) / (g * d) if g else 0.0
        G[0, col] = min(max(val, 0.0), 1.0)
    G[1] = 1.0 - G[0]
    return G
