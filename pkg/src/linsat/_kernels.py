"""Compiled inner loops for the multi-set Sinkhorn forward and backward passes."""

import numpy as np
from numba import njit


@njit(cache=True)
def row_step(G, u, v, floor, den, out):
    """``out = G * v_i / Σ_j G_ij u_j`` on columns with ``u_j > 0``.

    Raw (unfloored) denominators go to ``den``.  Returns the number of rows
    with a positive target and no incoming mass.
    """
    m, n = G.shape
    degenerate = 0
    for i in range(m):
        r = 0.0
        for j in range(n):
            r += G[i, j] * u[j]
        den[i] = r
        if r < floor and v[i] > 0.0:
            degenerate += 1
        scale = v[i] / max(r, floor)
        for j in range(n):
            if u[j] > 0.0:
                out[i, j] = G[i, j] * scale
            else:
                out[i, j] = G[i, j]
    return degenerate


@njit(cache=True)
def col_step(Gp, u, floor, den, out):
    """``out = Gp * u_j / Σ_i Gp_ij u_j`` on columns with ``u_j > 0``."""
    m, n = Gp.shape
    degenerate = 0
    for j in range(n):
        if u[j] > 0.0:
            c = 0.0
            for i in range(m):
                c += Gp[i, j] * u[j]
            den[j] = c
            if c < floor:
                degenerate += 1
            cc = max(c, floor)
            for i in range(m):
                out[i, j] = Gp[i, j] * u[j] / cc
        else:
            den[j] = 0.0
            for i in range(m):
                out[i, j] = Gp[i, j]
    return degenerate


@njit(cache=True)
def set_errors(G, u, v):
    """L1 gaps of one set on ``G``: (row marginals, column masses)."""
    m, n = G.shape
    row_err = 0.0
    for i in range(m):
        r = 0.0
        for j in range(n):
            r += G[i, j] * u[j]
        row_err += abs(r - v[i])
    col_err = 0.0
    for j in range(n):
        c = 0.0
        for i in range(m):
            c += G[i, j] * u[j]
        col_err += abs(c - u[j])
    return row_err, col_err


@njit(cache=True)
def run(G, U, V, floor, tol, max_iters, fixed, snaps, row_dens, col_dens):
    """Cycle over all sets until every set is within ``tol`` (checked per cycle).

    ``G`` is updated in place.  When ``snaps`` has rows, the pre-step plan of
    every row and column step is stored at ``snaps[2p]`` / ``snaps[2p+1]`` for
    pair ``p``, with denominators in ``row_dens[p]`` / ``col_dens[p]``.
    """
    k = U.shape[0]
    m, n = G.shape
    record = snaps.shape[0] > 0
    Gp = np.empty_like(G)
    rden = np.empty(m)
    cden = np.empty(n)
    errors = np.zeros((k, 2))
    degenerate = np.zeros(k, dtype=np.int64)
    iters = 0
    p = 0
    for it in range(max_iters):
        for eta in range(k):
            if record:
                snaps[2 * p] = G
            degenerate[eta] += row_step(G, U[eta], V[eta], floor, rden, Gp)
            if record:
                snaps[2 * p + 1] = Gp
                row_dens[p] = rden
            degenerate[eta] += col_step(Gp, U[eta], floor, cden, G)
            if record:
                col_dens[p] = cden
            p += 1
        iters = it + 1
        worst = 0.0
        for eta in range(k):
            re, ce = set_errors(G, U[eta], V[eta])
            errors[eta, 0] = re
            errors[eta, 1] = ce
            worst = max(worst, max(re, ce))
        if not fixed and worst <= tol:
            break
    return iters, errors, degenerate


@njit(cache=True)
def backward(snaps, row_dens, col_dens, U, V, floor, g):
    """Pull ``g = dL/dΓ_final`` back through every recorded step to ``dL/dΓ0``."""
    k = U.shape[0]
    n_pairs = row_dens.shape[0]
    m, n = g.shape
    g = g.copy()
    gp = np.empty_like(g)
    for p in range(n_pairs - 1, -1, -1):
        eta = p % k
        u = U[eta]
        v = V[eta]
        # column step: Γ = Γ' u_j / C_j
        Gp = snaps[2 * p + 1]
        cden = col_dens[p]
        for j in range(n):
            if u[j] > 0.0:
                c = cden[j]
                cc = max(c, floor)
                dc = 0.0
                if c > floor:
                    for i in range(m):
                        dc -= g[i, j] * Gp[i, j] * u[j] / (cc * cc)
                for i in range(m):
                    gp[i, j] = g[i, j] * u[j] / cc + u[j] * dc
            else:
                for i in range(m):
                    gp[i, j] = g[i, j]
        # row step: Γ' = Γ v_i / R_i
        G = snaps[2 * p]
        rden = row_dens[p]
        for i in range(m):
            r = rden[i]
            rr = max(r, floor)
            dr = 0.0
            if r > floor:
                for j in range(n):
                    if u[j] > 0.0:
                        dr -= gp[i, j] * G[i, j] * v[i] / (rr * rr)
            for j in range(n):
                if u[j] > 0.0:
                    g[i, j] = gp[i, j] * v[i] / rr + u[j] * dr
                else:
                    g[i, j] = gp[i, j]
    return g
