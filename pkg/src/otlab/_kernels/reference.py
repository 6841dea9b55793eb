"""Pure-Python network simplex for the balanced transportation problem.

This is the reference implementation of the hot kernel; `_compiled.pyx` is a
line-for-line Cython twin.  Both follow the exact same pivot rules in the
exact same order, so they produce bit-identical flows, potentials and
iteration counts.

Problem: min <cost, flow> over flow >= 0 with prescribed row sums (supply)
and column sums (demand), sum(supply) == sum(demand).  The basis is a
spanning tree of the bipartite graph (row nodes 0..m-1, column nodes
m..m+n-1); dual node potentials come for free from the tree.

Pivot rules (all deterministic):
  * entering arc: most negative reduced cost, first index on ties; after
    m+n consecutive degenerate pivots, switch to the smallest-index rule
    (Bland) until a non-degenerate pivot occurs, which prevents cycling;
  * leaving arc: minimum flow on the reverse side of the cycle, smallest
    flat index (i*n + j) on ties.
"""

from __future__ import annotations

import numpy as np

from otlab.errors import SolverError

DEGEN_EPS = 1e-15


def ns_solve(cost, supply, demand, max_iter: int = 0):
    """Solve the balanced transportation problem.

    Returns (flow, u, v, iterations): the optimal flow matrix, row and
    column node potentials with u[i] + v[j] == cost[i, j] on basic arcs and
    u[i] + v[j] <= cost[i, j] + tol everywhere, and the pivot count.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    supply = np.ascontiguousarray(supply, dtype=np.float64)
    demand = np.ascontiguousarray(demand, dtype=np.float64)
    m, n = cost.shape
    nodes = m + n
    nb = m + n - 1
    if max_iter <= 0:
        max_iter = 200 * nodes * nodes + 1000
    opt_tol = 1e-12 * (1.0 + float(np.max(np.abs(cost))))

    flow = np.zeros((m, n))
    basis_i = np.zeros(nb, dtype=np.int64)
    basis_j = np.zeros(nb, dtype=np.int64)
    slot = np.full((m, n), -1, dtype=np.int64)  # arc -> slot in the basis list
    in_basis = np.zeros((m, n), dtype=bool)

    # Northwest-corner start: a staircase path, hence a spanning tree.
    s = supply.copy()
    d = demand.copy()
    i = j = 0
    for k in range(nb):
        basis_i[k] = i
        basis_j[k] = j
        slot[i, j] = k
        in_basis[i, j] = True
        x = s[i] if s[i] <= d[j] else d[j]
        flow[i, j] = x
        s[i] -= x
        d[j] -= x
        if k == nb - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif s[i] <= d[j]:
            i += 1
        else:
            j += 1

    parent = np.zeros(nodes, dtype=np.int64)
    depth = np.zeros(nodes, dtype=np.int64)
    order = np.zeros(nodes, dtype=np.int64)
    u = np.zeros(m)
    v = np.zeros(n)
    head = np.zeros(nodes, dtype=np.int64)
    nxt = np.zeros(2 * nb, dtype=np.int64)
    dst = np.zeros(2 * nb, dtype=np.int64)

    # cycle scratch (a cycle visits each node at most once)
    cyc_i = np.zeros(nodes, dtype=np.int64)
    cyc_j = np.zeros(nodes, dtype=np.int64)
    cyc_s = np.zeros(nodes, dtype=np.float64)

    iters = 0
    degen_run = 0
    while True:
        # --- rebuild tree adjacency (prepend, so traversal order is fixed)
        head[:] = -1
        for k in range(nb):
            a = basis_i[k]
            b = m + basis_j[k]
            e = 2 * k
            dst[e] = b
            nxt[e] = head[a]
            head[a] = e
            e = 2 * k + 1
            dst[e] = a
            nxt[e] = head[b]
            head[b] = e

        # --- potentials by BFS from row node 0 (u[0] = 0)
        parent[0] = -1
        depth[0] = 0
        u[0] = 0.0
        order[0] = 0
        cnt = 1
        qh = 0
        while qh < cnt:
            t = order[qh]
            qh += 1
            e = head[t]
            while e != -1:
                w = dst[e]
                if w != parent[t]:
                    parent[w] = t
                    depth[w] = depth[t] + 1
                    if t < m:
                        v[w - m] = cost[t, w - m] - u[t]
                    else:
                        u[w] = cost[w, t - m] - v[t - m]
                    order[cnt] = w
                    cnt += 1
                e = nxt[e]

        # --- entering arc
        rc = cost - u[:, None] - v[None, :]
        rc[in_basis] = np.inf
        rc_flat = rc.ravel()
        if degen_run >= nodes:  # Bland mode: first improving index
            cand = np.nonzero(rc_flat < -opt_tol)[0]
            if cand.size == 0:
                break
            enter = int(cand[0])
        else:
            enter = int(np.argmin(rc_flat))
            if not rc_flat[enter] < -opt_tol:
                break
        ei = enter // n
        ej = enter - ei * n

        # --- cycle: walk both endpoints of the entering arc up to their LCA;
        # signs alternate starting at -1 on each side (the entering arc is +1)
        a = ei
        b = m + ej
        ncyc = 0
        sa = -1.0
        sb = -1.0
        while a != b:
            if depth[a] >= depth[b]:
                pa = parent[a]
                if a < m:
                    cyc_i[ncyc] = a
                    cyc_j[ncyc] = pa - m
                else:
                    cyc_i[ncyc] = pa
                    cyc_j[ncyc] = a - m
                cyc_s[ncyc] = sa
                sa = -sa
                ncyc += 1
                a = pa
            else:
                pb = parent[b]
                if b < m:
                    cyc_i[ncyc] = b
                    cyc_j[ncyc] = pb - m
                else:
                    cyc_i[ncyc] = pb
                    cyc_j[ncyc] = b - m
                cyc_s[ncyc] = sb
                sb = -sb
                ncyc += 1
                b = pb

        # --- leaving arc: min flow on the minus side, smallest index on ties
        theta = np.inf
        leave_idx = -1
        leave_t = -1
        for t in range(ncyc):
            if cyc_s[t] < 0.0:
                ft = flow[cyc_i[t], cyc_j[t]]
                idx = cyc_i[t] * n + cyc_j[t]
                if ft < theta or (ft == theta and idx < leave_idx):
                    theta = ft
                    leave_idx = idx
                    leave_t = t
        li = cyc_i[leave_t]
        lj = cyc_j[leave_t]

        # --- apply the pivot
        flow[ei, ej] += theta
        for t in range(ncyc):
            flow[cyc_i[t], cyc_j[t]] += cyc_s[t] * theta
        flow[li, lj] = 0.0
        k = slot[li, lj]
        slot[li, lj] = -1
        in_basis[li, lj] = False
        basis_i[k] = ei
        basis_j[k] = ej
        slot[ei, ej] = k
        in_basis[ei, ej] = True

        iters += 1
        if theta <= DEGEN_EPS:
            degen_run += 1
        else:
            degen_run = 0
        if iters >= max_iter:
            raise SolverError(f"network simplex exceeded {max_iter} pivots")

    return flow, u, v, iters
