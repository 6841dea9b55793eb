# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython twin of `reference.ns_solve`.

Same algorithm, same pivot rules, same order of floating-point operations,
so flows, potentials and iteration counts are bit-identical to the pure
Python kernel (which remains the readable specification of the algorithm).
"""

import numpy as np

from otlab.errors import SolverError

DEF DEGEN_EPS = 1e-15

cdef double INF = float("inf")


def ns_solve(cost, supply, demand, int max_iter=0):
    """Solve the balanced transportation problem; see `reference.ns_solve`."""
    cost_arr = np.ascontiguousarray(cost, dtype=np.float64)
    supply_arr = np.ascontiguousarray(supply, dtype=np.float64)
    demand_arr = np.ascontiguousarray(demand, dtype=np.float64)

    cdef double[:, ::1] c = cost_arr
    cdef Py_ssize_t m = c.shape[0]
    cdef Py_ssize_t n = c.shape[1]
    cdef Py_ssize_t nodes = m + n
    cdef Py_ssize_t nb = m + n - 1
    if max_iter <= 0:
        max_iter = 200 * nodes * nodes + 1000
    cdef double opt_tol = 1e-12 * (1.0 + float(np.max(np.abs(cost_arr))))

    flow_arr = np.zeros((m, n))
    cdef double[:, ::1] flow = flow_arr
    basis_i_arr = np.zeros(nb, dtype=np.int64)
    basis_j_arr = np.zeros(nb, dtype=np.int64)
    slot_arr = np.full((m, n), -1, dtype=np.int64)
    in_basis_arr = np.zeros((m, n), dtype=np.uint8)
    cdef long long[::1] basis_i = basis_i_arr
    cdef long long[::1] basis_j = basis_j_arr
    cdef long long[:, ::1] slot = slot_arr
    cdef unsigned char[:, ::1] in_basis = in_basis_arr

    cdef double[::1] s = supply_arr.copy()
    cdef double[::1] d = demand_arr.copy()
    cdef Py_ssize_t i = 0, j = 0, k
    cdef double x

    for k in range(nb):
        basis_i[k] = i
        basis_j[k] = j
        slot[i, j] = k
        in_basis[i, j] = 1
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

    parent_arr = np.zeros(nodes, dtype=np.int64)
    depth_arr = np.zeros(nodes, dtype=np.int64)
    order_arr = np.zeros(nodes, dtype=np.int64)
    u_arr = np.zeros(m)
    v_arr = np.zeros(n)
    head_arr = np.zeros(nodes, dtype=np.int64)
    nxt_arr = np.zeros(2 * nb, dtype=np.int64)
    dst_arr = np.zeros(2 * nb, dtype=np.int64)
    cyc_i_arr = np.zeros(nodes, dtype=np.int64)
    cyc_j_arr = np.zeros(nodes, dtype=np.int64)
    cyc_s_arr = np.zeros(nodes)

    cdef long long[::1] parent = parent_arr
    cdef long long[::1] depth = depth_arr
    cdef long long[::1] order = order_arr
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef long long[::1] head = head_arr
    cdef long long[::1] nxt = nxt_arr
    cdef long long[::1] dst = dst_arr
    cdef long long[::1] cyc_i = cyc_i_arr
    cdef long long[::1] cyc_j = cyc_j_arr
    cdef double[::1] cyc_s = cyc_s_arr

    cdef int iters = 0
    cdef Py_ssize_t degen_run = 0
    cdef Py_ssize_t a, b, e, t, w, cnt, qh, ncyc, pa, pb
    cdef Py_ssize_t ei, ej, li, lj, enter, leave_idx, leave_t, idx
    cdef double sa, sb, rc, best, theta, ft

    while True:
        # --- rebuild tree adjacency (prepend, fixed traversal order)
        for t in range(nodes):
            head[t] = -1
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

        # --- potentials by BFS from row node 0
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
                        v[w - m] = c[t, w - m] - u[t]
                    else:
                        u[w] = c[w, t - m] - v[t - m]
                    order[cnt] = w
                    cnt += 1
                e = nxt[e]

        # --- entering arc
        enter = -1
        best = INF
        if degen_run >= nodes:  # Bland mode: first improving index
            for i in range(m):
                for j in range(n):
                    if not in_basis[i, j]:
                        rc = c[i, j] - u[i] - v[j]
                        if rc < -opt_tol:
                            enter = i * n + j
                            break
                if enter != -1:
                    break
            if enter == -1:
                break
        else:
            for i in range(m):
                for j in range(n):
                    if not in_basis[i, j]:
                        rc = c[i, j] - u[i] - v[j]
                        if rc < best:
                            best = rc
                            enter = i * n + j
            if enter == -1 or not best < -opt_tol:
                break
        ei = enter // n
        ej = enter - ei * n

        # --- cycle: both endpoints up to the LCA, signs alternate from -1
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

        # --- leaving arc: min flow on the minus side, smallest index ties
        theta = INF
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
        in_basis[li, lj] = 0
        basis_i[k] = ei
        basis_j[k] = ej
        slot[ei, ej] = k
        in_basis[ei, ej] = 1

        iters += 1
        if theta <= DEGEN_EPS:
            degen_run += 1
        else:
            degen_run = 0
        if iters >= max_iter:
            raise SolverError(f"network simplex exceeded {max_iter} pivots")

    return flow_arr, u_arr, v_arr, iters
