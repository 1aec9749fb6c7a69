"""Pure-Python fallback for the compiled kernels in ``_ckernels.pyx``.

Same algorithms and signatures; row and column updates are vectorised
with numpy but the rotation and site loops run in the interpreter.
"""
import math
from collections import deque

import numpy as np


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    a = np.array(A, dtype=np.complex128, copy=True)
    d = a.shape[0]
    v = np.eye(d, dtype=np.complex128)
    thresh = tol * max(1.0, float(np.linalg.norm(a)))
    offmask = ~np.eye(d, dtype=bool)
    sweep = 0
    while sweep < max_sweeps:
        off = math.sqrt(float(np.sum(np.abs(a[offmask]) ** 2))) if d > 1 else 0.0
        if off < thresh:
            break
        sweep += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                g = abs(apq)
                if g < 1e-300:
                    continue
                e = apq / g
                ec = e.conjugate()
                ap = a[p, p].real
                aq = a[q, q].real
                zeta = (aq - ap) / (2.0 * g)
                if zeta >= 0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                x = a[:, p].copy()
                y = a[:, q]
                a[:, p] = c * x - s * ec * y
                a[:, q] = s * x + c * ec * y
                x = a[p, :].copy()
                y = a[q, :]
                a[p, :] = c * x - s * e * y
                a[q, :] = s * x + c * e * y
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = ap - t * g
                a[q, q] = aq + t * g
                x = v[:, p].copy()
                y = v[:, q]
                v[:, p] = c * x - s * ec * y
                v[:, q] = s * x + c * ec * y
    w = np.real(np.diag(a)).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order], sweep


def ml_decode_batch(books, ys, logw):
    books = np.asarray(books, dtype=np.uint8)
    ys = np.asarray(ys, dtype=np.uint8)
    logw = np.asarray(logw, dtype=np.float64)
    nx, ny = logw.shape
    flat = logw.ravel()
    isneg = np.isneginf(flat)
    fin = np.where(isneg, 0.0, flat)
    T = ys.shape[0]
    out = np.zeros(T, dtype=np.int64)
    for t in range(T):
        b = books[t] if books.shape[0] > 1 else books[0]
        idx = b.astype(np.int64) * ny + ys[t].astype(np.int64)[None, :]
        cnt = np.zeros((b.shape[0], nx * ny), dtype=np.int64)
        for j in range(nx * ny):
            cnt[:, j] = np.count_nonzero(idx == j, axis=1)
        ninf = cnt[:, isneg].sum(axis=1)
        # fixed summation order so equal count rows give equal scores
        sc = np.zeros(b.shape[0])
        for j in range(nx * ny):
            if not isneg[j]:
                sc = sc + cnt[:, j] * fin[j]
        best = 0
        for m in range(1, b.shape[0]):
            if ninf[m] < ninf[best] or (ninf[m] == ninf[best] and sc[m] > sc[best]):
                best = m
        out[t] = best
    return out


def binary_count_dp(p_one):
    p_one = np.asarray(p_one, dtype=np.float64)
    dp = np.zeros(p_one.size + 1)
    dp[0] = 1.0
    for i, p in enumerate(p_one):
        dp[1 : i + 2] = dp[1 : i + 2] * (1.0 - p) + dp[0 : i + 1] * p
        dp[0] *= 1.0 - p
    return dp


def transport_simplex(supply, demand, cost, max_iter=1000000):
    """Transportation simplex (u-v potentials, Dantzig pricing)."""
    s = np.asarray(supply, dtype=np.float64).copy()
    d = np.asarray(demand, dtype=np.float64).copy()
    C = np.asarray(cost, dtype=np.float64)
    m, k = C.shape
    d *= s.sum() / d.sum()
    flow = np.zeros((m, k))
    rows_adj = [set() for _ in range(m)]
    cols_adj = [set() for _ in range(k)]

    # northwest corner: exactly m + k - 1 basic cells forming a tree
    i = j = 0
    rs, cd = s.copy(), d.copy()
    while True:
        x = min(rs[i], cd[j])
        flow[i, j] = x
        rows_adj[i].add(j)
        cols_adj[j].add(i)
        rs[i] -= x
        cd[j] -= x
        if i == m - 1 and j == k - 1:
            break
        if j == k - 1 or (i < m - 1 and rs[i] <= cd[j]):
            i += 1
        else:
            j += 1

    it = 0
    while it < max_iter:
        u = np.full(m, np.nan)
        v = np.full(k, np.nan)
        u[0] = 0.0
        queue = deque([("r", 0)])
        while queue:
            kind, a = queue.popleft()
            if kind == "r":
                for b in rows_adj[a]:
                    if np.isnan(v[b]):
                        v[b] = C[a, b] - u[a]
                        queue.append(("c", b))
            else:
                for b in cols_adj[a]:
                    if np.isnan(u[b]):
                        u[b] = C[b, a] - v[a]
                        queue.append(("r", b))
        red = C - u[:, None] - v[None, :]
        flat = int(np.argmin(red))
        ei, ej = divmod(flat, k)
        if red[ei, ej] >= -1e-9:
            break
        it += 1
        # tree path from row ei to column ej
        parent = {("r", ei): None}
        queue = deque([("r", ei)])
        target = ("c", ej)
        while queue:
            node = queue.popleft()
            if node == target:
                break
            kind, a = node
            nbrs = [("c", b) for b in rows_adj[a]] if kind == "r" else [("r", b) for b in cols_adj[a]]
            for nb in nbrs:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        path = []
        node = target
        while parent[node] is not None:
            prev = parent[node]
            cell = (prev[1], node[1]) if prev[0] == "r" else (node[1], prev[1])
            path.append(cell)
            node = prev
        # path runs from the column end; signs alternate starting with minus
        minus = path[0::2]
        plus = path[1::2]
        theta_cell = min(minus, key=lambda c: (flow[c], c))
        theta = flow[theta_cell]
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        rows_adj[theta_cell[0]].discard(theta_cell[1])
        cols_adj[theta_cell[1]].discard(theta_cell[0])
        rows_adj[ei].add(ej)
        cols_adj[ej].add(ei)
    flow = np.clip(flow, 0.0, None)
    return float(np.sum(flow * C)), flow, it
