# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror ``aiid._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def jacobi_eigh(A, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi for a Hermitian matrix.

    Returns (eigenvalues descending, eigenvectors as columns, sweeps used).
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] a = np.array(A, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t d = a.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] v = np.eye(d, dtype=np.complex128)
    cdef double complex[:, ::1] am = a
    cdef double complex[:, ::1] vm = v
    cdef Py_ssize_t p, q, k
    cdef int sweep = 0
    cdef double off, fro, thresh, g, ap, aq, zeta, t, c, s
    cdef double complex e, ec, x, y

    fro = 0.0
    for p in range(d):
        for q in range(d):
            fro += cabs2(am[p, q])
    thresh = tol * max(1.0, sqrt(fro))

    with nogil:
        while sweep < max_sweeps:
            off = 0.0
            for p in range(d):
                for q in range(d):
                    if p != q:
                        off += cabs2(am[p, q])
            if sqrt(off) < thresh:
                break
            sweep += 1
            for p in range(d - 1):
                for q in range(p + 1, d):
                    g = sqrt(cabs2(am[p, q]))
                    if g < 1e-300:
                        continue
                    e = am[p, q] / g
                    ec = e.real - 1j * e.imag
                    ap = am[p, p].real
                    aq = am[q, q].real
                    zeta = (aq - ap) / (2.0 * g)
                    if zeta >= 0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(d):
                        x = am[k, p]
                        y = am[k, q]
                        am[k, p] = c * x - s * ec * y
                        am[k, q] = s * x + c * ec * y
                    for k in range(d):
                        x = am[p, k]
                        y = am[q, k]
                        am[p, k] = c * x - s * e * y
                        am[q, k] = s * x + c * e * y
                    am[p, q] = 0.0
                    am[q, p] = 0.0
                    am[p, p] = ap - t * g
                    am[q, q] = aq + t * g
                    for k in range(d):
                        x = vm[k, p]
                        y = vm[k, q]
                        vm[k, p] = c * x - s * ec * y
                        vm[k, q] = s * x + c * ec * y

    w = np.real(np.diag(a)).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order], sweep


def ml_decode_batch(books, ys, logw):
    """Smoothed-ML decoding of many received words.

    books: uint8 [B, M, n] with B in {1, T}; ys: uint8 [T, n];
    logw: float64 [|X|, |Y|] holding log(W + delta), -inf allowed.
    Scores are compared first by the number of -inf terms, then by the
    finite sum; ties go to the smallest message index.
    """
    cdef const cnp.uint8_t[:, :, ::1] bk = np.ascontiguousarray(books, dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] yv = np.ascontiguousarray(ys, dtype=np.uint8)
    cdef const double[:, ::1] lw = np.ascontiguousarray(logw, dtype=np.float64)
    cdef Py_ssize_t T = yv.shape[0], n = yv.shape[1]
    cdef Py_ssize_t nb = bk.shape[0], M = bk.shape[1]
    cdef Py_ssize_t nx = lw.shape[0], ny = lw.shape[1]
    cdef Py_ssize_t t, m, i, j, b, best
    cdef long ninf, best_ninf
    cdef double sc, best_sc, val
    out = np.zeros(T, dtype=np.int64)
    cdef cnp.int64_t[::1] om = out
    cnt_arr = np.zeros(nx * ny, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = cnt_arr
    fin_arr = np.zeros(nx * ny, dtype=np.float64)
    isinf_arr = np.zeros(nx * ny, dtype=np.uint8)
    cdef double[::1] fin = fin_arr
    cdef cnp.uint8_t[::1] isneg = isinf_arr
    for i in range(nx):
        for j in range(ny):
            val = lw[i, j]
            if val == -INFINITY:
                isneg[i * ny + j] = 1
            else:
                fin[i * ny + j] = val
    with nogil:
        for t in range(T):
            b = t if nb > 1 else 0
            best = 0
            best_ninf = 0
            best_sc = -INFINITY
            for m in range(M):
                for j in range(nx * ny):
                    cnt[j] = 0
                for i in range(n):
                    cnt[bk[b, m, i] * ny + yv[t, i]] += 1
                ninf = 0
                sc = 0.0
                for j in range(nx * ny):
                    if cnt[j]:
                        if isneg[j]:
                            ninf += cnt[j]
                        else:
                            sc += cnt[j] * fin[j]
                if m == 0 or ninf < best_ninf or (ninf == best_ninf and sc > best_sc):
                    best = m
                    best_ninf = ninf
                    best_sc = sc
            om[t] = best
    return out


def binary_count_dp(p_one):
    """Law of the number of ones for independent sites with P(1) = p_one[i]."""
    cdef const double[::1] pv = np.ascontiguousarray(p_one, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], i, k
    out = np.zeros(n + 1, dtype=np.float64)
    cdef double[::1] dp = out
    cdef double p, q
    dp[0] = 1.0
    with nogil:
        for i in range(n):
            p = pv[i]
            q = 1.0 - p
            dp[i + 1] = dp[i] * p
            k = i
            while k > 0:
                dp[k] = dp[k] * q + dp[k - 1] * p
                k -= 1
            dp[0] = dp[0] * q
    return out


def transport_simplex(supply, demand, cost, long max_iter=1000000):
    """Transportation simplex (u-v potentials, Dantzig pricing).

    Basis of m + k - 1 cells kept as an edge list; tree adjacency is rebuilt
    each pivot. Returns (value, flow matrix, iterations).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ca = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[:, ::1] C = Ca
    cdef Py_ssize_t m = C.shape[0], k = C.shape[1]
    cdef Py_ssize_t N = m + k, nb = m + k - 1
    cdef double[::1] rs = np.array(supply, dtype=np.float64)
    cdef double[::1] cd = np.array(demand, dtype=np.float64)
    cdef double stot = 0.0, dtot = 0.0
    cdef Py_ssize_t i, j, e, a, b, t, head, tail, node, ei = 0, ej = 0
    for i in range(m):
        stot += rs[i]
    for j in range(k):
        dtot += cd[j]
    for j in range(k):
        cd[j] *= stot / dtot

    cdef Py_ssize_t[::1] bi = np.zeros(nb, dtype=np.intp)
    cdef Py_ssize_t[::1] bj = np.zeros(nb, dtype=np.intp)
    cdef double[::1] fl = np.zeros(nb)
    cdef Py_ssize_t[::1] deg = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] adj_node = np.zeros(2 * nb, dtype=np.intp)
    cdef Py_ssize_t[::1] adj_edge = np.zeros(2 * nb, dtype=np.intp)
    cdef Py_ssize_t[::1] fill = np.zeros(N, dtype=np.intp)
    cdef Py_ssize_t[::1] queue = np.zeros(N, dtype=np.intp)
    cdef Py_ssize_t[::1] par_edge = np.zeros(N, dtype=np.intp)
    cdef char[::1] seen = np.zeros(N, dtype=np.int8)
    cdef double[::1] pot = np.zeros(N)
    cdef Py_ssize_t[::1] cyc = np.zeros(N, dtype=np.intp)
    cdef double x, best, r, theta
    cdef Py_ssize_t ncyc, leave
    cdef long it = 0

    # northwest corner start also yields a spanning tree
    i = 0
    j = 0
    e = 0
    while True:
        x = rs[i] if rs[i] < cd[j] else cd[j]
        bi[e] = i
        bj[e] = j
        fl[e] = x
        e += 1
        rs[i] -= x
        cd[j] -= x
        if i == m - 1 and j == k - 1:
            break
        if j == k - 1 or (i < m - 1 and rs[i] <= cd[j]):
            i += 1
        else:
            j += 1

    while it < max_iter:
        # adjacency in CSR form, rows are nodes 0..m-1, columns m..m+k-1
        for a in range(N + 1):
            deg[a] = 0
        for e in range(nb):
            deg[bi[e] + 1] += 1
            deg[m + bj[e] + 1] += 1
        for a in range(N):
            deg[a + 1] += deg[a]
            fill[a] = deg[a]
        for e in range(nb):
            a = bi[e]
            b = m + bj[e]
            adj_node[fill[a]] = b
            adj_edge[fill[a]] = e
            fill[a] += 1
            adj_node[fill[b]] = a
            adj_edge[fill[b]] = e
            fill[b] += 1
        # potentials u (rows) and v (columns) with u_0 = 0
        for a in range(N):
            seen[a] = 0
        pot[0] = 0.0
        seen[0] = 1
        queue[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            for t in range(deg[node], deg[node + 1]):
                b = adj_node[t]
                if not seen[b]:
                    e = adj_edge[t]
                    pot[b] = C[bi[e], bj[e]] - pot[node]
                    seen[b] = 1
                    queue[tail] = b
                    tail += 1
        best = -1e-9
        ei = -1
        for i in range(m):
            for j in range(k):
                r = C[i, j] - pot[i] - pot[m + j]
                if r < best:
                    best = r
                    ei = i
                    ej = j
        if ei < 0:
            break
        it += 1
        # tree path from row ei to column ej
        for a in range(N):
            seen[a] = 0
        seen[ei] = 1
        par_edge[ei] = -1
        queue[0] = ei
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            if node == m + ej:
                break
            for t in range(deg[node], deg[node + 1]):
                b = adj_node[t]
                if not seen[b]:
                    seen[b] = 1
                    par_edge[b] = adj_edge[t]
                    queue[tail] = b
                    tail += 1
        ncyc = 0
        node = m + ej
        while node != ei:
            e = par_edge[node]
            cyc[ncyc] = e
            ncyc += 1
            node = bi[e] if node >= m else m + bj[e]
        # even positions lose flow, odd positions gain
        leave = cyc[0]
        theta = fl[leave]
        for t in range(0, ncyc, 2):
            e = cyc[t]
            if fl[e] < theta:
                theta = fl[e]
                leave = e
        for t in range(ncyc):
            e = cyc[t]
            if t % 2 == 0:
                fl[e] -= theta
            else:
                fl[e] += theta
        bi[leave] = ei
        bj[leave] = ej
        fl[leave] = theta

    flow = np.zeros((m, k))
    cdef double[:, ::1] F = flow
    cdef double val = 0.0
    for e in range(nb):
        if fl[e] > 0:
            F[bi[e], bj[e]] += fl[e]
            val += fl[e] * C[bi[e], bj[e]]
    return val, flow, it
