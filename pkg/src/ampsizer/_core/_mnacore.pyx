# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled MNA kernels.

Mirrors :mod:`ampsizer._core._mnacore_py` (same functions, arguments,
status codes, and algorithm structure); see that module for the sign
conventions.  Dense LU with partial pivoting is hand-rolled here because
the systems are tiny (tens of unknowns) and per-call overhead dominates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND_NAME = "compiled"

DC_OK = 0
DC_NO_CONVERGENCE = 1
DC_SINGULAR = 2

cdef double _PIVOT_FLOOR = 1e-300
cdef int _MAX_BACKTRACK = 40


cdef struct MosOut:
    double i_d
    double g_dd
    double g_dg
    double g_ds
    double id_mag
    double gm
    double gds
    double vdsat


cdef inline MosOut _mos_terminal_eval(
    double vd, double vg, double vs,
    double beta, double vth, double lam, double sign,
) noexcept nogil:
    cdef MosOut o
    cdef double vgs = sign * (vg - vs)
    cdef double vds = sign * (vd - vs)
    cdef double vgs_i, vds_i, vov, cm, idd, gm, gds
    cdef bint reversed_mode
    if vds >= 0.0:
        reversed_mode = False
        vgs_i = vgs
        vds_i = vds
    else:
        reversed_mode = True
        vgs_i = vgs - vds
        vds_i = -vds
    vov = vgs_i - vth
    if vov <= 0.0:
        idd = 0.0
        gm = 0.0
        gds = 0.0
    elif vds_i >= vov:
        cm = 1.0 + lam * vds_i
        idd = 0.5 * beta * vov * vov * cm
        gm = beta * vov * cm
        gds = 0.5 * beta * vov * vov * lam
    else:
        idd = beta * (vov * vds_i - 0.5 * vds_i * vds_i)
        gm = beta * vds_i
        gds = beta * (vov - vds_i)
    if not reversed_mode:
        o.i_d = sign * idd
        o.g_dd = gds
        o.g_dg = gm
        o.g_ds = -gm - gds
    else:
        o.i_d = -sign * idd
        o.g_dd = gm + gds
        o.g_dg = -gm
        o.g_ds = -gds
    o.id_mag = idd
    o.gm = gm
    o.gds = gds
    o.vdsat = vov
    return o


cdef inline double _vat(double[::1] v, int idx) noexcept nogil:
    if idx >= 0:
        return v[idx]
    return 0.0


def mos_eval(
    double[::1] v,
    int[::1] mos_d, int[::1] mos_g, int[::1] mos_s,
    double[::1] mos_beta, double[::1] mos_vth,
    double[::1] mos_lam, double[::1] mos_sign,
):
    cdef int n = mos_d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((8, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef MosOut m
    cdef int i
    for i in range(n):
        m = _mos_terminal_eval(
            _vat(v, mos_d[i]), _vat(v, mos_g[i]), _vat(v, mos_s[i]),
            mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i],
        )
        o[0, i] = m.i_d
        o[1, i] = m.g_dd
        o[2, i] = m.g_dg
        o[3, i] = m.g_ds
        o[4, i] = m.id_mag
        o[5, i] = m.gm
        o[6, i] = m.gds
        o[7, i] = m.vdsat
    return tuple(out)


cdef void _residual(
    double[::1] f, double[::1] v, int n_nodes,
    int[::1] res_a, int[::1] res_b, double[::1] res_g,
    int[::1] isrc_a, int[::1] isrc_b, double[::1] isrc_val,
    int[::1] vsrc_a, int[::1] vsrc_b, double[::1] vsrc_val,
    int[::1] mos_d, int[::1] mos_g, int[::1] mos_s,
    double[::1] mos_beta, double[::1] mos_vth,
    double[::1] mos_lam, double[::1] mos_sign,
    double src_scale,
) noexcept nogil:
    cdef int i, k, a, b, d, g, s, row
    cdef double cur, ik
    cdef MosOut m
    for i in range(f.shape[0]):
        f[i] = 0.0
    for i in range(res_a.shape[0]):
        a = res_a[i]
        b = res_b[i]
        cur = res_g[i] * (_vat(v, a) - _vat(v, b))
        if a >= 0:
            f[a] += cur
        if b >= 0:
            f[b] -= cur
    for i in range(isrc_a.shape[0]):
        a = isrc_a[i]
        b = isrc_b[i]
        cur = isrc_val[i] * src_scale
        if a >= 0:
            f[a] += cur
        if b >= 0:
            f[b] -= cur
    for k in range(vsrc_a.shape[0]):
        a = vsrc_a[k]
        b = vsrc_b[k]
        row = n_nodes + k
        ik = v[row]
        if a >= 0:
            f[a] += ik
        if b >= 0:
            f[b] -= ik
        f[row] = _vat(v, a) - _vat(v, b) - vsrc_val[k] * src_scale
    for i in range(mos_d.shape[0]):
        d = mos_d[i]
        g = mos_g[i]
        s = mos_s[i]
        m = _mos_terminal_eval(
            _vat(v, d), _vat(v, g), _vat(v, s),
            mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i],
        )
        if d >= 0:
            f[d] += m.i_d
        if s >= 0:
            f[s] -= m.i_d


cdef void _jacobian(
    double[:, ::1] jac, double[::1] v, int n_nodes,
    int[::1] res_a, int[::1] res_b, double[::1] res_g,
    int[::1] vsrc_a, int[::1] vsrc_b,
    int[::1] mos_d, int[::1] mos_g, int[::1] mos_s,
    double[::1] mos_beta, double[::1] mos_vth,
    double[::1] mos_lam, double[::1] mos_sign,
    double gmin,
) noexcept nogil:
    cdef int i, j, k, a, b, d, g, s, row
    cdef double cond
    cdef MosOut m
    for i in range(jac.shape[0]):
        for j in range(jac.shape[1]):
            jac[i, j] = 0.0
    for i in range(res_a.shape[0]):
        a = res_a[i]
        b = res_b[i]
        cond = res_g[i]
        if a >= 0:
            jac[a, a] += cond
        if b >= 0:
            jac[b, b] += cond
        if a >= 0 and b >= 0:
            jac[a, b] -= cond
            jac[b, a] -= cond
    for k in range(vsrc_a.shape[0]):
        a = vsrc_a[k]
        b = vsrc_b[k]
        row = n_nodes + k
        if a >= 0:
            jac[a, row] += 1.0
            jac[row, a] += 1.0
        if b >= 0:
            jac[b, row] -= 1.0
            jac[row, b] -= 1.0
    for i in range(mos_d.shape[0]):
        d = mos_d[i]
        g = mos_g[i]
        s = mos_s[i]
        m = _mos_terminal_eval(
            _vat(v, d), _vat(v, g), _vat(v, s),
            mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i],
        )
        if d >= 0:
            jac[d, d] += m.g_dd + gmin
            if g >= 0:
                jac[d, g] += m.g_dg
            if s >= 0:
                jac[d, s] += m.g_ds - gmin
        if s >= 0:
            if d >= 0:
                jac[s, d] -= m.g_dd + gmin
            if g >= 0:
                jac[s, g] -= m.g_dg
            jac[s, s] -= m.g_ds - gmin


cdef int _lu_real(double[:, ::1] a, int[::1] piv) noexcept nogil:
    """In-place LU with partial pivoting; returns 1-based failing column or 0."""
    cdef int n = a.shape[0]
    cdef int i, j, k, p
    cdef double amax, tmp, mult
    for k in range(n):
        p = k
        amax = fabs(a[k, k])
        for i in range(k + 1, n):
            if fabs(a[i, k]) > amax:
                amax = fabs(a[i, k])
                p = i
        if amax < _PIVOT_FLOOR:
            return k + 1
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        for i in range(k + 1, n):
            mult = a[i, k] / a[k, k]
            a[i, k] = mult
            for j in range(k + 1, n):
                a[i, j] -= mult * a[k, j]
    return 0


cdef void _lu_solve_real(double[:, ::1] lu, int[::1] piv, double[::1] b) noexcept nogil:
    cdef int n = lu.shape[0]
    cdef int i, j, p
    cdef double tmp, acc
    for i in range(n):
        p = piv[i]
        if p != i:
            tmp = b[i]
            b[i] = b[p]
            b[p] = tmp
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc -= lu[i, j] * b[j]
        b[i] = acc
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, n):
            acc -= lu[i, j] * b[j]
        b[i] = acc / lu[i, i]


cdef inline double _cmag(double complex z) noexcept nogil:
    return fabs(z.real) + fabs(z.imag)


cdef int _lu_complex(double complex[:, ::1] a, int[::1] piv) noexcept nogil:
    cdef int n = a.shape[0]
    cdef int i, j, k, p
    cdef double amax, cand
    cdef double complex tmp, mult
    for k in range(n):
        p = k
        amax = _cmag(a[k, k])
        for i in range(k + 1, n):
            cand = _cmag(a[i, k])
            if cand > amax:
                amax = cand
                p = i
        if amax < _PIVOT_FLOOR:
            return k + 1
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        for i in range(k + 1, n):
            mult = a[i, k] / a[k, k]
            a[i, k] = mult
            for j in range(k + 1, n):
                a[i, j] = a[i, j] - mult * a[k, j]
    return 0


cdef void _lu_solve_complex(
    double complex[:, ::1] lu, int[::1] piv, double complex[::1] b
) noexcept nogil:
    cdef int n = lu.shape[0]
    cdef int i, j, p
    cdef double complex tmp, acc
    for i in range(n):
        p = piv[i]
        if p != i:
            tmp = b[i]
            b[i] = b[p]
            b[p] = tmp
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc = acc - lu[i, j] * b[j]
        b[i] = acc
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, n):
            acc = acc - lu[i, j] * b[j]
        b[i] = acc / lu[i, i]


def dc_newton(
    int n_unknowns,
    int n_nodes,
    int[::1] res_a, int[::1] res_b, double[::1] res_g,
    int[::1] isrc_a, int[::1] isrc_b, double[::1] isrc_val,
    int[::1] vsrc_a, int[::1] vsrc_b, double[::1] vsrc_val,
    int[::1] mos_d, int[::1] mos_g, int[::1] mos_s,
    double[::1] mos_beta, double[::1] mos_vth,
    double[::1] mos_lam, double[::1] mos_sign,
    double[::1] v0,
    double src_scale,
    double gmin,
    double tol,
    int max_iter,
):
    cdef int n = n_unknowns
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_arr = np.array(v0, dtype=np.float64, copy=True)
    cdef double[::1] v = v_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ft_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] ft = ft_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vt_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] vt = vt_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] delta_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] delta = delta_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=2] jac_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] jac = jac_arr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] piv_arr = np.zeros(n, dtype=np.int32)
    cdef int[::1] piv = piv_arr

    cdef int it, i, bt, fail
    cdef double resid, rt, step

    _residual(f, v, n_nodes, res_a, res_b, res_g, isrc_a, isrc_b, isrc_val,
              vsrc_a, vsrc_b, vsrc_val, mos_d, mos_g, mos_s,
              mos_beta, mos_vth, mos_lam, mos_sign, src_scale)
    resid = 0.0
    for i in range(n):
        if fabs(f[i]) > resid:
            resid = fabs(f[i])
    if resid < tol:
        return v_arr, DC_OK, 0, resid, -1

    for it in range(1, max_iter + 1):
        _jacobian(jac, v, n_nodes, res_a, res_b, res_g, vsrc_a, vsrc_b,
                  mos_d, mos_g, mos_s, mos_beta, mos_vth, mos_lam, mos_sign, gmin)
        fail = _lu_real(jac, piv)
        if fail != 0:
            return v_arr, DC_SINGULAR, it, resid, fail - 1
        for i in range(n):
            delta[i] = -f[i]
        _lu_solve_real(jac, piv, delta)

        step = 1.0
        for i in range(n):
            vt[i] = v[i] + delta[i]
        _residual(ft, vt, n_nodes, res_a, res_b, res_g, isrc_a, isrc_b, isrc_val,
                  vsrc_a, vsrc_b, vsrc_val, mos_d, mos_g, mos_s,
                  mos_beta, mos_vth, mos_lam, mos_sign, src_scale)
        rt = 0.0
        for i in range(n):
            if fabs(ft[i]) > rt:
                rt = fabs(ft[i])
        for bt in range(_MAX_BACKTRACK):
            if rt < resid or rt < tol:
                break
            step *= 0.5
            for i in range(n):
                vt[i] = v[i] + step * delta[i]
            _residual(ft, vt, n_nodes, res_a, res_b, res_g, isrc_a, isrc_b, isrc_val,
                      vsrc_a, vsrc_b, vsrc_val, mos_d, mos_g, mos_s,
                      mos_beta, mos_vth, mos_lam, mos_sign, src_scale)
            rt = 0.0
            for i in range(n):
                if fabs(ft[i]) > rt:
                    rt = fabs(ft[i])
        for i in range(n):
            v[i] = vt[i]
            f[i] = ft[i]
        resid = rt
        if resid < tol:
            return v_arr, DC_OK, it, resid, -1
    return v_arr, DC_NO_CONVERGENCE, max_iter, resid, -1


def ac_solve_batch(
    double[:, ::1] G, double[:, ::1] C, double[::1] omegas,
    double complex[::1] rhs,
):
    cdef int m = omegas.shape[0]
    cdef int n = G.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] X_arr = np.zeros((m, n), dtype=np.complex128)
    if n == 0:
        return X_arr, -1
    cdef double complex[:, ::1] X = X_arr
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] A_arr = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] A = A_arr
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] b_arr = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] b = b_arr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] piv_arr = np.zeros(n, dtype=np.int32)
    cdef int[::1] piv = piv_arr
    cdef int w, i, j, fail
    cdef double omega
    for w in range(m):
        omega = omegas[w]
        for i in range(n):
            for j in range(n):
                A[i, j] = G[i, j] + 1j * omega * C[i, j]
            b[i] = rhs[i]
        fail = _lu_complex(A, piv)
        if fail != 0:
            return X_arr, w
        _lu_solve_complex(A, piv, b)
        for i in range(n):
            X[w, i] = b[i]
    return X_arr, -1


def solve_block(
    double[:, ::1] G, double[:, ::1] C, double omega,
    double complex[:, ::1] rhs_block,
):
    cdef int k = rhs_block.shape[0]
    cdef int n = G.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] X_arr = np.zeros((k, n), dtype=np.complex128)
    if n == 0 or k == 0:
        return X_arr, False
    cdef double complex[:, ::1] X = X_arr
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] A_arr = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] A = A_arr
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] b_arr = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] b = b_arr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] piv_arr = np.zeros(n, dtype=np.int32)
    cdef int[::1] piv = piv_arr
    cdef int r, i, j, fail
    for i in range(n):
        for j in range(n):
            A[i, j] = G[i, j] + 1j * omega * C[i, j]
    fail = _lu_complex(A, piv)
    if fail != 0:
        return X_arr, True
    for r in range(k):
        for i in range(n):
            b[i] = rhs_block[r, i]
        _lu_solve_complex(A, piv, b)
        for i in range(n):
            X[r, i] = b[i]
    return X_arr, False
