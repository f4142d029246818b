"""Pure NumPy MNA kernels.

Reference implementation of the hot numerical paths: nonlinear DC Newton
iteration, batched complex AC solves, and multi-RHS solves at a single
frequency.  A compiled twin (``_mnacore``) implements the same interface;
:mod:`ampsizer._core` picks one at import time.

Index convention: unknowns 0..n_nodes-1 are node voltages, the rest are
voltage-source branch currents.  Terminal index -1 means ground (0 V).

Element sign conventions (shared with the compiled backend):

* voltage source branch current flows from the + terminal through the
  source to the - terminal, so a battery delivering power has a negative
  branch current;
* current source value is the current flowing from the first terminal
  through the source to the second.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

# dc_newton status codes
DC_OK = 0
DC_NO_CONVERGENCE = 1
DC_SINGULAR = 2

_PIVOT_FLOOR = 1e-300
_MAX_BACKTRACK = 40


def _mos_terminal_eval(vd, vg, vs, beta, vth, lam, sign):
    """Square-law device evaluation at one terminal-voltage triple.

    Returns ``(i_d, g_dd, g_dg, g_ds, id_mag, gm, gds, vdsat)`` where
    ``i_d`` is the current into the drain terminal and ``g_d*`` are its
    partial derivatives w.r.t. the drain/gate/source voltages.  ``id_mag``,
    ``gm`` and ``gds`` are the channel magnitude quantities (>= 0) used for
    operating-point reporting; drain/source roles are swapped internally
    when v_ds < 0 so the expressions stay valid during Newton iterations.
    """
    vgs = sign * (vg - vs)
    vds = sign * (vd - vs)
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
        i_d = sign * idd
        g_dd = gds
        g_dg = gm
        g_ds = -gm - gds
    else:
        i_d = -sign * idd
        g_dd = gm + gds
        g_dg = -gm
        g_ds = -gds
    return i_d, g_dd, g_dg, g_ds, idd, gm, gds, vov


def mos_eval(v, mos_d, mos_g, mos_s, mos_beta, mos_vth, mos_lam, mos_sign):
    """Evaluate every MOS device at the solution vector ``v``.

    Returns arrays ``(i_d, g_dd, g_dg, g_ds, id_mag, gm, gds, vdsat)``
    with one entry per device, in external (terminal) convention for the
    first four and channel-magnitude convention for the rest.
    """
    n = len(mos_d)
    out = np.zeros((8, n), dtype=float)
    for i in range(n):
        vd = v[mos_d[i]] if mos_d[i] >= 0 else 0.0
        vg = v[mos_g[i]] if mos_g[i] >= 0 else 0.0
        vs = v[mos_s[i]] if mos_s[i] >= 0 else 0.0
        out[:, i] = _mos_terminal_eval(
            vd, vg, vs, mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i]
        )
    return tuple(out)


def _residual(
    v,
    n_nodes,
    res_a,
    res_b,
    res_g,
    isrc_a,
    isrc_b,
    isrc_val,
    vsrc_a,
    vsrc_b,
    vsrc_val,
    mos_d,
    mos_g,
    mos_s,
    mos_beta,
    mos_vth,
    mos_lam,
    mos_sign,
    src_scale,
):
    f = np.zeros(len(v), dtype=float)
    for i in range(len(res_a)):
        a, b = res_a[i], res_b[i]
        va = v[a] if a >= 0 else 0.0
        vb = v[b] if b >= 0 else 0.0
        cur = res_g[i] * (va - vb)
        if a >= 0:
            f[a] += cur
        if b >= 0:
            f[b] -= cur
    for i in range(len(isrc_a)):
        a, b = isrc_a[i], isrc_b[i]
        cur = isrc_val[i] * src_scale
        if a >= 0:
            f[a] += cur
        if b >= 0:
            f[b] -= cur
    for k in range(len(vsrc_a)):
        a, b = vsrc_a[k], vsrc_b[k]
        row = n_nodes + k
        ik = v[row]
        va = v[a] if a >= 0 else 0.0
        vb = v[b] if b >= 0 else 0.0
        if a >= 0:
            f[a] += ik
        if b >= 0:
            f[b] -= ik
        f[row] = va - vb - vsrc_val[k] * src_scale
    for i in range(len(mos_d)):
        d, g, s = mos_d[i], mos_g[i], mos_s[i]
        vd = v[d] if d >= 0 else 0.0
        vg = v[g] if g >= 0 else 0.0
        vs = v[s] if s >= 0 else 0.0
        i_d = _mos_terminal_eval(
            vd, vg, vs, mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i]
        )[0]
        if d >= 0:
            f[d] += i_d
        if s >= 0:
            f[s] -= i_d
    return f


def _jacobian(
    v,
    n_nodes,
    res_a,
    res_b,
    res_g,
    vsrc_a,
    vsrc_b,
    mos_d,
    mos_g,
    mos_s,
    mos_beta,
    mos_vth,
    mos_lam,
    mos_sign,
    gmin,
):
    n = len(v)
    jac = np.zeros((n, n), dtype=float)
    for i in range(len(res_a)):
        a, b = res_a[i], res_b[i]
        g = res_g[i]
        if a >= 0:
            jac[a, a] += g
        if b >= 0:
            jac[b, b] += g
        if a >= 0 and b >= 0:
            jac[a, b] -= g
            jac[b, a] -= g
    for k in range(len(vsrc_a)):
        a, b = vsrc_a[k], vsrc_b[k]
        row = n_nodes + k
        if a >= 0:
            jac[a, row] += 1.0
            jac[row, a] += 1.0
        if b >= 0:
            jac[b, row] -= 1.0
            jac[row, b] -= 1.0
    for i in range(len(mos_d)):
        d, g, s = mos_d[i], mos_g[i], mos_s[i]
        vd = v[d] if d >= 0 else 0.0
        vg = v[g] if g >= 0 else 0.0
        vs = v[s] if s >= 0 else 0.0
        _, g_dd, g_dg, g_ds, _, _, _, _ = _mos_terminal_eval(
            vd, vg, vs, mos_beta[i], mos_vth[i], mos_lam[i], mos_sign[i]
        )
        if d >= 0:
            jac[d, d] += g_dd + gmin
            if g >= 0:
                jac[d, g] += g_dg
            if s >= 0:
                jac[d, s] += g_ds - gmin
        if s >= 0:
            if d >= 0:
                jac[s, d] -= g_dd + gmin
            if g >= 0:
                jac[s, g] -= g_dg
            jac[s, s] -= g_ds - gmin
    return jac


def _singular_column(a):
    """First elimination column with no usable pivot (partial pivoting)."""
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    for k in range(n):
        p = int(np.argmax(np.abs(a[k:, k]))) + k
        if abs(a[p, k]) < _PIVOT_FLOOR:
            return k
        if p != k:
            a[[k, p]] = a[[p, k]]
        a[k + 1 :, k:] -= np.outer(a[k + 1 :, k] / a[k, k], a[k, k:])
    return n - 1


def dc_newton(
    n_unknowns,
    n_nodes,
    res_a,
    res_b,
    res_g,
    isrc_a,
    isrc_b,
    isrc_val,
    vsrc_a,
    vsrc_b,
    vsrc_val,
    mos_d,
    mos_g,
    mos_s,
    mos_beta,
    mos_vth,
    mos_lam,
    mos_sign,
    v0,
    src_scale,
    gmin,
    tol,
    max_iter,
):
    """Damped Newton-Raphson on the nonlinear MNA system.

    Returns ``(v, status, iterations, residual, bad_index)``; ``bad_index``
    is the unknown whose pivot vanished when ``status == DC_SINGULAR``,
    else -1.  The Jacobian carries a ``gmin`` drain-source conductance as a
    convergence aid; the residual uses the exact device equations, so the
    converged solution is unaffected.
    """
    args = (
        res_a,
        res_b,
        res_g,
        isrc_a,
        isrc_b,
        isrc_val,
        vsrc_a,
        vsrc_b,
        vsrc_val,
        mos_d,
        mos_g,
        mos_s,
        mos_beta,
        mos_vth,
        mos_lam,
        mos_sign,
    )
    v = np.array(v0, dtype=float, copy=True)
    f = _residual(v, n_nodes, *args, src_scale)
    resid = float(np.max(np.abs(f))) if len(f) else 0.0
    if resid < tol:
        return v, DC_OK, 0, resid, -1
    for it in range(1, max_iter + 1):
        jac = _jacobian(
            v,
            n_nodes,
            res_a,
            res_b,
            res_g,
            vsrc_a,
            vsrc_b,
            mos_d,
            mos_g,
            mos_s,
            mos_beta,
            mos_vth,
            mos_lam,
            mos_sign,
            gmin,
        )
        try:
            delta = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return v, DC_SINGULAR, it, resid, _singular_column(jac)
        if not np.all(np.isfinite(delta)):
            return v, DC_SINGULAR, it, resid, _singular_column(jac)
        step = 1.0
        vt = v + delta
        ft = _residual(vt, n_nodes, *args, src_scale)
        rt = float(np.max(np.abs(ft)))
        for _ in range(_MAX_BACKTRACK):
            if rt < resid or rt < tol:
                break
            step *= 0.5
            vt = v + step * delta
            ft = _residual(vt, n_nodes, *args, src_scale)
            rt = float(np.max(np.abs(ft)))
        v, f, resid = vt, ft, rt
        if resid < tol:
            return v, DC_OK, it, resid, -1
    return v, DC_NO_CONVERGENCE, max_iter, resid, -1


def ac_solve_batch(G, C, omegas, rhs):
    """Solve (G + j*omega*C) x = rhs for every omega.

    Returns ``(X, bad_index)`` with ``X`` of shape (len(omegas), n) and
    ``bad_index`` the first singular frequency index, or -1.
    """
    m = len(omegas)
    n = G.shape[0]
    if n == 0:
        return np.zeros((m, 0), dtype=complex), -1
    A = G[None, :, :] + 1j * np.asarray(omegas)[:, None, None] * C[None, :, :]
    B = np.broadcast_to(rhs.astype(complex), (m, n))
    try:
        X = np.linalg.solve(A, B[:, :, None])[:, :, 0]
        if np.all(np.isfinite(X)):
            return X, -1
    except np.linalg.LinAlgError:
        pass
    # locate the first offending frequency
    X = np.zeros((m, n), dtype=complex)
    for i in range(m):
        try:
            xi = np.linalg.solve(A[i], B[i])
        except np.linalg.LinAlgError:
            return X, i
        if not np.all(np.isfinite(xi)):
            return X, i
        X[i] = xi
    return X, -1


def solve_block(G, C, omega, rhs_block):
    """Solve (G + j*omega*C) x = b for every row b of ``rhs_block``.

    Returns ``(X, singular)``; rows of X correspond to rows of the input.
    """
    n = G.shape[0]
    k = rhs_block.shape[0]
    if n == 0 or k == 0:
        return np.zeros((k, n), dtype=complex), False
    A = G + 1j * omega * C
    try:
        X = np.linalg.solve(A, rhs_block.astype(complex).T).T
    except np.linalg.LinAlgError:
        return np.zeros((k, n), dtype=complex), True
    if not np.all(np.isfinite(X)):
        return np.zeros((k, n), dtype=complex), True
    return np.ascontiguousarray(X), False
