"""Compiled inner loops for indicator moves and coefficient draws.

All randomness arrives as pre-drawn uniforms/normals so every chain keeps
its own numpy Generator stream.
"""
import math

import numpy as np
from numba import njit

ADD, DELETE, SWAP = 0, 1, 2
P_ADD, P_DELETE, P_SWAP = 0.4, 0.4, 0.2
MIX = 0.9


@njit(cache=True, nogil=True)
def column_log_ml(XtX, Xtr, act, na, s2t, w, Q, z):
    """Log marginal likelihood (up to a set-independent constant) of active set ``act[:na]``.

    The coefficients are integrated out under N(0, w) with residual variance
    ``s2t`` (temperature times conditional variance).  ``Q`` and ``z`` are
    workspaces.  Returns -inf if the Gram matrix is numerically singular.
    """
    if na == 0:
        return 0.0
    inv_w = 1.0 / w
    for a in range(na):
        ia = act[a]
        for b in range(a + 1):
            Q[a, b] = XtX[ia, act[b]] / s2t
        Q[a, a] += inv_w
    logdet = 0.0
    for a in range(na):
        s = Q[a, a]
        for k in range(a):
            s -= Q[a, k] * Q[a, k]
        if not s > 0.0:
            return -np.inf
        d = math.sqrt(s)
        Q[a, a] = d
        logdet += math.log(d)
        for b in range(a + 1, na):
            t = Q[b, a]
            for k in range(a):
                t -= Q[b, k] * Q[a, k]
            Q[b, a] = t / d
    zz = 0.0
    for a in range(na):
        s = Xtr[act[a]] / s2t
        for k in range(a):
            s -= Q[a, k] * z[k]
        z[a] = s / Q[a, a]
        zz += z[a] * z[a]
    return -logdet - 0.5 * na * math.log(w) + 0.5 * zz


@njit(cache=True, nogil=True)
def _type_prob(na, p, kind):
    if na == 0:
        return 1.0 if kind == ADD else 0.0
    if na == p:
        return 1.0 if kind == DELETE else 0.0
    if kind == ADD:
        return P_ADD
    if kind == DELETE:
        return P_DELETE
    return P_SWAP


@njit(cache=True, nogil=True)
def _flip_prior(gvec, v, logodds_k, e, indptr, indices, data):
    """Change in log prior when indicator v flips (incremental MRF form)."""
    r = logodds_k
    if e != 0.0:
        s = 0.0
        for q in range(indptr[v], indptr[v + 1]):
            s += data[q] * gvec[indices[q]]
        r += 2.0 * e * s
    return -r if gvec[v] else r


@njit(cache=True, nogil=True)
def _pick(gvec, offset, p, weights, want, total, count, u_mix, u_pos):
    """Draw a cell with gvec == want: mixture of weight-proportional and uniform."""
    if u_mix < MIX:
        target = u_pos * total
        acc = 0.0
        last = -1
        for k in range(p):
            if gvec[offset + k] == want:
                acc += weights[k]
                last = k
                if acc > target:
                    return k
        return last
    idx = int(u_pos * count)
    if idx >= count:
        idx = count - 1
    c = 0
    for k in range(p):
        if gvec[offset + k] == want:
            if c == idx:
                return k
            c += 1
    return -1


@njit(cache=True, nogil=True)
def _q(weight_k, total, count):
    return MIX * weight_k / total + (1.0 - MIX) / count


@njit(cache=True, nogil=True)
def gamma_column_moves(XtX, Xtr, gvec, offset, p, s2t, w, logodds, e,
                       indptr, indices, data, theta, unif, stats):
    """Run ``len(unif)`` add/delete/swap MH moves on one response's indicators.

    ``gvec`` is the full vectorised indicator array and is updated in
    place; ``theta`` are the proposal propensities for this column.
    ``stats`` accumulates [proposed, accepted] per move type (3 x 2).
    Returns the number of accepted moves.
    """
    act = np.empty(p, dtype=np.int64)
    na = 0
    for k in range(p):
        if gvec[offset + k]:
            act[na] = k
            na += 1
    Q = np.empty((p, p))
    z = np.empty(p)
    cur = column_log_ml(XtX, Xtr, act, na, s2t, w, Q, z)
    prop = np.empty(p, dtype=np.int64)
    n_acc = 0
    for it in range(unif.shape[0]):
        u = unif[it]
        t_in = 0.0
        t_out = 0.0
        for k in range(p):
            if gvec[offset + k]:
                t_out += 1.0 - theta[k]
            else:
                t_in += theta[k]
        pa = _type_prob(na, p, ADD)
        pd = _type_prob(na, p, DELETE)
        if u[0] < pa:
            kind = ADD
        elif u[0] < pa + pd:
            kind = DELETE
        else:
            kind = SWAP
        logq = 0.0
        dprior = 0.0
        if kind == ADD:
            k = _pick(gvec, offset, p, theta, 0, t_in, p - na, u[1], u[2])
            fwd = _type_prob(na, p, ADD) * _q(theta[k], t_in, p - na)
            rev = _type_prob(na + 1, p, DELETE) * _q(1.0 - theta[k], t_out + 1.0 - theta[k], na + 1)
            logq = math.log(rev) - math.log(fwd)
            dprior = _flip_prior(gvec, offset + k, logodds[k], e, indptr, indices, data)
            for a in range(na):
                prop[a] = act[a]
            prop[na] = k
            nb = na + 1
            gvec[offset + k] = 1
        elif kind == DELETE:
            comp = 1.0 - theta
            k = _pick(gvec, offset, p, comp, 1, t_out, na, u[1], u[2])
            fwd = _type_prob(na, p, DELETE) * _q(1.0 - theta[k], t_out, na)
            rev = _type_prob(na - 1, p, ADD) * _q(theta[k], t_in + theta[k], p - na + 1)
            logq = math.log(rev) - math.log(fwd)
            dprior = _flip_prior(gvec, offset + k, logodds[k], e, indptr, indices, data)
            nb = 0
            for a in range(na):
                if act[a] != k:
                    prop[nb] = act[a]
                    nb += 1
            gvec[offset + k] = 0
        else:
            comp = 1.0 - theta
            k = _pick(gvec, offset, p, comp, 1, t_out, na, u[1], u[2])
            k2 = _pick(gvec, offset, p, theta, 0, t_in, p - na, u[4], u[5])
            fwd = _q(1.0 - theta[k], t_out, na) * _q(theta[k2], t_in, p - na)
            t_out2 = t_out - (1.0 - theta[k]) + (1.0 - theta[k2])
            t_in2 = t_in - theta[k2] + theta[k]
            rev = _q(1.0 - theta[k2], t_out2, na) * _q(theta[k], t_in2, p - na)
            logq = math.log(rev) - math.log(fwd)
            dprior = _flip_prior(gvec, offset + k, logodds[k], e, indptr, indices, data)
            gvec[offset + k] = 0
            dprior += _flip_prior(gvec, offset + k2, logodds[k2], e, indptr, indices, data)
            gvec[offset + k2] = 1
            nb = 0
            for a in range(na):
                if act[a] != k:
                    prop[nb] = act[a]
                    nb += 1
            prop[nb] = k2
            nb += 1
        new = column_log_ml(XtX, Xtr, prop, nb, s2t, w, Q, z)
        logr = new - cur + dprior + logq
        stats[kind, 0] += 1
        if math.log(u[3]) < logr:
            stats[kind, 1] += 1
            n_acc += 1
            cur = new
            for a in range(nb):
                act[a] = prop[a]
            na = nb
        else:
            if kind == ADD:
                gvec[offset + k] = 0
            elif kind == DELETE:
                gvec[offset + k] = 1
            else:
                gvec[offset + k] = 1
                gvec[offset + k2] = 0
    return n_acc


@njit(cache=True, nogil=True)
def draw_coefficients(XtX, XtZ, ZtZ, Xtr, Ztr, act, s2t, w, w0, normals, out):
    """Joint Gaussian draw of active slab coefficients and random effects.

    Posterior precision ``[X_A Z]'[X_A Z] / s2t + diag(1/w, 1/w0)`` with
    right-hand side ``[X_A Z]' r / s2t``.  ``out`` receives the draw
    (active coefficients first).  Returns False if Cholesky fails.
    """
    na = act.shape[0]
    T = ZtZ.shape[0]
    d = na + T
    if d == 0:
        return True
    P = np.empty((d, d))
    rhs = np.empty(d)
    for a in range(na):
        ia = act[a]
        for b in range(a + 1):
            P[a, b] = XtX[ia, act[b]] / s2t
        P[a, a] += 1.0 / w
        rhs[a] = Xtr[ia] / s2t
    for t in range(T):
        r = na + t
        for a in range(na):
            P[r, a] = XtZ[act[a], t] / s2t
        for s in range(t + 1):
            P[r, na + s] = ZtZ[t, s] / s2t
        P[r, r] += 1.0 / w0
        rhs[r] = Ztr[t] / s2t
    for a in range(d):
        s = P[a, a]
        for k in range(a):
            s -= P[a, k] * P[a, k]
        if not s > 0.0:
            return False
        dd = math.sqrt(s)
        P[a, a] = dd
        for b in range(a + 1, d):
            t2 = P[b, a]
            for k in range(a):
                t2 -= P[b, k] * P[a, k]
            P[b, a] = t2 / dd
    # mean = L^-T L^-1 rhs, noise = L^-T normals
    z = np.empty(d)
    for a in range(d):
        s = rhs[a]
        for k in range(a):
            s -= P[a, k] * z[k]
        z[a] = s / P[a, a]
    for a in range(d):
        z[a] += normals[a]
    for a in range(d - 1, -1, -1):
        s = z[a]
        for k in range(a + 1, d):
            s -= P[k, a] * out[k]
        out[a] = s / P[a, a]
    return True


@njit(cache=True, nogil=True)
def _column_residual(Y, U, C, offset_fit, j, r):
    """``r = Y[:, j] - offset_fit[:, j] - U @ C[j]`` (C[j, j] is zero)."""
    n, m = U.shape
    for i in range(n):
        s = Y[i, j] - offset_fit[i, j]
        for l in range(m):
            if C[j, l] != 0.0:
                s -= U[i, l] * C[j, l]
        r[i] = s


@njit(cache=True, nogil=True)
def _xt_vec(X, r, out):
    n, p = X.shape
    for k in range(p):
        out[k] = 0.0
    for i in range(n):
        ri = r[i]
        for k in range(p):
            out[k] += X[i, k] * ri


@njit(cache=True, nogil=True)
def gamma_sweep(Y, X, XtX, ZB0, U, C, s2, temp, gvec, B, w, logodds, e,
                indptr, indices, data, theta, unif, normals, stats):
    """Indicator moves for every response in turn, then a coefficient redraw where anything changed.

    ``theta`` and ``logodds`` are (m, p); ``unif`` is (m, moves, 6);
    ``normals`` is (m, p).  ``U`` and ``B`` are updated in place.
    """
    n, m = U.shape
    p = X.shape[1]
    r = np.empty(n)
    Xtr = np.empty(p)
    emp_pz = np.zeros((p, 0))
    emp_zz = np.zeros((0, 0))
    emp_z = np.zeros(0)
    out = np.empty(p)
    total = 0
    for j in range(m):
        _column_residual(Y, U, C, ZB0, j, r)
        _xt_vec(X, r, Xtr)
        s2t = temp * s2[j]
        acc = gamma_column_moves(XtX, Xtr, gvec, j * p, p, s2t, w, logodds[j], e,
                                 indptr, indices, data, theta[j], unif[j], stats)
        total += acc
        if acc:
            na = 0
            for k in range(p):
                if gvec[j * p + k]:
                    na += 1
            act = np.empty(na, dtype=np.int64)
            c = 0
            for k in range(p):
                if gvec[j * p + k]:
                    act[c] = k
                    c += 1
            ok = draw_coefficients(XtX, emp_pz, emp_zz, Xtr, emp_z, act, s2t, w, 1.0,
                                   normals[j], out)
            if not ok:
                return -1
            for k in range(p):
                B[k, j] = 0.0
            for a in range(na):
                B[act[a], j] = out[a]
            for i in range(n):
                s = Y[i, j] - ZB0[i, j]
                for a in range(na):
                    s -= X[i, act[a]] * out[a]
                U[i, j] = s
    return total


@njit(cache=True, nogil=True)
def coefficient_sweep(Y, X, Z, XtX, XtZ, ZtZ, U, C, s2, temp, gvec, B, B0, w, w0, normals):
    """Joint draw of active coefficients and random effects for every response in turn."""
    n, m = U.shape
    p = X.shape[1]
    T = Z.shape[1]
    r = np.empty(n)
    Xtr = np.empty(p)
    Ztr = np.empty(T)
    zero = np.zeros((n, m))
    out = np.empty(p + T)
    for j in range(m):
        _column_residual(Y, U, C, zero, j, r)
        na = 0
        for k in range(p):
            if gvec[j * p + k]:
                na += 1
        act = np.empty(na, dtype=np.int64)
        c = 0
        for k in range(p):
            if gvec[j * p + k]:
                act[c] = k
                c += 1
        for k in range(p):
            B[k, j] = 0.0
        if na + T == 0:
            for i in range(n):
                U[i, j] = Y[i, j]
            continue
        for a in range(na):
            s = 0.0
            ka = act[a]
            for i in range(n):
                s += X[i, ka] * r[i]
            Xtr[ka] = s
        for t in range(T):
            s = 0.0
            for i in range(n):
                s += Z[i, t] * r[i]
            Ztr[t] = s
        ok = draw_coefficients(XtX, XtZ, ZtZ, Xtr, Ztr, act, temp * s2[j], w, w0, normals[j], out)
        if not ok:
            return False
        for a in range(na):
            B[act[a], j] = out[a]
        for t in range(T):
            B0[t, j] = out[na + t]
        for i in range(n):
            s = Y[i, j]
            for a in range(na):
                s -= X[i, act[a]] * out[a]
            for t in range(T):
                s -= Z[i, t] * out[na + t]
            U[i, j] = s
    return True


@njit(cache=True, nogil=True)
def _vertex_chol(S, j, pa, temp, tau, L, z):
    """Cholesky of ``S[pa, pa] / temp + tau I`` into ``L`` and ``z = L^-1 S[pa, j] / temp``.

    Returns (sum of log diagonal of L, residual sum of squares), or a
    NaN residual when the factorisation fails.
    """
    q = pa.shape[0]
    logdiag = 0.0
    for a in range(q):
        for b in range(a + 1):
            L[a, b] = S[pa[a], pa[b]] / temp
        L[a, a] += tau
    for a in range(q):
        s = L[a, a]
        for k in range(a):
            s -= L[a, k] * L[a, k]
        if not s > 0.0:
            return 0.0, np.nan
        d = math.sqrt(s)
        L[a, a] = d
        logdiag += math.log(d)
        for b in range(a + 1, q):
            t = L[b, a]
            for k in range(a):
                t -= L[b, k] * L[a, k]
            L[b, a] = t / d
    R = S[j, j] / temp
    for a in range(q):
        s = S[pa[a], j] / temp
        for k in range(a):
            s -= L[a, k] * z[k]
        z[a] = s / L[a, a]
        R -= z[a] * z[a]
    return logdiag, R


@njit(cache=True, nogil=True)
def vertex_log_ml(S, n, j, pa, shape, tau, temp):
    """Tempered log marginal likelihood of residual j given its parents (see model.vertex_log_ml)."""
    q = pa.shape[0]
    L = np.empty((q, q))
    z = np.empty(q)
    logdiag, R = _vertex_chol(S, j, pa, temp, tau, L, z)
    if math.isnan(R):
        return -np.inf
    half_n = 0.5 * n / temp
    b = 0.5 * tau
    out = (-half_n * math.log(2.0 * math.pi) + shape * math.log(b) - math.lgamma(shape)
           + math.lgamma(shape + half_n))
    if q:
        out += 0.5 * q * math.log(tau) - logdiag
    return out - (shape + half_n) * math.log(b + 0.5 * R)


@njit(cache=True, nogil=True)
def draw_sigma_rho(S, pa_flat, pa_ptr, tau, temp, gammas, normals, sigma2, rho):
    """Conjugate draws given pre-drawn Gamma(shape_j) variates and standard normals.

    Parents of vertex j are ``pa_flat[pa_ptr[j]:pa_ptr[j + 1]]``; ``rho[j, :q]``
    receives its weights.  Returns False if a factorisation fails.
    """
    m = S.shape[0]
    L = np.empty((m, m))
    z = np.empty(m)
    for j in range(m):
        pa = pa_flat[pa_ptr[j]:pa_ptr[j + 1]]
        q = pa.shape[0]
        logdiag, R = _vertex_chol(S, j, pa, temp, tau, L, z)
        if math.isnan(R):
            return False
        if R < 0.0:
            R = 0.0
        s2 = (0.5 * tau + 0.5 * R) / gammas[j]
        sigma2[j] = s2
        sd = math.sqrt(s2)
        # rho = L^-T (z + sd * normals)
        for a in range(q - 1, -1, -1):
            s = z[a] + sd * normals[j, a]
            for k in range(a + 1, q):
                s -= L[k, a] * rho[j, k]
            rho[j, a] = s / L[a, a]
    return True
