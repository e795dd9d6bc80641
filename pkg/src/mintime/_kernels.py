"""Compiled inner loops over tabulated switching-function flows.

A flow table for one direction (sign s = +1 or -1) stores, at nodes
s_k = k*h and for each channel i,

    W[i, k, j] = (sA)^j e^{sA s_k} b_i          j = 0..J-1
    F[i, k]    = int_0^{s_k} e^{sA u} b_i du

so that on [s_k, s_k + h] every quantity is a truncated Taylor series with
h*||A|| <= 1/4 (the remainder is far below double precision).
"""

import numpy as np
from numba import njit

ZERO_REL = 1e-9


@njit(cache=True)
def coeffs(W, i, zeta, kmax, out):
    J = W.shape[2]
    N = W.shape[3]
    for k in range(kmax + 1):
        for j in range(J):
            acc = 0.0
            for n in range(N):
                acc += zeta[n] * W[i, k, j, n]
            out[k, j] = acc


@njit(cache=True)
def gder(c, h, invfact, s, m, kmax):
    """m-th derivative of the switching function at s from coefficients c."""
    k = int(s / h)
    if k > kmax:
        k = kmax
    if k < 0:
        k = 0
    d = s - k * h
    J = c.shape[1]
    acc = 0.0
    for j in range(J - 1 - m, -1, -1):
        acc = acc * d + c[k, j + m] * invfact[j]
    return acc


@njit(cache=True)
def antider(W, F, i, h, invfact, s, kmax, out):
    k = int(s / h)
    if k > kmax:
        k = kmax
    if k < 0:
        k = 0
    d = s - k * h
    J = W.shape[2]
    N = W.shape[3]
    for n in range(N):
        out[n] = F[i, k, n]
    p = d
    for j in range(J):
        coef = p * invfact[j + 1]
        for n in range(N):
            out[n] += coef * W[i, k, j, n]
        p *= d


@njit(cache=True)
def _refine(c, h, invfact, m, kmax, a, b, fa):
    """Root of the m-th derivative in [a, b] given a sign change; bisection then safeguarded Newton."""
    lo = a
    hi = b
    flo = fa
    width = 1e-3 * (b - a)
    for _ in range(200):
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        fm = gder(c, h, invfact, mid, m, kmax)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo = mid
            flo = fm
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(60):
        fx = gder(c, h, invfact, x, m, kmax)
        if fx == 0.0:
            return x
        if (fx > 0.0) == (flo > 0.0):
            lo = x
            flo = fx
        else:
            hi = x
        dfx = gder(c, h, invfact, x, m + 1, kmax)
        xn = x - fx / dfx if dfx != 0.0 else 0.5 * (lo + hi)
        eps = 4e-16 * max(1.0, abs(x))
        if abs(xn - x) <= eps and lo - eps <= xn <= hi + eps:
            return xn
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        if hi - lo <= eps:
            return xn
        x = xn
    return x


@njit(cache=True)
def _polish(c, h, invfact, m, kmax, p, v, t):
    # a near-zero breakpoint of a simple root moves by at most a tiny Newton step
    for _ in range(3):
        if v == 0.0:
            break
        d = gder(c, h, invfact, p, m + 1, kmax)
        if d == 0.0:
            break
        step = v / d
        if abs(step) > 1e-6 * max(1.0, t):
            break
        pn = p - step
        if pn < 0.0 or pn > t:
            break
        p = pn
        v = gder(c, h, invfact, p, m, kmax)
    return p


@njit(cache=True)
def isolate(c, h, invfact, t, top, kmax):
    """All zeros of the switching function on [0, t].

    Recursive isolation from the top derivative down.  The top level is
    bracketed on the uniform grid of step h; below it, g^(m) is monotone
    between consecutive zeros of g^(m+1), so those zeros together with 0 and
    t are the only breakpoints needed and each piece holds at most one root.
    Tangential zeros show up as breakpoints where |g^(m)| falls below
    ZERO_REL * max|g^(m)| (the maximum over breakpoints is the maximum on
    [0, t] because the breakpoints include every critical point).
    """
    ng = int(t / h)
    if ng * h >= t:
        ng -= 1
    tiny = 1e-14 * max(1.0, t)
    crit = np.empty(0)
    for m in range(top, -1, -1):
        if m == top:
            nb = ng + 2
            brk = np.empty(nb)
            vals = np.empty(nb)
            for q in range(ng + 1):
                brk[q] = q * h
                vals[q] = c[q, m]
            brk[ng + 1] = t
            vals[ng + 1] = gder(c, h, invfact, t, m, kmax)
        else:
            nc = crit.shape[0]
            brk = np.empty(nc + 2)
            nb = 0
            brk[0] = 0.0
            nb = 1
            for q in range(nc):
                if crit[q] - brk[nb - 1] > tiny and crit[q] < t - tiny:
                    brk[nb] = crit[q]
                    nb += 1
            brk[nb] = t
            nb += 1
            vals = np.empty(nb)
            for q in range(nb):
                vals[q] = gder(c, h, invfact, brk[q], m, kmax)
        scale = 0.0
        for q in range(nb):
            if abs(vals[q]) > scale:
                scale = abs(vals[q])
        if scale == 0.0:
            crit = np.empty(0)
            continue
        eps = ZERO_REL * scale
        out = np.empty(nb + 1)
        no = 0
        for q in range(nb):
            va = vals[q]
            if abs(va) <= eps:
                p = _polish(c, h, invfact, m, kmax, brk[q], va, t)
                if no == 0 or p - out[no - 1] > tiny:
                    out[no] = p
                    no += 1
                continue
            if q + 1 < nb:
                vb = vals[q + 1]
                if abs(vb) > eps and va * vb < 0.0:
                    r = _refine(c, h, invfact, m, kmax, brk[q], brk[q + 1], va)
                    if no == 0 or r - out[no - 1] > tiny:
                        out[no] = r
                        no += 1
        crit = out[:no]
    return crit


@njit(cache=True)
def channel_zeros(W, h, invfact, i, zeta, t, top):
    kmax = min(int(t / h) + 1, W.shape[1] - 1)
    c = np.empty((kmax + 1, W.shape[2]))
    coeffs(W, i, zeta, kmax, c)
    return isolate(c, h, invfact, t, top, kmax), c, kmax


@njit(cache=True)
def gder_many(c, h, invfact, ts, m, kmax):
    out = np.empty(ts.shape[0])
    for q in range(ts.shape[0]):
        out[q] = gder(c, h, invfact, ts[q], m, kmax)
    return out


@njit(cache=True)
def _vec_at(W, i, h, invfact, s, kmax, out):
    k = int(s / h)
    if k > kmax:
        k = kmax
    d = s - k * h
    J = W.shape[2]
    N = W.shape[3]
    for n in range(N):
        out[n] = 0.0
    p = 1.0
    for j in range(J):
        coef = p * invfact[j]
        for n in range(N):
            out[n] += coef * W[i, k, j, n]
        p *= d


@njit(cache=True)
def _endpoint_core(W, F, h, invfact, zeta, t, top, E, D, want_d):
    M = W.shape[0]
    K1 = W.shape[1]
    J = W.shape[2]
    N = W.shape[3]
    for n in range(N):
        E[n] = 0.0
    if want_d:
        for n in range(N):
            for q in range(N):
                D[n, q] = 0.0
    if t <= 0.0:
        return 0.0
    kmax = min(int(t / h) + 1, K1 - 1)
    c = np.empty((kmax + 1, J))
    Fa = np.empty(N)
    Fb = np.empty(N)
    v = np.empty(N)
    sigma = 0.0
    for i in range(M):
        coeffs(W, i, zeta, kmax, c)
        z = isolate(c, h, invfact, t, top, kmax)
        a = 0.0
        for n in range(N):
            Fa[n] = 0.0
        nz = z.shape[0]
        for q in range(nz + 1):
            if q < nz:
                b = z[q]
                if b <= a or b >= t:
                    continue
            else:
                b = t
            gm = gder(c, h, invfact, 0.5 * (a + b), 0, kmax)
            sgn = 1.0 if gm > 0.0 else (-1.0 if gm < 0.0 else 0.0)
            antider(W, F, i, h, invfact, b, kmax, Fb)
            dot = 0.0
            for n in range(N):
                d = Fb[n] - Fa[n]
                E[n] += sgn * d
                dot += zeta[n] * d
                Fa[n] = Fb[n]
            sigma += abs(dot)
            if want_d and b < t:
                # a simple interior zero moves with zeta: dE/dzeta += 2 v v^T / |g'|
                gp = abs(gder(c, h, invfact, b, 1, kmax))
                if gp > 0.0:
                    _vec_at(W, i, h, invfact, b, kmax, v)
                    w = 2.0 / gp
                    for n in range(N):
                        for r in range(N):
                            D[n, r] += w * v[n] * v[r]
            a = b
    return sigma


@njit(cache=True)
def endpoint(W, F, h, invfact, zeta, t, top, E):
    """E = sum_i int_0^t v_i(s) sign(<zeta, v_i(s)>) ds; returns the support value sum_i int |<zeta, v_i>|."""
    D = np.empty((0, 0))
    return _endpoint_core(W, F, h, invfact, zeta, t, top, E, D, False)


@njit(cache=True)
def endpoint_d(W, F, h, invfact, zeta, t, top, E, D):
    """endpoint plus D = dE/dzeta (zeros at 0 or t and tangential zeros contribute nothing)."""
    return _endpoint_core(W, F, h, invfact, zeta, t, top, E, D, True)


@njit(cache=True)
def support_many(W, F, h, invfact, Z, t, top):
    n = Z.shape[0]
    out = np.empty(n)
    E = np.empty(W.shape[3])
    for q in range(n):
        out[q] = endpoint(W, F, h, invfact, Z[q], t, top, E)
    return out


@njit(cache=True)
def endpoint_many(W, F, h, invfact, Z, t, top):
    n = Z.shape[0]
    out = np.empty((n, W.shape[3]))
    E = np.empty(W.shape[3])
    for q in range(n):
        endpoint(W, F, h, invfact, Z[q], t, top, E)
        out[q] = E
    return out


@njit(cache=True)
def _phi(W, F, h, invfact, x, t, z, top, E):
    sigma = endpoint(W, F, h, invfact, z, t, top, E)
    acc = 0.0
    for n in range(x.shape[0]):
        acc += z[n] * x[n]
    return acc - sigma


@njit(cache=True)
def _phi_d(W, F, h, invfact, x, t, z, top, E, D):
    sigma = endpoint_d(W, F, h, invfact, z, t, top, E, D)
    acc = 0.0
    for n in range(x.shape[0]):
        acc += z[n] * x[n]
    return acc - sigma


@njit(cache=True)
def tangent_basis(z):
    """Orthonormal basis of the complement of the unit vector z (Householder columns)."""
    N = z.shape[0]
    u = z.copy()
    s = 1.0 if z[0] >= 0.0 else -1.0
    u[0] += s
    nu = np.sum(u * u)
    Q = np.eye(N) - (2.0 / nu) * np.outer(u, u)
    return Q[:, 1:].copy()


@njit(cache=True)
def ascend(W, F, h, invfact, x, t, zeta0, top, max_iter, stop_positive):
    """Maximize phi(z) = <z, x> - sigma_t(z) over the unit sphere from zeta0.

    Damped Newton steps in the tangent space: the Euclidean gradient of phi
    is x - E(t, z) and its Hessian is -dE/dz, so on the sphere the step solves
    (U^T D U + max(phi, 0) I + mu I) a = U^T (x - E).  mu grows on rejected
    steps (large mu is a short gradient step) and shrinks on accepted ones.
    Returns (value, z, iterations).
    """
    N = x.shape[0]
    z = zeta0 / np.sqrt(np.sum(zeta0 * zeta0))
    E = np.empty(N)
    D = np.empty((N, N))
    En = np.empty(N)
    Dn = np.empty((N, N))
    val = _phi_d(W, F, h, invfact, x, t, z, top, E, D)
    xn = np.sqrt(np.sum(x * x))
    gscale = 1.0 + xn
    mu = 1e-6 * gscale
    I = np.eye(N - 1)
    it = 0
    for it in range(max_iter):
        if stop_positive and val > 0.0:
            break
        g = x - E
        U = tangent_basis(z)
        b = U.T @ g
        if np.sqrt(np.sum(b * b)) <= 1e-15 * gscale:
            break
        H = U.T @ D @ U
        if val > 0.0:
            H += val * I
        accepted = False
        for _ in range(60):
            a = np.linalg.solve(H + mu * I, b)
            na = np.sqrt(np.sum(a * a))
            if na > 1.0:
                a /= na
            zn = z + U @ a
            zn /= np.sqrt(np.sum(zn * zn))
            vn = _phi_d(W, F, h, invfact, x, t, zn, top, En, Dn)
            if vn >= val + 1e-4 * np.sum(a * b) and vn > val:
                accepted = True
                break
            mu = max(4.0 * mu, 1e-12 * gscale)
        if not accepted:
            break
        improvement = vn - val
        z = zn.copy()
        E[:] = En
        D[:, :] = Dn
        val = vn
        mu = max(0.25 * mu, 1e-14 * gscale)
        if improvement <= 1e-16 * (1.0 + abs(val)):
            break
    return val, z, it


@njit(cache=True)
def gap_global(W, F, h, invfact, x, t, seeds, top, n_refine, max_iter):
    """max over unit z of <z, x> - sigma_t(z): seed scan, then ascent from the best few."""
    ns = seeds.shape[0]
    N = x.shape[0]
    vals = np.empty(ns)
    E = np.empty(N)
    for q in range(ns):
        vals[q] = _phi(W, F, h, invfact, x, t, seeds[q], top, E)
    order = np.argsort(-vals)
    best = -np.inf
    bestz = seeds[order[0]].copy()
    for r in range(min(n_refine, ns)):
        v, z, _ = ascend(W, F, h, invfact, x, t, seeds[order[r]].copy(), top, max_iter, False)
        if v > best:
            best = v
            bestz = z.copy()
    return best, bestz


@njit(cache=True)
def gap_rate(W, h, invfact, zeta, t):
    """d/dt sigma_t(zeta) = sum_i |<zeta, e^{-At} b_i>|."""
    M = W.shape[0]
    J = W.shape[2]
    N = W.shape[3]
    k = min(int(t / h), W.shape[1] - 1)
    d = t - k * h
    acc = 0.0
    for i in range(M):
        g = 0.0
        p = 1.0
        for j in range(J):
            dot = 0.0
            for n in range(N):
                dot += zeta[n] * W[i, k, j, n]
            g += p * invfact[j] * dot
            p *= d
        acc += abs(g)
    return acc


@njit(cache=True)
def gauge_ascent(W, F, h, invfact, x, t, zeta0, top, max_iter):
    """Maximize psi(z) = <z, x> / sigma_t(z) over unit z with <z, x> > 0.

    The superlevel sets {<z, x> >= c sigma_t(z)} are convex cones, so every
    local maximum is global and max psi is the gauge of R_t at x: x lies
    outside R_t exactly when it exceeds 1.  Damped Newton in the tangent
    space with the analytic Hessian (dE/dz = D).  Returns (psi, z, iterations).
    """
    N = x.shape[0]
    xn = np.sqrt(np.sum(x * x))
    z = zeta0 / np.sqrt(np.sum(zeta0 * zeta0))
    if np.sum(z * x) <= 0.0:
        z = x / xn
    E = np.empty(N)
    D = np.empty((N, N))
    En = np.empty(N)
    Dn = np.empty((N, N))
    sig = endpoint_d(W, F, h, invfact, z, t, top, E, D)
    ax = np.sum(z * x)
    psi = ax / sig
    mu = 1e-8
    I = np.eye(N - 1)
    it = 0
    for it in range(max_iter):
        grad = x / sig - (ax / (sig * sig)) * E
        U = tangent_basis(z)
        b = U.T @ grad
        if np.sqrt(np.sum(b * b)) <= 1e-15 * xn / sig:
            break
        Hn = (np.outer(x, E) + np.outer(E, x)) / (sig * sig) + (ax / (sig * sig)) * D
        Hn -= (2.0 * ax / (sig * sig * sig)) * np.outer(E, E)
        H = U.T @ Hn @ U
        lmin = np.linalg.eigvalsh(H)[0]
        if lmin < 0.0:
            H -= lmin * I
        scale = np.max(np.abs(H)) + np.sqrt(np.sum(b * b)) + 1e-300
        accepted = False
        for _ in range(60):
            a = np.linalg.solve(H + (mu + 1e-13) * scale * I, b)
            na = np.sqrt(np.sum(a * a))
            if na > 0.5:
                a *= 0.5 / na
            zn = z + U @ a
            zn /= np.sqrt(np.sum(zn * zn))
            axn = np.sum(zn * x)
            if axn > 0.0:
                sn = endpoint_d(W, F, h, invfact, zn, t, top, En, Dn)
                pn = axn / sn
                if pn > psi:
                    accepted = True
                    break
            mu = max(4.0 * mu, 1e-12)
        if not accepted:
            break
        improvement = pn - psi
        z = zn.copy()
        E[:] = En
        D[:, :] = Dn
        sig = sn
        ax = axn
        psi = pn
        mu = max(0.25 * mu, 1e-14)
        if improvement <= 1e-16 * psi:
            break
    return psi, z, it


@njit(cache=True)
def mintime_bisect(W, F, h, invfact, x, tol, top, t_table, t_cap, zeta_warm, t_start):
    """Minimum time from the sign of log g(t), g(t) = max_z <z, x> / sigma_t(z).

    g(t) is the gauge of R_t at x, so g > 1 exactly when x lies outside R_t,
    and local ascent certifies the sign.  A bracket [lo, hi] with
    g(lo) > 1 >= g(hi) comes from doubling t from max(tol, t_start); it is
    then shrunk below tol * max(1, lo), using a Newton step on log g
    (d/dt log g = -sum_i |<z, e^{-At} b_i>| / sigma_t(z) at the maximizer)
    when that step stays well inside the bracket and bisection otherwise.

    Returns (T, zeta, residual, status) with status 0 = converged,
    1 = no bracket below t_cap, 2 = the flow table is too short.  The
    residual is |<zeta, x> - sigma_T(zeta)|.
    """
    N = x.shape[0]
    xn = np.sqrt(np.sum(x * x))
    if xn == 0.0:
        z0 = np.zeros(N)
        z0[0] = 1.0
        return 0.0, z0, 0.0, 0
    warm = zeta_warm.copy()
    if np.sum(warm * warm) == 0.0 or np.sum(warm * x) <= 0.0:
        warm = x / xn
    lo = 0.0
    t = max(tol, t_start)
    hi = -1.0
    glo = np.inf
    while t <= t_cap:
        if t > t_table:
            return t, warm, np.inf, 2
        g, z, _ = gauge_ascent(W, F, h, invfact, x, t, warm, top, 200)
        warm = z
        if g > 1.0:
            lo = t
            glo = g
            t *= 2.0
            continue
        hi = t
        break
    if hi < 0.0:
        return t, warm, np.inf, 1
    p = lo
    if lo > 0.0:
        fp = np.log(glo)
        sig = np.sum(warm * x) / glo
        dp = -gap_rate(W, h, invfact, warm, lo) / sig
    else:
        fp = np.inf
        dp = 0.0
    dx = hi - lo
    dxold = 2.0 * dx
    while hi - lo > tol * max(1.0, lo):
        tw = tol * max(1.0, lo)
        use_newton = False
        if dp < 0.0:
            step = -fp / dp
            c = p + step
            if lo < c < hi and abs(step) < 0.5 * abs(dxold):
                use_newton = True
        if use_newton:
            dxold = dx
            dx = step
            # land slightly across the predicted root so both ends keep moving
            c = p + step + (0.5 * tw if step >= 0.0 else -0.5 * tw)
            if c <= lo or c >= hi:
                c = p + step
        else:
            dxold = dx
            dx = 0.5 * (hi - lo)
            c = 0.5 * (lo + hi)
        g, z, _ = gauge_ascent(W, F, h, invfact, x, c, warm, top, 200)
        if g > 1.0:
            lo = c
        else:
            hi = c
        warm = z
        p = c
        fp = np.log(g)
        sig = np.sum(z * x) / g
        dp = -gap_rate(W, h, invfact, z, c) / sig
    T = 0.5 * (lo + hi)
    g, z, _ = gauge_ascent(W, F, h, invfact, x, T, warm, top, 200)
    sig = np.sum(z * x) / g
    return T, z, abs(sig * (g - 1.0)), 0


@njit(cache=True)
def hyperplane_time(W, F, h, invfact, zeta, target, top, t_table):
    """Smallest r with sigma_r(zeta) = target, or -1 if it exceeds t_table.

    sigma_r(zeta) is nondecreasing in r with slope sum_i |<zeta, e^{-Ar} b_i>|;
    bracketing by doubling, then safeguarded Newton.
    """
    N = W.shape[3]
    E = np.empty(N)
    if target <= 0.0:
        return 0.0
    lo = 0.0
    hi = 0.25
    while endpoint(W, F, h, invfact, zeta, hi, top, E) < target:
        lo = hi
        hi *= 2.0
        if hi > t_table:
            return -1.0
    r = 0.5 * (lo + hi)
    for _ in range(100):
        f = endpoint(W, F, h, invfact, zeta, r, top, E) - target
        if f < 0.0:
            lo = r
        else:
            hi = r
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        d = gap_rate(W, h, invfact, zeta, r)
        rn = r - f / d if d > 0.0 else 0.5 * (lo + hi)
        if not (lo < rn < hi):
            rn = 0.5 * (lo + hi)
        if abs(rn - r) <= 1e-15 * max(1.0, r):
            r = rn
            break
        r = rn
    return r


@njit(cache=True)
def hyperplane_times(W, F, h, invfact, Z, x, top, t_table):
    n = Z.shape[0]
    out = np.empty(n)
    for q in range(n):
        target = 0.0
        for k in range(x.shape[0]):
            target += Z[q, k] * x[k]
        out[q] = hyperplane_time(W, F, h, invfact, Z[q], target, top, t_table) if target > 0.0 else -1.0
    return out


@njit(cache=True)
def hyperplane_ascent(W, F, h, invfact, x, zeta0, top, t_table, max_iter):
    """Increase the hyperplane time r0(z) (sigma_{r0}(z) = <z, x>) over unit z.

    r0(z) <= T(x) for every z, with equality at the supporting normals of
    R_T at x.  Gradient on the sphere: P (x - E(r0, z)) / sum_i |g_i(r0)|.
    Returns (r0, z); r0 = -1 if the table is too short.
    """
    N = x.shape[0]
    E = np.empty(N)
    z = zeta0 / np.sqrt(np.sum(zeta0 * zeta0))
    r = hyperplane_time(W, F, h, invfact, z, np.sum(z * x), top, t_table)
    if r < 0.0:
        return r, z
    alpha = 0.1
    for _ in range(max_iter):
        endpoint(W, F, h, invfact, z, r, top, E)
        rate = gap_rate(W, h, invfact, z, r)
        if rate <= 0.0:
            break
        g = x - E
        if np.sqrt(np.sum(g * g)) <= 1e-5 * (1.0 + np.sqrt(np.sum(x * x))):
            break
        g /= rate
        g -= np.sum(g * z) * z
        gn = np.sqrt(np.sum(g * g))
        if gn <= 1e-14:
            break
        accepted = False
        while alpha > 1e-14:
            zn = z + (alpha / gn) * g
            zn /= np.sqrt(np.sum(zn * zn))
            tgt = np.sum(zn * x)
            if tgt > 0.0:
                rn = hyperplane_time(W, F, h, invfact, zn, tgt, top, t_table)
                if rn > r:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        z = zn
        r = rn
        alpha = min(2.0 * alpha, 0.5)
    return r, z
