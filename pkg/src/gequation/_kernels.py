"""Compiled stencil kernels for the Lax–Friedrichs numerical Hamiltonian.

Each kernel fills ``out`` with the flux at every cell and returns the largest
value of ``sum_i alpha_i / h_i + 2 d_eff sum_i 1 / h_i**2``; the reciprocal of
that rate is the monotonicity limit of an explicit Euler step.

With ``high`` set, the one-sided slopes come from precomputed fifth-order
WENO arrays ``Dm, Dp`` instead of first differences; second derivatives
stay on the three-point stencil.

``velocity_point`` evaluates the analytic catalog flows pointwise for the
characteristic and streamline integrators.

Vectors are always three-component: on 2D grids the third slot carries a
frozen slope (extruded direction) and the matching velocity component.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

INVISCID, VISCOUS, CURVATURE, STRAIN, QUADRATIC = 0, 1, 2, 3, 4
FLOW_CODES = {"zero": 0, "cellular": 1, "abc": 2, "kolmogorov": 3}


@nb.njit(cache=True, inline="always", fastmath=True)
def _cell_flux(variant, d, cutoff, eps, a, adv0, adv1, adv2, S, snorm,
               p0, p1, p2, dm0, dp0, dm1, dp1, dm2, dp2,
               lap, quad_h, h0, h1, h2, ndim):
    g0 = 0.5 * (dm0 + dp0)
    g1 = 0.5 * (dm1 + dp1)
    g2 = 0.5 * (dm2 + dp2)
    q0 = p0 + g0
    q1 = p1 + g1
    q2 = p2 + g2
    qn2 = q0 * q0 + q1 * q1 + q2 * q2
    qn = math.sqrt(qn2)
    advq = adv0 * q0 + adv1 * q1 + adv2 * q2
    inv_h2 = 1.0 / (h0 * h0) + 1.0 / (h1 * h1)
    if ndim == 3:
        inv_h2 += 1.0 / (h2 * h2)
    diff_rate = 0.0
    if variant == QUADRATIC:
        H = d * qn2 + advq
        a0 = 2.0 * d * max(abs(p0 + dm0), abs(p0 + dp0)) + abs(adv0)
        a1 = 2.0 * d * max(abs(p1 + dm1), abs(p1 + dp1)) + abs(adv1)
        a2 = 2.0 * d * max(abs(p2 + dm2), abs(p2 + dp2)) + abs(adv2)
    else:
        if variant == CURVATURE:
            qe2 = qn2 + eps * eps
            qe = math.sqrt(qe2)
            kappa = lap / qe - quad_h / (qe2 * qe)
            s = a * (1.0 - d * kappa)
            diff_rate = 2.0 * d * a * inv_h2
        elif variant == STRAIN:
            qe2 = qn2 + eps * eps
            qSq = (S[0, 0] * q0 * q0 + S[1, 1] * q1 * q1 + S[2, 2] * q2 * q2
                   + 2.0 * (S[0, 1] * q0 * q1 + S[0, 2] * q0 * q2 + S[1, 2] * q1 * q2))
            s = a * (1.0 + d * qSq / qe2)
        else:
            s = a
        if cutoff and s < 0.0:
            s = 0.0
        H = s * qn + advq
        if variant == STRAIN:
            lam = a * (1.0 + 3.0 * d * snorm)
        else:
            lam = abs(s)
        a0 = lam + abs(adv0)
        a1 = lam + abs(adv1)
        a2 = lam + abs(adv2)
        if variant == VISCOUS:
            H -= d * lap
            diff_rate = 2.0 * d * inv_h2
    flux = H - 0.5 * (a0 * (dp0 - dm0) + a1 * (dp1 - dm1))
    rate = a0 / h0 + a1 / h1 + diff_rate
    if ndim == 3:
        flux -= 0.5 * a2 * (dp2 - dm2)
        rate += a2 / h2
    return flux, rate


@nb.njit(cache=True, inline="always", fastmath=True)
def _weno5(a, b, c, d, e):
    s1 = 13.0 / 12.0 * (a - 2 * b + c) ** 2 + 0.25 * (a - 4 * b + 3 * c) ** 2
    s2 = 13.0 / 12.0 * (b - 2 * c + d) ** 2 + 0.25 * (b - d) ** 2
    s3 = 13.0 / 12.0 * (c - 2 * d + e) ** 2 + 0.25 * (3 * c - 4 * d + e) ** 2
    t1 = (1e-6 + s1) * (1e-6 + s1)
    t2 = (1e-6 + s2) * (1e-6 + s2)
    t3 = (1e-6 + s3) * (1e-6 + s3)
    # weights d_k / t_k scaled by t1 t2 t3 to keep a single division
    w1 = 0.1 * t2 * t3
    w2 = 0.6 * t1 * t3
    w3 = 0.3 * t1 * t2
    return (w1 * (a / 3 - 7 * b / 6 + 11 * c / 6) + w2 * (-b / 6 + 5 * c / 6 + d / 3)
            + w3 * (c / 3 + 5 * d / 6 - e / 6)) / (w1 + w2 + w3)


@nb.njit(cache=True, fastmath=True)
def weno2d(v, h0, h1, Dm, Dp):
    """Fifth-order WENO one-sided derivatives of a periodic 2D array, both axes."""
    n0, n1 = v.shape
    D = np.empty((n0, n1))
    for i in range(n0):
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            D[i, j] = (v[ip, j] - v[i, j]) / h0
    for i in range(n0):
        a = D[(i - 3) % n0]
        b = D[(i - 2) % n0]
        c = D[(i - 1) % n0]
        d = D[i]
        e = D[(i + 1) % n0]
        f = D[(i + 2) % n0]
        for j in range(n1):
            Dm[0, i, j] = _weno5(a[j], b[j], c[j], d[j], e[j])
            Dp[0, i, j] = _weno5(f[j], e[j], d[j], c[j], b[j])
    row = np.empty(n1 + 6)
    for i in range(n0):
        for j in range(n1 - 1):
            row[j + 3] = (v[i, j + 1] - v[i, j]) / h1
        row[n1 + 2] = (v[i, 0] - v[i, n1 - 1]) / h1
        for g in range(3):
            row[g] = row[n1 + g]
            row[n1 + 3 + g] = row[3 + g]
        for j in range(n1):
            c = j + 3
            Dm[1, i, j] = _weno5(row[c - 3], row[c - 2], row[c - 1], row[c], row[c + 1])
            Dp[1, i, j] = _weno5(row[c + 2], row[c + 1], row[c], row[c - 1], row[c - 2])


@nb.njit(cache=True, fastmath=True)
def weno3d(v, h0, h1, h2, Dm, Dp):
    """Fifth-order WENO one-sided derivatives of a periodic 3D array, all axes."""
    n0, n1, n2 = v.shape
    for ax in range(3):
        n = v.shape[ax]
        h = h0 if ax == 0 else (h1 if ax == 1 else h2)
        D = np.empty((n0, n1, n2))
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    if ax == 0:
                        D[i, j, k] = (v[(i + 1) % n0, j, k] - v[i, j, k]) / h
                    elif ax == 1:
                        D[i, j, k] = (v[i, (j + 1) % n1, k] - v[i, j, k]) / h
                    else:
                        D[i, j, k] = (v[i, j, (k + 1) % n2] - v[i, j, k]) / h
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    if ax == 0:
                        s = (D[(i - 3) % n, j, k], D[(i - 2) % n, j, k], D[(i - 1) % n, j, k], D[i, j, k],
                             D[(i + 1) % n, j, k], D[(i + 2) % n, j, k])
                    elif ax == 1:
                        s = (D[i, (j - 3) % n, k], D[i, (j - 2) % n, k], D[i, (j - 1) % n, k], D[i, j, k],
                             D[i, (j + 1) % n, k], D[i, (j + 2) % n, k])
                    else:
                        s = (D[i, j, (k - 3) % n], D[i, j, (k - 2) % n], D[i, j, (k - 1) % n], D[i, j, k],
                             D[i, j, (k + 1) % n], D[i, j, (k + 2) % n])
                    Dm[ax, i, j, k] = _weno5(s[0], s[1], s[2], s[3], s[4])
                    Dp[ax, i, j, k] = _weno5(s[5], s[4], s[3], s[2], s[1])


@nb.njit(cache=True, fastmath=True)
def flux2d(v, h0, h1, p, variant, d, cutoff, eps, lam, adv, S, snorm, out, high, Dm, Dp):
    n0, n1 = v.shape
    i0 = 1.0 / h0
    i1 = 1.0 / h1
    rate_max = 0.0
    Sl = np.zeros((3, 3))
    for i in range(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            c = v[i, j]
            if high:
                dm0 = Dm[0, i, j]
                dp0 = Dp[0, i, j]
                dm1 = Dm[1, i, j]
                dp1 = Dp[1, i, j]
            else:
                dm0 = (c - v[im, j]) * i0
                dp0 = (v[ip, j] - c) * i0
                dm1 = (c - v[i, jm]) * i1
                dp1 = (v[i, jp] - c) * i1
            lap = 0.0
            quad_h = 0.0
            if variant == CURVATURE or variant == VISCOUS:
                v00 = (v[ip, j] - 2 * c + v[im, j]) * i0 * i0
                v11 = (v[i, jp] - 2 * c + v[i, jm]) * i1 * i1
                lap = v00 + v11
                if variant == CURVATURE:
                    v01 = (v[ip, jp] - v[ip, jm] - v[im, jp] + v[im, jm]) / (4.0 * h0 * h1)
                    q0 = p[0] + 0.5 * (dm0 + dp0)
                    q1 = p[1] + 0.5 * (dm1 + dp1)
                    quad_h = q0 * q0 * v00 + 2.0 * q0 * q1 * v01 + q1 * q1 * v11
            if variant == STRAIN:
                for a_ in range(3):
                    for b_ in range(3):
                        Sl[a_, b_] = S[a_, b_, i, j]
            fl, r = _cell_flux(variant, d, cutoff, eps, lam[i, j], adv[0, i, j], adv[1, i, j], adv[2, i, j],
                               Sl, snorm[i, j], p[0], p[1], p[2], dm0, dp0, dm1, dp1, 0.0, 0.0,
                               lap, quad_h, h0, h1, 1.0, 2)
            out[i, j] = fl
            if r > rate_max:
                rate_max = r
    return rate_max


@nb.njit(cache=True, fastmath=True)
def flux3d(v, h0, h1, h2, p, variant, d, cutoff, eps, lam, adv, S, snorm, out, high, Dm, Dp):
    n0, n1, n2 = v.shape
    i0 = 1.0 / h0
    i1 = 1.0 / h1
    i2 = 1.0 / h2
    rate_max = 0.0
    Sl = np.zeros((3, 3))
    for i in range(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            for k in range(n2):
                km = k - 1 if k > 0 else n2 - 1
                kp = k + 1 if k < n2 - 1 else 0
                c = v[i, j, k]
                if high:
                    dm0 = Dm[0, i, j, k]
                    dp0 = Dp[0, i, j, k]
                    dm1 = Dm[1, i, j, k]
                    dp1 = Dp[1, i, j, k]
                    dm2 = Dm[2, i, j, k]
                    dp2 = Dp[2, i, j, k]
                else:
                    dm0 = (c - v[im, j, k]) * i0
                    dp0 = (v[ip, j, k] - c) * i0
                    dm1 = (c - v[i, jm, k]) * i1
                    dp1 = (v[i, jp, k] - c) * i1
                    dm2 = (c - v[i, j, km]) * i2
                    dp2 = (v[i, j, kp] - c) * i2
                lap = 0.0
                quad_h = 0.0
                if variant == CURVATURE or variant == VISCOUS:
                    v00 = (v[ip, j, k] - 2 * c + v[im, j, k]) * i0 * i0
                    v11 = (v[i, jp, k] - 2 * c + v[i, jm, k]) * i1 * i1
                    v22 = (v[i, j, kp] - 2 * c + v[i, j, km]) * i2 * i2
                    lap = v00 + v11 + v22
                    if variant == CURVATURE:
                        v01 = (v[ip, jp, k] - v[ip, jm, k] - v[im, jp, k] + v[im, jm, k]) / (4.0 * h0 * h1)
                        v02 = (v[ip, j, kp] - v[ip, j, km] - v[im, j, kp] + v[im, j, km]) / (4.0 * h0 * h2)
                        v12 = (v[i, jp, kp] - v[i, jp, km] - v[i, jm, kp] + v[i, jm, km]) / (4.0 * h1 * h2)
                        q0 = p[0] + 0.5 * (dm0 + dp0)
                        q1 = p[1] + 0.5 * (dm1 + dp1)
                        q2 = p[2] + 0.5 * (dm2 + dp2)
                        quad_h = (q0 * q0 * v00 + q1 * q1 * v11 + q2 * q2 * v22
                                  + 2.0 * (q0 * q1 * v01 + q0 * q2 * v02 + q1 * q2 * v12))
                if variant == STRAIN:
                    for a_ in range(3):
                        for b_ in range(3):
                            Sl[a_, b_] = S[a_, b_, i, j, k]
                fl, r = _cell_flux(variant, d, cutoff, eps, lam[i, j, k], adv[0, i, j, k], adv[1, i, j, k],
                                   adv[2, i, j, k], Sl, snorm[i, j, k], p[0], p[1], p[2],
                                   dm0, dp0, dm1, dp1, dm2, dp2, lap, quad_h, h0, h1, h2, 3)
                out[i, j, k] = fl
                if r > rate_max:
                    rate_max = r
    return rate_max


@nb.njit(cache=True, inline="always")
def velocity_point(code, A, c0, c1, c2, inv, y0, y1, y2):
    """``A V(y / scale)`` for the analytic kinds in ``FLOW_CODES``; ``inv = 1 / scale``."""
    z0 = y0 * inv
    z1 = y1 * inv
    z2 = y2 * inv
    if code == 1:
        return -A * math.sin(z0) * math.cos(z1), A * math.cos(z0) * math.sin(z1), 0.0
    if code == 2:
        return (A * (c0 * math.sin(z2) + c2 * math.cos(z1)), A * (c1 * math.sin(z0) + c0 * math.cos(z2)),
                A * (c2 * math.sin(z1) + c1 * math.cos(z0)))
    if code == 3:
        return A * math.sin(z2), A * math.sin(z0), A * math.sin(z1)
    return 0.0, 0.0, 0.0
