"""Diagonal exponential Runge--Kutta stepping.

Each step freezes the diagonal of the Jacobian, ``a = diag(df/du)`` at the
step start, and integrates ``u' = a*u + g(u)`` with ``g = f - a*u`` by the
five-stage, stiff-order-four exponential Runge--Kutta method of Hochbruck and
Ostermann (2005).  The diagonal part is propagated exactly through the phi
functions, so the step size is never limited by it.

Error estimate: stages 2, 3 and 5 all sit at c = 1/2, and the combination
g5 - (g2 + g3)/2 annihilates every third-order condition, giving an
embedded estimate of local order four.  That estimate only compares the
half-step stages, and a long step across a fast transient of a neighbouring
mode can pass it while being badly wrong.  The step is therefore also
compared with the order-two stage U4 at t + h, and the larger of the two
estimates controls the step size.

The dense output integrates the quadratic through g at tau = 0, h/2, h
exactly against the exponential and reproduces the step end point.

``ExpRK4Step`` is the plain numpy formulation; ``run_dyadic`` is the
compiled adaptive loop specialised to the tridiagonal dyadic right-hand
side.  Both implement the same tableau.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_TAYLOR_RADIUS = 0.5
_TAYLOR_TERMS = 18


def phi_functions(z, kmax: int = 3):
    """Return ``[exp(z), phi_1(z), ..., phi_kmax(z)]`` elementwise.

    phi_k(z) = sum_j z^j / (j+k)!.  Small |z| uses the series, larger |z|
    the recurrence phi_k = (phi_{k-1} - 1/(k-1)!) / z.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _TAYLOR_RADIUS
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(z)
        prev_large = np.expm1(np.where(small, 0.0, z)) / zl
    out = [e]
    for k in range(1, kmax + 1):
        if k > 1:
            with np.errstate(over="ignore", invalid="ignore"):
                prev_large = (prev_large - 1.0 / math.factorial(k - 1)) / zl
        acc = np.full_like(zs, 1.0 / math.factorial(_TAYLOR_TERMS + k))
        for j in range(_TAYLOR_TERMS - 1, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(j + k)
        out.append(np.where(small, acc, prev_large))
    return out


class ExpRK4Step:
    """One exponential RK step of ``u' = a*u + g(u)`` with a frozen diagonal."""

    def __init__(self, g, u0, a, h, g1=None):
        self.u0 = u0
        self.a = a
        self.h = h
        z = h * a
        e1, p1, p2, p3 = phi_functions(z)
        eh, q1, q2, q3 = phi_functions(0.5 * z)

        g1 = g(u0) if g1 is None else g1
        U2 = eh * u0 + h * (0.5 * q1 * g1)
        g2 = g(U2)
        U3 = eh * u0 + h * ((0.5 * q1 - q2) * g1 + q2 * g2)
        g3 = g(U3)
        U4 = e1 * u0 + h * ((p1 - 2 * p2) * g1 + p2 * (g2 + g3))
        g4 = g(U4)
        a52 = 0.5 * q2 - p3 + 0.25 * p2 - 0.5 * q3
        a54 = 0.25 * q2 - a52
        U5 = eh * u0 + h * ((0.5 * q1 - 2 * a52 - a54) * g1 + a52 * (g2 + g3) + a54 * g4)
        g5 = g(U5)
        w5 = 4 * p2 - 8 * p3
        self.u1 = e1 * u0 + h * ((p1 - 3 * p2 + 4 * p3) * g1 + (4 * p3 - p2) * g4 + w5 * g5)
        self.error = h * w5 * (g5 - 0.5 * (g2 + g3))
        self.error_low = self.u1 - U4
        self.g1, self.g4, self.g5 = g1, g4, g5


def dense_eval(u0, a, h, g1, g4, g5, tau):
    """Evaluate the dense output of one or many steps.

    All per-step arrays broadcast against ``tau[..., None]``; ``tau`` is the
    offset from the step start.
    """
    tau = np.asarray(tau, dtype=float)[..., None]
    e, p1, p2, p3 = phi_functions(tau * a)
    s1 = (-3 * g1 + 4 * g5 - g4) / h
    s2 = (2 * g1 - 4 * g5 + 2 * g4) / (h * h)
    return e * u0 + tau * p1 * g1 + tau**2 * p2 * s1 + 2 * tau**3 * p3 * s2


# compiled kernel ---------------------------------------------------------

STATUS_DONE = 0
STATUS_FULL = 1
STATUS_UNDERFLOW = 2
STATUS_BLOWUP = 3
STATUS_MAXSTEPS = 4


@numba.njit(cache=True)
def _phi(z):
    if abs(z) < 0.5:
        # Horner for phi_1..phi_3 with 18 terms
        p1 = 0.0
        p2 = 0.0
        p3 = 0.0
        f1 = 1.0
        for j in range(1, 19):
            f1 *= j
        # f1 = 18!, build coefficients from the top down
        c1 = 1.0 / (f1 * 19.0)
        c2 = c1 / 20.0
        c3 = c2 / 21.0
        for j in range(18, -1, -1):
            p1 = p1 * z + c1
            p2 = p2 * z + c2
            p3 = p3 * z + c3
            # coefficient of z^(j-1) is 1/(j-1+k)!
            c1 *= j + 1
            c2 *= j + 2
            c3 *= j + 3
        e = 1.0 + z * p1
        return e, p1, p2, p3
    e = math.exp(z)
    p1 = math.expm1(z) / z
    p2 = (p1 - 1.0) / z
    p3 = (p2 - 0.5) / z
    return e, p1, p2, p3


@numba.njit(cache=True)
def _rhs(lin, k_in, k_out, u, out):
    n = u.shape[0]
    for i in range(n):
        v = -lin[i] * u[i]
        if i > 0:
            v += k_in[i] * u[i - 1] * u[i - 1]
        if i < n - 1:
            v -= k_out[i] * u[i] * u[i + 1]
        out[i] = v


@numba.njit(cache=True)
def _g(lin, k_in, k_out, diag, u, out):
    _rhs(lin, k_in, k_out, u, out)
    for i in range(u.shape[0]):
        out[i] -= diag[i] * u[i]


@numba.njit(cache=True)
def run_dyadic(lin, k_in, k_out, u, t, t_end, h, rtol, atol, max_step, blowup_norm,
               out_t, out_u0, out_u1, out_a, out_h, out_g1, out_g4, out_g5):
    """Adaptive stepping until t_end or until the output buffers are full.

    Returns (n_accepted, t, h, status, bad_mode).  ``u`` is updated in place.
    """
    n = u.shape[0]
    cap = out_t.shape[0]
    diag = np.empty(n)
    g1 = np.empty(n)
    g2 = np.empty(n)
    g3 = np.empty(n)
    g4 = np.empty(n)
    g5 = np.empty(n)
    U = np.empty(n)
    U4 = np.empty(n)
    u1 = np.empty(n)
    E1 = np.empty(n)
    P1 = np.empty(n)
    P2 = np.empty(n)
    P3 = np.empty(n)
    EH = np.empty(n)
    Q1 = np.empty(n)
    Q2 = np.empty(n)
    Q3 = np.empty(n)
    acc = 0
    bad = -1
    while True:
        if t >= t_end:
            return acc, t, h, 0, bad
        if acc >= cap:
            return acc, t, h, 1, bad
        if h > max_step:
            h = max_step
        last = t + h >= t_end * (1.0 - 1e-14)
        if last:
            h = t_end - t
        for i in range(n):
            d = -lin[i]
            if i < n - 1:
                d -= k_out[i] * u[i + 1]
            diag[i] = d
            e, p1, p2, p3 = _phi(h * d)
            E1[i] = e
            P1[i] = p1
            P2[i] = p2
            P3[i] = p3
            e, p1, p2, p3 = _phi(0.5 * h * d)
            EH[i] = e
            Q1[i] = p1
            Q2[i] = p2
            Q3[i] = p3
        _g(lin, k_in, k_out, diag, u, g1)
        for i in range(n):
            U[i] = EH[i] * u[i] + h * (0.5 * Q1[i] * g1[i])
        _g(lin, k_in, k_out, diag, U, g2)
        for i in range(n):
            U[i] = EH[i] * u[i] + h * ((0.5 * Q1[i] - Q2[i]) * g1[i] + Q2[i] * g2[i])
        _g(lin, k_in, k_out, diag, U, g3)
        for i in range(n):
            U4[i] = E1[i] * u[i] + h * ((P1[i] - 2 * P2[i]) * g1[i] + P2[i] * (g2[i] + g3[i]))
        _g(lin, k_in, k_out, diag, U4, g4)
        for i in range(n):
            a52 = 0.5 * Q2[i] - P3[i] + 0.25 * P2[i] - 0.5 * Q3[i]
            a54 = 0.25 * Q2[i] - a52
            U[i] = EH[i] * u[i] + h * ((0.5 * Q1[i] - 2 * a52 - a54) * g1[i]
                                       + a52 * (g2[i] + g3[i]) + a54 * g4[i])
        _g(lin, k_in, k_out, diag, U, g5)
        err = 0.0
        norm2 = 0.0
        finite = True
        worst = 0
        for i in range(n):
            w5 = 4 * P2[i] - 8 * P3[i]
            u1[i] = E1[i] * u[i] + h * ((P1[i] - 3 * P2[i] + 4 * P3[i]) * g1[i]
                                        + (4 * P3[i] - P2[i]) * g4[i] + w5 * g5[i])
            est = abs(h * w5 * (g5[i] - 0.5 * (g2[i] + g3[i])))
            # the half-step stages can agree while the step is badly wrong;
            # the order-2 stage U4 at t + h catches that
            est4 = abs(u1[i] - U4[i])
            if est4 > est:
                est = est4
            sc = atol + rtol * max(abs(u[i]), abs(u1[i]))
            r = est / sc
            if not (r == r) or not math.isfinite(u1[i]):
                # the lowest non-finite mode is where overflow started
                if finite:
                    worst = i
                finite = False
            elif r > err:
                err = r
                worst = i
            norm2 += u1[i] * u1[i]
        if not finite:
            err = math.inf
        if err > 1.0:
            if math.isfinite(err):
                fac = 0.9 * err ** (-1.0 / 3.0)
                if fac < 0.2:
                    fac = 0.2
            else:
                fac = 0.2
            h *= fac
            if t + h == t or h < 1e-300:
                return acc, t, h, 2, worst
            continue
        if math.sqrt(norm2) > blowup_norm:
            return acc, t, h, 3, worst
        out_t[acc] = t_end if last else t + h
        out_h[acc] = h
        for i in range(n):
            out_u0[acc, i] = u[i]
            out_u1[acc, i] = u1[i]
            out_a[acc, i] = diag[i]
            out_g1[acc, i] = g1[i]
            out_g4[acc, i] = g4[i]
            out_g5[acc, i] = g5[i]
            u[i] = u1[i]
        acc += 1
        t = t_end if last else t + h
        if err > 0:
            fac = 0.9 * err ** (-1.0 / 3.0)
            if fac > 5.0:
                fac = 5.0
        else:
            fac = 5.0
        h *= fac


@numba.njit(cache=True)
def dense_eval_steps(u0, a, h, g1, g4, g5, idx, tau):
    """Compiled ``dense_eval`` for step indices ``idx`` and offsets ``tau``."""
    m = idx.shape[0]
    n = u0.shape[1]
    out = np.empty((m, n))
    for j in range(m):
        k = idx[j]
        tj = tau[j]
        hk = h[k]
        for i in range(n):
            e, p1, p2, p3 = _phi(tj * a[k, i])
            s1 = (-3.0 * g1[k, i] + 4.0 * g5[k, i] - g4[k, i]) / hk
            s2 = (2.0 * g1[k, i] - 4.0 * g5[k, i] + 2.0 * g4[k, i]) / (hk * hk)
            out[j, i] = (e * u0[k, i] + tj * p1 * g1[k, i] + tj * tj * p2 * s1
                         + 2.0 * tj * tj * tj * p3 * s2)
    return out
