"""Compiled right-hand sides and the DOP853 stepping loop.

Everything here is numba-jitted and works on raw float arrays; the public
wrappers live in :mod:`precess.dynamics` and :mod:`precess.integrator`.

Model codes: 0 = Kovalevskaya (scaled), 1 = Goryachev-Chaplygin,
2 = general heavy top with ``prm = [A, B, C, l1, l2, l3, mu]``.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

KOVALEVSKAYA = 0
GORYACHEV_CHAPLYGIN = 1
GENERAL = 2

# kernel status codes
OK = 0
STEP_UNDERFLOW = 1
SINGULAR_PSI = 2
NON_FINITE = 3
MAX_STEPS = 4

N_STAGES = _dop.N_STAGES
A_TAB = np.ascontiguousarray(_dop.A)
B_TAB = np.ascontiguousarray(_dop.B)
C_TAB = np.ascontiguousarray(_dop.C)
E3_TAB = np.ascontiguousarray(_dop.E3)
E5_TAB = np.ascontiguousarray(_dop.E5)
D_TAB = np.ascontiguousarray(_dop.D)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@njit(cache=True)
def psi_rate_scalar(kind, p, q, g1, g2, eps):
    """Return (rate, ok) for the line-of-nodes rate; ok=False at a true singularity."""
    rho2 = g1 * g1 + g2 * g2
    if rho2 > eps:
        return (p * g1 + q * g2) / rho2, True
    if kind == GORYACHEV_CHAPLYGIN:
        w2 = p * p + q * q
        if w2 > 0.0:
            return p / (8.0 * w2), True
        return 0.0, False
    if rho2 > 0.0:
        return (p * g1 + q * g2) / rho2, True
    return 0.0, False


@njit(cache=True)
def rhs(kind, prm, y, out, sign):
    """Write the time derivative of ``y`` into ``out``; returns False if psi is singular."""
    p = y[0]
    q = y[1]
    r = y[2]
    g1 = y[3]
    g2 = y[4]
    g3 = y[5]
    if kind == KOVALEVSKAYA:
        dp = 0.5 * q * r
        dq = 0.5 * (g3 - r * p)
        dr = -g2
    elif kind == GORYACHEV_CHAPLYGIN:
        dp = 0.75 * q * r
        dq = 0.25 * (g3 - 3.0 * r * p)
        dr = -g2
    else:
        a = prm[0]
        b = prm[1]
        c = prm[2]
        l1 = prm[3]
        l2 = prm[4]
        l3 = prm[5]
        mu = prm[6]
        dp = ((b - c) * q * r + mu * (l3 * g2 - l2 * g3)) / a
        dq = ((c - a) * r * p + mu * (l1 * g3 - l3 * g1)) / b
        dr = ((a - b) * p * q + mu * (l2 * g1 - l1 * g2)) / c
    out[0] = sign * dp
    out[1] = sign * dq
    out[2] = sign * dr
    out[3] = sign * (r * g2 - q * g3)
    out[4] = sign * (p * g3 - r * g1)
    out[5] = sign * (q * g1 - p * g2)
    if y.shape[0] > 6:
        # line-of-nodes angle carried as an extra component
        eps = 1e-12 if kind == GORYACHEV_CHAPLYGIN else 0.0
        rate, ok = psi_rate_scalar(kind, p, q, g1, g2, eps)
        out[6] = sign * rate
        return ok
    return True


@njit(cache=True)
def _rms(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return np.sqrt(s / x.shape[0])


@njit(cache=True)
def _initial_step(kind, prm, y0, f0, sign, rtol, atol, max_step, work):
    n = y0.shape[0]
    scale = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y0[i]) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    rhs(kind, prm, y1, work, sign)
    d2 = _rms((work - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, max_step)


@njit(cache=True)
def _dense_eval(F, y_base, x, dest):
    n = y_base.shape[0]
    for i in range(n):
        v = 0.0
        for m in range(6, -1, -1):
            v += F[m, i]
            if (6 - m) % 2 == 0:
                v *= x
            else:
                v *= 1.0 - x
        dest[i] = v + y_base[i]


@njit(cache=True)
def integrate_kernel(kind, prm, y0, t0, t_end, h_init, rtol, atol, max_step,
                     sample_dt, i_first, out, renorm, sign, max_steps,
                     F_prev, t_prev, h_prev, y_prev):
    """Adaptive DOP853 integration from ``t0`` with dense sampling.

    Samples are written at times ``i * sample_dt`` for ``i = i_first, ...``
    into the rows of ``out`` until it is full. Stepping stops after the
    first accepted step reaching ``t_end``; steps are never clipped, so a
    continuation from the returned ``(t, y, h)`` reproduces an uninterrupted
    run bit for bit. Samples earlier than ``t0`` are evaluated from the
    previous step's interpolant ``(F_prev, t_prev, h_prev, y_prev)``,
    which the kernel returns for its own final step.

    Returns ``(status, t, y, h_next, n_written, n_steps, F, t_old, h_last, y_old)``.
    """
    n = y0.shape[0]
    n_out = out.shape[0]
    K = np.zeros((16, n))
    y = y0.copy()
    y_new = np.empty(n)
    ytmp = np.empty(n)
    f = np.empty(n)
    work = np.empty(n)
    err5 = np.empty(n)
    err3 = np.empty(n)
    F = np.zeros((7, n))
    y_old = y0.copy()
    t_old = t0
    h_last = 0.0
    t = t0
    n_written = 0
    n_steps = 0

    for i in range(n):
        if not np.isfinite(y[i]):
            return NON_FINITE, t, y, h_init, n_written, n_steps, F, t_old, h_last, y_old

    if not rhs(kind, prm, y, f, sign):
        return SINGULAR_PSI, t, y, h_init, n_written, n_steps, F, t_old, h_last, y_old

    # samples at or before the start point
    while n_written < n_out:
        ts = (i_first + n_written) * sample_dt
        if ts > t0:
            break
        if ts == t0 or h_prev <= 0.0:
            out[n_written, :] = y
        else:
            _dense_eval(F_prev, y_prev, (ts - t_prev) / h_prev, out[n_written])
        n_written += 1

    if h_init > 0.0:
        h_abs = min(h_init, max_step)
    else:
        h_abs = _initial_step(kind, prm, y, f, sign, rtol, atol, max_step, work)

    while t < t_end:
        if n_steps >= max_steps:
            return MAX_STEPS, t, y, h_abs, n_written, n_steps, F, t_old, h_last, y_old
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs > max_step:
            h_abs = max_step
        accepted = False
        rejected = False
        while not accepted:
            if h_abs < min_step:
                return STEP_UNDERFLOW, t, y, h_abs, n_written, n_steps, F, t_old, h_last, y_old
            h = h_abs
            # stages 1..11; K[0] = f
            for i in range(n):
                K[0, i] = f[i]
            singular = False
            for s in range(1, N_STAGES):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A_TAB[s, j] * K[j, i]
                    ytmp[i] = y[i] + h * acc
                if not rhs(kind, prm, ytmp, work, sign):
                    singular = True
                for i in range(n):
                    K[s, i] = work[i]
            for i in range(n):
                acc = 0.0
                for j in range(N_STAGES):
                    acc += B_TAB[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            if not rhs(kind, prm, y_new, work, sign):
                singular = True
            for i in range(n):
                K[N_STAGES, i] = work[i]
            finite = True
            for i in range(n):
                if not np.isfinite(y_new[i]):
                    finite = False
            # error estimate (Hairer's 5/3 blend)
            e5 = 0.0
            e3 = 0.0
            for i in range(n):
                sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
                a5 = 0.0
                a3 = 0.0
                for j in range(N_STAGES + 1):
                    a5 += E5_TAB[j] * K[j, i]
                    a3 += E3_TAB[j] * K[j, i]
                err5[i] = a5 / sc
                err3[i] = a3 / sc
                e5 += err5[i] * err5[i]
                e3 += err3[i] * err3[i]
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if not finite or singular:
                err = np.inf
            if err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err ** (-1.0 / 8.0))
                if rejected:
                    factor = min(1.0, factor)
                h_next = h_abs * factor
                accepted = True
            else:
                if np.isfinite(err):
                    h_abs *= max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))
                else:
                    h_abs *= 0.25
                    if singular and h_abs < min_step:
                        return SINGULAR_PSI, t, y, h_abs, n_written, n_steps, F, t_old, h_last, y_old
                rejected = True
        t_new = t + h
        n_steps += 1

        # dense output for samples inside (t, t_new], and always for the last step
        if t_new >= t_end or (n_written < n_out and (i_first + n_written) * sample_dt <= t_new):
            for s in range(N_STAGES + 1, 16):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A_TAB[s, j] * K[j, i]
                    ytmp[i] = y[i] + h * acc
                rhs(kind, prm, ytmp, work, sign)
                for i in range(n):
                    K[s, i] = work[i]
            for i in range(n):
                dy = y_new[i] - y[i]
                F[0, i] = dy
                F[1, i] = h * K[0, i] - dy
                F[2, i] = 2.0 * dy - h * (K[N_STAGES, i] + K[0, i])
                for m in range(4):
                    acc = 0.0
                    for j in range(16):
                        acc += D_TAB[m, j] * K[j, i]
                    F[3 + m, i] = h * acc
            while n_written < n_out:
                ts = (i_first + n_written) * sample_dt
                if ts > t_new:
                    break
                _dense_eval(F, y, (ts - t) / h, out[n_written])
                n_written += 1
            for i in range(n):
                y_old[i] = y[i]
            t_old = t
            h_last = h

        for i in range(n):
            y[i] = y_new[i]
            f[i] = K[N_STAGES, i]
        if renorm:
            nrm = np.sqrt(y[3] * y[3] + y[4] * y[4] + y[5] * y[5])
            y[3] /= nrm
            y[4] /= nrm
            y[5] /= nrm
            rhs(kind, prm, y, f, sign)
        t = t_new
        h_abs = h_next

    return OK, t, y, h_abs, n_written, n_steps, F, t_old, h_last, y_old
