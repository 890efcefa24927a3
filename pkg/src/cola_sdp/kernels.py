"""
Hot numerical kernels.

Each kernel exists twice: a loop-style implementation compiled with
``numba.njit`` and a vectorized pure-numpy implementation. The numba path is
used when numba imports cleanly and ``COLA_SDP_DISABLE_NUMBA`` is unset (or
``0``); otherwise the numpy path is bound. Both paths run the same algorithm
and agree to round-off; ``benchmarks/bench_kernels.py`` times them.

Force-model parameters travel as a flat float array (see ``PARAM_*``) so the
compiled kernels never touch Python objects.
"""

import os

import numpy as np

PARAM_MU = 0
PARAM_J2 = 1  # 0.0 when J2 is disabled
PARAM_RE = 2
PARAM_DRAG = 3  # 1.0 enables drag
PARAM_BC = 4  # m^2/kg
PARAM_RHO0 = 5
PARAM_SCALE_H = 6
PARAM_H_REF = 7
PARAM_OMEGA = 8
N_PARAMS = 9

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2
STATUS_SUBORBITAL = 3

_flag = os.environ.get("COLA_SDP_DISABLE_NUMBA", "").strip().lower()
_want_numba = _flag in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _want_numba


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array(
    [5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _np_accel(r, v, p):
    rn2 = r @ r
    rn = np.sqrt(rn2)
    mu = p[PARAM_MU]
    a = -mu / (rn2 * rn) * r
    j2 = p[PARAM_J2]
    if j2 != 0.0:
        re = p[PARAM_RE]
        zr2 = r[2] * r[2] / rn2
        fac = 1.5 * j2 * mu * re * re / (rn2 * rn2 * rn)
        a = a + fac * r * np.array([5 * zr2 - 1, 5 * zr2 - 1, 5 * zr2 - 3])
    if p[PARAM_DRAG] != 0.0:
        omega = p[PARAM_OMEGA]
        vrel = v - np.array([-omega * r[1], omega * r[0], 0.0])
        rho = p[PARAM_RHO0] * np.exp(-(rn - p[PARAM_RE] - p[PARAM_H_REF]) / p[PARAM_SCALE_H])
        a = a - 0.5 * rho * p[PARAM_BC] * np.sqrt(vrel @ vrel) * vrel
    return a


def _np_deriv(y, p, u):
    out = np.empty(6)
    out[:3] = y[3:]
    out[3:] = _np_accel(y[:3], y[3:], p) + u
    return out


def _np_dp_stages(y, h, p, u):
    k = np.empty((7, 6))
    k[0] = _np_deriv(y, p, u)
    for s in range(1, 7):
        k[s] = _np_deriv(y + h * (_A[s, :s] @ k[:s]), p, u)
    return k


def np_accel(r, v, p):
    return _np_accel(np.asarray(r, float), np.asarray(v, float), p)


def np_propagate_adaptive(y0, duration, p, u, rtol, atol, h_init, max_steps):
    y = np.array(y0, dtype=float)
    if duration == 0.0:
        return y, 0, STATUS_OK
    direction = 1.0 if duration > 0 else -1.0
    span = abs(duration)
    t = 0.0
    h = min(h_init, span)
    steps = 0
    re = p[PARAM_RE]
    while t < span:
        if steps >= max_steps:
            return y, steps, STATUS_MAX_STEPS
        if h < 1e-12 * max(1.0, span):
            return y, steps, STATUS_UNDERFLOW
        if t + h > span:
            h = span - t
        k = _np_dp_stages(y, direction * h, p, u)
        y_new = y + direction * h * (_B5 @ k)
        err_vec = direction * h * (_E @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / sc) ** 2))
        if err <= 1.0:
            t += h
            y = y_new
            steps += 1
            if np.sqrt(y[:3] @ y[:3]) < re:
                return y, steps, STATUS_SUBORBITAL
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h = h * fac
    return y, steps, STATUS_OK


def np_propagate_fixed(y0, duration, n_steps, p, u):
    y = np.array(y0, dtype=float)
    h = duration / n_steps
    for _ in range(n_steps):
        k = _np_dp_stages(y, h, p, u)
        y = y + h * (_B5 @ k)
    return y


def _svec_indices(d):
    rows, cols = np.tril_indices(d)
    # column-major lower triangle: sort by column, then row
    order = np.lexsort((rows, cols))
    return rows[order], cols[order]


_SKRON_CACHE = {}


def np_skron(t):
    d = t.shape[0]
    if d not in _SKRON_CACHE:
        i, j = _svec_indices(d)
        w = np.where(i == j, 1.0, np.sqrt(2.0))
        _SKRON_CACHE[d] = (i, j, np.outer(w, w) / 2.0)
    i, j, ww = _SKRON_CACHE[d]
    return ww * (t[np.ix_(i, i)] * t[np.ix_(j, j)] + t[np.ix_(i, j)] * t[np.ix_(j, i)])


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False)

    @_njit
    def _nb_deriv(y, p, u, out):
        x, yy, z = y[0], y[1], y[2]
        rn2 = x * x + yy * yy + z * z
        rn = np.sqrt(rn2)
        mu = p[PARAM_MU]
        f = -mu / (rn2 * rn)
        ax = f * x
        ay = f * yy
        az = f * z
        j2 = p[PARAM_J2]
        if j2 != 0.0:
            re = p[PARAM_RE]
            zr2 = z * z / rn2
            fac = 1.5 * j2 * mu * re * re / (rn2 * rn2 * rn)
            ax += fac * x * (5.0 * zr2 - 1.0)
            ay += fac * yy * (5.0 * zr2 - 1.0)
            az += fac * z * (5.0 * zr2 - 3.0)
        if p[PARAM_DRAG] != 0.0:
            om = p[PARAM_OMEGA]
            vx = y[3] + om * yy
            vy = y[4] - om * x
            vz = y[5]
            vn = np.sqrt(vx * vx + vy * vy + vz * vz)
            rho = p[PARAM_RHO0] * np.exp(-(rn - p[PARAM_RE] - p[PARAM_H_REF]) / p[PARAM_SCALE_H])
            g = -0.5 * rho * p[PARAM_BC] * vn
            ax += g * vx
            ay += g * vy
            az += g * vz
        out[0] = y[3]
        out[1] = y[4]
        out[2] = y[5]
        out[3] = ax + u[0]
        out[4] = ay + u[1]
        out[5] = az + u[2]

    @_njit
    def _nb_stages(y, h, p, u, k, tmp, a):
        _nb_deriv(y, p, u, k[0])
        for s in range(1, 7):
            for i in range(6):
                acc = 0.0
                for q in range(s):
                    acc += a[s, q] * k[q, i]
                tmp[i] = y[i] + h * acc
            _nb_deriv(tmp, p, u, k[s])

    @_njit
    def nb_accel(r, v, p):
        y = np.empty(6)
        y[:3] = r
        y[3:] = v
        out = np.empty(6)
        _nb_deriv(y, p, np.zeros(3), out)
        return out[3:].copy()

    @_njit
    def nb_propagate_adaptive(y0, duration, p, u, rtol, atol, h_init, max_steps):
        y = y0.copy()
        if duration == 0.0:
            return y, 0, STATUS_OK
        direction = 1.0 if duration > 0 else -1.0
        span = abs(duration)
        t = 0.0
        h = min(h_init, span)
        steps = 0
        k = np.empty((7, 6))
        tmp = np.empty(6)
        y_new = np.empty(6)
        re = p[PARAM_RE]
        while t < span:
            if steps >= max_steps:
                return y, steps, STATUS_MAX_STEPS
            if h < 1e-12 * max(1.0, span):
                return y, steps, STATUS_UNDERFLOW
            if t + h > span:
                h = span - t
            hs = direction * h
            _nb_stages(y, hs, p, u, k, tmp, _A)
            err = 0.0
            for i in range(6):
                acc5 = 0.0
                acce = 0.0
                for s in range(7):
                    acc5 += _B5[s] * k[s, i]
                    acce += _E[s] * k[s, i]
                y_new[i] = y[i] + hs * acc5
                sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
                e = hs * acce / sc
                err += e * e
            err = np.sqrt(err / 6.0)
            if err <= 1.0:
                t += h
                y[:] = y_new
                steps += 1
                if np.sqrt(y[0] ** 2 + y[1] ** 2 + y[2] ** 2) < re:
                    return y, steps, STATUS_SUBORBITAL
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
            h = h * fac
        return y, steps, STATUS_OK

    @_njit
    def nb_propagate_fixed(y0, duration, n_steps, p, u):
        y = y0.copy()
        h = duration / n_steps
        k = np.empty((7, 6))
        tmp = np.empty(6)
        for _ in range(n_steps):
            _nb_stages(y, h, p, u, k, tmp, _A)
            for i in range(6):
                acc = 0.0
                for s in range(7):
                    acc += _B5[s] * k[s, i]
                y[i] += h * acc
        return y

    @_njit
    def nb_skron(t):
        d = t.shape[0]
        n = d * (d + 1) // 2
        ii = np.empty(n, dtype=np.int64)
        jj = np.empty(n, dtype=np.int64)
        w = np.empty(n)
        q = 0
        for j in range(d):
            for i in range(j, d):
                ii[q] = i
                jj[q] = j
                w[q] = 1.0 if i == j else np.sqrt(2.0)
                q += 1
        out = np.empty((n, n))
        for a in range(n):
            i = ii[a]
            j = jj[a]
            for b in range(n):
                k = ii[b]
                l = jj[b]
                out[a, b] = 0.5 * w[a] * w[b] * (t[i, k] * t[j, l] + t[i, l] * t[j, k])
        return out


if USE_NUMBA:
    accel = nb_accel
    propagate_adaptive = nb_propagate_adaptive
    propagate_fixed = nb_propagate_fixed
    skron = nb_skron
else:
    accel = np_accel
    propagate_adaptive = np_propagate_adaptive
    propagate_fixed = np_propagate_fixed
    skron = np_skron


def backend():
    """Name of the bound kernel implementation (``"numba"`` or ``"numpy"``)."""
    return "numba" if USE_NUMBA else "numpy"
