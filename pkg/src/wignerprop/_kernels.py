"""Hot loops: RK4 trajectory/pair propagation, Shepard splatting, CIC deposit.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  The dispatch names exported at module
level (``rk4_track``, ``rk4_pairs``, ``shepard_accumulate``, ``cic_deposit``)
are bound once at import time:

* ``WIGNERPROP_DISABLE_NUMBA=1`` in the environment forces numpy;
* a missing numba installation falls back to numpy silently.

Both implementations are importable explicitly as ``numpy_impl`` and
``numba_impl`` (the latter is ``None`` without numba) so they can be
benchmarked and cross-checked against each other.
"""

import logging
import os
import types

import numpy as np

logger = logging.getLogger(__name__)

_FLAG = "WIGNERPROP_DISABLE_NUMBA"

# status codes returned by the propagation kernels
OK = 0
ESCAPED = 1


def _numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------

def _np_poly(c, x):
    out = np.full_like(x, c[-1], dtype=float)
    for k in range(len(c) - 2, -1, -1):
        out = out * x + c[k]
    return out


def _np_rhs(p, q, m11, m12, m21, m22, c1, c2, inv_m):
    v1 = _np_poly(c1, q)
    v2 = _np_poly(c2, q)
    return (-v1, p * inv_m,
            -v2 * m21, -v2 * m22, m11 * inv_m, m12 * inv_m)


def _np_step(y, h, c1, c2, inv_m):
    k1 = _np_rhs(*y, c1, c2, inv_m)
    y2 = [a + 0.5 * h * b for a, b in zip(y, k1)]
    k2 = _np_rhs(*y2, c1, c2, inv_m)
    y3 = [a + 0.5 * h * b for a, b in zip(y, k2)]
    k3 = _np_rhs(*y3, c1, c2, inv_m)
    y4 = [a + h * b for a, b in zip(y, k3)]
    k4 = _np_rhs(*y4, c1, c2, inv_m)
    return [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _np_rk4_track(p0, q0, c1, c2, mass, dt, n_steps, h_last, bound):
    n_total = n_steps + (1 if h_last > 0.0 else 0)
    states = np.empty((n_total + 1, 2))
    mono = np.empty((n_total + 1, 4))
    y = [np.array([p0]), np.array([q0]), np.ones(1), np.zeros(1), np.zeros(1), np.ones(1)]
    states[0] = p0, q0
    mono[0] = 1.0, 0.0, 0.0, 1.0
    inv_m = 1.0 / mass
    for i in range(n_total):
        h = dt if i < n_steps else h_last
        y = _np_step(y, h, c1, c2, inv_m)
        p, q = y[0][0], y[1][0]
        if not (np.isfinite(p) and np.isfinite(q)) or abs(p) > bound or abs(q) > bound:
            return states[: i + 1], mono[: i + 1], ESCAPED, i + 1
        states[i + 1] = p, q
        mono[i + 1] = y[2][0], y[3][0], y[4][0], y[5][0]
    return states, mono, OK, n_total


def _np_action_integrand(pp, qp, pm, qm, c0, c1, inv_m):
    # midpoint velocity (ṗ, q̇) averaged over the two members
    vp = -0.5 * (_np_poly(c1, qp) + _np_poly(c1, qm))
    vq = 0.5 * (pp + pm) * inv_m
    rp = pp - pm
    rq = qp - qm
    hp = 0.5 * pp * pp * inv_m + _np_poly(c0, qp)
    hm = 0.5 * pm * pm * inv_m + _np_poly(c0, qm)
    return vq * rp - vp * rq - hp + hm


def _np_rk4_pairs(pp, qp, pm, qm, c0, c1, c2, mass, dt, n_steps, h_last, bound):
    n = pp.shape[0]
    inv_m = 1.0 / mass
    one = np.ones(n)
    zero = np.zeros(n)
    yp = [pp.astype(float).copy(), qp.astype(float).copy(), one.copy(), zero.copy(), zero.copy(), one.copy()]
    ym = [pm.astype(float).copy(), qm.astype(float).copy(), one.copy(), zero.copy(), zero.copy(), one.copy()]
    action = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    g_old = _np_action_integrand(yp[0], yp[1], ym[0], ym[1], c0, c1, inv_m)
    n_total = n_steps + (1 if h_last > 0.0 else 0)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_total):
            h = dt if i < n_steps else h_last
            yp = _np_step(yp, h, c1, c2, inv_m)
            ym = _np_step(ym, h, c1, c2, inv_m)
            bad = ~(np.isfinite(yp[0]) & np.isfinite(yp[1]) & np.isfinite(ym[0]) & np.isfinite(ym[1]))
            bad |= (np.abs(yp[0]) > bound) | (np.abs(yp[1]) > bound)
            bad |= (np.abs(ym[0]) > bound) | (np.abs(ym[1]) > bound)
            status[bad] = ESCAPED
            if bad.any():
                # freeze escaped members at a harmless finite value
                for arr in yp + ym:
                    arr[bad] = 0.0
            g_new = _np_action_integrand(yp[0], yp[1], ym[0], ym[1], c0, c1, inv_m)
            action += 0.5 * h * (g_old + g_new)
            g_old = g_new
    final_p = np.stack([yp[0], yp[1]], axis=1)
    final_m = np.stack([ym[0], ym[1]], axis=1)
    mono_p = np.stack(yp[2:], axis=1)
    mono_m = np.stack(ym[2:], axis=1)
    action[status != OK] = np.nan
    return final_p, final_m, mono_p, mono_m, action, status


def _np_shepard_accumulate(x, y, values, x0, y0, dx, dy, nx, ny, radius):
    """Accumulate inverse-distance-squared weights within ``radius``."""
    nval = values.shape[1]
    wsum = np.zeros(nx * ny)
    vsum = np.zeros((nx * ny, nval))
    rx = int(np.ceil(radius / dx)) + 1
    ry = int(np.ceil(radius / dy)) + 1
    fi = (x - x0) / dx - 0.5
    fj = (y - y0) / dy - 0.5
    ci = np.floor(fi).astype(np.int64)
    cj = np.floor(fj).astype(np.int64)
    floor2 = (1e-6 * min(dx, dy)) ** 2
    r2 = radius * radius
    for oi in range(-rx + 1, rx + 1):
        for oj in range(-ry + 1, ry + 1):
            gi = ci + oi
            gj = cj + oj
            inside = (gi >= 0) & (gi < nx) & (gj >= 0) & (gj < ny)
            gx = x0 + (gi + 0.5) * dx
            gy = y0 + (gj + 0.5) * dy
            d2 = (gx - x) ** 2 + (gy - y) ** 2
            sel = inside & (d2 < r2)
            if not sel.any():
                continue
            w = 1.0 / np.maximum(d2[sel], floor2)
            flat = gi[sel] * ny + gj[sel]
            np.add.at(wsum, flat, w)
            for k in range(nval):
                np.add.at(vsum[:, k], flat, w * values[sel, k])
    return wsum.reshape(nx, ny), vsum.reshape(nx, ny, nval)


def _np_cic_deposit(fi, fj, mass, nx, ny):
    """Cloud-in-cell deposit at fractional cell-centre coordinates."""
    out = np.zeros(nx * ny)
    i0 = np.floor(fi).astype(np.int64)
    j0 = np.floor(fj).astype(np.int64)
    wi1 = fi - i0
    wj1 = fj - j0
    for di, wi in ((0, 1.0 - wi1), (1, wi1)):
        for dj, wj in ((0, 1.0 - wj1), (1, wj1)):
            gi = i0 + di
            gj = j0 + dj
            sel = (gi >= 0) & (gi < nx) & (gj >= 0) & (gj < ny)
            np.add.at(out, gi[sel] * ny + gj[sel], (mass * wi * wj)[sel])
    return out.reshape(nx, ny)


numpy_impl = types.SimpleNamespace(
    name="numpy",
    rk4_track=_np_rk4_track,
    rk4_pairs=_np_rk4_pairs,
    shepard_accumulate=_np_shepard_accumulate,
    cic_deposit=_np_cic_deposit,
)


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

numba_impl = None

if HAS_NUMBA:

    @njit(cache=True, inline="always")
    def _nb_poly(c, x):
        out = c[c.shape[0] - 1]
        for k in range(c.shape[0] - 2, -1, -1):
            out = out * x + c[k]
        return out

    @njit(cache=True)
    def _nb_step(y, h, c1, c2, inv_m, k, tmp):
        # y, tmp: (6,) ; k: (4, 6)
        for stage in range(4):
            if stage == 0:
                for a in range(6):
                    tmp[a] = y[a]
            elif stage == 3:
                for a in range(6):
                    tmp[a] = y[a] + h * k[2, a]
            else:
                for a in range(6):
                    tmp[a] = y[a] + 0.5 * h * k[stage - 1, a]
            v1 = _nb_poly(c1, tmp[1])
            v2 = _nb_poly(c2, tmp[1])
            k[stage, 0] = -v1
            k[stage, 1] = tmp[0] * inv_m
            k[stage, 2] = -v2 * tmp[4]
            k[stage, 3] = -v2 * tmp[5]
            k[stage, 4] = tmp[2] * inv_m
            k[stage, 5] = tmp[3] * inv_m
        for a in range(6):
            y[a] += h / 6.0 * (k[0, a] + 2.0 * k[1, a] + 2.0 * k[2, a] + k[3, a])

    @njit(cache=True)
    def _nb_rk4_track(p0, q0, c1, c2, mass, dt, n_steps, h_last, bound):
        n_total = n_steps + (1 if h_last > 0.0 else 0)
        states = np.empty((n_total + 1, 2))
        mono = np.empty((n_total + 1, 4))
        y = np.array([p0, q0, 1.0, 0.0, 0.0, 1.0])
        k = np.empty((4, 6))
        tmp = np.empty(6)
        states[0, 0] = p0
        states[0, 1] = q0
        mono[0, 0] = 1.0
        mono[0, 1] = 0.0
        mono[0, 2] = 0.0
        mono[0, 3] = 1.0
        inv_m = 1.0 / mass
        for i in range(n_total):
            h = dt if i < n_steps else h_last
            _nb_step(y, h, c1, c2, inv_m, k, tmp)
            p = y[0]
            q = y[1]
            if not (np.isfinite(p) and np.isfinite(q)) or abs(p) > bound or abs(q) > bound:
                return states[: i + 1], mono[: i + 1], ESCAPED, i + 1
            states[i + 1, 0] = p
            states[i + 1, 1] = q
            for a in range(4):
                mono[i + 1, a] = y[2 + a]
        return states, mono, OK, n_total

    @njit(cache=True, inline="always")
    def _nb_action_integrand(pp, qp, pm, qm, c0, c1, inv_m):
        vp = -0.5 * (_nb_poly(c1, qp) + _nb_poly(c1, qm))
        vq = 0.5 * (pp + pm) * inv_m
        hp = 0.5 * pp * pp * inv_m + _nb_poly(c0, qp)
        hm = 0.5 * pm * pm * inv_m + _nb_poly(c0, qm)
        return vq * (pp - pm) - vp * (qp - qm) - hp + hm

    @njit(cache=True)
    def _nb_rk4_pairs(pp, qp, pm, qm, c0, c1, c2, mass, dt, n_steps, h_last, bound):
        n = pp.shape[0]
        inv_m = 1.0 / mass
        final_p = np.empty((n, 2))
        final_m = np.empty((n, 2))
        mono_p = np.empty((n, 4))
        mono_m = np.empty((n, 4))
        action = np.empty(n)
        status = np.zeros(n, dtype=np.int64)
        n_total = n_steps + (1 if h_last > 0.0 else 0)
        k = np.empty((4, 6))
        tmp = np.empty(6)
        a = np.empty(6)
        b = np.empty(6)
        for j in range(n):
            a[0] = pp[j]
            a[1] = qp[j]
            b[0] = pm[j]
            b[1] = qm[j]
            a[2] = 1.0
            a[3] = 0.0
            a[4] = 0.0
            a[5] = 1.0
            b[2] = 1.0
            b[3] = 0.0
            b[4] = 0.0
            b[5] = 1.0
            s = 0.0
            g_old = _nb_action_integrand(a[0], a[1], b[0], b[1], c0, c1, inv_m)
            for i in range(n_total):
                h = dt if i < n_steps else h_last
                _nb_step(a, h, c1, c2, inv_m, k, tmp)
                _nb_step(b, h, c1, c2, inv_m, k, tmp)
                if not (np.isfinite(a[0]) and np.isfinite(a[1]) and np.isfinite(b[0]) and np.isfinite(b[1])) \
                        or abs(a[0]) > bound or abs(a[1]) > bound or abs(b[0]) > bound or abs(b[1]) > bound:
                    status[j] = ESCAPED
                    for c in range(6):
                        a[c] = 0.0
                        b[c] = 0.0
                    break
                g_new = _nb_action_integrand(a[0], a[1], b[0], b[1], c0, c1, inv_m)
                s += 0.5 * h * (g_old + g_new)
                g_old = g_new
            final_p[j, 0] = a[0]
            final_p[j, 1] = a[1]
            final_m[j, 0] = b[0]
            final_m[j, 1] = b[1]
            for c in range(4):
                mono_p[j, c] = a[2 + c]
                mono_m[j, c] = b[2 + c]
            action[j] = s if status[j] == OK else np.nan
        return final_p, final_m, mono_p, mono_m, action, status

    @njit(cache=True)
    def _nb_shepard_accumulate(x, y, values, x0, y0, dx, dy, nx, ny, radius):
        nval = values.shape[1]
        wsum = np.zeros((nx, ny))
        vsum = np.zeros((nx, ny, nval))
        rx = int(np.ceil(radius / dx)) + 1
        ry = int(np.ceil(radius / dy)) + 1
        floor2 = (1e-6 * min(dx, dy)) ** 2
        r2 = radius * radius
        for n in range(x.shape[0]):
            ci = int(np.floor((x[n] - x0) / dx - 0.5))
            cj = int(np.floor((y[n] - y0) / dy - 0.5))
            for gi in range(ci - rx + 1, ci + rx + 1):
                if gi < 0 or gi >= nx:
                    continue
                gx = x0 + (gi + 0.5) * dx
                for gj in range(cj - ry + 1, cj + ry + 1):
                    if gj < 0 or gj >= ny:
                        continue
                    gy = y0 + (gj + 0.5) * dy
                    d2 = (gx - x[n]) ** 2 + (gy - y[n]) ** 2
                    if d2 >= r2:
                        continue
                    w = 1.0 / max(d2, floor2)
                    wsum[gi, gj] += w
                    for k in range(nval):
                        vsum[gi, gj, k] += w * values[n, k]
        return wsum, vsum

    @njit(cache=True)
    def _nb_cic_deposit(fi, fj, mass, nx, ny):
        out = np.zeros((nx, ny))
        for n in range(fi.shape[0]):
            i0 = int(np.floor(fi[n]))
            j0 = int(np.floor(fj[n]))
            wi1 = fi[n] - i0
            wj1 = fj[n] - j0
            for di in range(2):
                gi = i0 + di
                if gi < 0 or gi >= nx:
                    continue
                wi = wi1 if di == 1 else 1.0 - wi1
                for dj in range(2):
                    gj = j0 + dj
                    if gj < 0 or gj >= ny:
                        continue
                    wj = wj1 if dj == 1 else 1.0 - wj1
                    out[gi, gj] += mass[n] * wi * wj
        return out

    numba_impl = types.SimpleNamespace(
        name="numba",
        rk4_track=_nb_rk4_track,
        rk4_pairs=_nb_rk4_pairs,
        shepard_accumulate=_nb_shepard_accumulate,
        cic_deposit=_nb_cic_deposit,
    )


if numba_impl is not None and not _numba_disabled():
    active = numba_impl
else:
    active = numpy_impl

BACKEND = active.name
rk4_track = active.rk4_track
rk4_pairs = active.rk4_pairs
shepard_accumulate = active.shepard_accumulate
cic_deposit = active.cic_deposit

logger.debug("kernel backend: %s", BACKEND)
