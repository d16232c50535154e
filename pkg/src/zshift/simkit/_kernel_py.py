"""Pure-Python time-stepping kernel (reference implementation and fallback).

The compiled ``_kernel_c`` extension implements exactly the same arithmetic;
``zshift.simkit.kernel`` picks one at import time.

State layout: ``[i_d, i_q]`` per unit (current into the unit, global dq
frame) followed by a block per converter at ``units[k, COL_OFFSET]``::

    xi_d, xi_q, x_pll, theta_pll, vf_d, vf_q, if_d, if_q [, z1_d, z2_d, z1_q, z2_q]

The per-step output row is ``[v_d, v_q, i_d, i_q]`` at the interface: the
load-side voltage and the current entering the load side.
"""
from math import cos, sin

# unit table columns
COL_IS_CONV = 0
COL_R = 1
COL_L = 2
COL_KKP = 3
COL_KKI = 4
COL_KP_PLL = 5
COL_KI_PLL = 6
COL_TAU = 7
COL_W1L = 8
COL_IREF_D = 9
COL_IREF_Q = 10
COL_OFFSET = 11
COL_PADE_A = 12
COL_PADE_B = 13
COL_HAS_DELAY = 14
N_COLS = 15

# glob vector
G_ES_D, G_ES_Q, G_W1, G_R_TH, G_L_TH = range(5)
N_GLOB = 5

RK4 = 0
TRAPEZOIDAL = 1


def rhs(x, t, inj, glob, minv, rmat, units, dx, outs):
    """Evaluate the state derivative into ``dx`` and the outputs into ``outs``.

    Arguments are sequences (lists or 1-D/2-D arrays) indexed like the
    compiled kernel's memoryviews.
    """
    n = len(units)
    w1 = glob[G_W1]
    c_inj = cos(inj[2] * t)
    ud = glob[G_ES_D] + inj[0] * c_inj
    uq = glob[G_ES_Q] + inj[1] * c_inj

    ed = [0.0] * n
    eq = [0.0] * n
    ecd_l = [0.0] * n
    ecq_l = [0.0] * n
    cth = [1.0] * n
    sth = [0.0] * n
    for k in range(n):
        row = units[k]
        if row[COL_IS_CONV] == 0.0:
            continue
        o = int(row[COL_OFFSET])
        ifd = x[o + 6]
        ifq = x[o + 7]
        ecd = row[COL_KKP] * (row[COL_IREF_D] - ifd) + row[COL_KKI] * x[o] - row[COL_W1L] * ifq + x[o + 4]
        ecq = row[COL_KKP] * (row[COL_IREF_Q] - ifq) + row[COL_KKI] * x[o + 1] + row[COL_W1L] * ifd + x[o + 5]
        ecd_l[k] = ecd
        ecq_l[k] = ecq
        if row[COL_HAS_DELAY] != 0.0:
            ecd = ecd - 2.0 * row[COL_PADE_A] * x[o + 9]
            ecq = ecq - 2.0 * row[COL_PADE_A] * x[o + 11]
        c = cos(x[o + 3])
        s = sin(x[o + 3])
        cth[k] = c
        sth[k] = s
        ed[k] = ecd * c - ecq * s
        eq[k] = ecd * s + ecq * c

    rd = [0.0] * n
    rq = [0.0] * n
    for k in range(n):
        accd = ud - ed[k]
        accq = uq - eq[k]
        rk = rmat[k]
        for m in range(n):
            accd -= rk[m] * x[2 * m]
            accq -= rk[m] * x[2 * m + 1]
        rd[k] = accd
        rq[k] = accq

    ithd = 0.0
    ithq = 0.0
    dithd = 0.0
    dithq = 0.0
    for k in range(n):
        mk = minv[k]
        accd = w1 * x[2 * k + 1]
        accq = -w1 * x[2 * k]
        for m in range(n):
            accd += mk[m] * rd[m]
            accq += mk[m] * rq[m]
        dx[2 * k] = accd
        dx[2 * k + 1] = accq
        ithd += x[2 * k]
        ithq += x[2 * k + 1]
        dithd += accd
        dithq += accq

    lth = glob[G_L_TH]
    rth = glob[G_R_TH]
    outs[0] = ud - rth * ithd - lth * dithd + w1 * lth * ithq
    outs[1] = uq - rth * ithq - lth * dithq - w1 * lth * ithd
    outs[2] = ithd
    outs[3] = ithq

    for k in range(n):
        row = units[k]
        if row[COL_IS_CONV] == 0.0:
            continue
        o = int(row[COL_OFFSET])
        ikd = x[2 * k]
        ikq = x[2 * k + 1]
        lk = row[COL_L]
        rk_ = row[COL_R]
        vkd = ed[k] + rk_ * ikd + lk * dx[2 * k] - w1 * lk * ikq
        vkq = eq[k] + rk_ * ikq + lk * dx[2 * k + 1] + w1 * lk * ikd
        c = cth[k]
        s = sth[k]
        vld = vkd * c + vkq * s
        vlq = -vkd * s + vkq * c
        # converter current is injected: -i_k
        ild = -(ikd * c + ikq * s)
        ilq = -(-ikd * s + ikq * c)
        vfq = x[o + 5]
        tau = row[COL_TAU]
        dx[o] = row[COL_IREF_D] - x[o + 6]
        dx[o + 1] = row[COL_IREF_Q] - x[o + 7]
        dx[o + 2] = row[COL_KI_PLL] * vfq
        dx[o + 3] = row[COL_KP_PLL] * vfq + x[o + 2]
        dx[o + 4] = (vld - x[o + 4]) / tau
        dx[o + 5] = (vlq - vfq) / tau
        dx[o + 6] = (ild - x[o + 6]) / tau
        dx[o + 7] = (ilq - x[o + 7]) / tau
        if row[COL_HAS_DELAY] != 0.0:
            a = row[COL_PADE_A]
            b = row[COL_PADE_B]
            dx[o + 8] = x[o + 9]
            dx[o + 9] = (ecd_l[k] - x[o + 8] - a * x[o + 9]) / b
            dx[o + 10] = x[o + 11]
            dx[o + 11] = (ecq_l[k] - x[o + 10] - a * x[o + 11]) / b


def run(x, t0, dt, n_steps, inj, glob, minv, rmat, units, method, w, out):
    """Advance ``x`` in place by ``n_steps`` fixed steps.

    ``out`` (shape ``(m, 4)``, ``m`` either 0 or ``n_steps``) receives the
    interface outputs at the start of every step. ``w`` is the simplified
    Newton matrix ``(I - dt/2 J)^-1`` for the trapezoidal rule (ignored by
    RK4).
    """
    ns = len(x)
    xs = [float(v) for v in x]
    glob_l = [float(v) for v in glob]
    inj_l = [float(v) for v in inj]
    minv_l = [[float(v) for v in r] for r in minv]
    rmat_l = [[float(v) for v in r] for r in rmat]
    units_l = [[float(v) for v in r] for r in units]
    record = len(out) > 0
    k1 = [0.0] * ns
    k2 = [0.0] * ns
    k3 = [0.0] * ns
    k4 = [0.0] * ns
    tmp = [0.0] * ns
    o = [0.0] * 4
    o2 = [0.0] * 4
    w_l = [[float(v) for v in r] for r in w] if method == TRAPEZOIDAL else None
    h2 = 0.5 * dt
    for step in range(n_steps):
        t = t0 + step * dt
        rhs(xs, t, inj_l, glob_l, minv_l, rmat_l, units_l, k1, o)
        if record:
            out[step][0] = o[0]
            out[step][1] = o[1]
            out[step][2] = o[2]
            out[step][3] = o[3]
        if method == RK4:
            for i in range(ns):
                tmp[i] = xs[i] + h2 * k1[i]
            rhs(tmp, t + h2, inj_l, glob_l, minv_l, rmat_l, units_l, k2, o2)
            for i in range(ns):
                tmp[i] = xs[i] + h2 * k2[i]
            rhs(tmp, t + h2, inj_l, glob_l, minv_l, rmat_l, units_l, k3, o2)
            for i in range(ns):
                tmp[i] = xs[i] + dt * k3[i]
            rhs(tmp, t + dt, inj_l, glob_l, minv_l, rmat_l, units_l, k4, o2)
            for i in range(ns):
                xs[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            # predictor: explicit Euler, then simplified Newton on
            # g(y) = y - x - dt/2 (f(x) + f(y))
            for i in range(ns):
                tmp[i] = xs[i] + dt * k1[i]
            for _ in range(20):
                rhs(tmp, t + dt, inj_l, glob_l, minv_l, rmat_l, units_l, k2, o2)
                for i in range(ns):
                    k3[i] = tmp[i] - xs[i] - h2 * (k1[i] + k2[i])
                big = 0.0
                scale = 0.0
                for i in range(ns):
                    acc = 0.0
                    wi = w_l[i]
                    for j in range(ns):
                        acc += wi[j] * k3[j]
                    tmp[i] -= acc
                    if abs(acc) > big:
                        big = abs(acc)
                    if abs(tmp[i]) > scale:
                        scale = abs(tmp[i])
                if big <= 1e-13 * (1.0 + scale):
                    break
            for i in range(ns):
                xs[i] = tmp[i]
    for i in range(ns):
        x[i] = xs[i]
