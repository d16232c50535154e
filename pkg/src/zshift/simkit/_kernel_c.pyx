# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernel; arithmetic identical to ``_kernel_py``."""
from libc.math cimport cos, sin, fabs
from libc.stdlib cimport malloc, free

cdef enum:
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

cdef enum:
    G_ES_D = 0
    G_ES_Q = 1
    G_W1 = 2
    G_R_TH = 3
    G_L_TH = 4


cdef struct Work:
    double *ed
    double *eq
    double *ecd_l
    double *ecq_l
    double *cth
    double *sth
    double *rd
    double *rq


cdef void _rhs(const double *x, double t, const double[::1] inj, const double[::1] glob,
               const double[:, ::1] minv, const double[:, ::1] rmat,
               const double[:, ::1] units, double *dx, double *outs, Work *w) noexcept nogil:
    cdef Py_ssize_t n = units.shape[0]
    cdef Py_ssize_t k, m, o
    cdef double w1 = glob[G_W1]
    cdef double c_inj = cos(inj[2] * t)
    cdef double ud = glob[G_ES_D] + inj[0] * c_inj
    cdef double uq = glob[G_ES_Q] + inj[1] * c_inj
    cdef double ifd, ifq, ecd, ecq, c, s, accd, accq
    cdef double ithd = 0.0, ithq = 0.0, dithd = 0.0, dithq = 0.0
    cdef double ikd, ikq, lk, rk_, vkd, vkq, vld, vlq, ild, ilq, vfq, tau, a, b

    for k in range(n):
        w.ed[k] = 0.0
        w.eq[k] = 0.0
        w.cth[k] = 1.0
        w.sth[k] = 0.0
        if units[k, COL_IS_CONV] == 0.0:
            continue
        o = <Py_ssize_t> units[k, COL_OFFSET]
        ifd = x[o + 6]
        ifq = x[o + 7]
        ecd = units[k, COL_KKP] * (units[k, COL_IREF_D] - ifd) + units[k, COL_KKI] * x[o] - units[k, COL_W1L] * ifq + x[o + 4]
        ecq = units[k, COL_KKP] * (units[k, COL_IREF_Q] - ifq) + units[k, COL_KKI] * x[o + 1] + units[k, COL_W1L] * ifd + x[o + 5]
        w.ecd_l[k] = ecd
        w.ecq_l[k] = ecq
        if units[k, COL_HAS_DELAY] != 0.0:
            ecd = ecd - 2.0 * units[k, COL_PADE_A] * x[o + 9]
            ecq = ecq - 2.0 * units[k, COL_PADE_A] * x[o + 11]
        c = cos(x[o + 3])
        s = sin(x[o + 3])
        w.cth[k] = c
        w.sth[k] = s
        w.ed[k] = ecd * c - ecq * s
        w.eq[k] = ecd * s + ecq * c

    for k in range(n):
        accd = ud - w.ed[k]
        accq = uq - w.eq[k]
        for m in range(n):
            accd -= rmat[k, m] * x[2 * m]
            accq -= rmat[k, m] * x[2 * m + 1]
        w.rd[k] = accd
        w.rq[k] = accq

    for k in range(n):
        accd = w1 * x[2 * k + 1]
        accq = -w1 * x[2 * k]
        for m in range(n):
            accd += minv[k, m] * w.rd[m]
            accq += minv[k, m] * w.rq[m]
        dx[2 * k] = accd
        dx[2 * k + 1] = accq
        ithd += x[2 * k]
        ithq += x[2 * k + 1]
        dithd += accd
        dithq += accq

    cdef double lth = glob[G_L_TH]
    cdef double rth = glob[G_R_TH]
    outs[0] = ud - rth * ithd - lth * dithd + w1 * lth * ithq
    outs[1] = uq - rth * ithq - lth * dithq - w1 * lth * ithd
    outs[2] = ithd
    outs[3] = ithq

    for k in range(n):
        if units[k, COL_IS_CONV] == 0.0:
            continue
        o = <Py_ssize_t> units[k, COL_OFFSET]
        ikd = x[2 * k]
        ikq = x[2 * k + 1]
        lk = units[k, COL_L]
        rk_ = units[k, COL_R]
        vkd = w.ed[k] + rk_ * ikd + lk * dx[2 * k] - w1 * lk * ikq
        vkq = w.eq[k] + rk_ * ikq + lk * dx[2 * k + 1] + w1 * lk * ikd
        c = w.cth[k]
        s = w.sth[k]
        vld = vkd * c + vkq * s
        vlq = -vkd * s + vkq * c
        ild = -(ikd * c + ikq * s)
        ilq = -(-ikd * s + ikq * c)
        vfq = x[o + 5]
        tau = units[k, COL_TAU]
        dx[o] = units[k, COL_IREF_D] - x[o + 6]
        dx[o + 1] = units[k, COL_IREF_Q] - x[o + 7]
        dx[o + 2] = units[k, COL_KI_PLL] * vfq
        dx[o + 3] = units[k, COL_KP_PLL] * vfq + x[o + 2]
        dx[o + 4] = (vld - x[o + 4]) / tau
        dx[o + 5] = (vlq - vfq) / tau
        dx[o + 6] = (ild - x[o + 6]) / tau
        dx[o + 7] = (ilq - x[o + 7]) / tau
        if units[k, COL_HAS_DELAY] != 0.0:
            a = units[k, COL_PADE_A]
            b = units[k, COL_PADE_B]
            dx[o + 8] = x[o + 9]
            dx[o + 9] = (w.ecd_l[k] - x[o + 8] - a * x[o + 9]) / b
            dx[o + 10] = x[o + 11]
            dx[o + 11] = (w.ecq_l[k] - x[o + 10] - a * x[o + 11]) / b


cdef Work _alloc_work(Py_ssize_t n):
    cdef Work w
    cdef double *buf = <double *> malloc(8 * n * sizeof(double))
    w.ed = buf
    w.eq = buf + n
    w.ecd_l = buf + 2 * n
    w.ecq_l = buf + 3 * n
    w.cth = buf + 4 * n
    w.sth = buf + 5 * n
    w.rd = buf + 6 * n
    w.rq = buf + 7 * n
    return w


def rhs(double[::1] x, double t, const double[::1] inj, const double[::1] glob,
        const double[:, ::1] minv, const double[:, ::1] rmat, const double[:, ::1] units,
        double[::1] dx, double[::1] outs):
    cdef Work w = _alloc_work(units.shape[0])
    if w.ed == NULL:
        raise MemoryError()
    try:
        _rhs(&x[0], t, inj, glob, minv, rmat, units, &dx[0], &outs[0], &w)
    finally:
        free(w.ed)


def run(double[::1] x, double t0, double dt, Py_ssize_t n_steps, const double[::1] inj,
        const double[::1] glob, const double[:, ::1] minv, const double[:, ::1] rmat,
        const double[:, ::1] units, int method, const double[:, ::1] w, double[:, ::1] out):
    cdef Py_ssize_t ns = x.shape[0]
    cdef Py_ssize_t n = units.shape[0]
    cdef bint record = out.shape[0] > 0
    cdef double *mem = <double *> malloc((6 * ns + 8) * sizeof(double))
    cdef Work wk = _alloc_work(n)
    if mem == NULL or wk.ed == NULL:
        free(mem)
        free(wk.ed)
        raise MemoryError()
    cdef double *xs = mem
    cdef double *k1 = mem + ns
    cdef double *k2 = mem + 2 * ns
    cdef double *k3 = mem + 3 * ns
    cdef double *k4 = mem + 4 * ns
    cdef double *tmp = mem + 5 * ns
    cdef double *o = mem + 6 * ns
    cdef double *o2 = mem + 6 * ns + 4
    cdef Py_ssize_t step, i, j, it
    cdef double t, h2 = 0.5 * dt, acc, big, scale
    try:
        with nogil:
            for i in range(ns):
                xs[i] = x[i]
            for step in range(n_steps):
                t = t0 + step * dt
                _rhs(xs, t, inj, glob, minv, rmat, units, k1, o, &wk)
                if record:
                    out[step, 0] = o[0]
                    out[step, 1] = o[1]
                    out[step, 2] = o[2]
                    out[step, 3] = o[3]
                if method == 0:
                    for i in range(ns):
                        tmp[i] = xs[i] + h2 * k1[i]
                    _rhs(tmp, t + h2, inj, glob, minv, rmat, units, k2, o2, &wk)
                    for i in range(ns):
                        tmp[i] = xs[i] + h2 * k2[i]
                    _rhs(tmp, t + h2, inj, glob, minv, rmat, units, k3, o2, &wk)
                    for i in range(ns):
                        tmp[i] = xs[i] + dt * k3[i]
                    _rhs(tmp, t + dt, inj, glob, minv, rmat, units, k4, o2, &wk)
                    for i in range(ns):
                        xs[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                else:
                    for i in range(ns):
                        tmp[i] = xs[i] + dt * k1[i]
                    for it in range(20):
                        _rhs(tmp, t + dt, inj, glob, minv, rmat, units, k2, o2, &wk)
                        for i in range(ns):
                            k3[i] = tmp[i] - xs[i] - h2 * (k1[i] + k2[i])
                        big = 0.0
                        scale = 0.0
                        for i in range(ns):
                            acc = 0.0
                            for j in range(ns):
                                acc += w[i, j] * k3[j]
                            tmp[i] -= acc
                            if fabs(acc) > big:
                                big = fabs(acc)
                            if fabs(tmp[i]) > scale:
                                scale = fabs(tmp[i])
                        if big <= 1e-13 * (1.0 + scale):
                            break
                    for i in range(ns):
                        xs[i] = tmp[i]
            for i in range(ns):
                x[i] = xs[i]
    finally:
        free(mem)
        free(wk.ed)
