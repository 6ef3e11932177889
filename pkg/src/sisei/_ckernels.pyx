# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled radial element kernels.

Same functions and calling convention as :mod:`sisei._pykernels`; see there
for the array layouts.  Element loops run without the GIL and allocate no
Python objects.
"""
from libc.math cimport sqrt, cbrt, log, fabs, pow, NAN
from libc.stdlib cimport malloc, free

BACKEND = "cython"

# indices into the packed parameter vector (see constitutive.kernel_parameters)
cdef enum:
    LAM_P = 0
    G_P = 1
    SWELL = 2
    KAPPA = 3
    FOURIER = 4
    LAM_S = 5
    G_S = 6
    YIELD = 7
    OVERSTRESS = 8
    EPS0 = 9
    BETA = 10

cdef double SQRT23 = sqrt(2.0 / 3.0)
cdef double INV_SQRT6 = 1.0 / sqrt(6.0)
cdef double FD_STEP = sqrt(2.220446049250313e-16)


cdef inline void ocv(double c, const double[::1] breaks, const double[:, ::1] coef,
                     double* U, double* dU) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = breaks.shape[0] - 1, mid
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if breaks[mid] <= c:
            lo = mid
        else:
            hi = mid
    cdef double dx = c - breaks[lo]
    cdef double a0 = coef[0, lo], a1 = coef[1, lo], a2 = coef[2, lo], a3 = coef[3, lo]
    U[0] = ((a0 * dx + a1) * dx + a2) * dx + a3
    dU[0] = (3.0 * a0 * dx + 2.0 * a1) * dx + a2


cdef inline bint particle_point(double c, double grad_mu, double u, double du, double r,
                                const double[::1] prm, const double[::1] breaks,
                                const double[:, ::1] coef, double* out) noexcept nogil:
    """out = (flux, mu_model, p_r, p_t); returns False at invalid states."""
    cdef double lam_p = prm[LAM_P], g_p = prm[G_P], swell = prm[SWELL], kappa = prm[KAPPA]
    cdef double f_r = 1.0 + du
    cdef double f_t = 1.0 + u / r
    cdef double j3 = 1.0 + swell * c
    if not (f_r > 0.0 and f_t > 0.0 and j3 > 0.0):
        return False
    cdef double lam = cbrt(j3)
    cdef double lam2 = lam * lam
    cdef double e_r = 0.5 * (f_r * f_r / lam2 - 1.0)
    cdef double e_t = 0.5 * (f_t * f_t / lam2 - 1.0)
    cdef double tr = e_r + 2.0 * e_t
    cdef double s_r = lam_p * tr + 2.0 * g_p * e_r
    cdef double s_t = lam_p * tr + 2.0 * g_p * e_t
    cdef double c_r = f_r * f_r
    cdef double c_t = f_t * f_t
    cdef double cs = c_r * s_r + 2.0 * c_t * s_t
    cdef double tr_c = c_r + 2.0 * c_t
    cdef double ccc = (c_r * (lam_p * tr_c + 2.0 * g_p * c_r)
                       + 2.0 * c_t * (lam_p * tr_c + 2.0 * g_p * c_t))
    cdef double U, dU
    ocv(c, breaks, coef, &U, &dU)
    cdef double lam4 = lam2 * lam2
    cdef double dmu = (-dU + 5.0 * kappa * swell / (9.0 * lam4 * lam4) * cs
                       + kappa * swell / (9.0 * lam4 * lam4 * lam2) * ccc)
    if not dmu > 0.0:
        return False
    out[0] = prm[FOURIER] / dmu * grad_mu
    out[1] = -U - kappa / (3.0 * lam4 * lam) * cs
    out[2] = f_r * s_r / lam2
    out[3] = f_t * s_t / lam2
    return True


cdef inline double overstress_newton(double q, double x_ri, double a, double two_g,
                                     double radius, double scale, double beta) noexcept nogil:
    cdef double x = 0.0, lo = 0.0, hi = x_ri, tol = 1e-14 * x_ri
    cdef double k = a * beta * two_g / scale
    cdef double over, g, x_new
    cdef int it
    cdef bint done
    for it in range(200):
        over = (q - two_g * x - radius) / scale
        if over < 0.0:
            over = 0.0
        g = x - a * pow(over, beta)
        if g < 0.0:
            lo = x
        else:
            hi = x
        x_new = x - g / (1.0 + k * pow(over, beta - 1.0))
        if x_new < lo or x_new > hi:
            x_new = 0.5 * (lo + hi)
        done = fabs(x_new - x) <= tol or hi - lo <= tol
        x = x_new
        if done:
            break
    return x


cdef inline bint sei_point(double f_r, double f_t, double fpl_r, double fpl_t, double tau,
                           int strain_mode, int plastic_mode, const double[::1] prm,
                           double* out) noexcept nogil:
    """out = (p_r, p_t, delta, sign, e_r, e_t); returns False at invalid states."""
    cdef double lam_s = prm[LAM_S], g_s = prm[G_S]
    cdef double fe_r = f_r / fpl_r
    cdef double fe_t = f_t / fpl_t
    cdef double e_r, e_t, tr, d, q, excess, two_g, delta = 0.0, sign = 0.0
    cdef bint ok = f_r > 0.0 and f_t > 0.0
    if strain_mode == 0:
        e_r = 0.5 * (fe_r * fe_r - 1.0)
        e_t = 0.5 * (fe_t * fe_t - 1.0)
        tr = e_r + 2.0 * e_t
        out[0] = f_r * (lam_s * tr + 2.0 * g_s * e_r) / (fpl_r * fpl_r)
        out[1] = f_t * (lam_s * tr + 2.0 * g_s * e_t) / (fpl_t * fpl_t)
    else:
        if not (fe_r > 0.0 and fe_t > 0.0):
            ok = False
            e_r = NAN
            e_t = NAN
        else:
            e_r = log(fe_r)
            e_t = log(fe_t)
            two_g = 2.0 * g_s
            d = e_r - e_t
            sign = (d > 0.0) - (d < 0.0)
            q = SQRT23 * two_g * fabs(d)
            excess = q - prm[YIELD]
            if excess > 0.0:
                if plastic_mode == 1:
                    delta = excess / two_g
                elif plastic_mode == 2:
                    delta = overstress_newton(q, excess / two_g, tau * prm[EPS0], two_g,
                                              prm[YIELD], prm[OVERSTRESS], prm[BETA])
            e_r = e_r - delta * sign * SQRT23
            e_t = e_t + delta * sign * INV_SQRT6
        tr = e_r + 2.0 * e_t
        out[0] = (lam_s * tr + 2.0 * g_s * e_r) / f_r
        out[1] = (lam_s * tr + 2.0 * g_s * e_t) / f_t
    out[2] = delta
    out[3] = sign
    out[4] = e_r
    out[5] = e_t
    if not ok:
        out[0] = NAN
        out[1] = NAN
    return ok


cdef void particle_elem(const double* loc, Py_ssize_t nn, const double[:, ::1] N,
                        const double[:, ::1] dN, const double[:, ::1] r,
                        const double[:, ::1] wr2, Py_ssize_t e, const double[::1] prm,
                        const double[::1] breaks, const double[:, ::1] coef,
                        double* res) noexcept nogil:
    cdef Py_ssize_t nq = N.shape[0], q, a
    cdef double c, mu, gmu, u, du, w, rq
    cdef double pt[4]
    for a in range(3 * nn):
        res[a] = 0.0
    for q in range(nq):
        c = 0.0
        mu = 0.0
        gmu = 0.0
        u = 0.0
        du = 0.0
        for a in range(nn):
            c += N[q, a] * loc[a]
            mu += N[q, a] * loc[nn + a]
            gmu += dN[q, a] * loc[nn + a]
            u += N[q, a] * loc[2 * nn + a]
            du += dN[q, a] * loc[2 * nn + a]
        rq = r[e, q]
        if not particle_point(c, gmu, u, du, rq, prm, breaks, coef, pt):
            for a in range(3 * nn):
                res[a] = NAN
            return
        w = wr2[e, q]
        for a in range(nn):
            res[a] -= w * pt[0] * dN[q, a]
            res[nn + a] += w * (pt[1] - mu) * N[q, a]
            res[2 * nn + a] -= w * (pt[2] * dN[q, a] + 2.0 * pt[3] * N[q, a] / rq)


cdef void sei_elem(const double* loc, Py_ssize_t nn, const double[:, ::1] N,
                   const double[:, ::1] dN, const double[:, ::1] r, const double[:, ::1] wr2,
                   const double[:, :, ::1] fpl, Py_ssize_t e, double tau, int strain_mode,
                   int plastic_mode, const double[::1] prm, double* res) noexcept nogil:
    cdef Py_ssize_t nq = N.shape[0], q, a
    cdef double u, du, w, rq
    cdef double pt[6]
    for a in range(nn):
        res[a] = 0.0
    for q in range(nq):
        u = 0.0
        du = 0.0
        for a in range(nn):
            u += N[q, a] * loc[a]
            du += dN[q, a] * loc[a]
        rq = r[e, q]
        if not sei_point(1.0 + du, 1.0 + u / rq, fpl[e, q, 0], fpl[e, q, 1], tau,
                         strain_mode, plastic_mode, prm, pt):
            for a in range(nn):
                res[a] = NAN
            return
        w = wr2[e, q]
        for a in range(nn):
            res[a] -= w * (pt[0] * dN[q, a] + 2.0 * pt[1] * N[q, a] / rq)


def particle_residual(const double[:, :, ::1] loc, const double[:, ::1] N,
                      const double[:, ::1] dN, const double[:, ::1] r, const double[:, ::1] wr2,
                      const double[::1] prm, const double[::1] breaks,
                      const double[:, ::1] coef, double[:, :, ::1] res):
    cdef Py_ssize_t n_el = loc.shape[0], nn = loc.shape[2], e
    with nogil:
        for e in range(n_el):
            particle_elem(&loc[e, 0, 0], nn, N, dN, r, wr2, e, prm, breaks, coef, &res[e, 0, 0])


def sei_residual(const double[:, ::1] loc, const double[:, ::1] N, const double[:, ::1] dN,
                 const double[:, ::1] r, const double[:, ::1] wr2, const double[:, :, ::1] fpl,
                 double tau, int strain_mode, int plastic_mode, const double[::1] prm,
                 double[:, ::1] res):
    cdef Py_ssize_t n_el = loc.shape[0], nn = loc.shape[1], e
    with nogil:
        for e in range(n_el):
            sei_elem(&loc[e, 0], nn, N, dN, r, wr2, fpl, e, tau, strain_mode, plastic_mode,
                     prm, &res[e, 0])


def particle_jacobian(const double[:, :, ::1] loc, const double[:, ::1] N,
                      const double[:, ::1] dN, const double[:, ::1] r, const double[:, ::1] wr2,
                      const double[::1] prm, const double[::1] breaks,
                      const double[:, ::1] coef, double[:, :, ::1] res, double[:, :, ::1] jac):
    cdef Py_ssize_t n_el = loc.shape[0], nn = loc.shape[2], k = 3 * nn, e, i, j
    cdef double x, h, xp, xm
    cdef double* buf = <double*> malloc(3 * k * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* plus = buf + k
    cdef double* minus = buf + 2 * k
    try:
        with nogil:
            for e in range(n_el):
                for i in range(k):
                    buf[i] = (&loc[e, 0, 0])[i]
                particle_elem(buf, nn, N, dN, r, wr2, e, prm, breaks, coef, &res[e, 0, 0])
                for j in range(k):
                    x = buf[j]
                    h = FD_STEP * (1.0 + fabs(x))
                    xp = x + h
                    xm = x - h
                    buf[j] = xp
                    particle_elem(buf, nn, N, dN, r, wr2, e, prm, breaks, coef, plus)
                    buf[j] = xm
                    particle_elem(buf, nn, N, dN, r, wr2, e, prm, breaks, coef, minus)
                    buf[j] = x
                    for i in range(k):
                        jac[e, i, j] = (plus[i] - minus[i]) / (xp - xm)
    finally:
        free(buf)


def sei_jacobian(const double[:, ::1] loc, const double[:, ::1] N, const double[:, ::1] dN,
                 const double[:, ::1] r, const double[:, ::1] wr2, const double[:, :, ::1] fpl,
                 double tau, int strain_mode, int plastic_mode, const double[::1] prm,
                 double[:, ::1] res, double[:, :, ::1] jac):
    cdef Py_ssize_t n_el = loc.shape[0], k = loc.shape[1], e, i, j
    cdef double x, h, xp, xm
    cdef double* buf = <double*> malloc(3 * k * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* plus = buf + k
    cdef double* minus = buf + 2 * k
    try:
        with nogil:
            for e in range(n_el):
                for i in range(k):
                    buf[i] = loc[e, i]
                sei_elem(buf, k, N, dN, r, wr2, fpl, e, tau, strain_mode, plastic_mode, prm,
                         &res[e, 0])
                for j in range(k):
                    x = buf[j]
                    h = FD_STEP * (1.0 + fabs(x))
                    xp = x + h
                    xm = x - h
                    buf[j] = xp
                    sei_elem(buf, k, N, dN, r, wr2, fpl, e, tau, strain_mode, plastic_mode,
                             prm, plus)
                    buf[j] = xm
                    sei_elem(buf, k, N, dN, r, wr2, fpl, e, tau, strain_mode, plastic_mode,
                             prm, minus)
                    buf[j] = x
                    for i in range(k):
                        jac[e, i, j] = (plus[i] - minus[i]) / (xp - xm)
    finally:
        free(buf)


def sei_update(const double[::1] f_r, const double[::1] f_t, const double[:, ::1] fpl,
               double tau, int strain_mode, int plastic_mode, const double[::1] prm,
               double[:, ::1] out):
    cdef Py_ssize_t n = f_r.shape[0], i
    with nogil:
        for i in range(n):
            sei_point(f_r[i], f_t[i], fpl[i, 0], fpl[i, 1], tau, strain_mode, plastic_mode,
                      prm, &out[i, 0])
