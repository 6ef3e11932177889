"""Pure numpy implementation of the radial element kernels.

This is the fallback used when the compiled extension is unavailable, and the
reference the extension is tested against.  Every function fills
caller-provided output arrays so both backends share one calling convention.

Array conventions (``n_el`` elements, ``n_q`` points, ``n_n`` element nodes):

* ``N``, ``dN``: ``(n_q, n_n)`` shape values and physical derivatives,
* ``r``, ``wr2``: ``(n_el, n_q)`` point radii and weights ``w |J| r^2``,
* particle dofs ``loc``: ``(n_el, 3, n_n)`` ordered (c, mu, u),
* SEI dofs ``loc``: ``(n_el, n_n)``, plastic state ``fpl``: ``(n_el, n_q, 2)``
  holding the (rr, tt) entries of the diagonal plastic deformation gradient.
"""
import numpy as np

from .constitutive import (BETA, EPS0, FOURIER, G_P, G_S, KAPPA, LAM_P, LAM_S,
                           OVERSTRESS, SWELL, YIELD)

BACKEND = "python"

_SQRT23 = np.sqrt(2.0 / 3.0)
_INV_SQRT6 = 1.0 / np.sqrt(6.0)
_FD_STEP = np.sqrt(np.finfo(float).eps)


def ocv_eval(c, breaks, coef):
    i = np.clip(np.searchsorted(breaks, c, side="right") - 1, 0, breaks.size - 2)
    dx = c - breaks[i]
    a0, a1, a2, a3 = coef[0, i], coef[1, i], coef[2, i], coef[3, i]
    return ((a0 * dx + a1) * dx + a2) * dx + a3, (3.0 * a0 * dx + 2.0 * a1) * dx + a2


def particle_point(c, grad_mu, u, du, r, prm, breaks, coef):
    """Flux magnitude ``m mu'``, model chemical potential and Piola stresses."""
    lam_p, g_p, swell, kappa = prm[LAM_P], prm[G_P], prm[SWELL], prm[KAPPA]
    with np.errstate(all="ignore"):
        f_r = 1.0 + du
        f_t = 1.0 + u / r
        j3 = 1.0 + swell * c
        lam = np.cbrt(j3)
        lam2 = lam * lam
        e_r = 0.5 * (f_r * f_r / lam2 - 1.0)
        e_t = 0.5 * (f_t * f_t / lam2 - 1.0)
        tr = e_r + 2.0 * e_t
        s_r = lam_p * tr + 2.0 * g_p * e_r
        s_t = lam_p * tr + 2.0 * g_p * e_t
        p_r = f_r * s_r / lam2
        p_t = f_t * s_t / lam2
        c_r = f_r * f_r
        c_t = f_t * f_t
        cs = c_r * s_r + 2.0 * c_t * s_t
        tr_c = c_r + 2.0 * c_t
        ccc = c_r * (lam_p * tr_c + 2.0 * g_p * c_r) + 2.0 * c_t * (lam_p * tr_c + 2.0 * g_p * c_t)
        U, dU = ocv_eval(c, breaks, coef)
        lam4 = lam2 * lam2
        mu_model = -U - kappa / (3.0 * lam4 * lam) * cs
        dmu = (-dU + 5.0 * kappa * swell / (9.0 * lam4 * lam4) * cs
               + kappa * swell / (9.0 * lam4 * lam4 * lam2) * ccc)
        flux = prm[FOURIER] / dmu * grad_mu
        bad = ~((f_r > 0.0) & (f_t > 0.0) & (j3 > 0.0) & (dmu > 0.0))
    if np.any(bad):
        for a in (flux, mu_model, p_r, p_t):
            a[bad] = np.nan
    return flux, mu_model, p_r, p_t


def sei_return(e_r, e_t, tau, plastic_mode, prm):
    """Return map on diagonal log strains; gives ``(delta_eps, sign)``.

    The flow direction is ``sign * (sqrt(2/3), -1/sqrt(6), -1/sqrt(6))``.
    """
    two_g = 2.0 * prm[G_S]
    sign = np.sign(e_r - e_t)
    q = _SQRT23 * two_g * np.abs(e_r - e_t)
    excess = q - prm[YIELD]
    delta = np.zeros_like(q)
    if plastic_mode == 0:
        return delta, sign
    yielded = excess > 0.0
    if plastic_mode == 1:
        delta[yielded] = excess[yielded] / two_g
        return delta, sign
    qy = q[yielded]
    x_ri = excess[yielded] / two_g
    delta[yielded] = _overstress_newton(qy, x_ri, tau * prm[EPS0], two_g, prm[YIELD],
                                        prm[OVERSTRESS], prm[BETA])
    return delta, sign


def _overstress_newton(q, x_ri, a, two_g, radius, scale, beta):
    x = np.zeros_like(q)
    lo = np.zeros_like(q)
    hi = x_ri.copy()
    active = np.ones(q.shape, dtype=bool)
    tol = 1e-14 * x_ri
    k = a * beta * two_g / scale
    for _ in range(200):
        if not active.any():
            break
        xa = x[active]
        over = np.maximum((q[active] - two_g * xa - radius) / scale, 0.0)
        g = xa - a * over ** beta
        lo_a = np.where(g < 0.0, xa, lo[active])
        hi_a = np.where(g < 0.0, hi[active], xa)
        x_new = xa - g / (1.0 + k * over ** (beta - 1.0))
        out = (x_new < lo_a) | (x_new > hi_a)
        x_new[out] = 0.5 * (lo_a[out] + hi_a[out])
        done = (np.abs(x_new - xa) <= tol[active]) | (hi_a - lo_a <= tol[active])
        lo[active] = lo_a
        hi[active] = hi_a
        x[active] = x_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x


def sei_point(f_r, f_t, fpl, tau, strain_mode, plastic_mode, prm):
    """Piola stresses and return-map data at SEI material points.

    Returns ``(p_r, p_t, delta_eps, sign, e_r_adm, e_t_adm)``.
    """
    lam_s, g_s = prm[LAM_S], prm[G_S]
    with np.errstate(all="ignore"):
        fe_r = f_r / fpl[..., 0]
        fe_t = f_t / fpl[..., 1]
        if strain_mode == 0:
            e_r = 0.5 * (fe_r * fe_r - 1.0)
            e_t = 0.5 * (fe_t * fe_t - 1.0)
            tr = e_r + 2.0 * e_t
            p_r = f_r * (lam_s * tr + 2.0 * g_s * e_r) / fpl[..., 0] ** 2
            p_t = f_t * (lam_s * tr + 2.0 * g_s * e_t) / fpl[..., 1] ** 2
            delta = np.zeros_like(f_r)
            sign = np.zeros_like(f_r)
        else:
            e_r = np.log(fe_r)
            e_t = np.log(fe_t)
            delta, sign = sei_return(e_r, e_t, tau, plastic_mode, prm)
            e_r = e_r - delta * sign * _SQRT23
            e_t = e_t + delta * sign * _INV_SQRT6
            tr = e_r + 2.0 * e_t
            p_r = (lam_s * tr + 2.0 * g_s * e_r) / f_r
            p_t = (lam_s * tr + 2.0 * g_s * e_t) / f_t
        bad = ~((f_r > 0.0) & (f_t > 0.0))
    if np.any(bad):
        for a in (p_r, p_t):
            a[bad] = np.nan
    return p_r, p_t, delta, sign, e_r, e_t


def particle_residual(loc, N, dN, r, wr2, prm, breaks, coef, res):
    c = loc[:, 0] @ N.T
    grad_mu = loc[:, 1] @ dN.T
    mu = loc[:, 1] @ N.T
    u = loc[:, 2] @ N.T
    du = loc[:, 2] @ dN.T
    flux, mu_model, p_r, p_t = particle_point(c, grad_mu, u, du, r, prm, breaks, coef)
    res[:, 0] = -(flux * wr2) @ dN
    res[:, 1] = ((mu_model - mu) * wr2) @ N
    res[:, 2] = -((p_r * wr2) @ dN + (2.0 * p_t * wr2 / r) @ N)


def sei_residual(loc, N, dN, r, wr2, fpl, tau, strain_mode, plastic_mode, prm, res):
    u = loc @ N.T
    f_r = 1.0 + loc @ dN.T
    f_t = 1.0 + u / r
    p_r, p_t = sei_point(f_r, f_t, fpl, tau, strain_mode, plastic_mode, prm)[:2]
    res[:] = -((p_r * wr2) @ dN + (2.0 * p_t * wr2 / r) @ N)


def _fd_jacobian(evaluate, loc, res, jac):
    n_el = loc.shape[0]
    flat = loc.reshape(n_el, -1)
    n_dof = flat.shape[1]
    evaluate(loc, res)
    plus = np.empty_like(res)
    minus = np.empty_like(res)
    for j in range(n_dof):
        x = flat[:, j].copy()
        h = _FD_STEP * (1.0 + np.abs(x))
        xp = x + h
        xm = x - h
        flat[:, j] = xp
        evaluate(loc, plus)
        flat[:, j] = xm
        evaluate(loc, minus)
        flat[:, j] = x
        jac[:, :, j] = (plus - minus).reshape(n_el, -1) / (xp - xm)[:, None]


def particle_jacobian(loc, N, dN, r, wr2, prm, breaks, coef, res, jac):
    loc = np.array(loc, dtype=float)

    def evaluate(l, out):
        particle_residual(l, N, dN, r, wr2, prm, breaks, coef, out)

    _fd_jacobian(evaluate, loc, res, jac)


def sei_jacobian(loc, N, dN, r, wr2, fpl, tau, strain_mode, plastic_mode, prm, res, jac):
    loc = np.array(loc, dtype=float)

    def evaluate(l, out):
        sei_residual(l, N, dN, r, wr2, fpl, tau, strain_mode, plastic_mode, prm, out)

    _fd_jacobian(evaluate, loc, res, jac)


def sei_update(f_r, f_t, fpl, tau, strain_mode, plastic_mode, prm, out):
    """Point-wise SEI law on flat arrays; ``out`` is ``(n, 6)``."""
    values = sei_point(f_r, f_t, fpl, tau, strain_mode, plastic_mode, prm)
    for k, v in enumerate(values):
        out[:, k] = v
