"""Spherically symmetric finite elements for the particle-SEI problem.

The particle occupies ``0 <= r <= 1`` and carries concentration ``c``,
chemical potential ``mu`` and radial displacement ``u``; the SEI shell
``1 <= r <= 1 + L_S`` carries displacement only.  The displacement field is a
single continuous field over both subdomains, so the interface node is shared
and traction continuity is natural.

With ``u = u(r) e_r`` the deformation gradient is
``diag(1 + u', 1 + u/r, 1 + u/r)`` and the momentum residual reads
``int (P_rr xi' + 2 P_tt xi / r) r^2 dr``; ``1/r`` is only evaluated at Gauss
points, never at the centre.
"""
import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from . import _pykernels
from .constitutive import G_S, YIELD, kernel_parameters
from .errors import JacobianNonFinite, QuadraturePointFailure, SampleOutOfDomain

STRAIN_MODES = {"gsv": 0, "log": 1}
PLASTIC_MODES = {"elastic": 0, "plastic": 1, "rate_independent": 1, "viscoplastic": 2}

_SQRT23 = np.sqrt(2.0 / 3.0)
_INV_SQRT6 = 1.0 / np.sqrt(6.0)


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference element [-1, 1]."""
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, n):
        points, weights = np.polynomial.legendre.leggauss(n)
        return cls(points, weights)


def lagrange_basis(order, xi):
    """Equidistant Lagrange shape functions and ``d/dxi`` on [-1, 1].

    Returns arrays of shape ``(len(xi), order + 1)``.
    """
    nodes = np.linspace(-1.0, 1.0, order + 1)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    N = np.ones((xi.size, order + 1))
    dN = np.zeros((xi.size, order + 1))
    for a in range(order + 1):
        others = [b for b in range(order + 1) if b != a]
        for b in others:
            N[:, a] *= (xi - nodes[b]) / (nodes[a] - nodes[b])
        for m in others:
            term = np.full(xi.size, 1.0 / (nodes[a] - nodes[m]))
            for b in others:
                if b != m:
                    term *= (xi - nodes[b]) / (nodes[a] - nodes[b])
            dN[:, a] += term
    return N, dN


@dataclass(frozen=True)
class Mesh:
    """Uniform radial mesh; global nodes are numbered outward from the centre."""
    n_elem_particle: int
    n_elem_sei: int
    order: int
    sei_thickness: float
    nodes: np.ndarray
    connectivity: np.ndarray
    tags: np.ndarray             # 0 particle, 1 SEI

    @property
    def n_particle_nodes(self):
        return self.n_elem_particle * self.order + 1

    @property
    def n_sei_nodes(self):
        return self.n_elem_sei * self.order + 1 if self.n_elem_sei else 0

    @property
    def outer_radius(self):
        return 1.0 + (self.sei_thickness if self.n_elem_sei else 0.0)

    def element_size(self, tag):
        if tag == 0:
            return 1.0 / self.n_elem_particle
        return self.sei_thickness / self.n_elem_sei


@dataclass(frozen=True)
class DofMap:
    """Block layout ``(c, mu, u_P, u_S)`` of the global state vector.

    ``u_S`` excludes the interface node, whose displacement is the last
    entry of ``u_P``.
    """
    n_particle_nodes: int
    n_sei_nodes: int

    @property
    def n_u(self):
        return self.n_particle_nodes + max(self.n_sei_nodes - 1, 0)

    @property
    def size(self):
        return 2 * self.n_particle_nodes + self.n_u

    @property
    def c(self):
        return slice(0, self.n_particle_nodes)

    @property
    def mu(self):
        return slice(self.n_particle_nodes, 2 * self.n_particle_nodes)

    @property
    def u(self):
        return slice(2 * self.n_particle_nodes, self.size)

    @property
    def u_particle(self):
        start = 2 * self.n_particle_nodes
        return slice(start, start + self.n_particle_nodes)

    @property
    def u_sei(self):
        start = 3 * self.n_particle_nodes
        return slice(start, self.size)

    def u_index(self, node):
        """Dof of the displacement at global node ``node``."""
        return 2 * self.n_particle_nodes + node

    @property
    def differential(self):
        mask = np.zeros(self.size, dtype=bool)
        mask[self.c] = True
        return mask

    def interleaved_permutation(self):
        """Node-wise ordering (c, mu, u per particle node, then SEI u)."""
        n = self.n_particle_nodes
        nodes = np.arange(n)
        particle = np.stack([nodes, n + nodes, 2 * n + nodes], axis=1).ravel()
        return np.concatenate([particle, np.arange(3 * n, self.size)])


def build_mesh(n_elem_P, n_elem_S, L_S, p):
    """Uniform mesh of ``n_elem_P`` particle and ``n_elem_S`` SEI elements.

    ``n_elem_S = 0`` gives a particle without SEI.
    """
    if n_elem_P < 1 or n_elem_S < 0 or p < 1 or not L_S > 0.0:
        raise ValueError("need n_elem_P >= 1, n_elem_S >= 0, p >= 1 and L_S > 0")
    r_p = np.linspace(0.0, 1.0, n_elem_P * p + 1)
    conn = [np.arange(e * p, e * p + p + 1) for e in range(n_elem_P)]
    nodes = r_p
    if n_elem_S:
        r_s = np.linspace(1.0, 1.0 + L_S, n_elem_S * p + 1)
        nodes = np.concatenate([r_p, r_s[1:]])
        base = n_elem_P * p
        conn += [np.arange(base + e * p, base + e * p + p + 1) for e in range(n_elem_S)]
    tags = np.array([0] * n_elem_P + [1] * n_elem_S)
    mesh = Mesh(n_elem_P, n_elem_S, p, float(L_S), nodes, np.array(conn), tags)
    return mesh, DofMap(mesh.n_particle_nodes, mesh.n_sei_nodes)


@dataclass
class SeiInternalState:
    """Plastic variables at SEI material points.

    Each element stores its Gauss points first, followed by the two element
    end points ``xi = -1, +1``.  The end points do not enter the weak form;
    they make the material state available exactly at nodes (in particular
    at the interface) for output.
    """
    fpl: np.ndarray        # (n_el, n_mp, 2): diagonal (rr, tt) of F_pl
    eps: np.ndarray        # (n_el, n_mp)

    @classmethod
    def identity(cls, n_el, n_mp):
        return cls(np.ones((n_el, n_mp, 2)), np.zeros((n_el, n_mp)))

    def copy(self):
        return SeiInternalState(self.fpl.copy(), self.eps.copy())

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.fpl).tobytes())
        h.update(np.ascontiguousarray(self.eps).tobytes())
        return h.hexdigest()


class RadialProblem:
    """Residual, Jacobian and postprocessing of the semi-discrete system.

    The semi-discrete equations are ``M y' = f(y)`` with the consistent mass
    matrix acting on the concentration block only.  ``f`` depends on the
    committed SEI state and, for viscoplasticity, on the step size ``tau``.

    Parameters
    ----------
    mesh, dofmap : Mesh, DofMap
    params : MaterialParams
    curve : OcvCurve
    strain_mode : {"gsv", "log"}
        Elastic strain measure of the SEI; the particle always uses GSV.
    plastic_mode : {"elastic", "plastic", "viscoplastic"}
    quad_points : int
        Gauss--Legendre points per element.
    backend : str, optional
        Kernel backend name, see :func:`sisei.kernels.get_backend`.
    """

    def __init__(self, mesh, dofmap, params, curve, strain_mode="log",
                 plastic_mode="elastic", quad_points=6, backend=None):
        if strain_mode not in STRAIN_MODES:
            raise ValueError(f"unknown strain mode {strain_mode!r}")
        if plastic_mode not in PLASTIC_MODES:
            raise ValueError(f"unknown plasticity mode {plastic_mode!r}")
        if strain_mode == "gsv" and PLASTIC_MODES[plastic_mode] != 0:
            raise ValueError("plasticity requires the logarithmic strain")
        self.mesh = mesh
        self.dofmap = dofmap
        self.params = params
        self.curve = curve
        self.strain_mode = strain_mode
        self.plastic_mode = plastic_mode
        self._smode = STRAIN_MODES[strain_mode]
        self._pmode = PLASTIC_MODES[plastic_mode]
        self.kern = kernels.get_backend(backend) if backend else kernels.active
        self.prm = kernel_parameters(params)
        self.breaks, self.coef = curve.piecewise_coefficients()
        self.quad = QuadRule.gauss_legendre(quad_points)
        self.surface_flux = 0.0
        p = mesh.order
        n_q = quad_points
        self.N, dN_xi = lagrange_basis(p, self.quad.points)

        nP = mesh.n_elem_particle
        hP = mesh.element_size(0)
        self.dN_P = dN_xi * (2.0 / hP)
        left = np.arange(nP)[:, None] * hP
        self.r_P = left + 0.5 * hP * (self.quad.points[None, :] + 1.0)
        self.wr2_P = self.quad.weights[None, :] * 0.5 * hP * self.r_P ** 2
        n = dofmap.n_particle_nodes
        pnodes = mesh.connectivity[:nP]
        self.pdofs = np.stack([pnodes, n + pnodes, 2 * n + pnodes], axis=1)

        nS = mesh.n_elem_sei
        self.has_sei = nS > 0
        self.n_q = n_q
        self.xi_mp = np.concatenate([self.quad.points, [-1.0, 1.0]])
        if self.has_sei:
            hS = mesh.element_size(1)
            self.dN_S = dN_xi * (2.0 / hS)
            left = 1.0 + np.arange(nS)[:, None] * hS
            self.r_S = left + 0.5 * hS * (self.quad.points[None, :] + 1.0)
            self.wr2_S = self.quad.weights[None, :] * 0.5 * hS * self.r_S ** 2
            self.sdofs = 2 * n + mesh.connectivity[nP:]
            self.N_mp, dN_mp = lagrange_basis(p, self.xi_mp)
            self.dN_mp = dN_mp * (2.0 / hS)
            self.r_mp = left + 0.5 * hS * (self.xi_mp[None, :] + 1.0)
        self.internal = SeiInternalState.identity(nS, n_q + 2)
        self._build_pattern()

    # ------------------------------------------------------------------ setup
    @property
    def size(self):
        return self.dofmap.size

    @property
    def u0_dof(self):
        return self.dofmap.u_index(0)

    @property
    def surface_c_dof(self):
        return self.dofmap.n_particle_nodes - 1

    @property
    def surface_mu_dof(self):
        return 2 * self.dofmap.n_particle_nodes - 1

    def _build_pattern(self):
        n = self.size
        rows, cols = [], []
        blocks = [self.pdofs.reshape(self.pdofs.shape[0], -1)]
        if self.has_sei:
            blocks.append(self.sdofs)
        for idx in blocks:
            k = idx.shape[1]
            rows.append(np.repeat(idx[:, :, None], k, axis=2).ravel())
            cols.append(np.repeat(idx[:, None, :], k, axis=1).ravel())
        rows.append(np.array([self.u0_dof]))
        cols.append(np.array([self.u0_dof]))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = cols.astype(np.int64) * n + rows
        uniq, self._scatter = np.unique(keys, return_inverse=True)
        self._nnz = uniq.size
        self._indices = (uniq % n).astype(np.int32)
        col_of = uniq // n
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(col_of, minlength=n))]).astype(np.int32)
        self._dirichlet = rows == self.u0_dof
        self._dirichlet[-1] = False

        nP, k = self.pdofs.shape[0], self.pdofs[0].size
        Me = np.zeros((nP, 3, self.N.shape[1], 3, self.N.shape[1]))
        Me[:, 0, :, 0, :] = np.einsum("eq,qa,qb->eab", self.wr2_P, self.N, self.N)
        vals = np.zeros(rows.size)
        vals[:nP * k * k] = Me.reshape(nP, k, k).ravel()
        self.mass = self._to_csc(vals)
        self._mass_cc = self.mass[self.dofmap.c, self.dofmap.c].tocsc()

    def _to_csc(self, vals):
        data = np.bincount(self._scatter, weights=vals, minlength=self._nnz)
        return sp.csc_matrix((data, self._indices.copy(), self._indptr.copy()),
                             shape=(self.size, self.size))

    # --------------------------------------------------------------- assembly
    def _gather(self, y):
        loc_P = np.ascontiguousarray(y[self.pdofs])
        loc_S = np.ascontiguousarray(y[self.sdofs]) if self.has_sei else None
        return loc_P, loc_S

    def _fpl_gauss(self):
        return np.ascontiguousarray(self.internal.fpl[:, :self.n_q, :])

    def residual(self, y, tau=0.0):
        """Right-hand side ``f(y)`` of ``M y' = f(y)``."""
        loc_P, loc_S = self._gather(y)
        res_P = np.empty_like(loc_P)
        self.kern.particle_residual(loc_P, self.N, self.dN_P, self.r_P, self.wr2_P,
                                    self.prm, self.breaks, self.coef, res_P)
        f = np.bincount(self.pdofs.ravel(), weights=res_P.ravel(), minlength=self.size)
        bad_P = ~np.isfinite(res_P).all(axis=(1, 2))
        bad_S = np.zeros(0, dtype=bool)
        if self.has_sei:
            res_S = np.empty_like(loc_S)
            self.kern.sei_residual(loc_S, self.N, self.dN_S, self.r_S, self.wr2_S,
                                   self._fpl_gauss(), float(tau), self._smode, self._pmode,
                                   self.prm, res_S)
            f += np.bincount(self.sdofs.ravel(), weights=res_S.ravel(), minlength=self.size)
            bad_S = ~np.isfinite(res_S).all(axis=1)
        if bad_P.any() or bad_S.any():
            raise self._locate_failure(y, bad_P, bad_S, tau)
        f[self.surface_c_dof] += self.surface_flux
        f[self.u0_dof] = -y[self.u0_dof]
        return f

    def jacobian(self, y, tau=0.0):
        """Element-local central-difference Jacobian ``df/dy`` (CSC)."""
        loc_P, loc_S = self._gather(y)
        nP, k = loc_P.shape[0], loc_P[0].size
        res_P = np.empty_like(loc_P)
        jac_P = np.empty((nP, k, k))
        self.kern.particle_jacobian(loc_P, self.N, self.dN_P, self.r_P, self.wr2_P,
                                    self.prm, self.breaks, self.coef, res_P, jac_P)
        parts = [jac_P.ravel()]
        if self.has_sei:
            nS, kS = loc_S.shape
            res_S = np.empty_like(loc_S)
            jac_S = np.empty((nS, kS, kS))
            self.kern.sei_jacobian(loc_S, self.N, self.dN_S, self.r_S, self.wr2_S,
                                   self._fpl_gauss(), float(tau), self._smode, self._pmode,
                                   self.prm, res_S, jac_S)
            parts.append(jac_S.ravel())
        parts.append(np.array([-1.0]))
        vals = np.concatenate(parts)
        if not np.all(np.isfinite(vals)):
            raise JacobianNonFinite("non-finite entries in the element Jacobians")
        vals[self._dirichlet] = 0.0
        return self._to_csc(vals)

    def _locate_failure(self, y, bad_P, bad_S, tau):
        if bad_P.any():
            e = int(np.flatnonzero(bad_P)[0])
            loc = y[self.pdofs[e]]
            fields = _pykernels.particle_point(
                self.N @ loc[0], self.dN_P @ loc[1], self.N @ loc[2], self.dN_P @ loc[2],
                self.r_P[e], self.prm, self.breaks, self.coef)
            pts = np.flatnonzero(~np.isfinite(fields[0]) | ~np.isfinite(fields[2]))
            return QuadraturePointFailure("particle", e, int(pts[0]) if pts.size else -1)
        e = int(np.flatnonzero(bad_S)[0])
        loc = y[self.sdofs[e]]
        f_r = 1.0 + self.dN_S @ loc
        f_t = 1.0 + (self.N @ loc) / self.r_S[e]
        p_r, p_t = _pykernels.sei_point(f_r, f_t, self.internal.fpl[e, :self.n_q], tau,
                                        self._smode, self._pmode, self.prm)[:2]
        pts = np.flatnonzero(~np.isfinite(p_r) | ~np.isfinite(p_t))
        return QuadraturePointFailure("sei", e, int(pts[0]) if pts.size else -1)

    # ------------------------------------------------------- internal variables
    def sei_material_point_law(self, y, tau, state=None, plastic_mode=None):
        """Evaluate the SEI law at all material points.

        Returns ``(f_r, f_t, out)`` with ``out[..., k]`` holding
        ``(P_rr, P_tt, delta_eps, sign, E_rr, E_tt)`` of the returned state.
        """
        state = self.internal if state is None else state
        pmode = self._pmode if plastic_mode is None else plastic_mode
        loc = y[self.sdofs]
        f_r = 1.0 + loc @ self.dN_mp.T
        f_t = 1.0 + (loc @ self.N_mp.T) / self.r_mp
        out = np.empty((f_r.size, 6))
        self.kern.sei_update(np.ascontiguousarray(f_r.ravel()), np.ascontiguousarray(f_t.ravel()),
                             np.ascontiguousarray(state.fpl.reshape(-1, 2)), float(tau),
                             self._smode, pmode, self.prm, out)
        return f_r, f_t, out.reshape(f_r.shape + (6,))

    def commit(self, y, tau):
        """Exponential-map update of the SEI state for an accepted step.

        Returns the largest yield-function value after the update, in units
        of the yield stress (``-inf`` without SEI).
        """
        if not self.has_sei:
            return -np.inf
        _, _, out = self.sei_material_point_law(y, tau)
        delta, sign = out[..., 2], out[..., 3]
        fpl = self.internal.fpl.copy()
        fpl[..., 0] *= np.exp(delta * sign * _SQRT23)
        fpl[..., 1] *= np.exp(-delta * sign * _INV_SQRT6)
        self.internal = SeiInternalState(fpl, self.internal.eps + delta)
        return self.yield_excess(out[..., 4], out[..., 5])

    def yield_excess(self, e_r, e_t):
        q = _SQRT23 * 2.0 * self.prm[G_S] * np.abs(e_r - e_t)
        return float(np.max((q - self.prm[YIELD]) / (self.prm[YIELD] / _SQRT23)))

    # ---------------------------------------------------------- postprocessing
    def integrate_total_lithium(self, y):
        """``3 int_0^1 c r^2 dr``: the mean normalised concentration."""
        c = y[self.dofmap.c]
        return 3.0 * float(np.sum(self._mass_cc @ c))

    def sample_fields(self, y, radii, interface_side="particle"):
        """Fields at the given reference radii.

        Returns a dict of arrays ``r, c, mu, u, sigma_rr, sigma_tt`` (Cauchy
        stresses, dimensionless by E_P); ``c`` and ``mu`` are NaN in the SEI.
        At ``r == 1`` the particle side is reported unless
        ``interface_side="sei"``.
        """
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if np.any(radii < 0.0) or np.any(radii > self.mesh.outer_radius + 1e-14):
            raise SampleOutOfDomain(f"radii must lie in [0, {self.mesh.outer_radius}]")
        out = {k: np.full(radii.size, np.nan) for k in ("c", "mu", "u", "sigma_rr", "sigma_tt")}
        out["r"] = radii.copy()
        in_sei = (radii > 1.0) | ((radii == 1.0) & (interface_side == "sei") & self.has_sei)
        for i, r in enumerate(radii):
            if in_sei[i]:
                self._sample_sei(y, r, out, i)
            else:
                self._sample_particle(y, r, out, i)
        return out

    def _locate(self, r, start, h, n_el):
        e = min(int((r - start) / h), n_el - 1)
        xi = 2.0 * (r - start - e * h) / h - 1.0
        return e, np.clip(xi, -1.0, 1.0)

    def _sample_particle(self, y, r, out, i):
        h = self.mesh.element_size(0)
        e, xi = self._locate(r, 0.0, h, self.mesh.n_elem_particle)
        N, dN = lagrange_basis(self.mesh.order, xi)
        dN = dN * (2.0 / h)
        loc = y[self.pdofs[e]]
        c = N @ loc[0]
        u = N @ loc[2]
        du = dN @ loc[2]
        # u/r -> u'(0) at the centre
        if r > 0.0:
            u_arg, r_arg = u, np.array([r])
        else:
            u_arg, r_arg = du, np.ones(1)
        _, _, p_r, p_t = _pykernels.particle_point(c, dN @ loc[1], u_arg, du, r_arg,
                                                   self.prm, self.breaks, self.coef)
        f_r = 1.0 + du
        f_t = 1.0 + u_arg / r_arg
        J = f_r * f_t * f_t
        out["c"][i] = c[0]
        out["mu"][i] = (N @ loc[1])[0]
        out["u"][i] = u[0]
        out["sigma_rr"][i] = (p_r * f_r / J)[0]
        out["sigma_tt"][i] = (p_t * f_t / J)[0]

    def _sample_sei(self, y, r, out, i):
        h = self.mesh.element_size(1)
        e, xi = self._locate(r, 1.0, h, self.mesh.n_elem_sei)
        N, dN = lagrange_basis(self.mesh.order, xi)
        dN = dN * (2.0 / h)
        loc = y[self.sdofs[e]]
        u = N @ loc
        f_r = 1.0 + dN @ loc
        f_t = 1.0 + u / r
        order = np.argsort(self.xi_mp)
        log_fpl = np.log(self.internal.fpl[e, order, :])
        fpl = np.exp([np.interp(xi, self.xi_mp[order], log_fpl[:, k]) for k in (0, 1)])
        p_r, p_t = _pykernels.sei_point(f_r, f_t, fpl[None, :], 0.0, self._smode, 0, self.prm)[:2]
        J = f_r * f_t * f_t
        out["u"][i] = u[0]
        out["sigma_rr"][i] = (p_r * f_r / J)[0]
        out["sigma_tt"][i] = (p_t * f_t / J)[0]

    def interface_hoop_stress(self, y):
        """SEI tangential Cauchy stress at ``r = 1`` (dimensionless by E_P)."""
        if not self.has_sei:
            return np.nan
        return float(self.sample_fields(y, [1.0], interface_side="sei")["sigma_tt"][0])

    def surface_chemical_potential(self, y):
        return float(y[self.surface_mu_dof])

    # ---------------------------------------------------------- initial data
    def swelling_state(self, c_bar, sei_shift=True):
        """Homogeneous swelling state at concentration ``c_bar``.

        ``u_P = (lambda_ch - 1) r``; in the SEI the displacement is the
        interface value ``lambda_ch - 1`` when ``sei_shift`` is set, the
        linear continuation ``(lambda_ch - 1) r`` otherwise.  Only the
        particle part is stress free; the SEI does not swell.
        """
        lam = np.cbrt(1.0 + self.params.v_pmv_cmax * c_bar)
        y = np.zeros(self.size)
        y[self.dofmap.c] = c_bar
        y[self.dofmap.mu] = -float(self.curve(c_bar))
        r = self.mesh.nodes
        y[self.dofmap.u] = (lam - 1.0) * (np.minimum(r, 1.0) if sei_shift else r)
        return y
