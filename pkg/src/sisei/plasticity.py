"""Rate-independent and rate-dependent plasticity of the SEI.

The return mapping is carried out in logarithmic elastic strain space, where
isotropic finite-strain J2 plasticity with an exponential-map update of the
plastic deformation gradient reduces to the classical radial return.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .errors import ViscoplasticSolveFailure

_SQRT23 = np.sqrt(2.0 / 3.0)


@dataclass
class InternalState:
    """Plastic state of one SEI material point.

    ``trial`` holds the staged end-of-step state between a converged step and
    its commit; it is ``None`` otherwise.
    """
    F_pl: np.ndarray = field(default_factory=lambda: np.eye(3))
    eps_pl_eq: float = 0.0
    trial: "InternalState | None" = None


@dataclass(frozen=True)
class ReturnMapResult:
    E_el_admissible: np.ndarray
    delta_eps: float
    flow_direction: np.ndarray
    yielded: bool


def mandel_stress(E_el_log, params):
    lam, G = params.lame_S
    return kin.stiffness_apply(E_el_log, lam, G)


def yield_function(M, params):
    """``||dev M|| - sqrt(2/3) sigma_Y`` in Pa."""
    return np.linalg.norm(kin.dev(M)) - params.yield_radius


def _trial(E_trial, params):
    M = mandel_stress(E_trial, params)
    M_dev = kin.dev(M)
    norm = np.linalg.norm(M_dev)
    return M_dev, norm


def _elastic_result(E_trial):
    return ReturnMapResult(E_trial.copy(), 0.0, np.zeros((3, 3)), False)


def return_map_rate_independent(E_trial, params):
    """Radial return of a trial logarithmic elastic strain onto the yield surface."""
    M_dev, norm = _trial(E_trial, params)
    f_trial = norm - params.yield_radius
    if f_trial <= 0.0:
        return _elastic_result(E_trial)
    _, G = params.lame_S
    nu = M_dev / norm
    delta = f_trial / (2.0 * G)
    return ReturnMapResult(E_trial - delta * nu, delta, nu, True)


def solve_overstress_increment(q, a, two_g, radius, scale, beta, rtol=1e-12, atol=1e-16,
                               max_iter=200):
    """Solve ``x = a ((q - two_g x - radius) / scale)^beta`` on ``[0, x_ri]``.

    ``x_ri = (q - radius) / two_g`` is the rate-independent increment.  The
    residual is concave and increasing, so Newton started from the left
    endpoint converges monotonically; bisection guards the bracket anyway.
    """
    x_ri = (q - radius) / two_g
    if not x_ri > 0.0:
        return 0.0
    if not (np.isfinite(a) and a >= 0.0):
        raise ViscoplasticSolveFailure(f"invalid rate factor {a}")

    def g(x):
        return x - a * max((q - two_g * x - radius) / scale, 0.0) ** beta

    lo, hi = 0.0, x_ri
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo <= 0.0 <= g_hi):
        raise ViscoplasticSolveFailure(f"no sign change on [0, {x_ri}]")
    if g_lo == 0.0:
        return 0.0
    tol = rtol * x_ri + atol
    x = lo
    for _ in range(max_iter):
        over = max((q - two_g * x - radius) / scale, 0.0)
        gx = x - a * over ** beta
        if gx < 0.0:
            lo = x
        else:
            hi = x
        dg = 1.0 + a * beta * two_g / scale * over ** (beta - 1.0)
        x_new = x - gx / dg
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol or hi - lo <= tol:
            return x_new
        x = x_new
    raise ViscoplasticSolveFailure("viscoplastic increment did not converge")


def viscoplastic_increment(E_trial, tau, params):
    """Implicit Perzyna-type overstress update over a step of ``tau`` seconds."""
    if not tau > 0.0:
        raise ValueError(f"time step must be positive, got {tau}")
    M_dev, norm = _trial(E_trial, params)
    if norm <= params.yield_radius:
        return _elastic_result(E_trial)
    _, G = params.lame_S
    delta = solve_overstress_increment(norm, tau * params.eps_dot_0, 2.0 * G,
                                       params.yield_radius, params.overstress_scale,
                                       params.beta)
    nu = M_dev / norm
    return ReturnMapResult(E_trial - delta * nu, delta, nu, delta > 0.0)


def trial_strain(grad0_u, F_pl):
    F = kin.IDENTITY + np.asarray(grad0_u, dtype=float)
    F_el = kin.elastic_part(F, F_pl=F_pl)
    return kin.hencky_strain(F_el)


def return_map(E_trial, tau, mode, params):
    if mode == "elastic":
        return _elastic_result(E_trial)
    if mode == "plastic":
        return return_map_rate_independent(E_trial, params)
    if mode == "viscoplastic":
        return viscoplastic_increment(E_trial, tau, params)
    raise ValueError(f"unknown plasticity mode {mode!r}")


def projector(grad0_u_S, F_pl_committed, eps_committed, tau, mode, params):
    """Admissible stress ``C[E_el,log]`` for the given displacement gradient.

    ``eps_committed`` does not enter ideal plasticity but is part of the
    projector's state signature.
    """
    del eps_committed
    E_trial = trial_strain(grad0_u_S, F_pl_committed)
    result = return_map(E_trial, tau, mode, params)
    return mandel_stress(result.E_el_admissible, params)


def commit_internal(state, result, tau=None):
    """Exponential-map update ``F_pl <- exp(delta nu) F_pl``."""
    del tau
    if result.delta_eps == 0.0:
        return InternalState(state.F_pl.copy(), state.eps_pl_eq)
    step = kin.spectral_apply(result.delta_eps * result.flow_direction, np.exp)
    return InternalState(step @ state.F_pl, state.eps_pl_eq + result.delta_eps)


def plastic_dissipation(result, params):
    """``M : (delta nu)`` evaluated at the returned state (non-negative)."""
    M = mandel_stress(result.E_el_admissible, params)
    return float(np.sum(M * (result.delta_eps * result.flow_direction)))
