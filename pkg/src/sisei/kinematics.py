"""Tensor algebra and finite-strain kinematics.

Second-order tensors are plain ``numpy.ndarray`` objects of shape ``(3, 3)``.
Everything here is a pure function of its arguments.

The radial problem only ever produces diagonal tensors; the functions below
are nevertheless written for general 3x3 arguments and take a cheap
diagonal shortcut where it is exact.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (ConcentrationOutOfRange, OrientationViolation,
                     PlasticSingularity, SpectralFailure)

IDENTITY = np.eye(3)

_JACOBI_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 50


@dataclass(frozen=True)
class RadialKinematicPoint:
    """Displacement data of a spherically symmetric field at one radius.

    Attributes
    ----------
    du_dr : float
        Radial derivative of the radial displacement.
    u_over_r : float
        Displacement divided by radius (hoop strain term).
    r : float
        Reference radius.
    """
    du_dr: float
    u_over_r: float
    r: float


def radial_deformation_gradient(p):
    """Deformation gradient ``diag(1 + u', 1 + u/r, 1 + u/r)``."""
    f_rr = 1.0 + p.du_dr
    f_tt = 1.0 + p.u_over_r
    if f_rr <= 0.0 or f_tt <= 0.0:
        raise OrientationViolation(
            f"non-positive stretch at r={p.r}: F_rr={f_rr}, F_tt={f_tt}")
    return np.diag([f_rr, f_tt, f_tt])


def chemical_stretch(c_bar, v_pmv_cmax):
    """Isotropic swelling stretch ``(1 + v_pmv c_max c_bar)^(1/3)``."""
    if not 0.0 <= c_bar <= 1.0:
        raise ConcentrationOutOfRange(f"c_bar={c_bar} outside [0, 1]")
    return float(np.cbrt(1.0 + v_pmv_cmax * c_bar))


def elastic_part(F, *, lambda_ch=None, F_pl=None):
    """Elastic part of ``F``.

    Exactly one of ``lambda_ch`` (particle: ``F / lambda_ch``) or ``F_pl``
    (SEI: ``F F_pl^-1``) must be given.
    """
    if (lambda_ch is None) == (F_pl is None):
        raise ValueError("give exactly one of lambda_ch or F_pl")
    if lambda_ch is not None:
        if lambda_ch <= 0.0:
            raise OrientationViolation(f"lambda_ch={lambda_ch} must be positive")
        return np.asarray(F, dtype=float) / lambda_ch
    det = np.linalg.det(F_pl)
    if not np.isfinite(det) or det <= 0.0:
        raise PlasticSingularity(f"det(F_pl)={det}")
    return np.asarray(F, dtype=float) @ np.linalg.inv(F_pl)


def sym(A):
    return 0.5 * (A + A.T)


def dev(A):
    return A - np.trace(A) / 3.0 * IDENTITY


def gsv_strain(F_el):
    """Green--St-Venant strain ``(F^T F - I) / 2``."""
    E = 0.5 * (F_el.T @ F_el - IDENTITY)
    return sym(E)


def hencky_strain(F_el):
    """Logarithmic strain ``ln sqrt(F^T F)`` via the spectral decomposition."""
    C = sym(F_el.T @ F_el)
    eta, _ = sym_eig(C)
    if eta[0] <= 0.0:
        raise SpectralFailure(f"C_el not positive definite (eigenvalue {eta[0]})")
    return spectral_apply(C, lambda x: 0.5 * np.log(x))


def stiffness_apply(E, lam, G):
    """Isotropic Hooke map ``lam tr(E) I + 2 G E``."""
    return lam * np.trace(E) * IDENTITY + 2.0 * G * E


def lame_constants(young, poisson):
    """Return ``(lambda, G)`` from Young's modulus and Poisson ratio."""
    G = young / (2.0 * (1.0 + poisson))
    lam = 2.0 * G * poisson / (1.0 - 2.0 * poisson)
    return lam, G


def spectral_apply(S, f):
    """Isotropic tensor function ``sum_a f(eta_a) r_a (x) r_a`` of symmetric ``S``.

    ``f`` must accept a numpy array of eigenvalues.
    """
    eta, R = sym_eig(S)
    return sym((R * f(eta)) @ R.T)


def sym_eig(S):
    """Eigenpairs of a symmetric 3x3 tensor, eigenvalues ascending.

    Uses the closed-form trigonometric (Cardano) solution and verifies the
    resulting eigenpairs; near-degenerate spectra, where the closed form loses
    accuracy, fall back to cyclic Jacobi rotations.

    Returns
    -------
    eta : ndarray, shape (3,)
    R : ndarray, shape (3, 3)
        Orthonormal eigenvectors stored as columns.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3) or not np.all(np.isfinite(S)):
        raise SpectralFailure("expected a finite 3x3 tensor")
    off = S[0, 1] ** 2 + S[0, 2] ** 2 + S[1, 2] ** 2
    if off == 0.0:
        eta = np.diag(S).copy()
        order = np.argsort(eta)
        return eta[order], IDENTITY[:, order].copy()
    result = _cardano(S, off)
    if result is None:
        result = _jacobi(S)
    return result


def _cardano(S, off):
    scale = np.max(np.abs(S))
    q = np.trace(S) / 3.0
    p2 = (S[0, 0] - q) ** 2 + (S[1, 1] - q) ** 2 + (S[2, 2] - q) ** 2 + 2.0 * off
    p = np.sqrt(p2 / 6.0)
    if p <= 1e-8 * scale:
        return None
    B = (S - q * IDENTITY) / p
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    if 1.0 - abs(r) < 1e-8:
        # acos is ill-conditioned here: double eigenvalue
        return None
    phi = np.arccos(r) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    eta = np.array([e3, 3.0 * q - e1 - e3, e1])
    R = np.empty((3, 3))
    for a, lam in enumerate(eta):
        A = S - lam * IDENTITY
        cands = (np.cross(A[0], A[1]), np.cross(A[0], A[2]), np.cross(A[1], A[2]))
        v = max(cands, key=lambda x: x @ x)
        nv = np.sqrt(v @ v)
        if nv == 0.0:
            return None
        R[:, a] = v / nv
    tol = 1e-13 * max(scale, 1e-300)
    if (np.max(np.abs(S @ R - R * eta)) > tol
            or np.max(np.abs(R.T @ R - IDENTITY)) > 1e-13):
        return None
    return eta, R


def _jacobi(S):
    A = S.copy()
    V = np.eye(3)
    norm = max(np.sqrt(np.sum(A * A)), 1e-300)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(2.0 * (A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2))
        if off <= _JACOBI_TOL * norm:
            eta = np.diag(A).copy()
            order = np.argsort(eta)
            return eta[order], V[:, order]
        for p_, q_ in ((0, 1), (0, 2), (1, 2)):
            apq = A[p_, q_]
            if apq == 0.0:
                continue
            theta = (A[q_, q_] - A[p_, p_]) / (2.0 * apq)
            t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
            if theta == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            J = np.eye(3)
            J[p_, p_] = J[q_, q_] = c
            J[p_, q_] = s
            J[q_, p_] = -s
            A = J.T @ A @ J
            V = V @ J
    raise SpectralFailure("Jacobi iteration did not converge")


def cofactor(F):
    return np.linalg.det(F) * np.linalg.inv(F).T
