"""Free-energy derived quantities for the silicon particle and its SEI shell.

All public functions here work in SI units on general 3x3 tensors.  They are
the reference implementation; the vectorised radial kernels in
:mod:`sisei.kernels` evaluate the same expressions in dimensionless,
diagonal form (see :func:`kernel_parameters`).
"""
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import kinematics as kin
from .errors import (ConcentrationOutOfRange, ConfigError, NonconvexChemistry,
                     OrientationViolation)

GAS_CONSTANT = 8.314462618
FARADAY = 96485.33212
TIME_SCALE = 3600.0          # one hour, the dimensionless time unit
VOLT = 1.0                   # chemical potential scale is FARADAY * VOLT

# Indices into the packed kernel parameter vector.
LAM_P, G_P, SWELL, KAPPA, FOURIER, LAM_S, G_S, YIELD, OVERSTRESS, EPS0, BETA = range(11)
N_KERNEL_PARAMS = 11


@dataclass(frozen=True)
class MaterialParams:
    """Particle and SEI material constants in SI units.

    Particle defaults are literature values for amorphous silicon; SEI
    defaults are those of a soft polymeric interphase.  ``eps_dot_0`` is a
    rate in 1/s.  ``rescale_overstress`` selects whether the rate-sensitivity
    stress ``sigma_Y_star`` is multiplied by sqrt(2/3) like the yield stress.
    """
    E_P: float = 90.13e9
    nu_P: float = 0.22
    E_S: float = 900.0e6
    nu_S: float = 0.25
    v_pmv_cmax: float = 10.96e-6 * 311.47e3
    D: float = 1.0e-17
    rho0: float = 2.285e3
    Fa: float = FARADAY
    c_max: float = 311.47e3
    sigma_Y: float = 49.5e6
    eps_dot_0: float = 1.0e-3
    sigma_Y_star: float = 49.5e6
    beta: float = 2.94
    L0_S_over_L0_P: float = 0.1
    radius: float = 50.0e-9
    temperature: float = 298.15
    rescale_overstress: bool = True

    def __post_init__(self):
        positive = ("E_P", "E_S", "v_pmv_cmax", "D", "rho0", "Fa", "c_max",
                    "sigma_Y", "eps_dot_0", "sigma_Y_star", "beta",
                    "L0_S_over_L0_P", "radius", "temperature")
        for name in positive:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigError(f"material.{name}", f"must be positive, got {value}")
        for name in ("nu_P", "nu_S"):
            value = getattr(self, name)
            if not -1.0 < value < 0.5:
                raise ConfigError(f"material.{name}", f"must lie in (-1, 0.5), got {value}")

    @property
    def v_pmv(self):
        return self.v_pmv_cmax / self.c_max

    @property
    def lame_P(self):
        return kin.lame_constants(self.E_P, self.nu_P)

    @property
    def lame_S(self):
        return kin.lame_constants(self.E_S, self.nu_S)

    @property
    def yield_radius(self):
        """Yield stress rescaled to the deviatoric norm, sqrt(2/3) sigma_Y."""
        return np.sqrt(2.0 / 3.0) * self.sigma_Y

    @property
    def overstress_scale(self):
        factor = np.sqrt(2.0 / 3.0) if self.rescale_overstress else 1.0
        return factor * self.sigma_Y_star

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return MaterialParams(**data)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


class OcvCurve:
    """Open-circuit voltage table with monotone cubic (PCHIP) interpolation.

    Parameters
    ----------
    c_bar, voltage : array_like
        Strictly increasing concentration grid covering [0, 1] and the
        corresponding voltages in V.
    """

    def __init__(self, c_bar, voltage):
        c_bar = np.asarray(c_bar, dtype=float)
        voltage = np.asarray(voltage, dtype=float)
        if c_bar.ndim != 1 or c_bar.shape != voltage.shape or c_bar.size < 2:
            raise ConfigError("ocv_table", "need two equally long 1-D columns")
        if np.any(np.diff(c_bar) <= 0.0):
            raise ConfigError("ocv_table", "concentration grid must be strictly increasing")
        if c_bar[0] > 0.0 or c_bar[-1] < 1.0:
            raise ConfigError("ocv_table", "concentration grid must cover [0, 1]")
        if not np.all(np.isfinite(voltage)):
            raise ConfigError("ocv_table", "voltages must be finite")
        self.c_bar = c_bar
        self.voltage = voltage
        self._interp = PchipInterpolator(c_bar, voltage, extrapolate=True)
        self._slope = self._interp.derivative()
        self._integral = self._interp.antiderivative()
        self._integral0 = float(self._integral(0.0))

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 1])

    @classmethod
    def linear(cls, a=1.0, b=1.0):
        """Placeholder curve ``U = a - b c_bar``."""
        return cls([0.0, 1.0], [a, a - b])

    @classmethod
    def silicon(cls):
        """Built-in amorphous-silicon curve shipped with the package."""
        with resources.as_file(resources.files("sisei") / "data" / "ocv_asi.csv") as p:
            return cls.from_csv(Path(p))

    def _check(self, c_bar):
        c = np.asarray(c_bar, dtype=float)
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ConcentrationOutOfRange(f"c_bar={c_bar} outside [0, 1]")
        return c

    def __call__(self, c_bar):
        return self._interp(self._check(c_bar))[()]

    def slope(self, c_bar):
        return self._slope(self._check(c_bar))[()]

    def integral(self, c_bar):
        """``int_0^c_bar U(z) dz``."""
        return (self._integral(self._check(c_bar)) - self._integral0)[()]

    def piecewise_coefficients(self):
        """Breakpoints and ``(4, m)`` local power-basis coefficients."""
        return (np.ascontiguousarray(self._interp.x, dtype=float),
                np.ascontiguousarray(self._interp.c, dtype=float))


def ocv(curve, c_bar):
    return curve(c_bar)


def _particle_elastic(c_bar, F, params):
    lam_ch = kin.chemical_stretch(c_bar, params.v_pmv_cmax)
    lam, G = params.lame_P
    E = kin.gsv_strain(kin.elastic_part(F, lambda_ch=lam_ch))
    return lam_ch, E, kin.stiffness_apply(E, lam, G)


def particle_free_energy(c_bar, F, params, curve):
    """``rho0 psi`` of the particle in J/m^3 (chemical plus GSV elastic)."""
    _, E, S = _particle_elastic(c_bar, F, params)
    chem = -params.c_max * params.Fa * curve.integral(c_bar)
    return chem + 0.5 * np.sum(E * S)


def chemical_potential(c_bar, F, params, curve):
    """Chemical potential in J/mol at fixed displacement gradient."""
    lam_ch, _, S = _particle_elastic(c_bar, F, params)
    C = F.T @ F
    return (-params.Fa * curve(c_bar)
            - params.v_pmv / (3.0 * lam_ch ** 5) * np.sum(C * S))


def dmu_dc(c_bar, F, params, curve):
    """Derivative of the chemical potential w.r.t. c in J m^3 / mol^2."""
    lam_ch, _, S = _particle_elastic(c_bar, F, params)
    lam, G = params.lame_P
    C = F.T @ F
    v = params.v_pmv
    value = (-params.Fa * curve.slope(c_bar) / params.c_max
             + 5.0 * v * v / (9.0 * lam_ch ** 8) * np.sum(C * S)
             + v * v / (9.0 * lam_ch ** 10) * np.sum(C * kin.stiffness_apply(C, lam, G)))
    if not value > 0.0:
        raise NonconvexChemistry(f"d mu / d c = {value} at c_bar={c_bar}")
    return value


def mobility(c_bar, F, params, curve):
    """Scalar mobility ``D / (d mu / d c)``."""
    return params.D / dmu_dc(c_bar, F, params, curve)


def piola_particle_gsv(c_bar, F, params):
    lam_ch, _, S = _particle_elastic(c_bar, F, params)
    return F @ S / lam_ch ** 2


def sei_strain(F, F_pl, mode):
    F_el = kin.elastic_part(F, F_pl=F_pl)
    if mode == "gsv":
        return F_el, kin.gsv_strain(F_el)
    if mode == "log":
        return F_el, kin.hencky_strain(F_el)
    raise ValueError(f"unknown strain mode {mode!r}")


def sei_free_energy(F, F_pl, mode, params):
    lam, G = params.lame_S
    _, E = sei_strain(F, F_pl, mode)
    return 0.5 * np.sum(E * kin.stiffness_apply(E, lam, G))


def piola_sei(F, F_pl, mode, params):
    """First Piola--Kirchhoff stress of the SEI for ``mode`` in {"gsv", "log"}."""
    lam, G = params.lame_S
    F_el, E = sei_strain(F, F_pl, mode)
    F_pl_inv = np.linalg.inv(F_pl)
    S = kin.stiffness_apply(E, lam, G)
    if mode == "gsv":
        return F @ F_pl_inv.T @ F_pl_inv @ S
    return F @ np.linalg.inv(F_el.T @ F_el) @ F_pl_inv.T @ F_pl_inv @ S


def cauchy_from_piola(P, F):
    J = np.linalg.det(F)
    if not J > 0.0:
        raise OrientationViolation(f"det(F)={J}")
    return P @ F.T / J


@dataclass(frozen=True)
class ButlerVolmer:
    """Constants of the Butler--Volmer voltage postprocess.

    ``exchange_current`` is the symmetric exchange current density in A/m^2.
    """
    temperature: float = 298.15
    exchange_current: float = 0.1
    Fa: float = FARADAY
    R: float = GAS_CONSTANT

    def overpotential(self, N_ext):
        return (2.0 * self.R * self.temperature / self.Fa
                * np.arcsinh(N_ext * self.Fa / (2.0 * self.exchange_current)))


def voltage_postprocess(mu_surface, N_ext, bv):
    """Cell voltage from the surface chemical potential (J/mol) and flux (mol/m^2/s)."""
    return -mu_surface / bv.Fa - bv.overpotential(N_ext)


def surface_flux(params, c_rate):
    """Dimensional inward lithium flux in mol/(m^2 s) for a given C-rate."""
    return c_rate * params.c_max * params.radius / (3.0 * TIME_SCALE)


def kernel_parameters(params):
    """Pack the dimensionless groups used by the radial kernels.

    Scales: length = particle radius, time = 1 h, stress = E_P,
    concentration = c_max, chemical potential = Faraday * 1 V.
    """
    p = np.empty(N_KERNEL_PARAMS)
    lam_p, g_p = params.lame_P
    lam_s, g_s = params.lame_S
    p[LAM_P] = lam_p / params.E_P
    p[G_P] = g_p / params.E_P
    p[SWELL] = params.v_pmv_cmax
    p[KAPPA] = params.v_pmv * params.E_P / (params.Fa * VOLT)
    p[FOURIER] = params.D * TIME_SCALE / params.radius ** 2
    p[LAM_S] = lam_s / params.E_P
    p[G_S] = g_s / params.E_P
    p[YIELD] = params.yield_radius / params.E_P
    p[OVERSTRESS] = params.overstress_scale / params.E_P
    p[EPS0] = params.eps_dot_0 * TIME_SCALE
    p[BETA] = params.beta
    return p
