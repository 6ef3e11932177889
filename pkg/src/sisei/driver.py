"""Scenario configuration, orchestration of the cycling protocol and output files."""
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constitutive import ButlerVolmer, MaterialParams, OcvCurve, VOLT
from .errors import ConfigError
from .integrator import AbortedRun, NdfIntegrator, TimeController
from .radial_fem import RadialProblem, SeiInternalState, build_mesh

TIMESERIES_HEADER = ("t_h", "soc", "voltage_V", "sigma_tt_interface_MPa", "tau", "order",
                     "newton_iters")
PROFILE_HEADER = ("r", "c", "sigma_rr_MPa", "sigma_tt_MPa")

MESH_PROFILES = {
    "ci": {"n_elem_particle": 120, "n_elem_sei": 12},
    "paper": {"n_elem_particle": 1200, "n_elem_sei": 120},
}

# config key -> MaterialParams field
MATERIAL_KEYS = {
    "E_P_Pa": "E_P",
    "nu_P": "nu_P",
    "E_S_Pa": "E_S",
    "nu_S": "nu_S",
    "D_m2_per_s": "D",
    "rho0_kg_per_m3": "rho0",
    "c_max_mol_per_m3": "c_max",
    "sigma_Y_Pa": "sigma_Y",
    "eps_dot_0_per_s": "eps_dot_0",
    "sigma_Y_star_Pa": "sigma_Y_star",
    "beta": "beta",
    "L_S_over_L_P": "L0_S_over_L0_P",
    "radius_m": "radius",
    "temperature_K": "temperature",
    "rescale_overstress": "rescale_overstress",
}
VISCOPLASTIC_REQUIRED = ("eps_dot_0_per_s", "beta", "sigma_Y_star_Pa")
STRAIN_MODES = ("gsv", "log")
PLASTICITY_MODES = ("elastic", "rate_independent", "viscoplastic")


@dataclass(frozen=True)
class MeshSpec:
    n_elem_particle: int = 120
    n_elem_sei: int = 12
    order: int = 4
    quad_points: int = 6


@dataclass(frozen=True)
class ToleranceSpec:
    rtol: float = 1e-5
    atol: float = 1e-8
    tau_init_h: float = 1e-8
    tau_min_h: float = 1e-12
    tau_max_h: float = 1e-3
    variant: str = "ndf"
    max_order: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation of the cycling protocol.

    Lithiation and delithiation alternate, starting with lithiation, for
    ``half_cycles`` half cycles of ``half_cycle_duration_h`` each.
    """
    name: str = "scenario"
    strain_mode: str = "log"
    plasticity_mode: str = "elastic"
    c_rate_per_h: float = 1.0
    half_cycles: int = 3
    half_cycle_duration_h: float = 0.9
    c0: float = 0.02
    profile: str = "ci"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    tolerances: ToleranceSpec = field(default_factory=ToleranceSpec)
    material: MaterialParams = field(default_factory=MaterialParams)
    ocv_table: str | None = None
    butler_volmer: ButlerVolmer = field(default_factory=ButlerVolmer)
    output_dir: str | None = None
    backend: str | None = None
    particle_only: bool = False

    def __post_init__(self):
        validate_config(self)

    @property
    def t_end_h(self):
        return self.half_cycles * self.half_cycle_duration_h

    def flux_sign(self, k):
        return 1.0 if k % 2 == 0 else -1.0

    def protocol_soc(self, t_h):
        """``c0 + int_0^t c_rate sign(t') dt'`` for the alternating protocol."""
        t_h = np.asarray(t_h, dtype=float)
        d = self.half_cycle_duration_h
        k = np.minimum(np.floor(t_h / d), self.half_cycles - 1)
        local = t_h - k * d
        return self.c0 + self.c_rate_per_h * np.where(k % 2 == 0, local, d - local)

    def with_profile(self, profile):
        if profile not in MESH_PROFILES:
            raise ConfigError("profile", f"unknown profile {profile!r}")
        return replace(self, profile=profile, mesh=replace(self.mesh, **MESH_PROFILES[profile]))


def validate_config(cfg):
    if cfg.strain_mode not in STRAIN_MODES:
        raise ConfigError("strain_mode", f"must be one of {STRAIN_MODES}")
    if cfg.plasticity_mode not in PLASTICITY_MODES:
        raise ConfigError("plasticity_mode", f"must be one of {PLASTICITY_MODES}")
    if cfg.strain_mode == "gsv" and cfg.plasticity_mode != "elastic":
        raise ConfigError("plasticity_mode", "plasticity is formulated in logarithmic strain only")
    if cfg.profile not in MESH_PROFILES:
        raise ConfigError("profile", f"must be one of {tuple(MESH_PROFILES)}")
    for name in ("c_rate_per_h", "half_cycle_duration_h"):
        value = getattr(cfg, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ConfigError(name, f"must be positive, got {value!r}")
    if not (isinstance(cfg.half_cycles, int) and cfg.half_cycles >= 1):
        raise ConfigError("half_cycles", "must be a positive integer")
    if not 0.0 <= cfg.c0 <= 1.0:
        raise ConfigError("c0", "must lie in [0, 1]")
    if cfg.c0 + cfg.c_rate_per_h * cfg.half_cycle_duration_h > 1.0 + 1e-12:
        raise ConfigError("half_cycle_duration_h",
                          "c_rate * duration exceeds the remaining capacity 1 - c0")
    m = cfg.mesh
    if m.n_elem_particle < 1 or m.n_elem_sei < 0 or m.order < 1 or m.quad_points < 1:
        raise ConfigError("mesh", "need n_elem_particle >= 1, n_elem_sei >= 0, order >= 1")
    if m.n_elem_sei == 0 and not cfg.particle_only:
        raise ConfigError("mesh.n_elem_sei", "must be >= 1 unless particle_only is set")
    tol = cfg.tolerances
    if not (0 < tol.tau_min_h <= tol.tau_init_h <= tol.tau_max_h):
        raise ConfigError("tolerances", "need 0 < tau_min_h <= tau_init_h <= tau_max_h")
    if tol.rtol <= 0 or tol.atol <= 0:
        raise ConfigError("tolerances", "rtol and atol must be positive")
    if tol.variant not in ("ndf", "bdf"):
        raise ConfigError("tolerances.variant", "must be 'ndf' or 'bdf'")
    if not 1 <= tol.max_order <= 5:
        raise ConfigError("tolerances.max_order", "must lie in 1..5")


def _section(data, key, allowed, path):
    block = data.get(key, {})
    if not isinstance(block, dict):
        raise ConfigError(path, "must be an object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    return block


def config_from_dict(data, base_dir=None):
    """Validated :class:`ScenarioConfig` from a parsed JSON object."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    top = {"name", "strain_mode", "plasticity_mode", "c_rate_per_h", "half_cycles",
           "half_cycle_duration_h", "c0", "profile", "mesh", "tolerances", "material",
           "ocv_table", "butler_volmer", "output_dir", "backend", "particle_only"}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")

    material = _section(data, "material", set(MATERIAL_KEYS) | {"v_pmv_m3_per_mol"}, "material")
    if data.get("plasticity_mode") == "viscoplastic":
        for key in VISCOPLASTIC_REQUIRED:
            if key not in material:
                raise ConfigError(f"material.{key}", "required in viscoplastic mode")
    kwargs = {}
    for key, value in material.items():
        if key == "v_pmv_m3_per_mol":
            continue
        if key == "rescale_overstress":
            if not isinstance(value, bool):
                raise ConfigError("material.rescale_overstress", "must be a boolean")
        elif not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"material.{key}", "must be a number")
        kwargs[MATERIAL_KEYS[key]] = value
    defaults = MaterialParams()
    if "v_pmv_m3_per_mol" in material:
        c_max = kwargs.get("c_max", defaults.c_max)
        kwargs["v_pmv_cmax"] = material["v_pmv_m3_per_mol"] * c_max
    elif "c_max" in kwargs:
        kwargs["v_pmv_cmax"] = defaults.v_pmv * kwargs["c_max"]
    if "sigma_Y" in kwargs and "sigma_Y_star" not in kwargs:
        kwargs["sigma_Y_star"] = kwargs["sigma_Y"]
    params = MaterialParams(**kwargs)

    profile = data.get("profile", "ci")
    if profile not in MESH_PROFILES:
        raise ConfigError("profile", f"must be one of {tuple(MESH_PROFILES)}")
    mesh_block = _section(data, "mesh", {"n_elem_particle", "n_elem_sei", "order", "quad_points"},
                          "mesh")
    mesh = MeshSpec(**{**MESH_PROFILES[profile], **mesh_block})
    tol_block = _section(data, "tolerances", {f.name for f in ToleranceSpec.__dataclass_fields__.values()},
                         "tolerances")
    tolerances = ToleranceSpec(**tol_block)
    bv_block = _section(data, "butler_volmer", {"exchange_current_A_per_m2", "temperature_K"},
                        "butler_volmer")
    bv = ButlerVolmer(temperature=bv_block.get("temperature_K", params.temperature),
                      exchange_current=bv_block.get("exchange_current_A_per_m2", 0.1))
    if not bv.exchange_current > 0:
        raise ConfigError("butler_volmer.exchange_current_A_per_m2", "must be positive")

    ocv_table = data.get("ocv_table")
    if ocv_table is not None:
        path = Path(ocv_table)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.is_file():
            raise ConfigError("ocv_table", f"file not found: {path}")
        ocv_table = str(path)

    scalars = {k: data[k] for k in ("name", "strain_mode", "plasticity_mode", "c_rate_per_h",
                                    "half_cycles", "half_cycle_duration_h", "c0", "output_dir",
                                    "backend", "particle_only") if k in data}
    return ScenarioConfig(profile=profile, mesh=mesh, tolerances=tolerances, material=params,
                          ocv_table=ocv_table, butler_volmer=bv, **scalars)


def load_config(path):
    """Read and validate a JSON scenario file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


def matrix_configs(base=None):
    """The five-run comparison: GSV elastic and log-strain elastic, plastic, viscoplastic x2."""
    base = base or ScenarioConfig()
    vp = dict(plasticity_mode="viscoplastic", strain_mode="log")
    return [
        replace(base, name="gsv-elastic", strain_mode="gsv", plasticity_mode="elastic"),
        replace(base, name="log-elastic", strain_mode="log", plasticity_mode="elastic"),
        replace(base, name="log-plastic", strain_mode="log", plasticity_mode="rate_independent"),
        replace(base, name="log-viscoplastic-1e-3", material=base.material.replace(eps_dot_0=1e-3), **vp),
        replace(base, name="log-viscoplastic-1e-4", material=base.material.replace(eps_dot_0=1e-4), **vp),
    ]


# ----------------------------------------------------------------- running
def _curve(cfg):
    return OcvCurve.from_csv(cfg.ocv_table) if cfg.ocv_table else OcvCurve.silicon()


def build_problem(cfg):
    n_sei = 0 if cfg.particle_only else cfg.mesh.n_elem_sei
    mesh, dofmap = build_mesh(cfg.mesh.n_elem_particle, n_sei,
                              cfg.material.L0_S_over_L0_P, cfg.mesh.order)
    plastic = "plastic" if cfg.plasticity_mode == "rate_independent" else cfg.plasticity_mode
    return RadialProblem(mesh, dofmap, cfg.material, _curve(cfg), strain_mode=cfg.strain_mode,
                         plastic_mode=plastic, quad_points=cfg.mesh.quad_points,
                         backend=cfg.backend)


def initialize_state(cfg, problem=None):
    """Initial state vector and identity plastic state.

    ``c = c0``, ``mu = -U_OCV(c0)`` (in units of F * 1 V), ``u_P = (lambda_ch - 1) r``
    and ``u_S = lambda_ch - 1``.
    """
    problem = problem or build_problem(cfg)
    y0 = problem.swelling_state(cfg.c0, sei_shift=True)
    internal = SeiInternalState.identity(problem.mesh.n_elem_sei, problem.n_q + 2)
    return y0, internal


def make_controller(cfg):
    tol = cfg.tolerances
    return TimeController(rtol=tol.rtol, atol=tol.atol, tau_init=tol.tau_init_h,
                          tau_min=tol.tau_min_h, tau_max=tol.tau_max_h, variant=tol.variant,
                          max_order=tol.max_order)


@dataclass
class RunOutputs:
    """Everything a run produced; see :func:`write_outputs` for the files."""
    config: ScenarioConfig
    rows: list = field(default_factory=list)
    mu_surface: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    status: str = "pending"
    abort_soc: float | None = None
    max_yield_excess: float = -math.inf
    max_lithium_deviation: float = 0.0
    n_dof: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    wall_time_s: float = 0.0

    @property
    def aborted(self):
        return self.status == "aborted"

    def column(self, name):
        return np.array([row[TIMESERIES_HEADER.index(name)] for row in self.rows], dtype=float)


def profile_radii(problem):
    """Mesh nodes, with the interface sampled from both sides."""
    nodes = problem.mesh.nodes
    particle = nodes[nodes <= 1.0]
    sei = nodes[nodes >= 1.0] if problem.has_sei else np.zeros(0)
    return particle, sei


def _sample_profile(problem, y, scale):
    particle, sei = profile_radii(problem)
    a = problem.sample_fields(y, particle)
    parts = [a]
    if sei.size:
        parts.append(problem.sample_fields(y, sei, interface_side="sei"))
    return {
        "r": np.concatenate([p["r"] for p in parts]),
        "c": np.concatenate([p["c"] for p in parts]),
        "sigma_rr_MPa": np.concatenate([p["sigma_rr"] for p in parts]) * scale,
        "sigma_tt_MPa": np.concatenate([p["sigma_tt"] for p in parts]) * scale,
    }


def recompute_voltage(mu_surface, flux_sign, cfg, bv=None):
    """Butler--Volmer voltage from stored surface chemical potentials."""
    from .constitutive import surface_flux
    bv = bv or cfg.butler_volmer
    n_ext = np.asarray(flux_sign, dtype=float) * surface_flux(cfg.material, cfg.c_rate_per_h)
    return -np.asarray(mu_surface, dtype=float) * VOLT - bv.overpotential(n_ext)


def run_scenario(cfg, progress=None):
    """Run the cycling protocol; aborts are reported in the outputs, not raised."""
    start = time.perf_counter()
    problem = build_problem(cfg)
    y0, internal = initialize_state(cfg, problem)
    problem.internal = internal
    ctl = make_controller(cfg)
    integ = NdfIntegrator(problem, ctl)
    out = RunOutputs(cfg, n_dof=problem.size)
    scale = cfg.material.E_P / 1e6
    bv = cfg.butler_volmer

    y0 = integ.consistent_initial_state(y0)
    state = {"sign": 1.0}

    def record(t, y, tau, order, iters):
        mu_s = problem.surface_chemical_potential(y)
        soc = problem.integrate_total_lithium(y)
        voltage = float(recompute_voltage(mu_s, state["sign"], cfg, bv))
        hoop = problem.interface_hoop_stress(y) * scale
        out.rows.append((float(t), soc, voltage, hoop, float(tau), int(order), int(iters)))
        out.mu_surface.append(mu_s)
        dev = abs(soc - float(cfg.protocol_soc(min(t, cfg.t_end_h))))
        out.max_lithium_deviation = max(out.max_lithium_deviation, dev)

    def hook(info):
        record(info.t, info.y, info.tau, info.order, info.newton_iters)
        if info.commit_info is not None:
            out.max_yield_excess = max(out.max_yield_excess, info.commit_info)
        if progress is not None:
            progress(info)

    record(0.0, y0, 0.0, 0, 0)
    y = y0
    t = 0.0
    for k in range(cfg.half_cycles):
        sign = cfg.flux_sign(k)
        state["sign"] = sign
        problem.surface_flux = sign * cfg.c_rate_per_h / 3.0
        t_end = (k + 1) * cfg.half_cycle_duration_h
        ctl.log("half_cycle_start", index=k, t=t, flux_sign=sign)
        integ.start(t, y)
        result = integ.advance_to(t_end, hook)
        y = integ.y
        t = integ.t
        if isinstance(result, AbortedRun):
            soc = problem.integrate_total_lithium(y)
            result.soc = soc
            out.status = "aborted"
            out.abort_soc = soc
            for ev in reversed(ctl.events):
                if ev["type"] == "abort":
                    ev["soc"] = soc
                    ev["half_cycle"] = k
                    break
            out.profiles["abort"] = _sample_profile(problem, y, scale)
            break
        ctl.log("half_cycle_end", index=k, t=t, soc=problem.integrate_total_lithium(y))
        out.profiles[f"hc{k + 1}"] = _sample_profile(problem, y, scale)
    else:
        out.status = "completed"
        out.profiles["final"] = out.profiles[f"hc{cfg.half_cycles}"]
        ctl.log("complete", t=t, soc=problem.integrate_total_lithium(y))
    out.events = ctl.events
    out.wall_time_s = time.perf_counter() - start
    out.n_accepted = integ.n_accepted
    out.n_rejected = integ.n_rejected
    return out


# ----------------------------------------------------------------- output
def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_outputs(outputs, directory):
    """Write ``timeseries.csv``, ``profile_<tag>.csv``, ``events.jsonl``, ``plot.gp``.

    Floats are written with ``repr`` so they round-trip exactly.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        _write_csv(directory / "timeseries.csv", TIMESERIES_HEADER, outputs.rows)
        for tag, prof in outputs.profiles.items():
            rows = zip(*(prof[k] for k in PROFILE_HEADER))
            _write_csv(directory / f"profile_{tag}.csv", PROFILE_HEADER, rows)
        with open(directory / "events.jsonl", "w") as fh:
            for ev in outputs.events:
                fh.write(json.dumps(ev, default=_json_default) + "\n")
        (directory / "plot.gp").write_text(plot_script(outputs))
    except OSError as exc:
        raise OSError(f"cannot write outputs to {directory}: {exc}") from exc
    return directory


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def plot_script(outputs):
    """Gnuplot script: radial stress profiles and interface stress/voltage over SOC."""
    tags = list(outputs.profiles)
    name = outputs.config.name
    lines = [
        "# generated by sisei; run with `gnuplot plot.gp`",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,800",
        "set key autotitle columnhead",
        "",
        "set output 'profiles.png'",
        "set multiplot layout 1,2",
        "set xlabel 'r / L_0'",
        "set ylabel 'sigma_rr [MPa]'",
    ]
    if tags:
        lines.append("plot " + ", ".join(
            f"'profile_{t}.csv' using 1:3 with lines title '{t}'" for t in tags))
        lines.append("set ylabel 'sigma_tt [MPa]'")
        lines.append("plot " + ", ".join(
            f"'profile_{t}.csv' using 1:4 with lines title '{t}'" for t in tags))
    lines += [
        "unset multiplot",
        "",
        "set output 'soc.png'",
        "set multiplot layout 1,2",
        "set xlabel 'SOC'",
        "set ylabel 'voltage [V]'",
        f"plot 'timeseries.csv' using 2:3 with lines title '{name}'",
        "set ylabel 'interface sigma_tt [MPa]'",
        f"plot 'timeseries.csv' using 2:4 with lines title '{name}'",
        "unset multiplot",
        "",
    ]
    return "\n".join(lines)


def read_timeseries(path):
    """Rows of ``timeseries.csv`` with int columns restored."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TIMESERIES_HEADER:
            raise ValueError(f"unexpected header {header}")
        for line in fh:
            fields_ = line.strip().split(",")
            rows.append(tuple(int(v) if h in ("order", "newton_iters") else float(v)
                              for h, v in zip(header, fields_)))
    return rows
