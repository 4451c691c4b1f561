"""Config-driven runners for the five experiment families.

Each runner returns a list of ``Table`` objects (written as CSV) and a
summary mapping (written as JSON). ``check`` lists physics-sanity violations
without running anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mcs_field as mf
from . import placement as pl
from . import spins as sp
from . import topo as tp
from .config import ConfigError
from .geometry import ChiralityField, GeometryError, Puncture, build_lattice

FDTD_INITS = ("plane_wave", "uniform", "random")


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list]


# ----------------------------------------------------------------------------
# builders (raise ConfigError with a field path)


def _lattice(c: dict):
    punctures = []
    for k, p in enumerate(c["punctures"]):
        path = f"fdtd.punctures[{k}]"
        if not isinstance(p, dict) or "center" not in p:
            raise ConfigError(path, "each puncture needs a center [x, phi]")
        unknown = set(p) - {"center", "radius_cells"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        center = p["center"]
        if not (isinstance(center, list) and len(center) == 2 and all(isinstance(v, int) for v in center)):
            raise ConfigError(f"{path}.center", "expected two integers")
        punctures.append(Puncture(tuple(center), int(p.get("radius_cells", 1)), id=k))
    try:
        return build_lattice(c["length_cells"], c["circumference_cells"], c["cell_size"], punctures)
    except GeometryError as exc:
        raise ConfigError("fdtd", str(exc)) from None


def _fdtd_dt(c: dict) -> float:
    limit = mf.stability_limit(c["cell_size"])
    return float(c["dt"]) if c["dt"] is not None else c["courant"] * limit


def _k_grid(c: dict) -> np.ndarray:
    k = c["k"]
    if isinstance(k, list):
        return np.asarray(k, dtype=float)
    if k["num"] < 1:
        raise ConfigError("dispersion.k.num", "must be >= 1")
    return np.linspace(k["start"], k["stop"], k["num"])


def _winding(v, path: str) -> tuple[int, ...]:
    if not (isinstance(v, list) and v and all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
        raise ConfigError(path, "expected a non-empty list of integers")
    return tuple(v)


def _topo_states(c: dict):
    w = _winding(c["protected"], "topo.protected")
    ctl = c["control"]
    if not (isinstance(ctl, list) and len(ctl) == 2):
        raise ConfigError("topo.control", "expected two winding vectors")
    a = _winding(ctl[0], "topo.control[0]")
    b = _winding(ctl[1], "topo.control[1]")
    if not len(a) == len(b) == len(w):
        raise ConfigError("topo.control", "winding vectors must match topo.protected in length")
    try:
        protected = tp.protected_qubit(w, w_max=c["w_max"])
        control = tp.TopoState.superposition({a: 1.0, b: 1.0}, c["w_max"])
    except ValueError as exc:
        raise ConfigError("topo", str(exc)) from None
    return protected, control


def placement_config(c: dict, seed: int = 0) -> pl.PlacementConfig:
    gates = []
    for k, g in enumerate(c["gates"]):
        path = f"anneal.gates[{k}]"
        if not isinstance(g, dict):
            raise ConfigError(path, "expected a mapping")
        try:
            gates.append(pl.Gate(tuple(g["start"]), tuple(g["end"]), float(g.get("charge_density", 0.0)),
                                 g.get("role", "A"), float(g.get("depth", 0.5)), int(g.get("n_sites", 5))))
        except KeyError as exc:
            raise ConfigError(f"{path}.{exc.args[0]}", "missing required field") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
    kw = {k: v for k, v in c.items() if k not in ("gates", "n_seeds", "box", "schedule")}
    if len(c["box"]) != 2:
        raise ConfigError("anneal.box", "expected [Lx, Ly]")
    if len(c["schedule"]) != 3:
        raise ConfigError("anneal.schedule", "expected [steps_hot, quench_steps, steps_cold]")
    return pl.PlacementConfig(box=tuple(map(float, c["box"])), schedule=tuple(map(int, c["schedule"])),
                              gates=tuple(gates), seed=seed, **kw)


def _noise(c: dict, seed: int) -> sp.NoiseParams:
    try:
        return sp.NoiseParams(seed=seed, **c["noise"])
    except ValueError as exc:
        raise ConfigError("spins.noise.mode", str(exc)) from None


def derive_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, np.uint64)]


# ----------------------------------------------------------------------------
# sanity report


def check(cfg: dict) -> list[dict]:
    """Physics-sanity violations of a resolved config, as {field, message} records."""
    out: list[dict] = []

    def add(field: str, message: str):
        out.append({"field": field, "message": message})

    exp = cfg["experiment"]
    try:
        if exp == "fdtd":
            c = cfg["fdtd"]
            if c["boundary"] not in mf.BOUNDARIES:
                add("fdtd.boundary", f"must be one of {', '.join(mf.BOUNDARIES)}")
            if c["init"] not in FDTD_INITS:
                add("fdtd.init", f"must be one of {', '.join(FDTD_INITS)}")
            if c["steps"] < 0 or c["every"] < 1:
                add("fdtd.steps", "steps must be >= 0 and every >= 1")
            if c["cell_size"] <= 0:
                add("fdtd.cell_size", "must be positive")
            else:
                dt, limit = _fdtd_dt(c), mf.stability_limit(c["cell_size"])
                if not 0 < dt <= limit:
                    add("fdtd.dt", f"dt={dt:g} violates the stability bound dt <= h/sqrt(2) = {limit:g}")
                _lattice(c)
        elif exp == "dispersion":
            _k_grid(cfg["dispersion"])
            if not cfg["dispersion"]["mu"]:
                add("dispersion.mu", "empty sweep")
        elif exp == "topo":
            _topo_states(cfg["topo"])
            if cfg["topo"]["steps"] < 0 or cfg["topo"]["strength"] < 0:
                add("topo.steps", "steps and strength must be non-negative")
        elif exp == "spins":
            c = cfg["spins"]
            n = c["spectators"]["count"] + 1
            if n > sp.MAX_SPINS:
                add("spins.spectators.count", f"{n} spins exceeds the dimension cap of {sp.MAX_SPINS}")
            _noise(c, 0)
            if c["noise"]["realizations"] < 1 or c["noise"]["steps"] < 1:
                add("spins.noise", "need at least one realization and one step")
        elif exp == "anneal":
            for msg in placement_config(cfg["anneal"]).validate():
                add("anneal", msg)
            if cfg["anneal"]["n_seeds"] < 1:
                add("anneal.n_seeds", "must be >= 1")
    except ConfigError as exc:
        add(exc.path, exc.message)
    except (ValueError, TypeError) as exc:
        add(exp, str(exc))
    return out


# ----------------------------------------------------------------------------
# runners


def run_dispersion(cfg: dict) -> tuple[list[Table], dict]:
    c = cfg["dispersion"]
    rows, unstable, gaps = [], [], {}
    for mu in c["mu"]:
        for k in _k_grid(c):
            r = mf.dispersion(float(k), float(mu), c["b0"])
            rows.append([float(k), float(mu), r.omega_plus, r.omega_minus])
            if not r.stable:
                unstable.append({"k": float(k), "mu": float(mu), "growth_rate": r.growth_rate})
            gaps[repr(float(mu))] = r.gap
    return [Table("dispersion", ["k", "mu", "omega_plus", "omega_minus"], rows)], \
        {"gap_by_mu": gaps, "unstable_points": unstable, "b0": c["b0"]}


def run_fdtd(cfg: dict) -> tuple[list[Table], dict]:
    c = cfg["fdtd"]
    lattice = _lattice(c)
    chir = ChiralityField(b0=c["b0"], b_r_outer=c["mu"], b_r_inner=-c["mu"], e2=c["e2"])
    dt = _fdtd_dt(c)
    if c["init"] == "plane_wave":
        state = mf.plane_wave(lattice, c["mode"], c["amplitude"], c["boundary"])
    elif c["init"] == "uniform":
        state = mf.uniform_mode(lattice, c["amplitude"], c["boundary"])
    else:
        state = mf.constrained_random(lattice, chir, cfg["seed"], c["amplitude"], c["boundary"])

    def observe(s):
        return (mf.discrete_energy(s, dt), mf.gauss_residual(s, chir), mf.uniform_amplitude(s))

    final, samples = mf.run(state, chir, dt, c["steps"], observe, c["every"])
    steps = np.round(samples[:, 0] / dt).astype(int) if samples.size else np.zeros(0, int)
    rows = [[int(n), *map(float, row)] for n, row in zip(steps, samples)]
    e0 = samples[0, 1]
    summary = {
        "dt": dt,
        "stability_limit": mf.stability_limit(c["cell_size"]),
        "lattice": lattice.summary(),
        "energy_drift_relative": float(np.max(np.abs(samples[:, 1] - e0)) / e0) if e0 else 0.0,
        "gauss_residual_max": float(samples[:, 2].max()),
        "peak_field": final.peak_field(),
    }
    if c["init"] == "uniform":
        try:
            est = mf.measure_gap_from_run(samples[:, 3], dt * c["every"])
            summary["gap"] = {"omega": est.omega, "resolved": est.resolved,
                              "resolution": est.resolution, "oracle": mf.dispersion(0.0, c["mu"]).gap}
        except ValueError as exc:
            summary["gap"] = {"omega": None, "resolved": False, "note": str(exc)}
    header = ["step", "time", "discrete_energy", "gauss_residual", "ex_uniform_outer"]
    return [Table("fdtd_trace", header, rows)], summary


def run_topo(cfg: dict) -> tuple[list[Table], dict]:
    c = cfg["topo"]
    protected, control = _topo_states(c)
    res = tp.channel_experiment(protected, control, c["strength"], c["steps"], cfg["seed"])
    rows = [[int(n), float(a), float(b)] for n, a, b in
            zip(res["step"], res["fidelity_protected"], res["fidelity_control"])]
    below = np.flatnonzero(res["fidelity_control"] < 0.5)
    summary = {
        "protected_min_fidelity": float(res["fidelity_protected"].min()),
        "control_min_fidelity": float(res["fidelity_control"].min()),
        "control_first_step_below_half": int(below[0]) if below.size else None,
        "protected_total_winding_odd": bool(tp.is_odd(tuple(c["protected"]))),
    }
    return [Table("topo_fidelity", ["step", "fidelity_protected", "fidelity_control"], rows)], summary


def run_spins(cfg: dict) -> tuple[list[Table], dict]:
    c = cfg["spins"]
    common = dict(b_z=c["b_z"], gamma_e=c["gamma_e"], gamma_n=c["gamma_n"])
    # exchange SWAP at tJ = pi
    J = c["j_amplitude"]
    ee = sp.electron_pair(b_z=0.0, gamma_e=c["gamma_e"], gamma_n=c["gamma_n"])
    psi = sp.product_state([sp.UP, (sp.UP + 1j * sp.DOWN) / math.sqrt(2)])
    out = sp.evolve(psi, ee, sp.GateSchedule(math.pi / J, j={0: sp.Waveform.constant(J, math.pi / J)}),
                    0.05 / J)
    swap_fid = sp.state_fidelity(sp.swap_operator(2, 0, 1) @ psi, out)
    # A-gate transfer
    ne = sp.nucleus_electron_pair(**common)
    pulse = sp.calibrate_a_pulse(ne, c["a_amplitude"])
    a_fid = sp.a_gate_transfer(ne, pulse)
    detuned = sp.a_gate_transfer(ne, sp.APulse(pulse.amplitude, 2 * pulse.duration, pulse.ramp))
    # singlet vs single-spin control
    pair = sp.bilayer_pair(c["pair_separation"], **common)
    noise = _noise(c, cfg["seed"] % 2 ** 63)
    singlet = sp.logical_fidelity_under_common_mode(noise, "singlet", pair)
    control = sp.logical_fidelity_under_common_mode(noise, "single", pair)
    t2_fit, sigma_fit = sp.fit_t2(control.times, control.coherence, noise.tau_c, c["gamma_n"])
    t2_exact = sp.ou_t2(noise.sigma, noise.tau_c, c["gamma_n"])
    s = c["spectators"]
    floor = sp.spectator_noise_floor(s["count"], s["spacing"], s["prefactor"], s["configs"],
                                     seed=cfg["seed"] % 2 ** 63)
    rows = [[float(t), float(a), float(b), float(d)] for t, a, b, d in
            zip(singlet.times, singlet.fidelity, control.fidelity, control.coherence)]
    summary = {
        "exchange_swap_fidelity": swap_fid,
        "a_pulse": {"amplitude": pulse.amplitude, "duration": pulse.duration, "fidelity": a_fid,
                    "fidelity_double_duration": detuned},
        "singlet_min_fidelity": float(singlet.min_fidelity.min()),
        "noise_mode": noise.mode,
        "control_t2_fit": t2_fit,
        "control_t2_analytic": t2_exact,
        "control_sigma_fit": sigma_fit,
        "spectator_rate": floor.rate,
        "spectator_rms_coupling": floor.rms_coupling,
        "resting_potential": c["resting_potential"],
    }
    header = ["time", "singlet_fidelity", "control_fidelity", "control_coherence"]
    return [Table("spins_fidelity", header, rows)], summary


def run_anneal(cfg: dict) -> tuple[list[Table], dict]:
    c = cfg["anneal"]
    base = placement_config(c)
    errs = base.validate()
    if errs:
        raise ConfigError("anneal", "; ".join(errs))
    seeds = derive_seeds(cfg["seed"], c["n_seeds"])
    results = pl.anneal_many(base, seeds, cfg["workers"])
    tables = []
    summary_rows = []
    for k, r in enumerate(results):
        tables.append(Table(f"placement_{k:03d}", ["x", "y", "species", "orientation"],
                            [list(row) for row in r.snapshot_rows()]))
        summary_rows.append([k, r.seed, r.capture_fraction, float(r.energy[-1]) if r.energy.size else 0.0,
                             float(r.acceptance[-1]) if r.acceptance.size else 0.0,
                             float(r.displacement[-1]) if r.displacement.size else 0.0])
    tables.insert(0, Table("anneal_summary", ["run", "seed", "capture_fraction", "final_energy",
                                              "final_acceptance", "mean_displacement"], summary_rows))
    fr = np.array([r.capture_fraction for r in results])
    summary = {
        "seeds": seeds,
        "capture_fraction_mean": float(fr.mean()),
        "capture_fraction_std": float(fr.std(ddof=1)) if fr.size > 1 else 0.0,
        "binomial_baseline": pl.binomial_capture(base.n_pc, base.capture_radius, base.box),
        "target_sites": int(len(base.target_sites())),
    }
    return tables, summary


RUNNERS: dict[str, Callable[[dict], tuple[list[Table], dict]]] = {
    "dispersion": run_dispersion,
    "fdtd": run_fdtd,
    "topo": run_topo,
    "spins": run_spins,
    "anneal": run_anneal,
}
