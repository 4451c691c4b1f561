"""Metropolis annealing of polar head groups onto charged nanowire gates.

A 2D periodic box holds polar (PC) molecules carrying fixed-magnitude
in-plane dipoles and non-polar background molecules. All molecules are hard
disks. Gates are buried line charges at ``depth`` below the head-group plane.
Below ``T_c`` translations are gated by a mobility factor (default 0), which
freezes positions while orientations stay free.

Units: lengths in nm, energies in k_B * (temperature unit). A line charge
``lam`` produces the in-plane field ``2 lam s / (s^2 + depth^2)`` at signed
perpendicular offset ``s``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numba
import numpy as np

IMAGE_RANGE = 3
CHUNK_SWEEPS = 50
MAX_PLACEMENT_TRIES = 2000


class PlacementError(ValueError):
    """Invalid placement config or impossible initial packing."""


@dataclass(frozen=True)
class Gate:
    """Axis-aligned buried nanowire from ``start`` to ``end`` (nm)."""

    start: tuple[float, float]
    end: tuple[float, float]
    charge_density: float = 4.0
    role: str = "A"
    depth: float = 0.5
    n_sites: int = 5

    def __post_init__(self):
        if self.role not in ("A", "J"):
            raise PlacementError(f"gate role must be 'A' or 'J', got {self.role!r}")
        if self.depth <= 0:
            raise PlacementError("gate depth must be positive")
        (x0, y0), (x1, y1) = self.start, self.end
        if (x0 != x1) == (y0 != y1):
            raise PlacementError(f"gate {self.start}->{self.end} must be a non-degenerate axis-aligned segment")

    @property
    def vertical(self) -> bool:
        return self.start[0] == self.end[0]

    def sites(self) -> np.ndarray:
        """Target sites evenly spaced along the segment (cell-centred)."""
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        f = (np.arange(self.n_sites) + 0.5) / self.n_sites
        return a + f[:, None] * (b - a)


def default_gates() -> tuple[Gate, ...]:
    return (Gate((5.0, 0.0), (5.0, 20.0)), Gate((15.0, 0.0), (15.0, 20.0)))


@dataclass(frozen=True)
class PlacementConfig:
    """Desk-scale fabrication run; defaults come from a capture-fraction scan."""

    box: tuple[float, float] = (20.0, 20.0)
    n_pc: int = 60
    n_background: int = 60
    dipole_moment: float = 1.0
    disk_diameter: float = 0.8
    dd_strength: float = 0.1
    dd_cutoff: float = 4.0
    gates: tuple[Gate, ...] = field(default_factory=default_gates)
    T_hot: float = 1.5
    T_cold: float = 0.05
    T_c: float = 1.0
    frozen_mobility: float = 0.0
    schedule: tuple[int, int, int] = (2000, 1000, 200)
    step_size: float = 0.6
    rotation_step: float = 0.8
    capture_radius: float = 1.5
    seed: int = 0

    def validate(self) -> list[str]:
        """Physics-sanity violations; empty when the config is usable."""
        errs = []
        if not self.T_cold >= 0:
            errs.append("T_cold must be >= 0")
        if not self.T_hot > self.T_c > self.T_cold:
            errs.append(f"temperatures must satisfy T_hot > T_c > T_cold, got "
                        f"{self.T_hot}, {self.T_c}, {self.T_cold}")
        if min(self.box) <= 0:
            errs.append("box dimensions must be positive")
        n = self.n_pc + self.n_background
        packing = n * math.pi * self.disk_diameter ** 2 / 4 / (self.box[0] * self.box[1])
        if packing >= 0.5:
            errs.append(f"packing fraction {packing:.3f} is too close to the hard-disk limit")
        if min(self.schedule) < 0:
            errs.append("schedule lengths must be non-negative")
        if self.n_pc < 0 or self.n_background < 0:
            errs.append("molecule counts must be non-negative")
        if not 0 <= self.frozen_mobility <= 1:
            errs.append("frozen_mobility must lie in [0, 1]")
        for g in self.gates:
            for (x, y) in (g.start, g.end):
                if not (0 <= x <= self.box[0] and 0 <= y <= self.box[1]):
                    errs.append(f"gate endpoint {(x, y)} lies outside the box")
        return errs

    def temperatures(self) -> np.ndarray:
        hot, quench, cold = self.schedule
        ramp = np.linspace(self.T_hot, self.T_cold, quench + 2)[1:-1] if quench else np.array([])
        return np.concatenate([np.full(hot, self.T_hot), ramp, np.full(cold, self.T_cold)])

    def target_sites(self) -> np.ndarray:
        sites = [g.sites() for g in self.gates if g.role == "A"]
        return np.concatenate(sites) if sites else np.zeros((0, 2))

    def with_charge(self, lam: float) -> "PlacementConfig":
        return replace(self, gates=tuple(replace(g, charge_density=lam) for g in self.gates))


@dataclass(frozen=True)
class PlacementResult:
    positions: np.ndarray
    orientations: np.ndarray
    is_pc: np.ndarray
    capture_fraction: float
    acceptance: np.ndarray
    energy: np.ndarray
    temperature: np.ndarray
    displacement: np.ndarray
    initial_positions: np.ndarray
    seed: int

    def snapshot_rows(self) -> list[tuple]:
        return [(float(x), float(y), "PC" if pc else "background", float(th) if pc else 0.0)
                for (x, y), th, pc in zip(self.positions, self.orientations, self.is_pc)]


# ----------------------------------------------------------------------------
# metric


def _min_image(d: np.ndarray, box: Sequence[float]) -> np.ndarray:
    L = np.asarray(box, float)
    return d - L * np.round(d / L)


def capture_fraction(positions: np.ndarray, sites: np.ndarray, capture_radius: float,
                     box: Sequence[float]) -> float:
    """Fraction of target sites with at least one PC within ``capture_radius``."""
    sites = np.asarray(sites, float).reshape(-1, 2)
    positions = np.asarray(positions, float).reshape(-1, 2)
    if len(sites) == 0:
        return 0.0
    if len(positions) == 0:
        return 0.0
    d = _min_image(positions[None, :, :] - sites[:, None, :], box)
    hit = np.any(np.hypot(d[..., 0], d[..., 1]) <= capture_radius, axis=1)
    return float(hit.mean())


def binomial_capture(n_pc: int, capture_radius: float, box: Sequence[float]) -> float:
    """Expected capture for independent uniform positions: 1 - (1 - a)^n."""
    a = math.pi * capture_radius ** 2 / (box[0] * box[1])
    return 1.0 - (1.0 - a) ** n_pc


# ----------------------------------------------------------------------------
# initial placement


def random_placement(n: int, box: Sequence[float], diameter: float, rng: np.random.Generator,
                     max_tries: int = MAX_PLACEMENT_TRIES) -> np.ndarray:
    """Sequential uniform insertion of non-overlapping disks."""
    pos = np.empty((n, 2))
    L = np.asarray(box, float)
    for k in range(n):
        for _ in range(max_tries):
            trial = rng.random(2) * L
            if k == 0:
                break
            d = _min_image(pos[:k] - trial, box)
            if np.min(np.einsum("ij,ij->i", d, d)) >= diameter ** 2:
                break
        else:
            raise PlacementError(f"could not place molecule {k} without overlap in {max_tries} tries")
        pos[k] = trial
    return pos


def uniform_capture_samples(config: PlacementConfig, n_samples: int, seed: int) -> np.ndarray:
    """Capture fraction of fresh uniform hard-disk placements (no fields, no annealing)."""
    rng = np.random.default_rng(seed)
    sites = config.target_sites()
    n = config.n_pc + config.n_background
    out = np.empty(n_samples)
    for s in range(n_samples):
        pos = random_placement(n, config.box, config.disk_diameter, rng)
        pc = _species(config, rng)
        out[s] = capture_fraction(pos[pc], sites, config.capture_radius, config.box)
    return out


def _species(config: PlacementConfig, rng: np.random.Generator) -> np.ndarray:
    is_pc = np.zeros(config.n_pc + config.n_background, dtype=bool)
    is_pc[rng.permutation(is_pc.size)[:config.n_pc]] = True
    return is_pc


# ----------------------------------------------------------------------------
# energy kernels


def _gate_arrays(config: PlacementConfig):
    g = config.gates
    vertical = np.array([gt.vertical for gt in g], dtype=np.bool_)
    coord = np.array([gt.start[0] if gt.vertical else gt.start[1] for gt in g], dtype=np.float64)
    lam = np.array([gt.charge_density for gt in g], dtype=np.float64)
    depth = np.array([gt.depth for gt in g], dtype=np.float64)
    return vertical, coord, lam, depth


@numba.njit(cache=True)
def _gate_field(x, y, vertical, coord, lam, depth, Lx, Ly):
    ex = 0.0
    ey = 0.0
    for g in range(coord.size):
        if lam[g] == 0.0:
            continue
        if vertical[g]:
            s0, L = x - coord[g], Lx
        else:
            s0, L = y - coord[g], Ly
        e = 0.0
        for k in range(-IMAGE_RANGE, IMAGE_RANGE + 1):
            s = s0 + k * L
            e += 2.0 * lam[g] * s / (s * s + depth[g] * depth[g])
        if vertical[g]:
            ex += e
        else:
            ey += e
    return ex, ey


@numba.njit(cache=True)
def _site_energy(i, x, y, th, pos, theta, is_pc, p, dd, cutoff, diam, vertical, coord, lam, depth,
                 Lx, Ly):
    """Energy of molecule i placed at (x, y, th) against fields and all others; inf on overlap."""
    e = 0.0
    if is_pc[i]:
        ex, ey = _gate_field(x, y, vertical, coord, lam, depth, Lx, Ly)
        e -= p * (math.cos(th) * ex + math.sin(th) * ey)
    c2 = cutoff * cutoff
    d2min = diam * diam
    for j in range(pos.shape[0]):
        if j == i:
            continue
        dx = x - pos[j, 0]
        dy = y - pos[j, 1]
        dx -= Lx * np.round(dx / Lx)
        dy -= Ly * np.round(dy / Ly)
        r2 = dx * dx + dy * dy
        if r2 < d2min:
            return np.inf
        if dd != 0.0 and is_pc[i] and is_pc[j] and r2 < c2:
            r = math.sqrt(r2)
            ux, uy = dx / r, dy / r
            ai, bi = math.cos(th), math.sin(th)
            aj, bj = math.cos(theta[j]), math.sin(theta[j])
            e += dd * p * p * ((ai * aj + bi * bj) - 3.0 * (ai * ux + bi * uy) * (aj * ux + bj * uy)) / (r2 * r)
    return e


@numba.njit(cache=True)
def _total_energy(pos, theta, is_pc, p, dd, cutoff, diam, vertical, coord, lam, depth, Lx, Ly):
    n = pos.shape[0]
    field_part = 0.0
    pair_part = 0.0
    for i in range(n):
        e = _site_energy(i, pos[i, 0], pos[i, 1], theta[i], pos, theta, is_pc, p, dd, cutoff, diam,
                         vertical, coord, lam, depth, Lx, Ly)
        if is_pc[i]:
            ex, ey = _gate_field(pos[i, 0], pos[i, 1], vertical, coord, lam, depth, Lx, Ly)
            f = -p * (math.cos(theta[i]) * ex + math.sin(theta[i]) * ey)
        else:
            f = 0.0
        field_part += f
        pair_part += e - f
    return field_part + 0.5 * pair_part


@numba.njit(cache=True)
def _sweeps(pos, unwrapped, theta, is_pc, temps, mobility, T_c, draws, p, dd, cutoff, diam, step,
            rot_step, vertical, coord, lam, depth, Lx, Ly, energy, acc_out, e_out, disp_out,
            start_pos):
    """Run len(temps) sweeps of N single-molecule moves; draws has shape (sweeps, N, 5)."""
    n = pos.shape[0]
    for s in range(temps.size):
        T = temps[s]
        accepted = 0
        for m in range(n):
            i = min(int(draws[s, m, 0] * n), n - 1)
            rotate = is_pc[i] and draws[s, m, 1] < 0.5
            x, y, th = pos[i, 0], pos[i, 1], theta[i]
            if rotate:
                nth = th + rot_step * (2.0 * draws[s, m, 2] - 1.0)
                nx, ny = x, y
                gate = 1.0
            else:
                dx = step * (2.0 * draws[s, m, 2] - 1.0)
                dy = step * (2.0 * draws[s, m, 3] - 1.0)
                nx = x + dx
                ny = y + dy
                nx -= Lx * math.floor(nx / Lx)
                ny -= Ly * math.floor(ny / Ly)
                nth = th
                gate = mobility if T < T_c else 1.0
            if gate == 0.0:
                continue
            e_old = _site_energy(i, x, y, th, pos, theta, is_pc, p, dd, cutoff, diam, vertical,
                                 coord, lam, depth, Lx, Ly)
            e_new = _site_energy(i, nx, ny, nth, pos, theta, is_pc, p, dd, cutoff, diam, vertical,
                                 coord, lam, depth, Lx, Ly)
            if e_new == np.inf:
                continue
            de = e_new - e_old
            if T > 0.0:
                prob = gate * math.exp(-de / T) if de > 0.0 else gate
            else:
                prob = gate if de <= 0.0 else 0.0
            if draws[s, m, 4] < prob:
                if not rotate:
                    unwrapped[i, 0] += nx - x - Lx * np.round((nx - x) / Lx)
                    unwrapped[i, 1] += ny - y - Ly * np.round((ny - y) / Ly)
                pos[i, 0] = nx
                pos[i, 1] = ny
                theta[i] = nth
                energy += de
                accepted += 1
        acc_out[s] = accepted / n
        e_out[s] = energy
        tot = 0.0
        for i in range(n):
            tot += math.hypot(unwrapped[i, 0] - start_pos[i, 0], unwrapped[i, 1] - start_pos[i, 1])
        disp_out[s] = tot / n
    return energy


# ----------------------------------------------------------------------------
# driver


def anneal(config: PlacementConfig) -> PlacementResult:
    """Hot diffusion, linear quench through T_c, cold hold. Deterministic in ``config.seed``."""
    errs = config.validate()
    if errs:
        raise PlacementError("; ".join(errs))
    rng = np.random.default_rng(config.seed)
    n = config.n_pc + config.n_background
    Lx, Ly = map(float, config.box)
    pos = random_placement(n, config.box, config.disk_diameter, rng)
    is_pc = _species(config, rng)
    theta = rng.random(n) * 2 * math.pi
    start = pos.copy()
    unwrapped = pos.copy()
    vertical, coord, lam, depth = _gate_arrays(config)
    args = (float(config.dipole_moment), float(config.dd_strength), float(config.dd_cutoff),
            float(config.disk_diameter))
    energy = _total_energy(pos, theta, is_pc, *args, vertical, coord, lam, depth, Lx, Ly)

    temps = config.temperatures()
    total = temps.size
    acc = np.zeros(total)
    etrace = np.zeros(total)
    disp = np.zeros(total)
    for lo in range(0, total, CHUNK_SWEEPS):
        hi = min(lo + CHUNK_SWEEPS, total)
        draws = rng.random((hi - lo, n, 5))
        energy = _sweeps(pos, unwrapped, theta, is_pc, temps[lo:hi], float(config.frozen_mobility),
                         float(config.T_c), draws, *args, float(config.step_size),
                         float(config.rotation_step), vertical, coord, lam, depth, Lx, Ly, energy,
                         acc[lo:hi], etrace[lo:hi], disp[lo:hi], start)
    frac = capture_fraction(pos[is_pc], config.target_sites(), config.capture_radius, config.box)
    return PlacementResult(pos, theta, is_pc, frac, acc, etrace, temps, disp, start, config.seed)


def total_energy(config: PlacementConfig, positions: np.ndarray, orientations: np.ndarray,
                 is_pc: np.ndarray) -> float:
    vertical, coord, lam, depth = _gate_arrays(config)
    return float(_total_energy(np.ascontiguousarray(positions, dtype=float),
                               np.ascontiguousarray(orientations, dtype=float),
                               np.ascontiguousarray(is_pc, dtype=np.bool_),
                               float(config.dipole_moment), float(config.dd_strength),
                               float(config.dd_cutoff), float(config.disk_diameter), vertical, coord,
                               lam, depth, float(config.box[0]), float(config.box[1])))


def _anneal_seed(args):
    config, seed = args
    return anneal(replace(config, seed=seed))


def anneal_many(config: PlacementConfig, seeds: Sequence[int], workers: int = 1) -> list[PlacementResult]:
    """One chain per seed; results come back in seed order regardless of ``workers``."""
    jobs = [(config, int(s)) for s in seeds]
    if workers <= 1:
        return [_anneal_seed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_anneal_seed, jobs))


def config_dict(config: PlacementConfig) -> dict:
    return asdict(config)
