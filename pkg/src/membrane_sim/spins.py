"""Exact small-system dynamics of a membrane Kane register.

Nuclear (31P) memory spins and unpaired-electron control spins, all spin-1/2.
Basis ordering: spin 0 is the most significant qubit, |0> = spin up.

Units are dimensionless. Energies are measured in units of the A-gate on
value, so the defaults below put the electron Zeeman splitting well under the
hyperfine coupling. Positions are in angstroms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from .errors import NumericsError

MAX_SPINS = 14
NORM_TOL = 1e-10

# documented dimensionless defaults
GAMMA_E = 1.0
GAMMA_N = GAMMA_E / 1620.0  # 31P vs free-electron gyromagnetic ratio
B_Z = 0.02
A_ON = 1.0
J_ON = 1.0

SX = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
SY = np.array([[0, -0.5j], [0.5j, 0]], dtype=complex)
SZ = np.array([[0.5, 0], [0, -0.5]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)
SM = SP.T.copy()
UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)


class DimensionError(ValueError):
    """System exceeds the exact-diagonalization cap."""


@dataclass(frozen=True)
class Spin:
    kind: str
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    leaflet: str = "outer"

    def __post_init__(self):
        if self.kind not in ("nuclear", "electron"):
            raise ValueError(f"spin kind must be 'nuclear' or 'electron', got {self.kind!r}")
        if self.leaflet not in ("outer", "inner"):
            raise ValueError(f"leaflet must be 'outer' or 'inner', got {self.leaflet!r}")


@dataclass(frozen=True)
class SpinSystem:
    spins: tuple[Spin, ...]
    hyperfine_pairs: tuple[tuple[int, int], ...] = ()
    exchange_pairs: tuple[tuple[int, int], ...] = ()
    gamma_n: float = GAMMA_N
    gamma_e: float = GAMMA_E
    b_z: float = B_Z
    dipolar_prefactor: float = 0.0
    dipolar_mode: str = "secular"

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))
        object.__setattr__(self, "hyperfine_pairs", tuple(tuple(p) for p in self.hyperfine_pairs))
        object.__setattr__(self, "exchange_pairs", tuple(tuple(p) for p in self.exchange_pairs))
        if self.dipolar_mode not in ("secular", "full", "off"):
            raise ValueError(f"dipolar_mode must be secular, full or off, got {self.dipolar_mode!r}")
        for n, e in self.hyperfine_pairs:
            if self.spins[n].kind != "nuclear" or self.spins[e].kind != "electron":
                raise ValueError(f"hyperfine pair ({n}, {e}) must be (nucleus, electron)")
        for a, b in self.exchange_pairs:
            if self.spins[a].kind != "electron" or self.spins[b].kind != "electron":
                raise ValueError(f"exchange pair ({a}, {b}) must join two electrons")

    @property
    def n(self) -> int:
        return len(self.spins)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    def gamma(self, i: int) -> float:
        return self.gamma_e if self.spins[i].kind == "electron" else self.gamma_n

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(np.subtract(self.spins[i].position, self.spins[j].position)))


def nucleus_electron_pair(**kw) -> SpinSystem:
    """One 31P nucleus (spin 0) with its head-group electron (spin 1)."""
    spins = (Spin("nuclear", (0.0, 0.0, 0.0)), Spin("electron", (0.0, 0.0, 1.5)))
    return SpinSystem(spins, hyperfine_pairs=((0, 1),), **kw)


def electron_pair(separation: float = 10.0, **kw) -> SpinSystem:
    spins = (Spin("electron", (0.0, 0.0, 0.0)), Spin("electron", (separation, 0.0, 0.0)))
    return SpinSystem(spins, exchange_pairs=((0, 1),), **kw)


def bilayer_pair(separation: float = 55.0, **kw) -> SpinSystem:
    """Two 31P nuclei facing each other across the bilayer."""
    spins = (Spin("nuclear", (0.0, 0.0, 0.0), "outer"),
             Spin("nuclear", (0.0, 0.0, -separation), "inner"))
    return SpinSystem(spins, **kw)


# ----------------------------------------------------------------------------
# waveforms and schedules


@dataclass(frozen=True)
class Waveform:
    """Piecewise-linear, non-negative gate profile."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.size == 0:
            raise ValueError("times and values must be non-empty and of equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError("waveform times must be non-decreasing")
        if np.any(v < 0):
            raise ValueError("gate waveforms must be non-negative")
        object.__setattr__(self, "times", tuple(map(float, t)))
        object.__setattr__(self, "values", tuple(map(float, v)))

    @classmethod
    def constant(cls, value: float, duration: float) -> "Waveform":
        return cls((0.0, duration), (value, value))

    @classmethod
    def trapezoid(cls, amplitude: float, duration: float, ramp: float = 0.0) -> "Waveform":
        if duration <= 0:
            return cls((0.0,), (0.0,))
        ramp = min(ramp, duration / 2)
        if ramp == 0:
            return cls.constant(amplitude, duration)
        return cls((0.0, ramp, duration - ramp, duration), (0.0, amplitude, amplitude, 0.0))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def area(self) -> float:
        t, v = np.asarray(self.times), np.asarray(self.values)
        return float(np.sum(np.diff(t) * (v[1:] + v[:-1]) / 2))


@dataclass(frozen=True)
class GateSchedule:
    """A-gate profiles keyed by hyperfine-pair index, J-gate profiles by exchange-pair index."""

    duration: float
    a: dict = field(default_factory=dict)
    j: dict = field(default_factory=dict)
    sample_step: float | None = None

    def breakpoints(self) -> np.ndarray:
        pts = {0.0, float(self.duration)}
        for w in list(self.a.values()) + list(self.j.values()):
            pts.update(t for t in w.times if 0 <= t <= self.duration)
        return np.array(sorted(pts))


def idle(duration: float) -> GateSchedule:
    return GateSchedule(duration)


# ----------------------------------------------------------------------------
# operators


def site_op(op: np.ndarray, i: int, n: int) -> sp.csr_matrix:
    return sp.kron(sp.kron(sp.identity(2 ** i), sp.csr_matrix(op)), sp.identity(2 ** (n - i - 1)),
                   format="csr")


def _heisenberg(i: int, j: int, n: int) -> sp.csr_matrix:
    return sum((site_op(s, i, n) @ site_op(s, j, n) for s in (SX, SY, SZ)), sp.csr_matrix((2 ** n,) * 2))


def dipolar_coupling(r_angstrom: float, prefactor: float) -> float:
    """Secular dipolar coupling magnitude prefactor / r^3."""
    if r_angstrom <= 0:
        raise ValueError("dipolar coupling needs r > 0")
    return prefactor / r_angstrom ** 3


def _dipolar(system: SpinSystem, i: int, j: int) -> sp.csr_matrix:
    n = system.n
    d = dipolar_coupling(system.distance(i, j), system.dipolar_prefactor * system.gamma(i) * system.gamma(j))
    zz = site_op(SZ, i, n) @ site_op(SZ, j, n)
    if system.dipolar_mode == "full":
        rvec = np.subtract(system.spins[j].position, system.spins[i].position)
        rhat = rvec / np.linalg.norm(rvec)
        si = [site_op(s, i, n) for s in (SX, SY, SZ)]
        sj = [site_op(s, j, n) for s in (SX, SY, SZ)]
        dot_i = sum(c * s for c, s in zip(rhat, si))
        dot_j = sum(c * s for c, s in zip(rhat, sj))
        return d * (_heisenberg(i, j, n) - 3 * dot_i @ dot_j)
    if system.spins[i].kind == system.spins[j].kind:
        # 3 zz - S.S : Ising part minus half the flip-flop
        return d * (3 * zz - _heisenberg(i, j, n))
    return d * 2 * zz


@dataclass
class _Terms:
    static: sp.csr_matrix
    hyperfine: list
    exchange: list
    zeeman: sp.csr_matrix


def hamiltonian_terms(system: SpinSystem) -> _Terms:
    n = system.n
    if n > MAX_SPINS:
        raise DimensionError(f"{n} spins exceeds the cap of {MAX_SPINS}")
    dim = 2 ** n
    zeeman = sp.csr_matrix((dim, dim), dtype=complex)
    for i, s in enumerate(system.spins):
        sign = 1.0 if s.kind == "electron" else -1.0
        zeeman = zeeman + sign * system.gamma(i) * system.b_z * site_op(SZ, i, n)
    static = zeeman.copy()
    if system.dipolar_mode != "off" and system.dipolar_prefactor != 0.0:
        for i in range(n):
            for j in range(i + 1, n):
                static = static + _dipolar(system, i, j)
    hyper = [_heisenberg(a, b, n) for a, b in system.hyperfine_pairs]
    exch = [_heisenberg(a, b, n) for a, b in system.exchange_pairs]
    return _Terms(static.tocsr(), hyper, exch, zeeman.tocsr())


def _coefficients(schedule: GateSchedule, system: SpinSystem, t: float) -> tuple[float, ...]:
    a = [schedule.a[k](t) if k in schedule.a else 0.0 for k in range(len(system.hyperfine_pairs))]
    j = [schedule.j[k](t) if k in schedule.j else 0.0 for k in range(len(system.exchange_pairs))]
    return tuple(a + j)


def _assemble(terms: _Terms, coeffs: Sequence[float]) -> sp.csr_matrix:
    h = terms.static
    for c, op in zip(coeffs, terms.hyperfine + terms.exchange):
        if c != 0.0:
            h = h + c * op
    return h.tocsr()


def build_hamiltonian(system: SpinSystem, schedule: GateSchedule | None = None, t: float = 0.0,
                      dense: bool = True):
    """H(t) = Zeeman + sum A_k(t) I.S + sum J_k(t) S.S + dipolar."""
    terms = hamiltonian_terms(system)
    if schedule is not None:
        if not 0.0 <= t <= schedule.duration:
            raise ValueError(f"t={t} outside schedule [0, {schedule.duration}]")
        coeffs = _coefficients(schedule, system, t)
    else:
        coeffs = ()
    h = _assemble(terms, coeffs)
    return h.toarray() if dense else h


def spectral_norm(h) -> float:
    if sp.issparse(h):
        if h.shape[0] <= 256:
            h = h.toarray()
        else:
            return float(abs(spla.eigsh(h, k=1, which="LM", return_eigenvectors=False)[0]))
    return float(np.max(np.abs(np.linalg.eigvalsh(h)))) if h.size else 0.0


# ----------------------------------------------------------------------------
# states


def product_state(single: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, [np.asarray(s, dtype=complex) for s in single])


def basis_state(bits: Sequence[int]) -> np.ndarray:
    """Computational basis state; bit 0 = up."""
    return product_state(UP if b == 0 else DOWN for b in bits)


def expectation(psi: np.ndarray, op) -> float:
    return float(np.real(np.vdot(psi, op @ psi)))


def swap_operator(n: int, i: int, j: int) -> np.ndarray:
    """Permutation matrix exchanging spins i and j."""
    dim = 2 ** n
    idx = np.arange(dim)
    bi = (idx >> (n - 1 - i)) & 1
    bj = (idx >> (n - 1 - j)) & 1
    swapped = idx ^ ((bi ^ bj) << (n - 1 - i)) ^ ((bi ^ bj) << (n - 1 - j))
    U = np.zeros((dim, dim))
    U[swapped, idx] = 1.0
    return U


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)


# ----------------------------------------------------------------------------
# evolution


def _propagator(h, dt: float):
    if h.shape[0] <= 256:
        return scipy.linalg.expm(-1j * dt * (h.toarray() if sp.issparse(h) else h))
    return None


def evolve(state: np.ndarray, system: SpinSystem, schedule: GateSchedule, dt: float,
           max_phase: float = 0.1, observables: Sequence | None = None):
    """Step the Schrodinger equation through ``schedule`` with exact per-step exponentials.

    H is evaluated at each step midpoint. The step is shortened so the
    duration divides evenly. With ``observables`` the return value is
    ``(state, times, values)``.
    """
    terms = hamiltonian_terms(system)
    psi = np.asarray(state, dtype=complex).copy()
    if psi.shape != (system.dim,):
        raise ValueError(f"state has shape {psi.shape}, expected ({system.dim},)")
    T = float(schedule.duration)
    if T == 0:
        return (psi, np.array([0.0]), np.array([[expectation(psi, o) for o in observables]])) \
            if observables is not None else psi
    peak = max(spectral_norm(_assemble(terms, _coefficients(schedule, system, t)))
               for t in schedule.breakpoints())
    if dt * peak > max_phase:
        raise ValueError(f"dt={dt:g} too coarse: dt*||H|| = {dt * peak:.3g} > {max_phase}")
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    h_step = T / n_steps
    cache: dict[tuple, np.ndarray] = {}
    times, values = [0.0], []
    if observables is not None:
        values.append([expectation(psi, o) for o in observables])
    for k in range(n_steps):
        coeffs = _coefficients(schedule, system, (k + 0.5) * h_step)
        U = cache.get(coeffs)
        if U is None:
            H = _assemble(terms, coeffs)
            U = _propagator(H, h_step)
            if U is None:
                psi = spla.expm_multiply(-1j * h_step * H, psi)
            elif len(cache) < 64:
                cache[coeffs] = U
        if U is not None:
            psi = U @ psi
        if observables is not None:
            times.append((k + 1) * h_step)
            values.append([expectation(psi, o) for o in observables])
    drift = abs(np.linalg.norm(psi) - np.linalg.norm(state))
    if drift > NORM_TOL or not np.all(np.isfinite(psi)):
        raise NumericsError(f"norm drift {drift:.3g} exceeds {NORM_TOL}")
    if observables is not None:
        return psi, np.array(times), np.array(values)
    return psi


# ----------------------------------------------------------------------------
# A-gate nucleus/electron transfer


@dataclass(frozen=True)
class APulse:
    amplitude: float = A_ON
    duration: float = math.pi / A_ON
    ramp: float = 0.0

    def waveform(self) -> Waveform:
        return Waveform.trapezoid(self.amplitude, self.duration, self.ramp)


def default_transfer_input(system: SpinSystem, pair: int = 0) -> np.ndarray:
    """Electron up, nucleus in a generic superposition, all other spins up."""
    n_idx, _ = system.hyperfine_pairs[pair]
    nuc = math.cos(math.pi / 6) * UP + np.exp(1j * math.pi / 4) * math.sin(math.pi / 6) * DOWN
    return product_state(nuc if i == n_idx else UP for i in range(system.n))


def a_gate_transfer(system: SpinSystem, pulse: APulse, pair: int = 0,
                    input_state: np.ndarray | None = None, dt: float | None = None) -> float:
    """Fidelity of the A-pulse against an ideal nucleus/electron SWAP.

    Compared in the frame rotating with the Zeeman Hamiltonian, which is
    where the Kane register stores its qubits.
    """
    if not system.hyperfine_pairs:
        raise ValueError("system has no nucleus/electron pair")
    psi0 = default_transfer_input(system, pair) if input_state is None else np.asarray(input_state, complex)
    n_idx, e_idx = system.hyperfine_pairs[pair]
    ideal = swap_operator(system.n, n_idx, e_idx) @ psi0
    if pulse.duration <= 0:
        return state_fidelity(ideal, psi0)
    schedule = GateSchedule(pulse.duration, a={pair: pulse.waveform()})
    if dt is None:
        dt = 0.05 / max(pulse.amplitude, 1e-12)
    out = evolve(psi0, system, schedule, dt)
    zeeman = hamiltonian_terms(system).zeeman.toarray()
    back = scipy.linalg.expm(1j * pulse.duration * zeeman) @ out
    return state_fidelity(ideal, back)


def calibrate_a_pulse(system: SpinSystem, amplitude: float = A_ON, ramp: float = 0.0,
                      pair: int = 0) -> APulse:
    """Scan the pulse length around the pi condition and keep the best."""
    hold_pi = math.pi / amplitude + ramp

    def loss(duration):
        return 1.0 - a_gate_transfer(system, APulse(amplitude, duration, ramp), pair)

    res = minimize_scalar(loss, bounds=(0.8 * hold_pi, 1.2 * hold_pi), method="bounded",
                          options={"xatol": 1e-6})
    return APulse(amplitude, float(res.x), ramp)


# ----------------------------------------------------------------------------
# bilayer singlet encoding under field noise


def encode_singlet(system: SpinSystem, pair: tuple[int, int] = (0, 1)) -> np.ndarray:
    """(|ud> - |du>)/sqrt2 on ``pair``, every other spin up."""
    i, j = pair
    si, sj = system.spins[i], system.spins[j]
    if si.leaflet == sj.leaflet:
        warnings.warn("singlet pair lies on one leaflet; the protected scenario pairs opposite leaflets",
                      stacklevel=2)
    up = [0] * system.n
    a = list(up)
    a[j] = 1
    b = list(up)
    b[i] = 1
    return (basis_state(a) - basis_state(b)) / math.sqrt(2)


def single_spin_superposition(system: SpinSystem, spin: int = 0) -> np.ndarray:
    plus = (UP + DOWN) / math.sqrt(2)
    return product_state(plus if k == spin else UP for k in range(system.n))


@dataclass(frozen=True)
class NoiseParams:
    """Ornstein-Uhlenbeck field fluctuation delta_B(t) on the pair members."""

    sigma: float = 0.5
    tau_c: float = 10.0
    dt: float = 0.1
    steps: int = 400
    realizations: int = 1000
    seed: int = 0
    mode: str = "common"

    def __post_init__(self):
        if self.mode not in ("common", "differential"):
            raise ValueError(f"noise mode must be common or differential, got {self.mode!r}")


def ou_paths(noise: NoiseParams) -> np.ndarray:
    """Exact OU samples on the time grid, shape (realizations, steps + 1), stationary start."""
    rng = np.random.default_rng(noise.seed)
    a = math.exp(-noise.dt / noise.tau_c)
    s = noise.sigma * math.sqrt(1 - a * a)
    xi = rng.standard_normal((noise.realizations, noise.steps + 1))
    x = np.empty_like(xi)
    x[:, 0] = noise.sigma * xi[:, 0]
    for k in range(1, noise.steps + 1):
        x[:, k] = a * x[:, k - 1] + s * xi[:, k]
    return x


def ou_phase_variance(t, sigma: float, tau_c: float) -> np.ndarray:
    """Variance of the integral of a stationary OU process over [0, t]."""
    t = np.asarray(t, dtype=float)
    return 2 * sigma ** 2 * tau_c ** 2 * (t / tau_c - 1 + np.exp(-t / tau_c))


def noise_operator(system: SpinSystem, pair: tuple[int, int], mode: str) -> np.ndarray:
    i, j = pair
    sign = 1.0 if mode == "common" else -1.0
    n = system.n
    return (system.gamma(i) * site_op(SZ, i, n) + sign * system.gamma(j) * site_op(SZ, j, n)).toarray()


def noisy_fidelities(psi0: np.ndarray, system: SpinSystem, pair: tuple[int, int],
                     noise: NoiseParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-realization fidelity with the noise-free evolution, shape (realizations, steps + 1).

    Also returns the contrast 2<F> - 1, which for a dephased two-level
    encoding is the decay of the off-diagonal coherence. The noise field is
    held at the midpoint of each step.
    """
    H0 = build_hamiltonian(system)
    Z = noise_operator(system, pair, noise.mode)
    x = ou_paths(noise)
    mid = 0.5 * (x[:, 1:] + x[:, :-1])
    R = noise.realizations
    diagonal = np.count_nonzero(H0 - np.diag(np.diag(H0))) == 0
    psi0 = np.asarray(psi0, dtype=complex)
    ideal_step = scipy.linalg.expm(-1j * noise.dt * H0)
    fid = np.empty((R, noise.steps + 1))
    fid[:, 0] = 1.0
    if diagonal:
        # everything commutes: accumulate phases exactly
        z = np.real(np.diag(Z))
        phi = np.cumsum(mid, axis=1) * noise.dt
        weights = np.abs(psi0) ** 2
        amp = np.exp(-1j * phi[:, :, None] * z[None, None, :]) @ weights
        fid[:, 1:] = np.abs(amp) ** 2
        return fid, 2 * fid.mean(axis=0) - 1
    psi = np.tile(psi0, (R, 1))
    ideal = psi0.copy()
    for k in range(noise.steps):
        H = H0[None, :, :] + mid[:, k, None, None] * Z[None, :, :]
        w, V = np.linalg.eigh(H)
        c = np.einsum("rji,rj->ri", V.conj(), psi)
        psi = np.einsum("rij,rj->ri", V, np.exp(-1j * noise.dt * w) * c)
        ideal = ideal_step @ ideal
        fid[:, k + 1] = np.abs(psi @ ideal.conj()) ** 2
    return fid, 2 * fid.mean(axis=0) - 1


def fit_t2(times: np.ndarray, coherence: np.ndarray, tau_c: float, gamma: float = 1.0,
           floor: float = 0.05) -> tuple[float, float]:
    """Fit sigma of the OU decay law to a coherence curve; returns (T2, sigma).

    T2 is where the fitted curve reaches 1/e.
    """
    mask = (coherence > floor) & (times > 0)
    y = -2 * np.log(coherence[mask])
    g = ou_phase_variance(times[mask], 1.0, tau_c) * gamma ** 2
    s2 = float(np.sum(y * g) / np.sum(g * g))
    if s2 <= 0:
        return math.inf, 0.0
    return ou_t2(math.sqrt(s2), tau_c, gamma), math.sqrt(s2)


def ou_t2(sigma: float, tau_c: float, gamma: float = 1.0) -> float:
    """Time at which exp(-gamma^2 Var/2) = 1/e for OU dephasing."""
    f = lambda t: gamma ** 2 * ou_phase_variance(t, sigma, tau_c) / 2 - 1.0
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    return float(brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-13))


@dataclass(frozen=True)
class FidelityCurve:
    times: np.ndarray
    fidelity: np.ndarray
    coherence: np.ndarray
    min_fidelity: np.ndarray

    @property
    def final(self) -> float:
        return float(self.fidelity[-1])


def logical_fidelity_under_common_mode(noise: NoiseParams, encoding: str = "singlet",
                                       system: SpinSystem | None = None,
                                       pair: tuple[int, int] = (0, 1)) -> FidelityCurve:
    """Average fidelity vs time of the singlet or a single-spin control under field noise."""
    system = bilayer_pair() if system is None else system
    if encoding == "singlet":
        psi0 = encode_singlet(system, pair)
    elif encoding == "single":
        psi0 = single_spin_superposition(system, pair[0])
    else:
        raise ValueError(f"encoding must be 'singlet' or 'single', got {encoding!r}")
    fid, coh = noisy_fidelities(psi0, system, pair, noise)
    times = np.arange(noise.steps + 1) * noise.dt
    return FidelityCurve(times, fid.mean(axis=0), coh, fid.min(axis=0))


# ----------------------------------------------------------------------------
# spectator nuclei


@dataclass(frozen=True)
class SpectatorResult:
    rate: float
    times: np.ndarray
    coherence: np.ndarray
    rms_coupling: float


def spectator_positions(n_spectators: int, spacing: float, rng: np.random.Generator) -> np.ndarray:
    """In-plane spectators at radii uniform in [spacing, 2 spacing] around the memory spin."""
    r = spacing * (1 + rng.random(n_spectators))
    th = 2 * math.pi * rng.random(n_spectators)
    return np.column_stack([r * np.cos(th), r * np.sin(th), np.zeros(n_spectators)])


def _memory_coherence(positions: np.ndarray, prefactor: float, gamma: float, mode: str,
                      times: np.ndarray) -> np.ndarray:
    spins = [Spin("nuclear", (0.0, 0.0, 0.0))] + [Spin("nuclear", tuple(p)) for p in positions]
    system = SpinSystem(tuple(spins), gamma_n=gamma, b_z=0.0, dipolar_prefactor=prefactor,
                        dipolar_mode=mode)
    H = build_hamiltonian(system)
    E, V = np.linalg.eigh(H)
    n = system.n
    plus = (UP + DOWN) / math.sqrt(2)
    rho_mem = np.outer(plus, plus.conj())
    rho0 = np.kron(rho_mem, np.eye(2 ** (n - 1)) / 2 ** (n - 1))
    s_plus = site_op(SP, 0, n).toarray()
    X = V.conj().T @ rho0 @ V
    Y = V.conj().T @ s_plus @ V
    W = (X.T * Y).ravel()
    dE = (E[:, None] - E[None, :]).ravel()
    c = np.exp(1j * np.outer(times, dE)) @ W
    return c / np.trace(rho0 @ s_plus)


def spectator_noise_floor(n_spectators: int, spacing: float = 5.0, prefactor: float = 1.0,
                          n_configs: int = 20, seed: int = 0, gamma: float = 1.0,
                          mode: str = "secular", n_times: int = 400) -> SpectatorResult:
    """Decay rate of memory-spin coherence from uncontrolled neighbouring 31P spins.

    Spectators start at infinite temperature. The averaged coherence is
    sampled on a grid scaled by the rms coupling, and the rate is the inverse
    of the 1/e time.
    """
    if n_spectators == 0:
        return SpectatorResult(0.0, np.zeros(1), np.ones(1), 0.0)
    if n_spectators + 1 > MAX_SPINS:
        raise DimensionError(f"{n_spectators + 1} spins exceeds the cap of {MAX_SPINS}")
    rng = np.random.default_rng(seed)
    configs = [spectator_positions(n_spectators, spacing, rng) for _ in range(n_configs)]
    d_rms = math.sqrt(np.mean([np.sum((prefactor * gamma ** 2 / np.linalg.norm(p, axis=1) ** 3) ** 2)
                               for p in configs]))
    times = np.linspace(0.0, 10.0 / d_rms, n_times)
    coh = np.mean([_memory_coherence(p, prefactor, gamma, mode, times) for p in configs], axis=0)
    mag = np.abs(coh)
    below = np.flatnonzero(mag < math.exp(-1))
    if below.size == 0:
        return SpectatorResult(0.0, times, mag, d_rms)
    k = below[0]
    t1, t0 = times[k], times[k - 1]
    m1, m0 = mag[k], mag[k - 1]
    t_e = t0 + (math.exp(-1) - m0) * (t1 - t0) / (m1 - m0)
    return SpectatorResult(1.0 / t_e, times, mag, d_rms)
