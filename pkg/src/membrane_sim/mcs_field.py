"""Maxwell-Chern-Simons surface electrodynamics on the membrane leaflets.

Each leaflet carries a planar field (E_x, E_phi, B_r) on a staggered grid:

* ``ex[i, j]`` on the x-edge from node (i, j) to (i+1, j)
* ``ey[i, j]`` on the phi-edge from node (i, j) to (i, j+1)
* ``b[i, j]`` on cell (i, j)

With the radial chirality folded into a surface coefficient ``mu`` the
equations are::

    dE/dt   = curl B + mu * (E_phi, -E_x) - e2 * J
    dB/dt   = -curl E
    div E   = e2 * rho - mu * B

The update is a velocity-Verlet split of the leapfrog scheme (all fields held
at integer times) with the Chern-Simons rotation applied Crank-Nicolson style,
which makes both the discrete Gauss law and the discrete energy exact
invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .errors import NumericsError
from .geometry import INNER, OUTER, ChiralityField, CylinderLattice, Puncture

BOUNDARIES = ("pec", "periodic", "absorbing")


def stability_limit(cell_size: float) -> float:
    """Largest stable time step of the 2D staggered scheme (c = 1)."""
    return cell_size / math.sqrt(2.0)


class _Operators:
    """Sparse difference operators for one lattice and boundary choice."""

    def __init__(self, lattice: CylinderLattice, boundary: str):
        if boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
        nx, ny = lattice.shape
        h = lattice.cell_size
        periodic = boundary == "periodic"
        self.shape = (nx, ny)
        self.periodic = periodic
        self.n_ey_rows = nx if periodic else nx + 1
        self.n_node_rows = self.n_ey_rows
        n_ex = nx * ny
        n_ey = self.n_ey_rows * ny
        self.n_ex, self.n_edges = n_ex, n_ex + n_ey
        self.n_cells = nx * ny
        self.n_nodes = self.n_node_rows * ny

        def ex_id(i, j):
            if periodic:
                i %= nx
            elif not 0 <= i < nx:
                return None
            return i * ny + j % ny

        def ey_id(i, j):
            if periodic:
                i %= nx
            elif not 0 <= i <= nx:
                return None
            return n_ex + i * ny + j % ny

        def cell_id(i, j):
            if periodic:
                i %= nx
            elif not 0 <= i < nx:
                return None
            return i * ny + j % ny

        C = sp.lil_matrix((self.n_cells, self.n_edges))
        for i in range(nx):
            for j in range(ny):
                c = cell_id(i, j)
                for e, s in ((ex_id(i, j), 1.0), (ey_id(i + 1, j), 1.0),
                             (ex_id(i, j + 1), -1.0), (ey_id(i, j), -1.0)):
                    C[c, e] += s / h

        D = sp.lil_matrix((self.n_nodes, self.n_edges))
        A = sp.lil_matrix((self.n_nodes, self.n_cells))
        for i in range(self.n_node_rows):
            for j in range(ny):
                n = i * ny + j
                for e, s in ((ex_id(i, j), 1.0), (ex_id(i - 1, j), -1.0),
                             (ey_id(i, j), 1.0), (ey_id(i, j - 1), -1.0)):
                    if e is not None:
                        D[n, e] += s / h
                for c in (cell_id(i - 1, j - 1), cell_id(i - 1, j), cell_id(i, j - 1), cell_id(i, j)):
                    if c is not None:
                        A[n, c] += 0.25

        # E_phi averaged onto x-edges; the transpose averages E_x onto phi-edges
        Avg = sp.lil_matrix((n_ex, self.n_edges))
        for i in range(nx):
            for j in range(ny):
                for e in (ey_id(i, j), ey_id(i, j - 1), ey_id(i + 1, j), ey_id(i + 1, j - 1)):
                    Avg[i * ny + j, e] += 0.25
        Avg = Avg.tocsr()
        Pex = sp.eye(n_ex, self.n_edges, format="csr")
        S = Pex.T @ Avg - Avg.T @ Pex

        # degrees of freedom: edges not pinned by a conductor
        dof = np.ones(self.n_edges, dtype=bool)
        if not periodic:
            dof[[ey_id(0, j) for j in range(ny)]] = False
            dof[[ey_id(nx, j) for j in range(ny)]] = False
        for (i, j) in zip(*np.nonzero(lattice.puncture_mask)):
            dof[[ex_id(i, j), ex_id(i, j + 1), ey_id(i, j), ey_id(i + 1, j)]] = False
        self.dof = dof
        P = sp.eye(self.n_edges, format="csr")[np.flatnonzero(dof)]
        self.P = P

        self.C = C.tocsr()
        self.Cr = (self.C @ P.T).tocsr()
        self.CrT = self.Cr.T.tocsr()
        self.D = D.tocsr()
        self.Dr = (self.D @ P.T).tocsr()
        self.A = A.tocsr()
        self.Sr = (P @ S @ P.T).tocsc()

        # Gauss law is checked where all four incident edges evolve freely
        incident = (abs(self.D) @ (~dof).astype(float)) == 0
        full = np.asarray(abs(self.D).sum(axis=1)).ravel() * h > 3.5
        self.interior = incident & full

        # bulk x-edges used for the uniform-mode probe
        self.bulk_ex = np.flatnonzero(dof[:n_ex])

    def split(self, e_full: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        return e_full[: self.n_ex].reshape(nx, ny), e_full[self.n_ex:].reshape(self.n_ey_rows, ny)


@lru_cache(maxsize=32)
def operators(lattice: CylinderLattice, boundary: str = "pec") -> _Operators:
    return _Operators(lattice, boundary)


@lru_cache(maxsize=64)
def _cs_factor(lattice: CylinderLattice, boundary: str, a: float):
    ops = operators(lattice, boundary)
    n = ops.Sr.shape[0]
    M = (sp.identity(n, format="csc") - a * ops.Sr).tocsc()
    return spla.splu(M)


@dataclass(frozen=True, eq=False)
class EMFieldState:
    """Fields of both leaflets plus the transverse sector at each puncture.

    Arrays carry a leading leaflet axis (0 = outer, 1 = inner). ``rho`` lives
    on nodes, ``jx``/``jy`` on the matching edges. Transverse quantities are
    per puncture: ``e_r_flux`` is the electric flux through the puncture
    region, ``b_r_flux`` the magnetic flux through it and ``j_r_charge`` the
    charge that has crossed the membrane there.
    """

    lattice: CylinderLattice
    ex: np.ndarray
    ey: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    jx: np.ndarray
    jy: np.ndarray
    e_r_flux: np.ndarray
    b_r_flux: np.ndarray
    j_r_charge: np.ndarray
    time: float = 0.0
    steps: int = 0
    boundary: str = "pec"
    absorber_cells: int = 0

    @classmethod
    def zeros(cls, lattice: CylinderLattice, boundary: str = "pec",
              absorber_cells: int = 8) -> "EMFieldState":
        ops = operators(lattice, boundary)
        nx, ny = lattice.shape
        nr = ops.n_ey_rows
        n_p = len(lattice.punctures)
        z = np.zeros
        return cls(lattice, z((2, nx, ny)), z((2, nr, ny)), z((2, nx, ny)), z((2, nr, ny)),
                   z((2, nx, ny)), z((2, nr, ny)), z(n_p), z(n_p), z(n_p),
                   boundary=boundary, absorber_cells=absorber_cells if boundary == "absorbing" else 0)

    @property
    def ops(self) -> _Operators:
        return operators(self.lattice, self.boundary)

    def e_vector(self, leaflet: int) -> np.ndarray:
        return np.concatenate([self.ex[leaflet].ravel(), self.ey[leaflet].ravel()])

    def j_vector(self, leaflet: int) -> np.ndarray:
        return np.concatenate([self.jx[leaflet].ravel(), self.jy[leaflet].ravel()])

    def with_fields(self, ex=None, ey=None, b=None, **kw) -> "EMFieldState":
        """Copy with new field arrays; conductor-pinned edges are zeroed."""
        ops = self.ops
        ex = np.array(self.ex if ex is None else ex, dtype=float)
        ey = np.array(self.ey if ey is None else ey, dtype=float)
        b = np.array(self.b if b is None else b, dtype=float)
        ex = np.broadcast_to(ex, self.ex.shape).copy()
        ey = np.broadcast_to(ey, self.ey.shape).copy()
        b = np.broadcast_to(b, self.b.shape).copy()
        for leaf in (OUTER, INNER):
            e = np.concatenate([ex[leaf].ravel(), ey[leaf].ravel()])
            e[~ops.dof] = 0.0
            ex[leaf], ey[leaf] = ops.split(e)
            b[leaf][self.lattice.puncture_mask] = 0.0
        return replace(self, ex=ex, ey=ey, b=b, **kw)

    def peak_field(self) -> float:
        return float(max(np.abs(self.ex).max(), np.abs(self.ey).max(), np.abs(self.b).max()))


# ----------------------------------------------------------------------------
# initial data


def plane_wave(lattice: CylinderLattice, mode: int = 1, amplitude: float = 1.0,
               boundary: str = "pec") -> EMFieldState:
    """E_x = A cos(k y), B = -A cos(k y): a wave travelling around the cylinder."""
    state = EMFieldState.zeros(lattice, boundary)
    nx, ny = lattice.shape
    h = lattice.cell_size
    k = 2 * math.pi * mode / (ny * h)
    y_edge = np.arange(ny) * h
    y_cell = (np.arange(ny) + 0.5) * h
    ex = np.broadcast_to(amplitude * np.cos(k * y_edge), (2, nx, ny))
    b = np.broadcast_to(-amplitude * np.cos(k * y_cell), (2, nx, ny))
    return state.with_fields(ex=ex, b=b)


def uniform_mode(lattice: CylinderLattice, amplitude: float = 1.0,
                 boundary: str = "periodic") -> EMFieldState:
    """Spatially uniform E_x: the k = 0 mode that rotates at the gap frequency."""
    state = EMFieldState.zeros(lattice, boundary)
    return state.with_fields(ex=np.full(state.ex.shape, amplitude))


def constrained_random(lattice: CylinderLattice, chirality: ChiralityField, seed: int = 0,
                       amplitude: float = 1.0, boundary: str = "pec",
                       smoothing: int = 2) -> EMFieldState:
    """Random smooth fields satisfying div E = -mu B at every interior node.

    E is the sum of a divergence-free part (curl of a random cell potential)
    and a gradient part from a Dirichlet Poisson solve sourced by -mu B.
    """
    rng = np.random.default_rng(seed)
    state = EMFieldState.zeros(lattice, boundary)
    ops = state.ops
    nx, ny = lattice.shape
    interior = np.flatnonzero(ops.interior)
    # gradient on edges from node potentials (restricted to interior nodes)
    G = -ops.D.T.tocsr()[:, interior]
    lap = (ops.D[interior] @ G).tocsc()
    lu = spla.splu(lap)

    def smooth(a):
        for _ in range(smoothing):
            a = 0.2 * (a + np.roll(a, 1, -1) + np.roll(a, -1, -1)
                       + np.roll(a, 1, -2) + np.roll(a, -1, -2))
        return a

    ex, ey, b = np.zeros_like(state.ex), np.zeros_like(state.ey), np.zeros_like(state.b)
    for leaf in (OUTER, INNER):
        mu = chirality.surface_coefficient(leaf)
        bl = smooth(rng.standard_normal((nx, ny)))
        bl[lattice.puncture_mask] = 0.0
        a = smooth(rng.standard_normal(ops.n_cells).reshape(nx, ny)).ravel()
        e = ops.C.T @ a
        e[~ops.dof] = 0.0
        target = -mu * (ops.A @ bl.ravel())[interior] - (ops.D @ e)[interior]
        phi = lu.solve(target)
        e = e + G @ phi
        e[~ops.dof] = 0.0
        ex[leaf], ey[leaf] = ops.split(e)
        b[leaf] = bl
    scale = amplitude / max(np.abs(ex).max(), np.abs(ey).max(), np.abs(b).max())
    return state.with_fields(ex=ex * scale, ey=ey * scale, b=b * scale)


# ----------------------------------------------------------------------------
# stepping


def _absorber_profile(state: EMFieldState, dt: float) -> tuple[np.ndarray, np.ndarray] | None:
    n = state.absorber_cells
    if state.boundary != "absorbing" or n <= 0:
        return None
    ops = state.ops
    nx, ny = state.lattice.shape
    h = state.lattice.cell_size
    sigma_max = 0.8 / h

    def sigma(x):
        d = np.maximum(np.maximum(n * h - x, x - (nx - n) * h), 0.0) / (n * h)
        return sigma_max * d ** 3

    x_ex = (np.arange(nx) + 0.5) * h
    x_ey = np.arange(ops.n_ey_rows) * h
    damp_e = np.concatenate([np.repeat(np.exp(-sigma(x_ex) * dt), ny),
                             np.repeat(np.exp(-sigma(x_ey) * dt), ny)])
    damp_b = np.repeat(np.exp(-sigma(x_ex) * dt), ny)
    return damp_e, damp_b


def _step_leaflet(ops: _Operators, lattice: CylinderLattice, boundary: str,
                  e: np.ndarray, b: np.ndarray, rho: np.ndarray, j: np.ndarray,
                  mu: float, e2: float, dt: float, damp=None):
    """Advance one leaflet by dt. ``e``/``j`` are full edge vectors."""
    P = ops.P
    er = P @ e
    jr = P @ j
    b_half = b - 0.5 * dt * (ops.Cr @ er)
    rhs = er + dt * (ops.CrT @ b_half - e2 * jr)
    if mu != 0.0:
        a = 0.5 * dt * mu
        rhs = rhs + a * (ops.Sr @ er)
        er_new = _cs_factor(lattice, boundary, a).solve(rhs)
    else:
        er_new = rhs
    b_new = b_half - 0.5 * dt * (ops.Cr @ er_new)
    rho_new = rho - dt * (ops.Dr @ jr)
    e_new = P.T @ er_new
    if damp is not None:
        e_new = e_new * damp[0]
        b_new = b_new * damp[1]
    return e_new, b_new, rho_new


def step(state: EMFieldState, lattice: CylinderLattice, chirality: ChiralityField,
         dt: float) -> EMFieldState:
    """Advance both leaflets by one time step."""
    if lattice is not state.lattice:
        raise ValueError("state was built on a different lattice")
    limit = stability_limit(lattice.cell_size)
    if not 0 < dt <= limit:
        raise ValueError(f"dt={dt:g} outside stability bound (0, {limit:g}]")
    ops = state.ops
    damp = _absorber_profile(state, dt)
    ex, ey = np.empty_like(state.ex), np.empty_like(state.ey)
    b, rho = np.empty_like(state.b), np.empty_like(state.rho)
    for leaf in (OUTER, INNER):
        e_new, b_new, rho_new = _step_leaflet(
            ops, lattice, state.boundary, state.e_vector(leaf), state.b[leaf].ravel(),
            state.rho[leaf].ravel(), state.j_vector(leaf),
            chirality.surface_coefficient(leaf), chirality.e2, dt, damp)
        ex[leaf], ey[leaf] = ops.split(e_new)
        b[leaf] = b_new.reshape(lattice.shape)
        rho[leaf] = rho_new.reshape(ops.n_node_rows, -1)
    if not (np.isfinite(ex).all() and np.isfinite(ey).all() and np.isfinite(b).all()):
        raise NumericsError(f"non-finite field values at step {state.steps + 1}, t={state.time + dt:g}")
    return replace(state, ex=ex, ey=ey, b=b, rho=rho, time=state.time + dt, steps=state.steps + 1)


def step_leaflet(state: EMFieldState, leaflet: int, mu: float, e2: float, dt: float
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance a single leaflet in isolation; returns (ex, ey, b)."""
    ops = state.ops
    e_new, b_new, _ = _step_leaflet(
        ops, state.lattice, state.boundary, state.e_vector(leaflet), state.b[leaflet].ravel(),
        state.rho[leaflet].ravel(), state.j_vector(leaflet), mu, e2, dt,
        _absorber_profile(state, dt))
    ex, ey = ops.split(e_new)
    return ex, ey, b_new.reshape(state.lattice.shape)


def run(state: EMFieldState, chirality: ChiralityField, dt: float, n_steps: int,
        observe: Callable[[EMFieldState], Sequence[float]] | None = None,
        every: int = 1) -> tuple[EMFieldState, np.ndarray]:
    """Step ``n_steps`` times, sampling ``observe`` every ``every`` steps (and at t=0)."""
    samples = []
    if observe is not None:
        samples.append([state.time, *observe(state)])
    for n in range(1, n_steps + 1):
        state = step(state, state.lattice, chirality, dt)
        if observe is not None and n % every == 0:
            samples.append([state.time, *observe(state)])
    return state, np.asarray(samples, dtype=float)


# ----------------------------------------------------------------------------
# diagnostics


def gauss_residuals(state: EMFieldState, chirality: ChiralityField) -> np.ndarray:
    """Max-norm of div E - e2 rho + mu B over interior nodes, per leaflet."""
    ops = state.ops
    out = np.zeros(2)
    for leaf in (OUTER, INNER):
        mu = chirality.surface_coefficient(leaf)
        r = (ops.D @ state.e_vector(leaf) - chirality.e2 * state.rho[leaf].ravel()
             + mu * (ops.A @ state.b[leaf].ravel()))
        r = r[ops.interior]
        out[leaf] = np.abs(r).max() if r.size else 0.0
    return out


def gauss_residual(state: EMFieldState, chirality: ChiralityField) -> float:
    return float(gauss_residuals(state, chirality).max())


def field_energy(state: EMFieldState) -> float:
    """Plain (E^2 + B^2)/2 summed over both leaflets."""
    h2 = state.lattice.cell_size ** 2
    # huge fields give inf here; the stepper reports them as a numerics error
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * h2 * float((state.ex ** 2).sum() + (state.ey ** 2).sum() + (state.b ** 2).sum())


def discrete_energy(state: EMFieldState, dt: float) -> float:
    """Quadratic invariant of the scheme: field energy minus (dt/2)^2 |curl E|^2 / 2.

    Exactly conserved by ``step`` for sourceless, non-absorbing runs at any mu.
    """
    ops = state.ops
    h2 = state.lattice.cell_size ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        corr = sum(float(np.sum((ops.C @ state.e_vector(leaf)) ** 2)) for leaf in (OUTER, INNER))
        return field_energy(state) - 0.5 * h2 * (0.5 * dt) ** 2 * corr


def uniform_amplitude(state: EMFieldState, leaflet: int = OUTER) -> float:
    """Mean E_x over free bulk x-edges: the k = 0 mode amplitude."""
    with np.errstate(over="ignore", invalid="ignore"):
        return float(state.ex[leaflet].ravel()[state.ops.bulk_ex].mean())


# ----------------------------------------------------------------------------
# continuum dispersion


@dataclass(frozen=True)
class DispersionResult:
    k: float
    omega_plus: float
    omega_minus: float
    gap: float
    mu: float
    b0: float = 0.0
    stable: bool = True
    growth_rate: float = 0.0


def _cross_matrix(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def mode_matrix(k: float, mu: float, b0: float = 0.0) -> np.ndarray:
    """Generator of d/dt (E, B) for a plane wave exp(i k x) with b = (b0, mu r_hat).

    The wavevector lies in the membrane surface; r_hat is the surface normal.
    """
    kx = _cross_matrix((k, 0.0, 0.0))
    bx = _cross_matrix((0.0, 0.0, mu))
    top = np.hstack([-bx, 1j * kx - b0 * np.eye(3)])
    bottom = np.hstack([-1j * kx, np.zeros((3, 3))])
    return np.vstack([top, bottom]).astype(complex)


def _branches(k: float, mu: float, b0: float, tol: float) -> tuple[np.ndarray, float]:
    lam = np.linalg.eigvals(mode_matrix(k, mu, b0))
    scale = max(abs(k), abs(mu), abs(b0), 1.0)
    growth = float(np.max(lam.real))
    # two eigenvalues are the conserved constraints (div B and Gauss law)
    order = np.argsort(np.abs(lam))
    phys = lam[order[2:]]
    omega = np.sort(np.abs(phys.imag))
    return omega, growth if growth > tol * scale else 0.0


def dispersion(k: float, mu: float, b0: float = 0.0, tol: float = 1e-9) -> DispersionResult:
    """Photon branches of the chiral medium for an in-surface wavevector.

    ``omega_plus`` is the gapped polarization (mass |mu| at k = 0), ``omega_minus``
    the other one. Regimes with exponentially growing modes (timelike b0 at
    small k) come back with ``stable=False`` and NaN frequencies.
    """
    omega, growth = _branches(k, mu, b0, tol)
    omega0, _ = _branches(0.0, mu, b0, tol)
    gap = float(omega0[-1])
    if growth > 0.0:
        return DispersionResult(k, math.nan, math.nan, gap, mu, b0, False, growth)
    return DispersionResult(k, float(omega[-1]), float(omega[0]), gap, mu, b0)


# ----------------------------------------------------------------------------
# gap measurement


@dataclass(frozen=True)
class GapEstimate:
    omega: float
    resolved: bool
    resolution: float
    n_periods: float


def measure_gap_from_run(series: Sequence[float], dt: float, min_periods: float = 5.0,
                         snr: float = 100.0) -> GapEstimate:
    """Dominant angular frequency of a uniform-mode amplitude time series.

    A windowed, zero-padded FFT locates the peak; a sinusoid-plus-offset least
    squares fit then refines it. A flat series or a peak that does not clear
    ``snr`` times the median spectral power gives an unresolved estimate of 0.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 8:
        raise ValueError("need at least 8 samples")
    t = np.arange(n) * dt
    duration = t[-1]
    resolution = 2 * math.pi / duration
    xc = x - x.mean()
    if np.abs(xc).max() <= 1e-12 * max(np.abs(x).max(), 1e-300):
        return GapEstimate(0.0, False, resolution, 0.0)

    pad = 8 * int(2 ** math.ceil(math.log2(n)))
    power = np.abs(np.fft.rfft(xc * np.hanning(n), pad)) ** 2
    freqs = 2 * math.pi * np.fft.rfftfreq(pad, dt)
    peak = int(np.argmax(power[1:])) + 1
    if power[peak] < snr * np.median(power):
        return GapEstimate(0.0, False, resolution, 0.0)

    basis_const = np.ones(n)

    def misfit(w):
        M = np.column_stack([np.cos(w * t), np.sin(w * t), basis_const])
        coef, *_ = np.linalg.lstsq(M, x, rcond=None)
        return float(np.sum((M @ coef - x) ** 2))

    w0 = freqs[peak]
    res = minimize_scalar(misfit, bounds=(max(w0 - resolution, 1e-12), w0 + resolution),
                          method="bounded", options={"xatol": 1e-12 * max(w0, 1.0)})
    omega = float(res.x)
    periods = omega * duration / (2 * math.pi)
    if periods < min_periods:
        raise ValueError(f"run covers {periods:.2f} periods, need >= {min_periods}")
    return GapEstimate(omega, True, resolution, periods)


def gap_run(lattice: CylinderLattice, mu: float, dt: float, n_steps: int,
            leaflet: int = OUTER, amplitude: float = 1.0) -> tuple[np.ndarray, GapEstimate]:
    """Evolve the uniform mode at surface coefficient ``mu`` and fit its frequency."""
    chir = ChiralityField.from_surface_coefficient(mu)
    state = uniform_mode(lattice, amplitude, boundary="periodic")
    _, samples = run(state, chir, dt, n_steps, observe=lambda s: (uniform_amplitude(s, leaflet),))
    return samples, measure_gap_from_run(samples[:, 1], dt)


# ----------------------------------------------------------------------------
# puncture flux transfer


@dataclass(frozen=True)
class Pulse:
    """Transmembrane current pulse through one channel."""

    charge: float
    duration: float = 1.0
    shape: str = "raised_cosine"
    n_steps: int = 200

    def current(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        if self.shape == "raised_cosine":
            j = self.charge / self.duration * (1 - np.cos(2 * math.pi * t / self.duration))
        elif self.shape == "square":
            j = np.full_like(t, self.charge / self.duration)
        else:
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        return np.where(inside, j, 0.0)


UNIT_PULSE = Pulse(charge=1.0, duration=1.0)


@dataclass(frozen=True)
class DischargeResponse:
    delta_e_flux: float
    b_flux: float
    accumulated: float
    quanta: float


def _integrate_discharge(pulse: Pulse, b0: float, b_flux0: float = 0.0) -> tuple[float, float, float]:
    # y = (E_flux - E_rest, B_flux, accumulated b0*B_flux, 1); the current enters
    # through the constant component, held at its midpoint value per sub-step
    if pulse.n_steps < 10:
        raise ValueError("pulse must be resolved by at least 10 steps")
    h = pulse.duration / pulse.n_steps
    mids = (np.arange(pulse.n_steps) + 0.5) * h
    y = np.array([0.0, b_flux0, 0.0, 1.0])
    for jm in pulse.current(mids):
        M = np.array([[0.0, -b0, 0.0, -jm],
                      [b0, 0.0, 0.0, 0.0],
                      [0.0, b0, 0.0, 0.0],
                      [0.0, 0.0, 0.0, 0.0]])
        y = scipy.linalg.expm(M * h) @ y
    return float(y[0]), float(y[1]), float(y[2])


@lru_cache(maxsize=1)
def holonomy_quantum() -> float:
    """Accumulated b0 * B-flux of the unit pulse at b0 = 1 (the calibration run)."""
    return _integrate_discharge(UNIT_PULSE, 1.0)[2]


def discharge_response(pulse: Pulse, b0: float, b_flux0: float = 0.0) -> DischargeResponse:
    """Integrate the transverse balance -dE_flux/dt - J = b0 * B_flux over the pulse.

    Closure: the puncture's magnetic flux is driven by the displaced electric
    flux, dB_flux/dt = b0 * (E_flux - E_rest), so the pair rotates at |b0|
    and decouples entirely at b0 = 0.
    """
    de, bf, acc = _integrate_discharge(pulse, b0, b_flux0)
    return DischargeResponse(de, bf, acc, acc / holonomy_quantum())


def puncture_discharge(state: EMFieldState, puncture: Puncture | int, pulse: Pulse,
                       chirality: ChiralityField) -> tuple[EMFieldState, int]:
    """Drive a current pulse through a channel; returns the winding change it transfers."""
    idx = puncture if isinstance(puncture, (int, np.integer)) else puncture.id
    if not 0 <= idx < len(state.lattice.punctures):
        raise IndexError(f"no puncture {idx}")
    if pulse.charge == 0.0:
        return state, 0
    resp = discharge_response(pulse, chirality.b0, float(state.b_r_flux[idx]))
    e_flux = state.e_r_flux.copy()
    b_flux = state.b_r_flux.copy()
    charge = state.j_r_charge.copy()
    e_flux[idx] += resp.delta_e_flux
    b_flux[idx] = resp.b_flux
    charge[idx] += pulse.charge
    new = replace(state, e_r_flux=e_flux, b_r_flux=b_flux, j_r_charge=charge)
    return new, int(round(resp.quanta))
