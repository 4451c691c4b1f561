"""Winding-number register of the gapped topological sector.

States are finite superpositions of integer winding vectors ``w`` (one entry
per annular segment of the punctured cylinder) in an orthonormal basis.
Everything here is a pure function returning a new state.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .geometry import CylinderLattice, Loop

W_MAX_DEFAULT = 8
NORM_TOL = 1e-12

Winding = tuple[int, ...]


class WindingCutoffError(ValueError):
    """A winding shift would leave the |w_i| <= w_max window."""


@dataclass(frozen=True)
class TopoState:
    amplitudes: Mapping[Winding, complex]
    n_segments: int
    w_max: int = W_MAX_DEFAULT

    def __post_init__(self):
        for w in self.amplitudes:
            if len(w) != self.n_segments:
                raise ValueError(f"winding vector {w} does not have {self.n_segments} entries")
            if any(abs(x) > self.w_max for x in w):
                raise WindingCutoffError(f"winding vector {w} exceeds cutoff w_max={self.w_max}")
        if abs(self.norm() - 1.0) > NORM_TOL * max(1, len(self.amplitudes)) ** 0.5:
            raise ValueError(f"state norm {self.norm():.15g} is not 1")

    @classmethod
    def basis(cls, w: Sequence[int], w_max: int = W_MAX_DEFAULT) -> "TopoState":
        w = tuple(int(x) for x in w)
        return cls({w: 1.0 + 0j}, len(w), w_max)

    @classmethod
    def superposition(cls, amplitudes: Mapping[Sequence[int], complex],
                      w_max: int = W_MAX_DEFAULT) -> "TopoState":
        """Normalized state from unnormalized amplitudes; zero entries are dropped."""
        amps = {tuple(int(x) for x in w): complex(a) for w, a in amplitudes.items() if a != 0}
        if not amps:
            raise ValueError("empty superposition")
        norm = math.sqrt(sum(abs(a) ** 2 for a in amps.values()))
        n = len(next(iter(amps)))
        return cls({w: a / norm for w, a in amps.items()}, n, w_max)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def amplitude(self, w: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(w), 0j)

    def overlap(self, other: "TopoState") -> complex:
        return sum(a.conjugate() * other.amplitude(w) for w, a in self.amplitudes.items())

    def fidelity(self, other: "TopoState") -> float:
        return abs(self.overlap(other)) ** 2

    def total_winding(self) -> dict[int, float]:
        """Probability of each total winding sum(w)."""
        out: dict[int, float] = {}
        for w, a in self.amplitudes.items():
            out[sum(w)] = out.get(sum(w), 0.0) + abs(a) ** 2
        return out


@dataclass(frozen=True)
class GaugeFieldSample:
    """Gauge potential on lattice edges.

    ``a_x[i, j]`` lives on the x-edge from node (i, j) to (i+1, j) and
    ``a_phi[i, j]`` on the phi-edge from node (i, j) to (i, j+1).
    """

    a_x: np.ndarray
    a_phi: np.ndarray
    cell_size: float = 1.0

    @classmethod
    def uniform_phi(cls, lattice: CylinderLattice, circulation: float) -> "GaugeFieldSample":
        """Constant A_phi whose integral around the circumference is ``circulation``."""
        nx, ny = lattice.shape
        a = circulation / (ny * lattice.cell_size)
        return cls(np.zeros((nx, ny)), np.full((nx + 1, ny), a), lattice.cell_size)


def line_integral(loop: Loop, gauge: GaugeFieldSample) -> float:
    ny = gauge.a_phi.shape[1]
    if not loop.is_closed(ny):
        raise ValueError("holonomy needs a closed loop")
    total = 0.0
    for (x, y), (dx, dy) in zip(loop.nodes, loop.steps):
        if dx == 1:
            total += gauge.a_x[x, y]
        elif dx == -1:
            total -= gauge.a_x[x - 1, y]
        elif dy == 1:
            total += gauge.a_phi[x, y]
        else:
            total -= gauge.a_phi[x, (y - 1) % ny]
    return total * gauge.cell_size


def holonomy(loop: Loop, gauge: GaugeFieldSample) -> complex:
    """exp(i * circulation of A around the loop)."""
    return cmath.exp(1j * line_integral(loop, gauge))


def phase_holonomy(circulation: float) -> complex:
    return cmath.exp(1j * circulation)


def _rebuild(state: TopoState, amps: dict) -> TopoState:
    return TopoState(amps, state.n_segments, state.w_max)


def apply_winding(state: TopoState, segment: int, delta: int) -> TopoState:
    """Shift w[segment] by ``delta`` in every basis vector."""
    if not 0 <= segment < state.n_segments:
        raise IndexError(f"segment {segment} outside [0, {state.n_segments})")
    amps = {}
    for w, a in state.amplitudes.items():
        shifted = w[segment] + delta
        if abs(shifted) > state.w_max:
            raise WindingCutoffError(
                f"winding {w} shifted by {delta} on segment {segment} exceeds w_max={state.w_max}")
        amps[w[:segment] + (shifted,) + w[segment + 1:]] = a
    return _rebuild(state, amps)


def winding_segment(puncture_index: int) -> int:
    """Segment that receives the loop quantum carried through a puncture (its +x side)."""
    return puncture_index + 1


def parity(state: TopoState) -> TopoState:
    return _rebuild(state, {tuple(-x for x in w): a for w, a in state.amplitudes.items()})


def is_odd(w: Winding, mode: str = "total") -> bool:
    if mode == "total":
        return sum(w) % 2 == 1
    if mode == "per_segment":
        return all(x % 2 == 1 for x in w)
    raise ValueError(f"mode must be 'total' or 'per_segment', got {mode!r}")


class ChannelProjection(NamedTuple):
    state: TopoState | None
    weight: float


def project_odd_channel(state: TopoState, mode: str = "total") -> ChannelProjection:
    """Project onto odd windings; ``state`` is None when nothing survives."""
    kept = {w: a for w, a in state.amplitudes.items() if is_odd(w, mode)}
    weight = sum(abs(a) ** 2 for a in kept.values())
    if weight == 0.0:
        return ChannelProjection(None, 0.0)
    norm = math.sqrt(weight)
    return ChannelProjection(_rebuild(state, {w: a / norm for w, a in kept.items()}), weight)


# ----------------------------------------------------------------------------
# parity-invariant dephasing


def abs_features(w: Winding) -> np.ndarray:
    """Default noise coupling: |w_i| on each segment."""
    return np.abs(np.asarray(w, dtype=float))


def _feature_matrix(support: Sequence[Winding], features: Callable[[Winding], np.ndarray]
                    ) -> np.ndarray:
    F = np.array([features(w) for w in support], dtype=float)
    for w, row in zip(support, F):
        if not np.array_equal(row, np.asarray(features(tuple(-x for x in w)), dtype=float)):
            raise ValueError(f"noise features are not parity-even at w={w}")
    return F


def noise_phases(state: TopoState, strength: float, steps: int, seed: int,
                 features: Callable[[Winding], np.ndarray] = abs_features) -> np.ndarray:
    """Cumulative random phases, shape (steps + 1, len(support)).

    Each step draws one standard normal per feature channel; the phase of
    basis vector w grows by ``strength * xi . features(w)``. The draws do not
    depend on the state, so a given seed is one fixed noise realization.
    """
    if strength < 0:
        raise ValueError("strength must be >= 0")
    support = list(state.amplitudes)
    F = _feature_matrix(support, features)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((steps, F.shape[1]))
    increments = strength * (xi @ F.T)
    return np.vstack([np.zeros(len(support)), np.cumsum(increments, axis=0)])


def parity_even_noise(state: TopoState, strength: float, steps: int, seed: int,
                      features: Callable[[Winding], np.ndarray] = abs_features) -> TopoState:
    """Apply one seeded realization of diagonal, parity-even dephasing."""
    if strength == 0 or steps == 0:
        return state
    phases = noise_phases(state, strength, steps, seed, features)[-1]
    amps = {w: a * cmath.exp(-1j * p) for (w, a), p in zip(state.amplitudes.items(), phases)}
    return _rebuild(state, amps)


def fidelity_trace(state: TopoState, strength: float, steps: int, seed: int,
                   features: Callable[[Winding], np.ndarray] = abs_features) -> np.ndarray:
    """|<psi(0)|psi(n)>|^2 for n = 0..steps along one noise realization."""
    probs = np.array([abs(a) ** 2 for a in state.amplitudes.values()])
    phases = noise_phases(state, strength, steps, seed, features)
    return np.abs(np.exp(-1j * phases) @ probs) ** 2


def averaged_coherence(state: TopoState, w_a: Winding, w_b: Winding, strength: float,
                       steps: int, seeds: Iterable[int],
                       features: Callable[[Winding], np.ndarray] = abs_features) -> complex:
    """Noise-averaged density-matrix element rho[w_a, w_b] after ``steps``."""
    total, count = 0j, 0
    for seed in seeds:
        final = parity_even_noise(state, strength, steps, seed, features)
        total += final.amplitudes[tuple(w_a)] * final.amplitudes[tuple(w_b)].conjugate()
        count += 1
    return total / count


def protected_qubit(w: Sequence[int], alpha: complex = 1 / math.sqrt(2),
                    beta: complex = 1 / math.sqrt(2), w_max: int = W_MAX_DEFAULT) -> TopoState:
    """Qubit on the parity pair {w, -w}; protected when sum(w) is odd."""
    w = tuple(int(x) for x in w)
    neg = tuple(-x for x in w)
    if w == neg:
        raise ValueError("w = 0 has no distinct parity partner")
    return TopoState.superposition({w: alpha, neg: beta}, w_max)


def channel_experiment(protected: TopoState, control: TopoState, strength: float, steps: int,
                       seed: int) -> dict[str, np.ndarray]:
    """Fidelity traces of a protected and a control encoding under one realization each."""
    return {
        "step": np.arange(steps + 1),
        "fidelity_protected": fidelity_trace(protected, strength, steps, seed),
        "fidelity_control": fidelity_trace(control, strength, steps, seed),
    }
