"""Discretized membrane cylinder, punctures (ion channels) and chirality field.

The surface is an open cylinder unrolled to a strip: ``x`` runs along the axon
(``length_cells`` cells, non-periodic) and ``phi`` runs around it
(``circumference_cells`` cells, periodic). Cell ``(i, j)`` is the plaquette
whose lower-left vertex is node ``(i, j)``. Both leaflets share the same
cells and punctures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

OUTER, INNER = 0, 1
LEAFLETS = ("outer", "inner")

MIN_CELLS = 4
MAX_CELLS = 4096


class GeometryError(ValueError):
    """Invalid lattice or puncture configuration."""


@dataclass(frozen=True)
class Puncture:
    center: tuple[int, int]
    radius_cells: int = 1
    id: int = 0

    def footprint(self, circumference_cells: int) -> list[tuple[int, int]]:
        """Cells within ``radius_cells`` of the center (wrapped in phi)."""
        cx, cy = self.center
        r = self.radius_cells
        cells = []
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                if dx * dx + dy * dy <= r * r:
                    cells.append((cx + dx, (cy + dy) % circumference_cells))
        return cells

    @property
    def x_extent(self) -> tuple[int, int]:
        return self.center[0] - self.radius_cells, self.center[0] + self.radius_cells


@dataclass(frozen=True)
class Loop:
    """Closed edge path on the lattice nodes.

    ``nodes`` lists the visited vertices in order; the path closes back on
    ``nodes[0]``. ``steps`` holds the unit step ``(dx, dphi)`` taken from each
    node to the next.
    """

    kind: str
    nodes: tuple[tuple[int, int], ...]
    steps: tuple[tuple[int, int], ...]
    label: int = 0

    @property
    def edges(self) -> Iterator[tuple[tuple[int, int], tuple[int, int]]]:
        n = len(self.nodes)
        for k in range(n):
            yield self.nodes[k], self.nodes[(k + 1) % n]

    def is_closed(self, circumference_cells: int) -> bool:
        x, y = self.nodes[0]
        for (dx, dy), node in zip(self.steps, self.nodes):
            if node != (x, y % circumference_cells):
                return False
            x, y = x + dx, y + dy
        return (x, y % circumference_cells) == self.nodes[0]


@dataclass(frozen=True)
class SegmentLoops:
    """Alpha loops (one per annular segment, ordered in x) and beta loops
    (one per puncture, in puncture order)."""

    alpha: list[Loop]
    beta: list[Loop]


@dataclass(frozen=True, eq=False)
class CylinderLattice:
    length_cells: int
    circumference_cells: int
    cell_size: float
    punctures: tuple[Puncture, ...] = ()
    cell_labels: np.ndarray = field(repr=False, default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.length_cells, self.circumference_cells

    @property
    def n_cells(self) -> int:
        """Surface cells per leaflet."""
        return self.length_cells * self.circumference_cells

    @property
    def n_segments(self) -> int:
        return len(self.punctures) + 1

    @property
    def puncture_mask(self) -> np.ndarray:
        return self.cell_labels > 0

    def neighbors(self, i: int, j: int) -> list[tuple[int, int]]:
        """Edge-adjacent cells; wraps in phi, stops at the x ends."""
        nphi = self.circumference_cells
        out = [(i, (j - 1) % nphi), (i, (j + 1) % nphi)]
        if i > 0:
            out.append((i - 1, j))
        if i < self.length_cells - 1:
            out.append((i + 1, j))
        return out

    def summary(self) -> dict:
        return {
            "length_cells": self.length_cells,
            "circumference_cells": self.circumference_cells,
            "cell_size": self.cell_size,
            "cells_per_leaflet": self.n_cells,
            "leaflets": list(LEAFLETS),
            "n_segments": self.n_segments,
            "punctures": [
                {"id": p.id, "center": list(p.center), "radius_cells": p.radius_cells,
                 "footprint_cells": int(np.sum(self.cell_labels == k + 1))}
                for k, p in enumerate(self.punctures)
            ],
        }


def build_lattice(length_cells: int, circumference_cells: int, cell_size: float = 1.0,
                  punctures: Sequence[Puncture] = ()) -> CylinderLattice:
    """Build the punctured cylinder and classify each cell as bulk or puncture.

    Punctures are renumbered by increasing x-center. Each puncture needs a
    one-cell guard ring (carrying its beta loop) plus one clear node column
    before either x end, and consecutive punctures must leave a clear node
    column between their guard rings for the separating alpha loop.
    """
    for name, n in (("length_cells", length_cells), ("circumference_cells", circumference_cells)):
        if not isinstance(n, (int, np.integer)) or not MIN_CELLS <= n <= MAX_CELLS:
            raise GeometryError(f"{name} must be an integer in [{MIN_CELLS}, {MAX_CELLS}], got {n!r}")
    if not cell_size > 0 or not math.isfinite(cell_size):
        raise GeometryError(f"cell_size must be positive and finite, got {cell_size!r}")

    nx, nphi = int(length_cells), int(circumference_cells)
    ordered = sorted(punctures, key=lambda p: p.center[0])
    labels = np.zeros((nx, nphi), dtype=np.int32)
    owner: dict[tuple[int, int], Puncture] = {}

    for p in ordered:
        cx, cy = p.center
        r = p.radius_cells
        if r < 1:
            raise GeometryError(f"puncture {p.id}: radius_cells must be >= 1, got {r}")
        if not 0 <= cy < nphi:
            raise GeometryError(f"puncture {p.id}: phi index {cy} outside [0, {nphi})")
        if cx - r < 3 or cx + r > nx - 4:
            raise GeometryError(
                f"puncture {p.id} at x={cx} with radius {r} touches the longitudinal boundary")
        if 2 * r + 4 > nphi:
            raise GeometryError(f"puncture {p.id}: radius {r} too large for circumference {nphi}")
        for cell in p.footprint(nphi):
            if cell in owner:
                q = owner[cell]
                raise GeometryError(f"punctures {q.id} and {p.id} overlap at cell {cell}")
            owner[cell] = p

    for a, b in zip(ordered, ordered[1:]):
        if a.center[0] == b.center[0]:
            raise GeometryError(f"punctures {a.id} and {b.id} share x={a.center[0]}")
        if b.x_extent[0] - a.x_extent[1] < 5:
            raise GeometryError(
                f"punctures {a.id} and {b.id} leave no clear column for a separating loop")

    renumbered = tuple(Puncture(p.center, p.radius_cells, id=k) for k, p in enumerate(ordered))
    for k, p in enumerate(renumbered):
        for (i, j) in p.footprint(nphi):
            labels[i, j] = k + 1
    labels.setflags(write=False)
    return CylinderLattice(nx, nphi, float(cell_size), renumbered, labels)


def _alpha_loop(x: int, nphi: int, label: int) -> Loop:
    nodes = tuple((x, j) for j in range(nphi))
    return Loop("alpha", nodes, tuple((0, 1) for _ in range(nphi)), label)


def _beta_loop(p: Puncture, nphi: int) -> Loop:
    # counter-clockwise rectangle one cell outside the footprint's bounding box
    cx, cy = p.center
    r = p.radius_cells
    x0, x1 = cx - r - 1, cx + r + 2
    y0, y1 = cy - r - 1, cy + r + 2
    nodes, steps = [], []
    x, y = x0, y0
    for step, count in (((1, 0), x1 - x0), ((0, 1), y1 - y0), ((-1, 0), x1 - x0), ((0, -1), y1 - y0)):
        for _ in range(count):
            nodes.append((x, y % nphi))
            steps.append(step)
            x, y = x + step[0], y + step[1]
    return Loop("beta", tuple(nodes), tuple(steps), p.id)


def segment_loops(lattice: CylinderLattice) -> SegmentLoops:
    """One circumferential loop per annular segment plus one loop per puncture.

    Nodes are plaquette corners; node column ``x`` runs along the boundary
    between cell columns ``x - 1`` and ``x``. Alpha loops sit mid-way in the
    clear node columns of their segment.
    """
    nx, nphi = lattice.shape
    bounds = [0]
    for p in lattice.punctures:
        lo, hi = p.x_extent
        bounds.extend([lo - 1, hi + 2])  # node columns of the beta ring
    bounds.append(nx)
    alpha = []
    for k in range(lattice.n_segments):
        lo, hi = bounds[2 * k], bounds[2 * k + 1]
        alpha.append(_alpha_loop((lo + hi) // 2, nphi, k))
    beta = [_beta_loop(p, nphi) for p in lattice.punctures]
    return SegmentLoops(alpha, beta)


@dataclass(frozen=True)
class ChiralityField:
    """Chirality one-form of the membrane, constant within each leaflet.

    ``b_r_outer``/``b_r_inner`` are the radial components; ``thickness``
    converts them to the planar Chern-Simons coefficient of each leaflet.
    """

    b0: float = 0.0
    b_r_outer: float = 0.0
    b_r_inner: float = 0.0
    delta_mu: float = 0.0
    e2: float = 1.0
    hbar: float = 1.0
    winding_pitch_L: float = 1.0
    thickness: float = 1.0

    @classmethod
    def from_delta_mu(cls, delta_mu: float, b_r: float = 0.0, e2: float = 1.0, hbar: float = 1.0,
                      winding_pitch_L: float = 1.0, thickness: float = 1.0) -> "ChiralityField":
        """Leaflets tail to tail: the inner radial component mirrors the outer."""
        return cls(b0=b0_from_delta_mu(delta_mu, e2, hbar), b_r_outer=b_r, b_r_inner=-b_r,
                   delta_mu=delta_mu, e2=e2, hbar=hbar, winding_pitch_L=winding_pitch_L,
                   thickness=thickness)

    @classmethod
    def from_surface_coefficient(cls, mu: float, **kw) -> "ChiralityField":
        thickness = kw.pop("thickness", 1.0)
        return cls(b_r_outer=mu / thickness, b_r_inner=-mu / thickness, thickness=thickness, **kw)

    def surface_coefficient(self, leaflet: int) -> float:
        b_r = self.b_r_outer if leaflet == OUTER else self.b_r_inner
        return b_r * self.thickness

    @property
    def mu(self) -> tuple[float, float]:
        return self.surface_coefficient(OUTER), self.surface_coefficient(INNER)

    def gap_scale(self) -> float:
        """Order-of-magnitude gap 1/L from the helical pitch of the tails."""
        return 1.0 / self.winding_pitch_L


def b0_from_delta_mu(delta_mu: float, e2: float = 1.0, hbar: float = 1.0) -> float:
    """Timelike chirality component from the chiral chemical potential."""
    if hbar == 0:
        raise ValueError("hbar must be nonzero")
    return e2 * delta_mu / (4.0 * hbar)
