"""Rotated surface-code geometry.

Data qubits sit on a d x d grid; stabilizer plaquettes live on the dual
(d+1) x (d+1) grid of cells. Cell (gr, gc) touches the data qubits in rows
gr-1..gr and columns gc-1..gc. X-type plaquettes occupy odd-parity cells
(gr+gc odd) and terminate on the left/right boundaries; Z-type plaquettes
occupy even-parity cells and terminate on the top/bottom boundaries.
Consequently the logical Z operator is a column of data qubits and the
logical X operator is a row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Stabilizer:
    index: int
    kind: str                      # "X" or "Z"
    cell: Tuple[int, int]          # (gr, gc) on the (d+1) x (d+1) grid
    data_qubits: Tuple[int, ...]   # supported data-qubit indices


@dataclass(frozen=True)
class CodeLayout:
    distance: int
    data_qubits: Tuple[Tuple[int, int], ...]        # index -> (row, col)
    stabilizers: Tuple[Stabilizer, ...]             # slot order = grid row-major
    grid_positions: Dict[int, Tuple[int, int]]      # stabilizer index -> cell

    @property
    def n_data(self) -> int:
        return self.distance * self.distance

    @property
    def n_stabilizers(self) -> int:
        return len(self.stabilizers)

    @property
    def grid_size(self) -> int:
        return self.distance + 1

    def data_index(self, row: int, col: int) -> int:
        return row * self.distance + col

    def logical_support(self, basis: str) -> Tuple[int, ...]:
        """Data qubits of the logical operator: left column (Z) / top row (X)."""
        d = self.distance
        if basis == "Z":
            return tuple(self.data_index(r, 0) for r in range(d))
        if basis == "X":
            return tuple(self.data_index(0, c) for c in range(d))
        raise ParameterError(f"basis must be 'X' or 'Z', got {basis!r}")


def _cell_kind(gr: int, gc: int) -> str:
    return "X" if (gr + gc) % 2 == 1 else "Z"


def _cell_occupied(d: int, gr: int, gc: int) -> bool:
    interior_r = 1 <= gr <= d - 1
    interior_c = 1 <= gc <= d - 1
    if interior_r and interior_c:
        return True
    kind = _cell_kind(gr, gc)
    if gr == 0 and interior_c:
        return kind == "Z"
    if gr == d and interior_c:
        return kind == "Z"
    if gc == 0 and interior_r:
        return kind == "X"
    if gc == d and interior_r:
        return kind == "X"
    return False


def build_layout(d: int) -> CodeLayout:
    """Construct the distance-d rotated surface code (d odd, >= 3)."""
    if d < 3 or d % 2 == 0:
        raise ParameterError(f"code distance must be an odd integer >= 3, got {d}")
    data = tuple((r, c) for r in range(d) for c in range(d))
    stabilizers: List[Stabilizer] = []
    grid_positions: Dict[int, Tuple[int, int]] = {}
    for gr in range(d + 1):
        for gc in range(d + 1):
            if not _cell_occupied(d, gr, gc):
                continue
            support = tuple(r * d + c
                            for r in (gr - 1, gr) if 0 <= r < d
                            for c in (gc - 1, gc) if 0 <= c < d)
            idx = len(stabilizers)
            stabilizers.append(Stabilizer(index=idx, kind=_cell_kind(gr, gc),
                                          cell=(gr, gc), data_qubits=support))
            grid_positions[idx] = (gr, gc)
    return CodeLayout(distance=d, data_qubits=data,
                      stabilizers=tuple(stabilizers), grid_positions=grid_positions)


@dataclass(frozen=True)
class GridEmbedding:
    """Slot -> grid-cell map for reshaping stabilizer features onto the lattice."""

    size: int
    rows: np.ndarray          # [l] cell row per stabilizer slot
    cols: np.ndarray          # [l] cell col per slot
    occupied: np.ndarray      # [size, size] bool; False cells are padding

    @property
    def n_slots(self) -> int:
        return len(self.rows)


def grid_embed_map(layout: CodeLayout) -> GridEmbedding:
    """Map each stabilizer slot to its plaquette cell on the (d+1)^2 grid."""
    size = layout.grid_size
    rows = np.array([s.cell[0] for s in layout.stabilizers], dtype=np.intp)
    cols = np.array([s.cell[1] for s in layout.stabilizers], dtype=np.intp)
    occupied = np.zeros((size, size), dtype=bool)
    occupied[rows, cols] = True
    return GridEmbedding(size=size, rows=rows, cols=cols, occupied=occupied)
