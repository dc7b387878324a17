"""Gate-level memory-experiment circuits with detectors and the logical observable.

Qubit numbering: data qubits 0 .. d^2-1 (row-major), then one ancilla per
stabilizer slot. Each extraction round is: ancilla reset, H on X-ancillas,
four CX layers in a hook-safe zigzag schedule, H on X-ancillas, ancilla
measurement. The experiment ends with a transversal data measurement in the
memory basis.

Detection events form an (n+1) x (d^2-1) array per shot:
  row 0      in-basis slots compare the first ancilla measurement against its
             deterministic ideal value; off-basis slots are defined as 0,
  rows 1..n-1  XOR of consecutive ancilla measurements, every slot,
  row n      in-basis slots compare the stabilizer parity reconstructed from
             the final data measurement against the last ancilla measurement;
             off-basis slots are 0.
Zero-valued slots are represented as empty detectors so the detector list
always has (n+1)*(d^2-1) entries in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .errors import ParameterError
from .layout import CodeLayout

# CX ordering over plaquette corners, chosen so no qubit is touched twice in
# one layer and hook errors run perpendicular to the logicals they threaten.
_X_ORDER = ("NW", "NE", "SW", "SE")
_Z_ORDER = ("NW", "SW", "NE", "SE")
_CORNER_OFFSET = {"NW": (-1, -1), "NE": (-1, 0), "SW": (0, -1), "SE": (0, 0)}


@dataclass(frozen=True)
class Op:
    """One circuit instruction.

    kind: R (reset |0>), H, CX, M (Z-basis measure), DEP1/DEP2 (depolarizing).
    qubits: targets; CX uses flattened (control, target) pairs.
    prob: channel strength for DEP1/DEP2, classical flip rate for M.
    """

    kind: str
    qubits: Tuple[int, ...]
    round: int
    moment: int
    prob: float = 0.0
    tag: str = ""


@dataclass
class StabilizerCircuit:
    distance: int
    basis: str
    cycles: int
    n_qubits: int
    data_qubits: Tuple[int, ...]
    ancilla_of: Dict[int, int]            # stabilizer slot -> ancilla qubit
    ops: List[Op]
    detectors: List[Tuple[int, ...]]      # measurement-index sets, row-major
    observable: Tuple[int, ...]           # measurement-index set of the logical
    n_measurements: int
    meas_qubit: List[int] = field(default_factory=list)  # measurement index -> qubit

    @property
    def n_slots(self) -> int:
        return self.distance * self.distance - 1

    def event_shape(self) -> Tuple[int, int]:
        return (self.cycles + 1, self.n_slots)


def build_memory_circuit(layout: CodeLayout, basis: str, cycles: int) -> StabilizerCircuit:
    """Noise-free memory experiment over `cycles` extraction rounds."""
    if basis not in ("X", "Z"):
        raise ParameterError(f"basis must be 'X' or 'Z', got {basis!r}")
    if cycles < 1:
        raise ParameterError(f"cycle count must be >= 1, got {cycles}")
    d = layout.distance
    n_data = layout.n_data
    n_slots = layout.n_stabilizers
    ancilla_of = {s.index: n_data + s.index for s in layout.stabilizers}
    x_ancillas = tuple(ancilla_of[s.index] for s in layout.stabilizers if s.kind == "X")

    ops: List[Op] = []
    moment = 0
    meas_qubit: List[int] = []
    ancilla_meas: Dict[Tuple[int, int], int] = {}   # (round, slot) -> measurement idx
    data_meas: Dict[int, int] = {}                  # data qubit -> measurement idx

    def emit(kind, qubits, rnd, prob=0.0, tag=""):
        ops.append(Op(kind=kind, qubits=tuple(qubits), round=rnd, moment=moment, prob=prob, tag=tag))

    def cx_layer(layer: int) -> Tuple[int, ...]:
        pairs: List[int] = []
        for s in layout.stabilizers:
            order = _X_ORDER if s.kind == "X" else _Z_ORDER
            dr, dc = _CORNER_OFFSET[order[layer]]
            r, c = s.cell[0] + dr, s.cell[1] + dc
            if not (0 <= r < d and 0 <= c < d):
                continue
            dq = layout.data_index(r, c)
            anc = ancilla_of[s.index]
            if s.kind == "X":
                pairs += [anc, dq]    # ancilla controls
            else:
                pairs += [dq, anc]    # data controls
        return tuple(pairs)

    for rnd in range(cycles):
        # reset: everything in round 0, ancillas only afterwards
        if rnd == 0:
            emit("R", range(n_data + n_slots), rnd)
        else:
            emit("R", sorted(ancilla_of.values()), rnd)
        moment += 1
        h_targets = list(x_ancillas)
        if rnd == 0 and basis == "X":
            h_targets = list(range(n_data)) + h_targets
        emit("H", h_targets, rnd)
        moment += 1
        for layer in range(4):
            emit("CX", cx_layer(layer), rnd)
            moment += 1
        emit("H", x_ancillas, rnd)
        moment += 1
        anc_qubits = [ancilla_of[s.index] for s in layout.stabilizers]
        emit("M", anc_qubits, rnd)
        for s in layout.stabilizers:
            ancilla_meas[(rnd, s.index)] = len(meas_qubit)
            meas_qubit.append(ancilla_of[s.index])
        moment += 1

    if basis == "X":
        emit("H", range(n_data), cycles)
        moment += 1
    emit("M", range(n_data), cycles)
    for q in range(n_data):
        data_meas[q] = len(meas_qubit)
        meas_qubit.append(q)
    moment += 1

    detectors: List[Tuple[int, ...]] = []
    for row in range(cycles + 1):
        for s in layout.stabilizers:
            in_basis = s.kind == basis
            if row == 0:
                det = (ancilla_meas[(0, s.index)],) if in_basis else ()
            elif row < cycles:
                det = (ancilla_meas[(row - 1, s.index)], ancilla_meas[(row, s.index)])
            else:
                if in_basis:
                    det = (ancilla_meas[(cycles - 1, s.index)],) + tuple(
                        data_meas[q] for q in s.data_qubits)
                else:
                    det = ()
            detectors.append(det)

    observable = tuple(data_meas[q] for q in layout.logical_support(basis))

    return StabilizerCircuit(
        distance=d, basis=basis, cycles=cycles,
        n_qubits=n_data + n_slots,
        data_qubits=tuple(range(n_data)),
        ancilla_of=ancilla_of,
        ops=ops, detectors=detectors, observable=observable,
        n_measurements=len(meas_qubit), meas_qubit=meas_qubit)


def circuit_stats(circuit: StabilizerCircuit) -> Dict[str, object]:
    """Exact counts for test assertions and benchmark sizing."""
    gate_counts: Dict[str, int] = {}
    for op in circuit.ops:
        if op.kind == "CX":
            gate_counts["CX"] = gate_counts.get("CX", 0) + len(op.qubits) // 2
        elif op.kind in ("R", "H", "M"):
            gate_counts[op.kind] = gate_counts.get(op.kind, 0) + len(op.qubits)
    return {
        "qubits": circuit.n_qubits,
        "gates": gate_counts,
        "measurements": circuit.n_measurements,
        "detectors": len(circuit.detectors),
    }


def dump_circuit(circuit: StabilizerCircuit) -> str:
    """Plain-text dump for golden-file tests: one op per line, then detectors."""
    lines = []
    for op in circuit.ops:
        body = f"{op.kind} {' '.join(str(q) for q in op.qubits)}"
        if op.prob:
            body = f"{op.kind}({op.prob:g}) {' '.join(str(q) for q in op.qubits)}"
        lines.append(f"ROUND {op.round} | {body}")
    for det in circuit.detectors:
        lines.append("DETECTOR " + " ".join(f"m{i}" for i in det))
    lines.append("OBSERVABLE " + " ".join(f"m{i}" for i in circuit.observable))
    return "\n".join(lines) + "\n"
