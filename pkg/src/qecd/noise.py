"""SI1000 circuit noise and the latency-induced decoder noise channel.

SI1000(p) attaches depolarizing channels at fixed ratios to a clean circuit:
p/10 after single-qubit gates (and on idle qubits during gate layers),
p after each CX, 2p after each reset, and a 5p classical flip on every
measurement result plus p depolarizing on the measured qubit.

Decoder-induced noise models errors accumulating while a decoder of a given
computational complexity is busy: a depolarizing channel of strength
p_dec = alpha * d^k hits every data qubit at each correction boundary, with
k = 2 for the selective-scan decoder and k = 4 for the attention decoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

from .circuits import Op, StabilizerCircuit
from .errors import ParameterError

DEFAULT_DECODER_NOISE_ALPHA = 7.623e-6
DECODER_NOISE_TAG = "decoder_noise"


@dataclass(frozen=True)
class NoiseParams:
    """Base rate p and the fixed SI1000 ratios derived from it."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.2:
            raise ParameterError(f"base error rate must be in [0, 0.2], got {self.p}")

    @property
    def single_qubit(self) -> float:
        return self.p / 10.0

    @property
    def two_qubit(self) -> float:
        return self.p

    @property
    def reset(self) -> float:
        return 2.0 * self.p

    @property
    def measurement(self) -> float:
        return 5.0 * self.p


@dataclass(frozen=True)
class DecoderNoiseSpec:
    """p_dec = min(alpha * d^exponent, cap)."""

    alpha: float = DEFAULT_DECODER_NOISE_ALPHA
    exponent: int = 2           # 2: selective-scan decoder, 4: attention decoder
    cap: float = 1.0


def decoder_noise_strength(spec: DecoderNoiseSpec, d: int) -> float:
    """Depolarizing strength injected per correction boundary at distance d."""
    return min(spec.alpha * float(d) ** spec.exponent, spec.cap)


def annotate_si1000(circuit: StabilizerCircuit, noise: NoiseParams,
                    idle_noise: bool = True) -> StabilizerCircuit:
    """Return a copy of the circuit with SI1000(p) channels inserted.

    At p=0 no channels are inserted, so the result samples identically to the
    clean circuit.
    """
    p = noise.p
    if p == 0.0:
        return circuit
    new_ops: List[Op] = []
    # group clean ops by moment so idle noise can see the whole layer
    by_moment: dict[int, List[Op]] = {}
    for op in circuit.ops:
        by_moment.setdefault(op.moment, []).append(op)

    all_qubits = set(range(circuit.n_qubits))
    for moment in sorted(by_moment):
        layer = by_moment[moment]
        kinds = {op.kind for op in layer}
        busy: set[int] = set()
        for op in layer:
            busy.update(op.qubits)
        for op in layer:
            if op.kind == "M":
                new_ops.append(Op("M", op.qubits, op.round, op.moment,
                                  prob=noise.measurement, tag=op.tag))
                new_ops.append(Op("DEP1", op.qubits, op.round, op.moment,
                                  prob=noise.two_qubit))
            else:
                new_ops.append(op)
                if op.kind == "R":
                    new_ops.append(Op("DEP1", op.qubits, op.round, op.moment, prob=noise.reset))
                elif op.kind == "H":
                    if op.qubits:
                        new_ops.append(Op("DEP1", op.qubits, op.round, op.moment,
                                          prob=noise.single_qubit))
                elif op.kind == "CX":
                    new_ops.append(Op("DEP2", op.qubits, op.round, op.moment, prob=noise.two_qubit))
        if idle_noise and kinds & {"H", "CX"}:
            idle = sorted(all_qubits - busy)
            if idle:
                rnd = layer[0].round
                new_ops.append(Op("DEP1", tuple(idle), rnd, moment, prob=noise.single_qubit))

    noisy = StabilizerCircuit(
        distance=circuit.distance, basis=circuit.basis, cycles=circuit.cycles,
        n_qubits=circuit.n_qubits, data_qubits=circuit.data_qubits,
        ancilla_of=circuit.ancilla_of, ops=new_ops,
        detectors=circuit.detectors, observable=circuit.observable,
        n_measurements=circuit.n_measurements, meas_qubit=circuit.meas_qubit)
    return noisy


def inject_decoder_noise(circuit: StabilizerCircuit, p_dec: float,
                         period: int) -> StabilizerCircuit:
    """Insert a p_dec depolarizing hit on every data qubit after each `period` rounds.

    Injections land right after the ancilla measurement of rounds period,
    2*period, ... (and before the final data measurement when the circuit
    length is a multiple of the period). p_dec = 0 leaves sampling untouched.
    """
    if not 0.0 <= p_dec <= 1.0:
        raise ParameterError(f"p_dec must be in [0, 1], got {p_dec}")
    if period < 1:
        raise ParameterError(f"injection period must be >= 1, got {period}")
    boundaries = {k * period for k in range(1, circuit.cycles // period + 1)}
    new_ops: List[Op] = []
    for op in circuit.ops:
        new_ops.append(op)
        if op.kind == "M" and op.round + 1 in boundaries and set(op.qubits) != set(circuit.data_qubits):
            new_ops.append(Op("DEP1", circuit.data_qubits, op.round, op.moment,
                              prob=p_dec, tag=DECODER_NOISE_TAG))
    out = StabilizerCircuit(
        distance=circuit.distance, basis=circuit.basis, cycles=circuit.cycles,
        n_qubits=circuit.n_qubits, data_qubits=circuit.data_qubits,
        ancilla_of=circuit.ancilla_of, ops=new_ops,
        detectors=circuit.detectors, observable=circuit.observable,
        n_measurements=circuit.n_measurements, meas_qubit=circuit.meas_qubit)
    return out


def injection_rounds(circuit: StabilizerCircuit) -> List[int]:
    """1-based cycle numbers at which decoder noise is injected (instrumentation)."""
    return sorted({op.round + 1 for op in circuit.ops if op.tag == DECODER_NOISE_TAG})
