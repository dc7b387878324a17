"""Pauli-frame sampling of noisy stabilizer circuits.

Instead of state vectors, each shot carries an X-flip and a Z-flip bit per
qubit (the deviation from the noiseless reference run). Clifford gates
conjugate the frame, noise channels flip frame bits with their probabilities,
and a Z-basis measurement outcome deviates exactly when the qubit holds an
X (or Y) flip. Detector and observable values are XORs of recorded
measurement deviations, so a noiseless run is identically zero.

All randomness is drawn from one counter-based stream in circuit-op order,
only for channels with nonzero probability: a channel at rate 0 consumes
nothing, which keeps seeds comparable between annotated and clean circuits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuits import StabilizerCircuit
from .errors import ParameterError
from .rng import derive_rng


@dataclass
class SyndromeBatch:
    """Per-shot detection events and logical-flip labels plus provenance."""

    events: np.ndarray            # uint8 [shots, n+1, d^2-1]
    labels: np.ndarray            # uint8 [shots]
    basis: str
    d: int
    n: int
    p: float
    seed: int
    p_dec_schedule: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def shots(self) -> int:
        return self.events.shape[0]

    def __post_init__(self):
        s, rows, slots = self.events.shape
        if rows != self.n + 1 or slots != self.d * self.d - 1 or self.labels.shape != (s,):
            raise ParameterError(
                f"batch shape {self.events.shape}/{self.labels.shape} inconsistent "
                f"with metadata d={self.d}, n={self.n}")


def _apply_pauli(xf, zf, qubits: Sequence[int], pauli: str, rows=None):
    """Flip frame bits for a fixed Pauli on the given qubits (all or some shots)."""
    sel = slice(None) if rows is None else rows
    for q in qubits:
        if pauli in ("X", "Y"):
            xf[sel, q] ^= True
        if pauli in ("Z", "Y"):
            zf[sel, q] ^= True


def _run_frames(circuit: StabilizerCircuit, shots: int,
                rng: Optional[np.random.Generator],
                forced: Optional[Dict[int, List[Tuple[int, Sequence[int], str]]]] = None
                ) -> np.ndarray:
    """Propagate frames; returns measurement deviations uint8 [shots, M].

    `forced` maps op-list positions to (shot, qubits, pauli) errors applied
    deterministically after that op; noise draws happen only when rng is given.
    """
    nq = circuit.n_qubits
    xf = np.zeros((shots, nq), dtype=bool)
    zf = np.zeros((shots, nq), dtype=bool)
    meas = np.zeros((shots, circuit.n_measurements), dtype=np.uint8)
    cursor = 0
    for pos, op in enumerate(circuit.ops):
        kind = op.kind
        qs = op.qubits
        if kind == "R":
            xf[:, qs] = False
            zf[:, qs] = False
        elif kind == "H":
            if qs:
                tmp = xf[:, qs].copy()
                xf[:, qs] = zf[:, qs]
                zf[:, qs] = tmp
        elif kind == "CX":
            cs = qs[0::2]
            ts = qs[1::2]
            xf[:, ts] ^= xf[:, cs]
            zf[:, cs] ^= zf[:, ts]
        elif kind == "M":
            k = len(qs)
            outcome = xf[:, qs].astype(np.uint8)
            if op.prob > 0.0 and rng is not None:
                u = rng.random((shots, k))
                outcome ^= (u < op.prob).astype(np.uint8)
            meas[:, cursor:cursor + k] = outcome
            cursor += k
        elif kind == "DEP1":
            if op.prob > 0.0 and rng is not None:
                u = rng.random((shots, len(qs)))
                hit = u < op.prob
                # reuse the uniform: u | hit ~ U[0, prob), so u*3/prob picks X/Y/Z
                which = np.where(hit, u * (3.0 / op.prob), 0.0).astype(np.int64)
                xflip = hit & (which < 2)          # X or Y
                zflip = hit & (which > 0)          # Y or Z
                xf[:, qs] ^= xflip
                zf[:, qs] ^= zflip
        elif kind == "DEP2":
            if op.prob > 0.0 and rng is not None:
                cs = qs[0::2]
                ts = qs[1::2]
                u = rng.random((shots, len(cs)))
                hit = u < op.prob
                j = np.where(hit, u * (15.0 / op.prob), 0.0).astype(np.int64) + 1
                p1 = j >> 2
                p2 = j & 3
                xf[:, cs] ^= hit & ((p1 == 1) | (p1 == 2))
                zf[:, cs] ^= hit & (p1 >= 2)
                xf[:, ts] ^= hit & ((p2 == 1) | (p2 == 2))
                zf[:, ts] ^= hit & (p2 >= 2)
        elif kind == "ERR":
            _apply_pauli(xf, zf, qs, op.tag)
        else:
            raise ParameterError(f"unknown op kind {kind!r}")
        if forced and pos in forced:
            for shot, qubits, pauli in forced[pos]:
                _apply_pauli(xf, zf, qubits, pauli, rows=shot)
    return meas


def _events_from_meas(circuit: StabilizerCircuit, meas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    shots = meas.shape[0]
    rows, slots = circuit.event_shape()
    events = np.zeros((shots, rows * slots), dtype=np.uint8)
    for j, det in enumerate(circuit.detectors):
        for m in det:
            events[:, j] ^= meas[:, m]
    labels = np.zeros(shots, dtype=np.uint8)
    for m in circuit.observable:
        labels ^= meas[:, m]
    return events.reshape(shots, rows, slots), labels


def sample_shots(circuit: StabilizerCircuit, shots: int, seed: int,
                 p: float = 0.0,
                 p_dec_schedule: Optional[List[Tuple[int, float]]] = None) -> SyndromeBatch:
    """Sample detection events and labels; reproducible under (seed, shots)."""
    if shots < 1:
        raise ParameterError(f"shots must be >= 1, got {shots}")
    rng = derive_rng(seed, "frame-sampler")
    meas = _run_frames(circuit, shots, rng)
    events, labels = _events_from_meas(circuit, meas)
    return SyndromeBatch(events=events, labels=labels, basis=circuit.basis,
                         d=circuit.distance, n=circuit.cycles, p=p, seed=seed,
                         p_dec_schedule=list(p_dec_schedule or []))


def run_with_errors(circuit: StabilizerCircuit,
                    errors: List[Tuple[int, int, str]]) -> Tuple[np.ndarray, int]:
    """Deterministic single-shot run with (op_position, qubit, pauli) errors
    applied after the named ops. Returns (flat detector events, label)."""
    forced: Dict[int, List[Tuple[int, Sequence[int], str]]] = {}
    for pos, qubit, pauli in errors:
        forced.setdefault(pos, []).append((0, (qubit,), pauli))
    meas = _run_frames(circuit, 1, rng=None, forced=forced)
    events, labels = _events_from_meas(circuit, meas)
    return events.reshape(-1), int(labels[0])


def detection_fraction(batch: SyndromeBatch) -> float:
    """Mean of all event bits; a quick noise-level sanity metric."""
    if batch.events.size == 0:
        raise ParameterError("empty batch")
    return float(batch.events.mean())


# ---------------------------------------------------------------------------
# detector error model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: Tuple[int, ...]     # flat detector indices (row-major)
    flips_observable: bool


def extract_dem(circuit: StabilizerCircuit) -> List[ErrorMechanism]:
    """Enumerate every elementary component of every noise channel, propagate
    it alone through the circuit, and merge components with equal signatures.

    Mechanisms with identical (detectors, observable) signatures combine via
    p = p1(1-p2) + p2(1-p1), exact for independent XOR contributions.
    """
    components: List[Tuple[int, Tuple[int, ...], str, float]] = []  # (pos, qubits, pauli, prob)
    for pos, op in enumerate(circuit.ops):
        if op.prob <= 0.0:
            continue
        if op.kind == "DEP1":
            for q in op.qubits:
                for pauli in ("X", "Y", "Z"):
                    components.append((pos, (q,), pauli, op.prob / 3.0))
        elif op.kind == "DEP2":
            pairs = list(zip(op.qubits[0::2], op.qubits[1::2]))
            paulis = ("I", "X", "Y", "Z")
            for c, t in pairs:
                for j in range(1, 16):
                    p1, p2 = paulis[j >> 2], paulis[j & 3]
                    qubits = tuple(q for q, pp in ((c, p1), (t, p2)) if pp != "I")
                    pstr = "".join(pp for pp in (p1, p2) if pp != "I")
                    components.append((pos, qubits, pstr, op.prob / 15.0))
        elif op.kind == "M":
            # classical flip on the recorded outcome only
            for q in op.qubits:
                components.append((pos, (q,), "FLIP", op.prob))

    nshots = len(components)
    if nshots == 0:
        return []
    # one batched frame pass: shot i carries exactly component i
    nq = circuit.n_qubits
    xf = np.zeros((nshots, nq), dtype=bool)
    zf = np.zeros((nshots, nq), dtype=bool)
    meas = np.zeros((nshots, circuit.n_measurements), dtype=np.uint8)
    by_pos: Dict[int, List[int]] = {}
    for i, (pos, _, _, _) in enumerate(components):
        by_pos.setdefault(pos, []).append(i)
    cursor = 0
    for pos, op in enumerate(circuit.ops):
        qs = op.qubits
        if op.kind == "R":
            xf[:, qs] = False
            zf[:, qs] = False
        elif op.kind == "H":
            if qs:
                tmp = xf[:, qs].copy()
                xf[:, qs] = zf[:, qs]
                zf[:, qs] = tmp
        elif op.kind == "CX":
            cs, ts = qs[0::2], qs[1::2]
            xf[:, ts] ^= xf[:, cs]
            zf[:, cs] ^= zf[:, ts]
        elif op.kind == "M":
            k = len(qs)
            meas[:, cursor:cursor + k] = xf[:, qs]
            # classical flips of this op's components
            for i in by_pos.get(pos, ()):
                _, qubits, pauli, _ = components[i]
                if pauli == "FLIP":
                    col = cursor + qs.index(qubits[0])
                    meas[i, col] ^= 1
            cursor += k
        # depolarizing ops inject nothing globally; their components fire per shot
        if op.kind != "M":
            for i in by_pos.get(pos, ()):
                _, qubits, pauli, _ = components[i]
                if pauli == "FLIP":
                    continue
                for q, pp in zip(qubits, pauli):
                    if pp in ("X", "Y"):
                        xf[i, q] ^= True
                    if pp in ("Z", "Y"):
                        zf[i, q] ^= True

    events = np.zeros((nshots, len(circuit.detectors)), dtype=np.uint8)
    for j, det in enumerate(circuit.detectors):
        for m in det:
            events[:, j] ^= meas[:, m]
    labels = np.zeros(nshots, dtype=np.uint8)
    for m in circuit.observable:
        labels ^= meas[:, m]

    merged: Dict[Tuple[Tuple[int, ...], bool], float] = {}
    for i in range(nshots):
        dets = tuple(np.flatnonzero(events[i]).tolist())
        sig = (dets, bool(labels[i]))
        if not dets and not sig[1]:
            continue
        prob = components[i][3]
        if sig in merged:
            q = merged[sig]
            merged[sig] = q * (1 - prob) + prob * (1 - q)
        else:
            merged[sig] = prob
    return [ErrorMechanism(probability=p, detectors=dets, flips_observable=obs)
            for (dets, obs), p in sorted(merged.items())]


def dem_sample(mechanisms: Sequence[ErrorMechanism], shots: int, seed: int,
               n_detectors: int, event_shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Independent Bernoulli draw per mechanism; fired sets XOR into the shot."""
    rows, slots = event_shape
    if rows * slots != n_detectors:
        raise ParameterError(f"event shape {event_shape} does not cover {n_detectors} detectors")
    events = np.zeros((shots, n_detectors), dtype=np.uint8)
    labels = np.zeros(shots, dtype=np.uint8)
    rng = derive_rng(seed, "dem-sampler")
    for mech in mechanisms:
        if not 0.0 <= mech.probability <= 1.0:
            raise ParameterError(f"mechanism probability {mech.probability} outside [0, 1]")
        for det in mech.detectors:
            if det < 0 or det >= n_detectors:
                raise ParameterError(f"mechanism references nonexistent detector {det}")
        fired = rng.random(shots) < mech.probability
        for det in mech.detectors:
            events[fired, det] ^= 1
        if mech.flips_observable:
            labels[fired] ^= 1
    return events.reshape(shots, rows, slots), labels


# ---------------------------------------------------------------------------
# batch file format (.synb) and CSV export
# ---------------------------------------------------------------------------

_SYNB_VERSION = 1


def save_batch(path, batch: SyndromeBatch) -> None:
    """Header JSON line, then packed bits: events row-major, then labels."""
    header = {
        "format": "synb", "version": _SYNB_VERSION,
        "d": batch.d, "n": batch.n, "basis": batch.basis, "p": batch.p,
        "p_dec_schedule": [[int(c), float(s)] for c, s in batch.p_dec_schedule],
        "seed": batch.seed, "shots": batch.shots,
    }
    bits = np.concatenate([batch.events.reshape(-1), batch.labels.reshape(-1)])
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        f.write(np.packbits(bits).tobytes())


def load_batch(path) -> SyndromeBatch:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    if header.get("format") != "synb":
        raise ParameterError(f"{path} is not a .synb batch file")
    shots, d, n = header["shots"], header["d"], header["n"]
    slots = d * d - 1
    n_bits = shots * (n + 1) * slots + shots
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=n_bits)
    events = bits[:shots * (n + 1) * slots].reshape(shots, n + 1, slots)
    labels = bits[shots * (n + 1) * slots:]
    return SyndromeBatch(events=events.astype(np.uint8), labels=labels.astype(np.uint8),
                         basis=header["basis"], d=d, n=n, p=header["p"],
                         seed=header["seed"],
                         p_dec_schedule=[(int(c), float(s)) for c, s in header["p_dec_schedule"]])


def export_csv(path, batch: SyndromeBatch) -> None:
    """Human-readable dump for small batches: one row per shot."""
    rows, slots = batch.events.shape[1:]
    with open(path, "w") as f:
        cols = [f"e{r}_{s}" for r in range(rows) for s in range(slots)]
        f.write(",".join(["shot"] + cols + ["label"]) + "\n")
        for i in range(batch.shots):
            flat = batch.events[i].reshape(-1)
            f.write(",".join([str(i)] + [str(int(b)) for b in flat] + [str(int(batch.labels[i]))]) + "\n")
