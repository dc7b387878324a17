"""Independent reference implementations used only by the test suite.

Each oracle recomputes an operation by a different route than the library:
finite differences for gradients, direct summation for convolutions and
attention, an unrolled recurrence for the selective scan, and a scalar
Pauli-string propagator for circuit error tracking.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np


def finite_difference_grads(f, arrays: Sequence[np.ndarray], h: float = 1e-4) -> List[np.ndarray]:
    """Central differences of scalar-valued f w.r.t. each float64 input array."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def conv2d_dilated_direct(x: np.ndarray, kernels: np.ndarray, dilation: int) -> np.ndarray:
    """Direct-summation dilated 3x3 cross-correlation, zero padded, [C,H,W] in/out."""
    cin, hh, ww = x.shape
    cout = kernels.shape[0]
    y = np.zeros((cout, hh, ww), dtype=x.dtype)
    for o in range(cout):
        for i in range(hh):
            for j in range(ww):
                acc = 0.0
                for c in range(cin):
                    for a in range(3):
                        for b in range(3):
                            ii = i + (a - 1) * dilation
                            jj = j + (b - 1) * dilation
                            if 0 <= ii < hh and 0 <= jj < ww:
                                acc += x[c, ii, jj] * kernels[o, c, a, b]
                y[o, i, j] = acc
    return y


def attention_direct(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-head attention by explicit loops, [h, n, dh] arrays."""
    heads, n, dh = q.shape
    out = np.zeros_like(v)
    for h in range(heads):
        for i in range(n):
            scores = np.array([np.dot(q[h, i], k[h, j]) / np.sqrt(dh) for j in range(n)])
            scores -= scores.max()
            w = np.exp(scores)
            w /= w.sum()
            out[h, i] = sum(w[j] * v[h, j] for j in range(n))
    return out


def selective_scan_unrolled(u, delta, a_log, b_in, c_out, d_skip) -> np.ndarray:
    """y_t = sum_{s<=t} C_t (prod_{r=s+1..t} Abar_r) Bbar_s u_s + D u_t, explicitly."""
    bsz, ln, ch = u.shape
    nst = a_log.shape[1]
    a_mat = -np.exp(a_log)
    y = np.zeros_like(u)
    for b in range(bsz):
        for t in range(ln):
            acc = np.zeros((ch,), dtype=u.dtype)
            for s in range(t + 1):
                term = delta[b, s][:, None] * b_in[b, s][None, :] * u[b, s][:, None]
                for r in range(s + 1, t + 1):
                    term = term * np.exp(delta[b, r][:, None] * a_mat)
                acc += term @ c_out[b, t]
            y[b, t] = acc + d_skip * u[b, t]
    return y


# ---------------------------------------------------------------------------
# scalar Pauli-string propagation through a stabilizer circuit
# ---------------------------------------------------------------------------

_H_RULE = {"X": "Z", "Z": "X", "Y": "Y"}


def _pauli_to_bits(p: str) -> Tuple[int, int]:
    return {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[p]


def _bits_to_pauli(x: int, z: int) -> str:
    return {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}[(x, z)]


def _mul(p: str, q: str) -> str:
    ax, az = _pauli_to_bits(p)
    bx, bz = _pauli_to_bits(q)
    return _bits_to_pauli(ax ^ bx, az ^ bz)


def _cx_rule(pc: str, pt: str) -> Tuple[str, str]:
    """Conjugate a two-qubit Pauli through CX, phases dropped."""
    cx, cz = _pauli_to_bits(pc)
    tx, tz = _pauli_to_bits(pt)
    tx ^= cx
    cz ^= tz
    return _bits_to_pauli(cx, cz), _bits_to_pauli(tx, tz)


def propagate_errors(circuit, errors: List[Tuple[int, int, str]]) -> Tuple[np.ndarray, int]:
    """Track an injected Pauli error shot through the circuit, one shot.

    errors: (op position, qubit, pauli) applied after that op. Returns the
    flat detector-event vector and the observable flip, like the sampler.
    """
    state: Dict[int, str] = {}
    meas_flips: List[int] = []
    by_pos: Dict[int, List[Tuple[int, str]]] = {}
    for pos, qubit, pauli in errors:
        by_pos.setdefault(pos, []).append((qubit, pauli))

    def kill_identity(q):
        if state.get(q) == "I":
            del state[q]

    for pos, op in enumerate(circuit.ops):
        if op.kind == "R":
            for q in op.qubits:
                state.pop(q, None)
        elif op.kind == "H":
            for q in op.qubits:
                if q in state:
                    state[q] = _H_RULE[state[q]]
        elif op.kind == "CX":
            for c, t in zip(op.qubits[0::2], op.qubits[1::2]):
                pc, pt = state.get(c, "I"), state.get(t, "I")
                if pc != "I" or pt != "I":
                    npc, npt = _cx_rule(pc, pt)
                    state[c], state[t] = npc, npt
                    kill_identity(c)
                    kill_identity(t)
        elif op.kind == "M":
            for q in op.qubits:
                meas_flips.append(1 if state.get(q, "I") in ("X", "Y") else 0)
        elif op.kind in ("DEP1", "DEP2"):
            pass  # noiseless oracle run; injected errors come via `errors`
        elif op.kind == "ERR":
            for q in op.qubits:
                state[q] = _mul(state.get(q, "I"), op.tag)
                kill_identity(q)
        if pos in by_pos:
            for qubit, pauli in by_pos[pos]:
                state[qubit] = _mul(state.get(qubit, "I"), pauli)
                kill_identity(qubit)

    events = np.zeros(len(circuit.detectors), dtype=np.uint8)
    for j, det in enumerate(circuit.detectors):
        for m in det:
            events[j] ^= meas_flips[m]
    label = 0
    for m in circuit.observable:
        label ^= meas_flips[m]
    return events, label
