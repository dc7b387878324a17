"""Memory-circuit structure: counts, schedule safety, dump format."""

import pytest

from qecd.circuits import build_memory_circuit, circuit_stats, dump_circuit
from qecd.errors import ParameterError
from qecd.layout import build_layout


def test_d3_n1_measurement_count():
    circ = build_memory_circuit(build_layout(3), "Z", 1)
    assert circ.n_measurements == 17  # 8 ancilla + 9 data


def test_d3_n2_detector_count():
    circ = build_memory_circuit(build_layout(3), "Z", 2)
    assert len(circ.detectors) == 8 * 3


@pytest.mark.parametrize("d,qubits", [(3, 17), (5, 49)])
def test_qubit_counts(d, qubits):
    stats = circuit_stats(build_memory_circuit(build_layout(d), "Z", 1))
    assert stats["qubits"] == qubits


@pytest.mark.parametrize("d", [3, 5])
def test_cx_count_per_round_equals_stabilizer_weight_sum(d):
    layout = build_layout(d)
    weight_sum = sum(len(s.data_qubits) for s in layout.stabilizers)
    n = 3
    stats = circuit_stats(build_memory_circuit(layout, "Z", n))
    assert stats["gates"]["CX"] == weight_sum * n


@pytest.mark.parametrize("d", [3, 5, 7])
@pytest.mark.parametrize("basis", ["X", "Z"])
def test_no_qubit_used_twice_in_a_layer(d, basis):
    circ = build_memory_circuit(build_layout(d), basis, 2)
    by_moment = {}
    for op in circ.ops:
        by_moment.setdefault(op.moment, []).append(op)
    for ops in by_moment.values():
        seen = []
        for op in ops:
            seen.extend(op.qubits)
        assert len(seen) == len(set(seen))


def test_all_detector_and_observable_measurements_exist():
    circ = build_memory_circuit(build_layout(5), "X", 4)
    for det in circ.detectors:
        for m in det:
            assert 0 <= m < circ.n_measurements
    for m in circ.observable:
        assert 0 <= m < circ.n_measurements


def test_rejects_bad_cycles_and_basis():
    layout = build_layout(3)
    with pytest.raises(ParameterError):
        build_memory_circuit(layout, "Z", 0)
    with pytest.raises(ParameterError):
        build_memory_circuit(layout, "Y", 1)


def test_dump_format_is_stable():
    circ = build_memory_circuit(build_layout(3), "Z", 1)
    text = dump_circuit(circ)
    lines = text.strip().split("\n")
    assert lines[0].startswith("ROUND 0 | R ")
    assert any(line.startswith("ROUND 0 | CX ") for line in lines)
    assert sum(1 for line in lines if line.startswith("DETECTOR")) == 16
    assert lines[-1].startswith("OBSERVABLE ")


def test_dump_matches_golden_file():
    from pathlib import Path
    golden = Path(__file__).parent / "data" / "golden_d3_n1_z.txt"
    text = dump_circuit(build_memory_circuit(build_layout(3), "Z", 1))
    assert text == golden.read_text()
