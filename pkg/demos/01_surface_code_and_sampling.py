"""Build a rotated surface code, attach SI1000 noise, and sample syndromes.

Walk-through of the simulation layer: geometry, the memory-experiment
circuit, detection events under circuit noise, and the detector error model.
"""

from qecd import (NoiseParams, annotate_si1000, build_layout, build_memory_circuit,
                  circuit_stats, detection_fraction, dem_sample, dump_circuit,
                  extract_dem, sample_shots)


def main():
    d = 3
    layout = build_layout(d)
    print(f"distance-{d} rotated surface code: {layout.n_data} data qubits, "
          f"{layout.n_stabilizers} stabilizers")
    for s in layout.stabilizers[:4]:
        print(f"  stabilizer {s.index}: {s.kind} plaquette at cell {s.cell}, "
              f"touches data qubits {s.data_qubits}")

    cycles = 2 * d + 1
    circuit = build_memory_circuit(layout, "Z", cycles)
    stats = circuit_stats(circuit)
    print(f"\n{cycles}-cycle Z-memory experiment: {stats['qubits']} qubits, "
          f"{stats['measurements']} measurements, {stats['detectors']} detectors")
    print("\nfirst lines of the circuit dump:")
    for line in dump_circuit(circuit).split("\n")[:6]:
        print(" ", line)

    # noiseless sanity: every detector silent, no logical flips
    clean = sample_shots(circuit, shots=2000, seed=1)
    print(f"\nnoiseless run: {clean.events.sum()} detection events, "
          f"{clean.labels.sum()} logical flips (both must be 0)")

    # SI1000 noise at p = 0.002: rates p/10, p, 2p, 5p
    p = 0.002
    noise = NoiseParams(p)
    print(f"\nSI1000(p={p}): 1q {noise.single_qubit:g}, 2q {noise.two_qubit:g}, "
          f"reset {noise.reset:g}, measurement flip {noise.measurement:g}")
    noisy = annotate_si1000(circuit, noise)
    batch = sample_shots(noisy, shots=20000, seed=2, p=p)
    print(f"detection fraction {detection_fraction(batch):.4f}, "
          f"logical flip rate {batch.labels.mean():.4f}")

    # the same statistics through an extracted detector error model
    mechanisms = extract_dem(noisy)
    events, labels = dem_sample(mechanisms, shots=20000, seed=3,
                                n_detectors=len(noisy.detectors),
                                event_shape=noisy.event_shape())
    print(f"DEM with {len(mechanisms)} mechanisms: detection fraction "
          f"{events.mean():.4f}, flip rate {labels.mean():.4f} (should match above)")


if __name__ == "__main__":
    main()
