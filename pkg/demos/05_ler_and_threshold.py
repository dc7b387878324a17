"""Logical error per round and the threshold crossover machinery.

Fidelity decays as F(n) = F0 (1-2*eps)^n; regression on log F recovers eps.
The threshold is where the d=5 LER curve crosses above the d=3 curve.
"""

import numpy as np

from qecd import error_bars, find_threshold, fit_ler


def main():
    # exact recovery on clean synthetic decay
    eps_true, f0 = 0.012, 0.985
    cycles = list(range(1, 26, 2))
    fids = [f0 * (1 - 2 * eps_true) ** n for n in cycles]
    fit = fit_ler(cycles, fids)
    print(f"clean fit: eps = {fit.epsilon:.6f} (true {eps_true}), F0 = {fit.f0:.4f}")

    # with binomial measurement noise at 50k shots per point
    rng = np.random.default_rng(1)
    shots = 50000
    noisy = []
    for f in fids:
        acc = rng.binomial(shots, (1 + f) / 2) / shots
        noisy.append(2 * acc - 1)
    fit_n = fit_ler(cycles, noisy, [shots] * len(cycles))
    lo, hi = fit_n.epsilon_ci
    print(f"noisy fit: eps = {fit_n.epsilon:.6f}, 95% CI [{lo:.6f}, {hi:.6f}]")

    print("\nWilson 95% interval examples:")
    for k, n in ((0, 100), (50, 100), (9999, 10000)):
        print(f"  {k}/{n}: {error_bars(k, n)}")

    # threshold: synthetic curves LER3 = p, LER5 = p^2/0.01 cross at p = 0.01
    ps = [0.004, 0.008, 0.012, 0.016]
    curves = {3: [(p, p) for p in ps], 5: [(p, p * p / 0.01) for p in ps]}
    res = find_threshold(curves, shots={3: [100000] * 4, 5: [100000] * 4},
                         bootstrap=200, seed=2)
    print(f"\nsynthetic crossover: p_th = {res.p_th:.6f} "
          f"(CI {res.ci[0]:.6f}..{res.ci[1]:.6f})")

    # parallel curves never cross: reported, not raised
    flat = {3: [(p, p) for p in ps], 5: [(p, 2 * p) for p in ps]}
    res2 = find_threshold(flat)
    print(f"parallel curves: bracketed = {res2.bracketed} (p_th = {res2.p_th})")


if __name__ == "__main__":
    main()
