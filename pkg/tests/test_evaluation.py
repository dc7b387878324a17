"""Fidelity regression, Wilson intervals, threshold crossover."""

import math

import numpy as np
import pytest

from qecd.errors import FitError, ParameterError
from qecd.evaluation import error_bars, fidelity, find_threshold, fit_ler


# ---------------------------------------------------------------------------
# fidelity
# ---------------------------------------------------------------------------

def test_fidelity_perfect_predictions():
    labels = np.array([0, 1, 1, 0], dtype=np.uint8)
    preds = np.array([0.1, 0.9, 0.8, 0.2])
    assert fidelity(preds, labels) == 1.0


def test_fidelity_all_wrong():
    labels = np.array([0, 1], dtype=np.uint8)
    preds = np.array([0.9, 0.1])
    assert fidelity(preds, labels) == -1.0


def test_fidelity_random_predictions_near_zero():
    rng = np.random.default_rng(0)
    n = 40000
    labels = rng.integers(0, 2, n).astype(np.uint8)
    preds = rng.random(n)
    f = fidelity(preds, labels)
    assert abs(f) < 3 * 2 / math.sqrt(n)  # F = 2a-1, sigma_F = 2*sigma_a


def test_fidelity_empty_rejected():
    with pytest.raises(ParameterError):
        fidelity(np.array([]), np.array([]))


# ---------------------------------------------------------------------------
# LER regression
# ---------------------------------------------------------------------------

def test_fit_ler_exact_recovery():
    eps, f0 = 0.01, 0.98
    cycles = list(range(1, 26, 2))
    fids = [f0 * (1 - 2 * eps) ** n for n in cycles]
    fit = fit_ler(cycles, fids)
    assert abs(fit.epsilon - eps) < 1e-9
    assert abs(fit.f0 - f0) < 1e-9
    assert max(abs(r) for r in fit.residuals) < 1e-9


def test_fit_ler_constant_unity_fidelity():
    fit = fit_ler([1, 5, 9], [1.0, 1.0, 1.0])
    assert fit.epsilon == 0.0
    assert abs(fit.f0 - 1.0) < 1e-12


def test_fit_ler_drops_nonpositive_points():
    fit = fit_ler([1, 3, 5, 7], [0.9, 0.5, -0.1, 0.2])
    assert fit.dropped_points == [2]
    assert len(fit.cycles) == 3


def test_fit_ler_too_few_points():
    with pytest.raises(FitError):
        fit_ler([1, 3], [0.5, -0.2])


def test_fit_ler_noisy_recovery_within_ci():
    # binomial noise at 50000 shots per point around eps = 0.03
    rng = np.random.default_rng(42)
    eps, f0, shots = 0.03, 0.99, 50000
    cycles = list(range(1, 26, 2))
    fids = []
    for n in cycles:
        f = f0 * (1 - 2 * eps) ** n
        acc = (1 + f) / 2
        acc_hat = rng.binomial(shots, acc) / shots
        fids.append(2 * acc_hat - 1)
    fit = fit_ler(cycles, fids, [shots] * len(cycles))
    lo, hi = fit.epsilon_ci
    assert lo <= eps <= hi
    assert abs(fit.epsilon - eps) < 0.005


# ---------------------------------------------------------------------------
# Wilson intervals
# ---------------------------------------------------------------------------

def test_wilson_zero_successes():
    lo, hi = error_bars(0, 100)
    assert lo == 0.0
    assert 0 < hi < 0.05


def test_wilson_symmetric_at_half():
    lo, hi = error_bars(50, 100)
    assert abs((0.5 - lo) - (hi - 0.5)) < 1e-12


def test_wilson_near_one():
    lo, hi = error_bars(9999, 10000)
    assert 0.998 < lo < hi <= 1.0


def test_wilson_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        error_bars(1, 0)
    with pytest.raises(ParameterError):
        error_bars(5, 4)


# ---------------------------------------------------------------------------
# threshold crossover
# ---------------------------------------------------------------------------

def _synthetic_curves(ps):
    # LER3(p) = p and LER5(p) = p^2/0.01 cross exactly at p = 0.01
    return {3: [(p, p) for p in ps], 5: [(p, p * p / 0.01) for p in ps]}


def test_threshold_exact_algebraic_crossing():
    ps = [0.004, 0.008, 0.012, 0.016]
    res = find_threshold(_synthetic_curves(ps))
    assert res.bracketed
    assert abs(res.p_th - 0.01) < 1e-12


def test_threshold_not_bracketed():
    ps = [0.004, 0.008, 0.012]
    curves = {3: [(p, p) for p in ps], 5: [(p, 2 * p) for p in ps]}  # parallel
    res = find_threshold(curves)
    assert not res.bracketed
    assert res.p_th is None


def test_threshold_bootstrap_ci_contains_estimate():
    ps = [0.004, 0.008, 0.012, 0.016]
    curves = _synthetic_curves(ps)
    shots = {3: [100000] * 4, 5: [100000] * 4}
    res = find_threshold(curves, shots=shots, bootstrap=100, seed=5)
    assert res.ci is not None
    assert res.ci[0] <= res.p_th <= res.ci[1]


def test_threshold_requires_two_distances():
    with pytest.raises(ParameterError):
        find_threshold({3: [(0.01, 0.1), (0.02, 0.2)]})


def test_threshold_grid_refinement_halves_bracket_width():
    # a curved pair so interpolation error is visible
    def l3(p):
        return p ** 1.1

    def l5(p):
        return p ** 2 / 0.01

    coarse = np.geomspace(0.004, 0.02, 5)
    fine = np.geomspace(0.004, 0.02, 9)  # doubled density
    r1 = find_threshold({3: [(p, l3(p)) for p in coarse], 5: [(p, l5(p)) for p in coarse]})
    r2 = find_threshold({3: [(p, l3(p)) for p in fine], 5: [(p, l5(p)) for p in fine]})
    assert r1.bracketed and r2.bracketed
    assert r2.bracket_width <= r1.bracket_width / 2 + 1e-12
