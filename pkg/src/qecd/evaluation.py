"""Logical-error-per-round estimation, the real-time evaluation protocol, and
threshold crossover analysis.

Fidelity after n cycles is F = 2*accuracy - 1; its decay follows
log F(n) = log F0 + n log(1 - 2*eps), so eps (the logical error per round)
comes out of a linear regression on log-fidelities. The real-time protocol
evaluates a decoder over four blocks of 2d+1 cycles with decoder-induced
noise injected at every block boundary, and fits eps across the four
block-end fidelities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuits import build_memory_circuit
from .errors import CheckpointError, FitError, ParameterError
from .layout import build_layout
from .model import Decoder
from .noise import (DecoderNoiseSpec, NoiseParams, annotate_si1000,
                    decoder_noise_strength, inject_decoder_noise, injection_rounds)
from .rng import derive_rng
from .sampler import SyndromeBatch, sample_shots


def fidelity(predictions: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """F = 2*accuracy - 1 at the given decision threshold."""
    if len(predictions) == 0:
        raise ParameterError("fidelity of an empty prediction set")
    acc = float(((predictions > threshold).astype(np.uint8) == labels.astype(np.uint8)).mean())
    return 2.0 * acc - 1.0


@dataclass
class LerFit:
    epsilon: float
    f0: float
    cycles: List[int]
    fidelities: List[float]
    shots_per_point: List[int]
    residuals: List[float]
    epsilon_ci: Tuple[float, float]
    dropped_points: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "epsilon": self.epsilon, "f0": self.f0, "cycles": self.cycles,
            "fidelities": self.fidelities, "shots_per_point": self.shots_per_point,
            "residuals": self.residuals, "epsilon_ci": list(self.epsilon_ci),
            "dropped_points": self.dropped_points,
        }


def fit_ler(cycles: Sequence[int], fidelities: Sequence[float],
            shots: Optional[Sequence[int]] = None) -> LerFit:
    """Least squares on log F = log F0 + n log(1-2*eps).

    Points with F <= 0 are dropped (logarithm undefined) with a record in
    `dropped_points`; at least two usable points must remain.
    """
    cycles = list(cycles)
    fidelities = list(fidelities)
    if shots is None:
        shots = [0] * len(cycles)
    dropped = [i for i, f in enumerate(fidelities) if f <= 0.0]
    keep = [i for i in range(len(cycles)) if i not in dropped]
    if len(keep) < 2:
        raise FitError(f"only {len(keep)} usable fidelity points (need >= 2); "
                       f"dropped {len(dropped)} non-positive values")
    n = np.array([cycles[i] for i in keep], dtype=np.float64)
    logf = np.log(np.array([fidelities[i] for i in keep], dtype=np.float64))
    a = np.vstack([np.ones_like(n), n]).T
    coef, *_ = np.linalg.lstsq(a, logf, rcond=None)
    intercept, slope = coef
    resid = logf - a @ coef
    # slope = log(1 - 2 eps) -> eps = (1 - exp(slope)) / 2, clamped to [0, 0.5]
    eps = float(np.clip((1.0 - math.exp(slope)) / 2.0, 0.0, 0.5))
    # standard error of the slope -> 95% CI, transformed monotonically
    dof = len(keep) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        sxx = float(((n - n.mean()) ** 2).sum())
        se = math.sqrt(s2 / sxx) if sxx > 0 else 0.0
    else:
        se = 0.0
    lo_slope, hi_slope = slope - 1.96 * se, slope + 1.96 * se
    ci = (float(np.clip((1.0 - math.exp(hi_slope)) / 2.0, 0.0, 0.5)),
          float(np.clip((1.0 - math.exp(lo_slope)) / 2.0, 0.0, 0.5)))
    return LerFit(epsilon=eps, f0=float(math.exp(intercept)),
                  cycles=[cycles[i] for i in keep],
                  fidelities=[fidelities[i] for i in keep],
                  shots_per_point=[shots[i] for i in keep],
                  residuals=[float(r) for r in resid],
                  epsilon_ci=ci, dropped_points=dropped)


def error_bars(successes: int, shots: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson 95% interval for a binomial proportion."""
    if shots <= 0:
        raise ParameterError(f"shots must be positive, got {shots}")
    if not 0 <= successes <= shots:
        raise ParameterError(f"successes {successes} outside [0, {shots}]")
    phat = successes / shots
    denom = 1.0 + z * z / shots
    center = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# real-time evaluation protocol
# ---------------------------------------------------------------------------

@dataclass
class RealtimeResult:
    ler: LerFit
    d: int
    p: float
    p_dec: float
    block: int                       # 2d+1
    total_cycles: int                # 8d+4
    injections: List[int]            # 1-based cycle numbers, longest horizon
    fidelity_series: List[Tuple[int, float, Tuple[float, float]]]  # (cycles, F, acc CI)
    shots: int

    def to_dict(self) -> Dict:
        return {
            "ler": self.ler.to_dict(), "d": self.d, "p": self.p,
            "p_dec": self.p_dec, "block": self.block,
            "total_cycles": self.total_cycles, "injections": self.injections,
            "fidelity_series": [[c, f, list(ci)] for c, f, ci in self.fidelity_series],
            "shots": self.shots,
        }


def realtime_batches(d: int, basis: str, p: float, p_dec: float, shots: int,
                     seed: int) -> Tuple[List[SyndromeBatch], List[int]]:
    """Sample the four prefix experiments of the 8d+4 protocol.

    Horizon k (k = 1..4) is a k*(2d+1)-cycle memory experiment with decoder
    noise injected at every multiple of 2d+1 up to and including its end.
    Returns the batches and the injection log of the longest horizon.
    """
    layout = build_layout(d)
    block = 2 * d + 1
    noise = NoiseParams(p)
    batches = []
    injections: List[int] = []
    for k in range(1, 5):
        cycles = k * block
        circ = build_memory_circuit(layout, basis, cycles)
        noisy = annotate_si1000(circ, noise)
        injected = inject_decoder_noise(noisy, p_dec, period=block)
        schedule = [(r, p_dec) for r in injection_rounds(injected)]
        sub_seed = int(derive_rng(seed, "realtime", k).integers(2 ** 62))
        batch = sample_shots(injected, shots, seed=sub_seed, p=p, p_dec_schedule=schedule)
        batches.append(batch)
        if k == 4:
            injections = injection_rounds(injected)
    return batches, injections


def realtime_eval(decoder: Decoder, meta: Dict, p: float, shots: int, seed: int,
                  spec: Optional[DecoderNoiseSpec] = None,
                  p_dec_override: Optional[float] = None,
                  batch_size: int = 4096) -> RealtimeResult:
    """Run the 8d+4-cycle protocol: four 2d+1 blocks, decoder noise at every
    block boundary, fidelity at each block end, LER fit across the four points.
    """
    d = decoder.d
    if meta.get("d") != d:
        raise CheckpointError(f"checkpoint distance {meta.get('d')} does not match decoder d={d}")
    basis = meta.get("basis", "Z")
    if spec is None:
        exponent = 4 if meta.get("mixer") == "attention" else 2
        spec = DecoderNoiseSpec(exponent=exponent)
    p_dec = decoder_noise_strength(spec, d) if p_dec_override is None else p_dec_override
    block = 2 * d + 1
    batches, injections = realtime_batches(d, basis, p, p_dec, shots, seed)

    series = []
    cycles_list, fids, shots_list = [], [], []
    for batch in batches:
        preds = decoder.predict(batch.events, batch_size=batch_size)
        f = fidelity(preds, batch.labels)
        correct = int(((preds > 0.5).astype(np.uint8) == batch.labels).sum())
        ci = error_bars(correct, batch.shots)
        series.append((batch.n, f, ci))
        cycles_list.append(batch.n)
        fids.append(f)
        shots_list.append(batch.shots)
    ler = fit_ler(cycles_list, fids, shots_list)
    return RealtimeResult(ler=ler, d=d, p=p, p_dec=p_dec, block=block,
                          total_cycles=8 * d + 4, injections=injections,
                          fidelity_series=series, shots=shots)


# ---------------------------------------------------------------------------
# threshold crossover
# ---------------------------------------------------------------------------

@dataclass
class ThresholdResult:
    p_th: Optional[float]            # None when not bracketed
    bracketed: bool
    curves: Dict[int, List[Tuple[float, float, Tuple[float, float]]]]
    interpolation: str
    bracket_width: float             # log-p width of the crossing segment
    ci: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict:
        return {
            "p_th": self.p_th, "bracketed": self.bracketed,
            "curves": {str(d): [[p, l, list(ci)] for p, l, ci in series]
                       for d, series in self.curves.items()},
            "interpolation": self.interpolation,
            "bracket_width": self.bracket_width,
            "ci": list(self.ci) if self.ci else None,
        }


def _log_interp(p_grid: np.ndarray, ler: np.ndarray):
    lp = np.log(p_grid)
    ll = np.log(np.maximum(ler, 1e-300))

    def f(logp):
        return np.interp(logp, lp, ll)

    return f, lp


def _find_crossing(p3, l3, p5, l5) -> Tuple[Optional[float], float]:
    """Piecewise log-linear crossing of LER_d5(p) - LER_d3(p); None if no sign change."""
    f3, lp3 = _log_interp(np.asarray(p3, dtype=float), np.asarray(l3, dtype=float))
    f5, lp5 = _log_interp(np.asarray(p5, dtype=float), np.asarray(l5, dtype=float))
    lo = max(lp3.min(), lp5.min())
    hi = min(lp3.max(), lp5.max())
    if hi <= lo:
        return None, math.inf
    knots = np.unique(np.clip(np.concatenate([lp3, lp5]), lo, hi))
    diff = f5(knots) - f3(knots)
    for i in range(len(knots) - 1):
        d0, d1 = diff[i], diff[i + 1]
        if d0 == 0.0:
            return float(math.exp(knots[i])), 0.0
        if d0 * d1 < 0:
            t = d0 / (d0 - d1)
            logp = knots[i] + t * (knots[i + 1] - knots[i])
            return float(math.exp(logp)), float(knots[i + 1] - knots[i])
    if diff[-1] == 0.0:
        return float(math.exp(knots[-1])), 0.0
    return None, math.inf


def find_threshold(curves: Dict[int, List[Tuple[float, float]]],
                   shots: Optional[Dict[int, List[int]]] = None,
                   bootstrap: int = 200, seed: int = 0) -> ThresholdResult:
    """Crossover of the d=3 and d=5 LER(p) curves under log-linear interpolation.

    curves: {distance: [(p, ler), ...]}. When per-point shot counts are given,
    a shot-level binomial bootstrap yields a confidence interval. A missing
    sign change reports "not bracketed" instead of raising.
    """
    if len(curves) < 2:
        raise ParameterError(f"need >= 2 distances, got {sorted(curves)}")
    dists = sorted(curves)[:2]
    d_lo, d_hi = dists[0], dists[1]
    for d in dists:
        if len(curves[d]) < 2:
            raise ParameterError(f"distance {d} series has {len(curves[d])} points (need >= 2)")
        ps = [p for p, _ in curves[d]]
        if sorted(ps) != ps:
            raise ParameterError(f"distance {d} p grid must be sorted")

    p3 = [p for p, _ in curves[d_lo]]
    l3 = [l for _, l in curves[d_lo]]
    p5 = [p for p, _ in curves[d_hi]]
    l5 = [l for _, l in curves[d_hi]]
    p_th, width = _find_crossing(p3, l3, p5, l5)

    annotated: Dict[int, List[Tuple[float, float, Tuple[float, float]]]] = {}
    for d in sorted(curves):
        rows = []
        for i, (p, l) in enumerate(curves[d]):
            if shots and d in shots and shots[d][i] > 0:
                n = shots[d][i]
                rows.append((p, l, error_bars(int(round(l * n)), n)))
            else:
                rows.append((p, l, (l, l)))
        annotated[d] = rows

    ci = None
    if p_th is not None and shots and all(d in shots for d in dists) and bootstrap > 0:
        rng = derive_rng(seed, "threshold-bootstrap")
        samples = []
        for _ in range(bootstrap):
            def resample(d, ps, ls):
                out = []
                for i, l in enumerate(ls):
                    n = shots[d][i]
                    out.append(rng.binomial(n, min(max(l, 0.0), 1.0)) / n if n > 0 else l)
                return out
            r3 = resample(d_lo, p3, l3)
            r5 = resample(d_hi, p5, l5)
            try:
                pt, _ = _find_crossing(p3, [max(v, 1e-9) for v in r3],
                                       p5, [max(v, 1e-9) for v in r5])
            except (ValueError, FloatingPointError):
                pt = None
            if pt is not None:
                samples.append(pt)
        if samples:
            lo = float(np.percentile(samples, 2.5))
            hi = float(np.percentile(samples, 97.5))
            ci = (min(lo, p_th), max(hi, p_th))

    return ThresholdResult(p_th=p_th, bracketed=p_th is not None,
                           curves=annotated, interpolation="log-linear",
                           bracket_width=width, ci=ci)
