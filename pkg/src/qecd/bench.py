"""Wall-clock scaling of isolated mixer blocks versus code distance.

The attention mixer pays quadratic cost in the stabilizer count l = d^2-1
(so ~d^4 overall); the selective-scan mixer is linear in l (~d^2). This
module times single-block forwards on the host CPU and fits the log-log
scaling exponent over the asymptotic (large-d) half of the range. Absolute
times are host-dependent; only the exponents are asserted.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .errors import DataError, ParameterError
from .model import Decoder, Hyperparams, MixerKind
from .rng import derive_rng


@dataclass
class BenchSample:
    d: int
    seq_len: int
    median_ms: float
    iqr_ms: float
    reps: int


@dataclass
class BenchResult:
    kind: MixerKind
    d_model: int
    samples: List[BenchSample]
    environment: Dict[str, object]
    exponent: Optional[float] = None
    exponent_ci: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value, "d_model": self.d_model,
            "samples": [vars(s) for s in self.samples],
            "environment": self.environment,
            "exponent": self.exponent,
            "exponent_ci": list(self.exponent_ci) if self.exponent_ci else None,
        }


def environment_descriptor(threads: int = 1) -> Dict[str, object]:
    return {
        "host": platform.node(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": threads,
    }


class _StandaloneMixer:
    """One mixer block on a synthetic slot sequence of length l (no grid ops)."""

    def __init__(self, kind: MixerKind, l: int, d_model: int, seed: int):
        hp_kwargs = dict(mixer=kind, d_model=d_model)
        self.hp = Hyperparams(**hp_kwargs)
        # reuse the decoder's parameter builder via a bound fake distance:
        # only core/layer0 mixer parameters are touched below.
        d_fake = 3
        self.dec = Decoder(self.hp, d_fake, seed=seed, zero_residual_outputs=False)
        self.l = l
        self.kind = kind

    def run(self, x: Tensor) -> Tensor:
        if self.kind == MixerKind.ATTENTION:
            return self.dec.attention_mixer(x, 0)
        return self.dec.mamba_mixer(x, 0)


def bench_block(kind: MixerKind, d_list: Sequence[int], d_model: int = 256,
                reps: int = 30, warmup: int = 10, seed: int = 0,
                threads: int = 1) -> BenchResult:
    """Median forward time of one isolated mixer block per code distance.

    The same seeded input data is used for every kind at a given d. The
    timer-resolution guard widens the effective batch if a median would
    land under 50 timer ticks.
    """
    if list(d_list) != sorted(d_list):
        raise ParameterError("d list must be sorted ascending")
    if reps < 1 or warmup < 0:
        raise ParameterError("reps must be >= 1 and warmup >= 0")
    tick = time.get_clock_info("perf_counter").resolution
    samples = []
    for d in d_list:
        l = d * d - 1
        mixer = _StandaloneMixer(kind, l, d_model, seed=seed)
        rng = derive_rng(seed, "bench-input", d)  # input independent of kind
        x = Tensor(rng.normal(size=(1, l, d_model)).astype(np.float32))
        batch = 1
        while True:
            times = []
            for i in range(warmup + reps):
                t0 = time.perf_counter()
                for _ in range(batch):
                    mixer.run(x)
                dt = time.perf_counter() - t0
                if i >= warmup:
                    times.append(dt / batch)
            med = float(np.median(times))
            if med >= 50 * tick:
                break
            if batch >= 1024:
                raise DataError(f"timer resolution insufficient at d={d}")
            batch *= 4
        q1, q3 = np.percentile(times, [25, 75])
        samples.append(BenchSample(d=d, seq_len=l, median_ms=med * 1e3,
                                   iqr_ms=float((q3 - q1) * 1e3), reps=reps))
    return BenchResult(kind=kind, d_model=d_model, samples=samples,
                       environment=environment_descriptor(threads))


def fit_scaling_exponent(result: BenchResult) -> BenchResult:
    """Least-squares slope of log(time) vs log(d) over the asymptotic window.

    The window keeps distances in the upper half of the d range, where
    projection costs (quadratic in d) no longer mask the mixer's own scaling.
    """
    ds = np.array([s.d for s in result.samples], dtype=float)
    ts = np.array([s.median_ms for s in result.samples], dtype=float)
    if len(ds) < 4 or ds.max() < 3 * ds.min():
        raise ParameterError("need >= 4 distances spanning a factor >= 3")
    if np.any(ts <= 0):
        raise DataError("non-positive timing data")
    cut = (ds.min() + ds.max()) / 2.0
    keep = ds >= cut
    if keep.sum() < 2:
        keep = np.argsort(ds) >= len(ds) - 2
    x = np.log(ds[keep])
    y = np.log(ts[keep])
    a = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    slope = float(coef[1])
    resid = y - a @ coef
    dof = max(len(x) - 2, 1)
    sxx = float(((x - x.mean()) ** 2).sum())
    se = float(np.sqrt((resid @ resid) / dof / sxx)) if sxx > 0 and len(x) > 2 else 0.0
    result.exponent = slope
    result.exponent_ci = (slope - 1.96 * se, slope + 1.96 * se)
    return result


def fit_exponent_from_points(ds: Sequence[float], times: Sequence[float]) -> float:
    """Self-test path: exact power laws must come back exactly."""
    fake = BenchResult(kind=MixerKind.MAMBA, d_model=1,
                       samples=[BenchSample(d=int(d), seq_len=int(d * d - 1),
                                            median_ms=float(t), iqr_ms=0.0, reps=1)
                                for d, t in zip(ds, times)],
                       environment=environment_descriptor())
    return fit_scaling_exponent(fake).exponent


def save_bench_csv(path, results: List[BenchResult]) -> None:
    with open(path, "w") as f:
        f.write("kind,d,l,median_ms,iqr_ms,reps\n")
        for res in results:
            for s in res.samples:
                f.write(f"{res.kind.value},{s.d},{s.seq_len},{s.median_ms:.6f},"
                        f"{s.iqr_ms:.6f},{s.reps}\n")


def save_bench_json(path, results: List[BenchResult]) -> None:
    with open(path, "w") as f:
        json.dump([r.to_dict() for r in results], f, indent=2)
