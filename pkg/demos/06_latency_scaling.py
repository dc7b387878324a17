"""Wall-clock scaling of the two mixer blocks versus code distance.

The attention block's cost grows ~d^4 (quadratic in the d^2-1 stabilizers);
the selective-scan block grows ~d^2. This reproduces that comparison on the
host CPU with a log-log exponent fit over the large-d half of the range.
Runs a few minutes at the default sizes; shrink --quick below for a sketch.
"""

import sys

from qecd import MixerKind, bench_block, fit_scaling_exponent
from qecd.bench import fit_exponent_from_points


def main(quick: bool = False):
    # self-test: exact synthetic power laws come back exactly
    ds_t = [11, 15, 21, 31, 41]
    print("fit self-test: d^4 ->",
          f"{fit_exponent_from_points(ds_t, [1e-6 * d ** 4 for d in ds_t]):.6f},",
          "d^2 ->",
          f"{fit_exponent_from_points(ds_t, [1e-3 * d ** 2 for d in ds_t]):.6f}")

    if quick:
        d_list, d_model, reps = [7, 11, 15, 21], 64, 8
    else:
        d_list, d_model, reps = [11, 15, 21, 31, 41], 256, 30

    for kind in (MixerKind.MAMBA, MixerKind.ATTENTION):
        res = fit_scaling_exponent(
            bench_block(kind, d_list, d_model=d_model, reps=reps, warmup=5, seed=0))
        print(f"\n{kind.value} mixer (d_model={d_model}):")
        for s in res.samples:
            print(f"  d={s.d:>2} (l={s.seq_len:>4}): median {s.median_ms:8.3f} ms "
                  f"(IQR {s.iqr_ms:.3f})")
        print(f"  fitted exponent over the upper half: {res.exponent:.2f}")


if __name__ == "__main__":
    main(quick="--quick" in sys.argv)
