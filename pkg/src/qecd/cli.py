"""Command-line entry point.

Subcommands: gen, train, finetune, eval, threshold, bench. Every command
writes its outputs plus a manifest.json (resolved config, seed, digests)
under --out. Exit codes: 0 success, 2 usage/config error, 3 checkpoint
mismatch, 4 missing data, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CHECKPOINT = 3
EXIT_MISSING_DATA = 4
EXIT_NUMERIC = 5


def _apply_thread_env(threads):
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qecd",
                                 description="Surface-code neural-decoder laboratory")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("QECD_THREADS", "1")),
                    help="worker/BLAS thread cap (env QECD_THREADS)")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="sample a syndrome batch to a .synb file")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--basis", choices=["X", "Z"], default="Z")
    g.add_argument("--cycles", type=int, required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--shots", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--pdec-arch", choices=["mamba", "attention"],
                   help="inject decoder noise for this architecture every 2d+1 cycles")
    g.add_argument("--pdec-alpha", type=float, default=None)
    g.add_argument("--dem", action="store_true",
                   help="sample from the extracted detector error model instead of frames")
    g.add_argument("--no-idle-noise", action="store_true")
    g.add_argument("--csv", action="store_true", help="also export a CSV copy")

    t = sub.add_parser("train", help="train a decoder")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--out", required=True)
    t.add_argument("--resume", help="checkpoint to resume from")
    for flag, typ in [("--d", int), ("--p", float), ("--basis", str), ("--mixer", str),
                      ("--iterations", int), ("--batch-size", int), ("--lr-init", float),
                      ("--lr-min", float), ("--weight-decay", float), ("--seed", int),
                      ("--regime", str), ("--eval-every", int), ("--checkpoint-every", int),
                      ("--eval-shots", int), ("--d-model", int)]:
        t.add_argument(flag, type=typ, default=None)

    ft = sub.add_parser("finetune", help="fine-tune a checkpoint at a new error rate")
    ft.add_argument("--base", required=True)
    ft.add_argument("--p", type=float, required=True)
    ft.add_argument("--out", required=True)
    for flag, typ in [("--iterations", int), ("--batch-size", int), ("--lr-init", float),
                      ("--seed", int), ("--eval-every", int), ("--checkpoint-every", int)]:
        ft.add_argument(flag, type=typ, default=None)

    e = sub.add_parser("eval", help="evaluate a checkpoint (memory or realtime mode)")
    e.add_argument("--ckpt")
    e.add_argument("--mode", choices=["memory", "realtime"], default="memory")
    e.add_argument("--p", type=float, required=True)
    e.add_argument("--shots", type=int, default=20000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--cycles", help="comma list of cycle counts (memory mode)")
    e.add_argument("--d", type=int, default=3, help="distance for --baseline runs")
    e.add_argument("--pdec-override", type=float, default=None)
    e.add_argument("--baseline", choices=["constant"],
                   help="evaluate an ideal constant predictor instead of a checkpoint")
    e.add_argument("--emit-plot-data", action="store_true")

    th = sub.add_parser("threshold", help="locate the LER crossover of two distances")
    th.add_argument("--curves", required=True,
                    help="directory of d<d>.csv files with rows p,ler[,shots]")
    th.add_argument("--out", required=True)
    th.add_argument("--bootstrap", type=int, default=200)
    th.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="time isolated mixer blocks vs distance")
    b.add_argument("--kinds", default="mamba,attention")
    b.add_argument("--d-list", default="11,15,21,31,41")
    b.add_argument("--reps", type=int, default=30)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--d-model", type=int, default=256)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--self-test", action="store_true",
                   help="also verify the exponent fit on exact synthetic power laws")
    return ap


# ---------------------------------------------------------------------------
# command bodies (heavy imports stay inside so --threads lands first)
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .circuits import build_memory_circuit
    from .layout import build_layout
    from .manifest import write_manifest
    from .noise import (DecoderNoiseSpec, NoiseParams, annotate_si1000,
                        decoder_noise_strength, inject_decoder_noise, injection_rounds)
    from .sampler import SyndromeBatch, dem_sample, extract_dem, export_csv, sample_shots, save_batch

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layout = build_layout(args.d)
    circ = build_memory_circuit(layout, args.basis, args.cycles)
    noisy = annotate_si1000(circ, NoiseParams(args.p), idle_noise=not args.no_idle_noise)
    schedule = []
    if args.pdec_arch:
        spec = DecoderNoiseSpec(exponent=4 if args.pdec_arch == "attention" else 2,
                                **({"alpha": args.pdec_alpha} if args.pdec_alpha else {}))
        p_dec = decoder_noise_strength(spec, args.d)
        noisy = inject_decoder_noise(noisy, p_dec, period=2 * args.d + 1)
        schedule = [(r, p_dec) for r in injection_rounds(noisy)]

    if args.dem:
        mechanisms = extract_dem(noisy)
        events, labels = dem_sample(mechanisms, args.shots, args.seed,
                                    n_detectors=len(noisy.detectors),
                                    event_shape=noisy.event_shape())
        batch = SyndromeBatch(events=events, labels=labels, basis=args.basis,
                              d=args.d, n=args.cycles, p=args.p, seed=args.seed,
                              p_dec_schedule=schedule)
    else:
        batch = sample_shots(noisy, args.shots, args.seed, p=args.p,
                             p_dec_schedule=schedule)
    path = out / "batch.synb"
    save_batch(path, batch)
    outputs = [path]
    if args.csv:
        csv_path = out / "batch.csv"
        export_csv(csv_path, batch)
        outputs.append(csv_path)
    cfg = {k: getattr(args, k) for k in
           ("d", "basis", "cycles", "p", "shots", "dem", "pdec_arch", "pdec_alpha")}
    write_manifest(out, "gen", cfg, args.seed, outputs=outputs)
    print(f"wrote {path} ({batch.shots} shots)")
    return EXIT_OK


def _resolved_train_config(args):
    from .model import MixerKind
    from .training import TrainConfig

    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    cfg = TrainConfig.from_dict(base) if base else TrainConfig()
    override_map = {
        "d": "d", "p": "p", "basis": "basis", "iterations": "iterations",
        "batch_size": "batch_size", "lr_init": "lr_init", "lr_min": "lr_min",
        "weight_decay": "weight_decay", "seed": "seed", "regime": "regime",
        "eval_every": "eval_every", "checkpoint_every": "checkpoint_every",
        "eval_shots": "eval_shots",
    }
    for arg_name, field_name in override_map.items():
        val = getattr(args, arg_name, None)
        if val is not None:
            setattr(cfg, field_name, val)
    if getattr(args, "mixer", None) is not None:
        from .errors import ParameterError
        try:
            cfg.mixer = MixerKind(args.mixer)
        except ValueError:
            valid = ", ".join(k.value for k in MixerKind)
            raise ParameterError(f"unknown mixer {args.mixer!r}; valid kinds: {valid}")
        from dataclasses import replace
        cfg.hyperparams = replace(cfg.hyperparams, mixer=cfg.mixer)
    if getattr(args, "d_model", None) is not None:
        from dataclasses import replace
        cfg.hyperparams = replace(cfg.hyperparams, d_model=args.d_model)
    cfg.threads = args.threads
    if cfg.t_max is None:
        cfg.t_max = 128_000_000 / cfg.batch_size
    return cfg


def cmd_train(args) -> int:
    from .manifest import write_manifest
    from .training import train

    cfg = _resolved_train_config(args)
    cfg.validate()
    out = Path(args.out)
    result = train(cfg, out, resume_from=args.resume)
    write_manifest(out, "train", cfg.to_dict(), cfg.seed,
                   outputs=[result.checkpoint_path, result.metrics_path])
    print(f"trained {cfg.iterations} iterations; checkpoint at {result.checkpoint_path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    from .manifest import write_manifest
    from .training import finetune

    overrides = {k: getattr(args, k) for k in
                 ("iterations", "batch_size", "lr_init", "seed", "eval_every",
                  "checkpoint_every") if getattr(args, k, None) is not None}
    out = Path(args.out)
    result = finetune(args.base, args.p, out, **overrides)
    write_manifest(out, "finetune", {"base": args.base, "p": args.p, **overrides},
                   overrides.get("seed"), inputs=[args.base],
                   outputs=[result.checkpoint_path, result.metrics_path])
    print(f"fine-tuned at p={args.p}; checkpoint at {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import numpy as np

    from .circuits import build_memory_circuit
    from .evaluation import error_bars, fidelity, fit_ler, realtime_eval
    from .layout import build_layout
    from .manifest import write_manifest
    from .noise import NoiseParams, annotate_si1000
    from .sampler import sample_shots
    from .training import load_decoder

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    if args.baseline == "constant":
        decoder, meta, d = None, {}, args.d
        basis = "Z"
    else:
        if not args.ckpt:
            raise FileNotFoundError("--ckpt is required unless --baseline is given")
        decoder, meta = load_decoder(args.ckpt)
        d = meta["d"]
        basis = meta.get("basis", "Z")

    def predict(events):
        if decoder is None:
            return np.zeros(events.shape[0], dtype=np.float32)  # always "no flip"
        return decoder.predict(events)

    if args.mode == "realtime":
        if decoder is None:
            raise FileNotFoundError("realtime mode requires a checkpoint")
        res = realtime_eval(decoder, meta, p=args.p, shots=args.shots, seed=args.seed,
                            p_dec_override=args.pdec_override)
        payload = res.to_dict()
        for cyc in res.injections:
            print(f"injection at cycle {cyc} (p_dec={res.p_dec:.3e})")
        print(f"realtime LER = {res.ler.epsilon:.5f} over {res.total_cycles} cycles")
        result_path = out / "realtime_result.json"
        with open(result_path, "w") as f:
            json.dump(payload, f, indent=2)
        outputs.append(result_path)
        if args.emit_plot_data:
            series_path = out / "fidelity_vs_cycles.csv"
            with open(series_path, "w") as f:
                f.write("cycles,fidelity,acc_lo,acc_hi\n")
                for c, fid, ci in res.fidelity_series:
                    f.write(f"{c},{fid:.6f},{ci[0]:.6f},{ci[1]:.6f}\n")
            outputs.append(series_path)
    else:
        cycle_list = ([int(c) for c in args.cycles.split(",")] if args.cycles
                      else list(range(1, 2 * d + 2, 2)))
        layout = build_layout(d)
        rows = []
        for n in cycle_list:
            circ = annotate_si1000(build_memory_circuit(layout, basis, n), NoiseParams(args.p))
            from .rng import derive_rng
            sub_seed = int(derive_rng(args.seed, "memory-eval", n).integers(2 ** 62))
            batch = sample_shots(circ, args.shots, seed=sub_seed, p=args.p)
            preds = predict(batch.events)
            f_val = fidelity(preds, batch.labels)
            correct = int(((preds > 0.5).astype(np.uint8) == batch.labels).sum())
            rows.append((n, f_val, error_bars(correct, batch.shots)))
        fit = fit_ler([r[0] for r in rows], [r[1] for r in rows],
                      [args.shots] * len(rows))
        payload = {"mode": "memory", "d": d, "p": args.p, "ler": fit.to_dict(),
                   "fidelity_series": [[n, f, list(ci)] for n, f, ci in rows]}
        print(f"memory LER = {fit.epsilon:.5f} (F0 = {fit.f0:.4f})")
        result_path = out / "memory_result.json"
        with open(result_path, "w") as f:
            json.dump(payload, f, indent=2)
        outputs.append(result_path)
        if args.emit_plot_data:
            series_path = out / "fidelity_vs_cycles.csv"
            with open(series_path, "w") as f:
                f.write("cycles,fidelity,acc_lo,acc_hi\n")
                for n, fid, ci in rows:
                    f.write(f"{n},{fid:.6f},{ci[0]:.6f},{ci[1]:.6f}\n")
            outputs.append(series_path)

    write_manifest(out, f"eval-{args.mode}",
                   {"ckpt": args.ckpt, "mode": args.mode, "p": args.p,
                    "shots": args.shots, "baseline": args.baseline},
                   args.seed, inputs=[args.ckpt] if args.ckpt else None, outputs=outputs)
    return EXIT_OK


def cmd_threshold(args) -> int:
    from .evaluation import find_threshold
    from .manifest import write_manifest

    curves_dir = Path(args.curves)
    if not curves_dir.exists():
        raise FileNotFoundError(f"curves directory {curves_dir} does not exist")
    curves, shots = {}, {}
    for path in sorted(curves_dir.glob("d*.csv")):
        d = int(path.stem[1:])
        pts, counts = [], []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("p,"):
                    continue
                parts = line.split(",")
                pts.append((float(parts[0]), float(parts[1])))
                counts.append(int(parts[2]) if len(parts) > 2 else 0)
        curves[d] = pts
        shots[d] = counts
    if len(curves) < 2:
        raise FileNotFoundError(f"need >= 2 distance series in {curves_dir}, found {sorted(curves)}")

    res = find_threshold(curves, shots=shots if any(any(s) for s in shots.values()) else None,
                         bootstrap=args.bootstrap, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result_path = out / "threshold.json"
    with open(result_path, "w") as f:
        json.dump(res.to_dict(), f, indent=2)
    if res.bracketed:
        print(f"p_th = {res.p_th:.6f}" + (f" (95% CI {res.ci[0]:.6f}..{res.ci[1]:.6f})" if res.ci else ""))
    else:
        print("not bracketed: LER curves do not cross on the sampled grid")
    write_manifest(out, "threshold", {"curves": str(curves_dir), "bootstrap": args.bootstrap},
                   args.seed, outputs=[result_path])
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import (bench_block, fit_exponent_from_points, fit_scaling_exponent,
                        save_bench_csv, save_bench_json)
    from .manifest import write_manifest
    from .model import MixerKind

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.self_test:
        ds = [11, 15, 21, 31, 41]
        quartic = fit_exponent_from_points(ds, [1e-3 * d ** 4 for d in ds])
        quad = fit_exponent_from_points(ds, [1e-3 * d ** 2 for d in ds])
        print(f"self-test exponents: {quartic:.6f} (expect 4), {quad:.6f} (expect 2)")

    kinds = [MixerKind(k.strip()) for k in args.kinds.split(",") if k.strip()]
    d_list = [int(x) for x in args.d_list.split(",")]
    results = []
    for kind in kinds:
        res = bench_block(kind, d_list, d_model=args.d_model, reps=args.reps,
                          warmup=args.warmup, seed=args.seed, threads=args.threads)
        fit_scaling_exponent(res)
        results.append(res)
        print(f"{kind.value}: exponent {res.exponent:.3f} over d={d_list}")
    csv_path = out / "bench.csv"
    json_path = out / "bench.json"
    save_bench_csv(csv_path, results)
    save_bench_json(json_path, results)
    write_manifest(out, "bench", {"kinds": args.kinds, "d_list": args.d_list,
                                  "reps": args.reps, "d_model": args.d_model},
                   args.seed, outputs=[csv_path, json_path])
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_env(args.threads)

    from .errors import (CheckpointError, DataError, FitError, NumericError,
                         ParameterError, ReproducibilityError, ShapeError)

    handlers = {
        "gen": cmd_gen, "train": cmd_train, "finetune": cmd_finetune,
        "eval": cmd_eval, "threshold": cmd_threshold, "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (FileNotFoundError, DataError, FitError) as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_MISSING_DATA
    except (NumericError, ReproducibilityError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, ShapeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
