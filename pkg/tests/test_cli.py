"""CLI surface: flags, exit codes, manifests, file outputs."""

import json

import pytest

from qecd.cli import main
from qecd.manifest import verify_manifest
from qecd.sampler import load_batch


def run(args):
    return main(args)


def test_gen_writes_batch_and_manifest(tmp_path):
    out = tmp_path / "g"
    code = run(["gen", "--d", "3", "--cycles", "7", "--p", "0.002",
                "--shots", "500", "--seed", "1", "--out", str(out)])
    assert code == 0
    batch = load_batch(out / "batch.synb")
    assert batch.d == 3 and batch.n == 7 and batch.p == 0.002
    assert batch.shots == 500
    manifest = verify_manifest(out)
    assert manifest["command"] == "gen"
    assert manifest["seed"] == 1


def test_gen_is_deterministic(tmp_path):
    args = ["gen", "--d", "3", "--cycles", "3", "--p", "0.004",
            "--shots", "200", "--seed", "9"]
    run(args + ["--out", str(tmp_path / "a")])
    run(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "batch.synb").read_bytes() == \
           (tmp_path / "b" / "batch.synb").read_bytes()


def test_gen_p0_all_zero_events(tmp_path):
    out = tmp_path / "z"
    run(["gen", "--d", "3", "--cycles", "3", "--p", "0", "--shots", "100",
         "--seed", "2", "--out", str(out)])
    batch = load_batch(out / "batch.synb")
    assert batch.events.sum() == 0 and batch.labels.sum() == 0


def test_gen_dem_mode(tmp_path):
    out = tmp_path / "dem"
    code = run(["gen", "--d", "3", "--cycles", "2", "--p", "0.01",
                "--shots", "300", "--seed", "3", "--dem", "--out", str(out)])
    assert code == 0
    batch = load_batch(out / "batch.synb")
    assert batch.events.sum() > 0


def test_gen_decoder_noise_schedule_recorded(tmp_path):
    out = tmp_path / "pdec"
    run(["gen", "--d", "3", "--cycles", "28", "--p", "0.002", "--shots", "50",
         "--seed", "4", "--pdec-arch", "attention", "--out", str(out)])
    batch = load_batch(out / "batch.synb")
    assert [c for c, _ in batch.p_dec_schedule] == [7, 14, 21, 28]
    assert all(abs(s - 7.623e-6 * 81) < 1e-9 for _, s in batch.p_dec_schedule)


def test_invalid_mixer_name_is_usage_error(tmp_path):
    code = run(["train", "--mixer", "transformer9000", "--iterations", "1",
                "--out", str(tmp_path)])
    assert code == 2


def test_train_smoke_and_resume(tmp_path):
    out = tmp_path / "t"
    cfg = {
        "d": 3, "p": 0.01, "mixer": "mamba", "batch_size": 4, "iterations": 6,
        "lr_init": 1e-3, "lr_min": 1e-4, "t_max": 6.0, "eval_every": 0,
        "checkpoint_every": 3, "metrics_every": 2, "eval_shots": 16, "seed": 5,
        "hyperparams": {
            "mixer": "mamba", "d_model": 8, "heads": 2, "d_b": 4, "d_attn": 4,
            "d_mid": 4, "d_state": 2, "d_conv": 2, "w_mamba": 1, "l_stab": 1,
            "l_read": 1, "d_read": 8, "w_gate": 2, "dilations": None,
            "layers_per_step": 3, "skip_scale": 0.7071, "combine": "add",
            "causal_conv": True,
        },
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code = run(["train", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    assert (out / "checkpoint.qecd").exists()
    assert (out / "metrics.csv").exists()
    verify_manifest(out)
    # resume continues cleanly
    code = run(["train", "--config", str(cfg_path), "--iterations", "8",
                "--out", str(out), "--resume", str(out / "checkpoint.qecd")])
    assert code == 0


def test_eval_checkpoint_distance_mismatch_exit_3(tmp_path):
    # a d=3 checkpoint evaluated as-is works; corrupt the metadata d to force
    # the mismatch path
    from qecd.checkpoint import load_checkpoint, save_checkpoint
    from qecd.model import Decoder, Hyperparams, MixerKind
    from qecd.evaluation import realtime_eval
    from qecd.errors import CheckpointError
    hp = Hyperparams(mixer=MixerKind.MAMBA, d_model=8, d_state=2, d_conv=2,
                     l_stab=1, l_read=1, d_read=8, w_gate=2)
    dec = Decoder(hp, 3, seed=0)
    with pytest.raises(CheckpointError):
        realtime_eval(dec, {"d": 5, "mixer": "mamba", "basis": "Z"},
                      p=0.002, shots=10, seed=0)


def test_eval_baseline_constant_on_noiseless_data(tmp_path):
    out = tmp_path / "ev"
    code = run(["eval", "--baseline", "constant", "--mode", "memory", "--p", "0",
                "--shots", "200", "--seed", "1", "--d", "3",
                "--cycles", "1,3,5", "--out", str(out), "--emit-plot-data"])
    assert code == 0
    payload = json.loads((out / "memory_result.json").read_text())
    fids = [row[1] for row in payload["fidelity_series"]]
    assert all(f == 1.0 for f in fids)
    assert payload["ler"]["epsilon"] == 0.0
    assert (out / "fidelity_vs_cycles.csv").exists()


def test_eval_missing_checkpoint_exit_4(tmp_path):
    code = run(["eval", "--ckpt", str(tmp_path / "absent.qecd"), "--p", "0.002",
                "--shots", "10", "--out", str(tmp_path / "o")])
    assert code == 4


def test_eval_corrupt_checkpoint_exit_3(tmp_path):
    bad = tmp_path / "bad.qecd"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    code = run(["eval", "--ckpt", str(bad), "--p", "0.002",
                "--shots", "10", "--out", str(tmp_path / "o")])
    assert code == 3


def test_threshold_fixture_and_exit_codes(tmp_path):
    curves = tmp_path / "curves"
    curves.mkdir()
    ps = [0.004, 0.008, 0.012, 0.016]
    with open(curves / "d3.csv", "w") as f:
        f.write("p,ler,shots\n")
        for p in ps:
            f.write(f"{p},{p},100000\n")
    with open(curves / "d5.csv", "w") as f:
        f.write("p,ler,shots\n")
        for p in ps:
            f.write(f"{p},{p * p / 0.01},100000\n")
    out = tmp_path / "th"
    code = run(["threshold", "--curves", str(curves), "--out", str(out),
                "--bootstrap", "50"])
    assert code == 0
    payload = json.loads((out / "threshold.json").read_text())
    assert abs(payload["p_th"] - 0.01) < 1e-9
    assert payload["bracketed"]

    # single-distance input -> exit 4
    solo = tmp_path / "solo"
    solo.mkdir()
    (solo / "d3.csv").write_text("p,ler\n0.01,0.1\n0.02,0.2\n")
    assert run(["threshold", "--curves", str(solo), "--out", str(tmp_path / "x")]) == 4


def test_threshold_not_bracketed_is_success(tmp_path):
    curves = tmp_path / "curves"
    curves.mkdir()
    ps = [0.004, 0.008, 0.012]
    (curves / "d3.csv").write_text("\n".join(f"{p},{p}" for p in ps))
    (curves / "d5.csv").write_text("\n".join(f"{p},{2 * p}" for p in ps))
    out = tmp_path / "th"
    code = run(["threshold", "--curves", str(curves), "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "threshold.json").read_text())
    assert payload["p_th"] is None and not payload["bracketed"]


def test_bench_self_test_and_outputs(tmp_path):
    out = tmp_path / "b"
    code = run(["bench", "--kinds", "mamba", "--d-list", "5,7,9,15",
                "--reps", "3", "--warmup", "1", "--d-model", "16",
                "--self-test", "--out", str(out)])
    assert code == 0
    assert (out / "bench.csv").exists()
    payload = json.loads((out / "bench.json").read_text())
    assert payload[0]["environment"]["threads"] == 1
    verify_manifest(out)
