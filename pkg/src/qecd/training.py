"""Training engine: loss, schedules, EMA shadowing, the Lion loop, fine-tuning.

Training data is generated on the fly from the Pauli-frame sampler, one fresh
batch per iteration, with all randomness derived from (seed, purpose,
iteration) so an interrupted run resumes onto the exact same trajectory.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - present in normal installs
    def threadpool_limits(*args, **kwargs):
        import contextlib
        return contextlib.nullcontext()

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .circuits import build_memory_circuit
from .errors import CheckpointError, NumericError, ParameterError
from .layout import build_layout
from .model import Decoder, Hyperparams, MixerKind
from .noise import NoiseParams, annotate_si1000
from .optim import OptimizerState, clip_grad_norm, lion_step
from .rng import derive_rng
from .sampler import sample_shots

OPT_PREFIX = "opt/"
METRICS_HEADER = ["iter", "loss", "lr", "grad_norm", "eval_acc", "wall_ms"]
FULL_CYCLE_SET = tuple(range(1, 26, 2))


# ---------------------------------------------------------------------------
# loss and schedules
# ---------------------------------------------------------------------------

def loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy on probabilities, clamped for stability."""
    if probs.shape != labels.shape:
        raise ParameterError(f"probabilities shape {probs.shape} does not match "
                             f"labels shape {labels.shape}")
    p = np.clip(probs.astype(np.float64), 1e-12, 1.0 - 1e-12)
    y = labels.astype(np.float64)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def bce_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Differentiable BCE on pre-sigmoid logits: mean(softplus(z) - y*z)."""
    y = Tensor(labels.astype(logits.data.dtype))
    return ad.tmean(ad.add(ad.softplus(logits), ad.mul(ad.mul(logits, y), -1.0)))


def cosine_lr(iteration: int, lr_init: float, lr_min: float, t_max: float) -> float:
    """Cosine anneal from lr_init to lr_min over t_max iterations, flat after."""
    frac = min(float(iteration), t_max) / t_max
    return lr_min + (lr_init - lr_min) * (1.0 + math.cos(math.pi * frac)) / 2.0


def curriculum_cycles(iteration: int, initial: int = 5, stride: int = 150_000,
                      step: int = 4) -> Tuple[int, ...]:
    """Active cycle-count set: first `initial` odd values, `step` more per stage."""
    stage = iteration // stride
    count = min(initial + step * stage, len(FULL_CYCLE_SET))
    return FULL_CYCLE_SET[:count]


# ---------------------------------------------------------------------------
# EMA
# ---------------------------------------------------------------------------

@dataclass
class EmaWeights:
    """Shadow copy of every parameter, used for all evaluation."""

    shadow: Dict[str, np.ndarray]
    decay: float = 0.9999

    @classmethod
    def init(cls, params: Dict[str, np.ndarray], decay: float = 0.9999) -> "EmaWeights":
        return cls(shadow={k: v.copy() for k, v in params.items()}, decay=decay)


def ema_update(live: Dict[str, np.ndarray], ema: EmaWeights) -> EmaWeights:
    d = ema.decay
    for k, s in ema.shadow.items():
        s *= d
        s += (1.0 - d) * live[k]
    return ema


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    d: int = 3
    basis: str = "Z"
    p: float = 0.002
    mixer: MixerKind = MixerKind.MAMBA
    batch_size: int = 256
    iterations: int = 500_000
    lr_init: float = 5e-6
    lr_min: float = 1e-6
    t_max: Optional[float] = None          # defaults to 128e6 / batch_size
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.99
    clip_norm: float = 1.0
    ema_decay: float = 0.9999
    regime: str = "realtime"               # fixed 2d+1 cycles | "curriculum"
    curriculum_initial: int = 5
    curriculum_stride: int = 150_000
    curriculum_step: int = 4
    seed: int = 0
    metrics_every: int = 100
    eval_every: int = 5000
    checkpoint_every: int = 25_000
    eval_shots: int = 2048
    threads: int = 1
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.t_max is None:
            self.t_max = 128_000_000 / self.batch_size
        if isinstance(self.mixer, str):
            self.mixer = MixerKind(self.mixer)
        if self.hyperparams.mixer != self.mixer:
            self.hyperparams = replace(self.hyperparams, mixer=self.mixer)

    def validate(self) -> None:
        problems = []
        if self.d < 3 or self.d % 2 == 0:
            problems.append(f"d must be an odd integer >= 3, got {self.d}")
        if self.basis not in ("X", "Z"):
            problems.append(f"basis must be X or Z, got {self.basis!r}")
        if not 0.0 <= self.p <= 0.2:
            problems.append(f"p must be in [0, 0.2], got {self.p}")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.iterations < 0:
            problems.append("iterations must be >= 0")
        if self.lr_init <= 0 or self.lr_min <= 0:
            problems.append("learning rates must be positive")
        if self.clip_norm <= 0:
            problems.append("clip_norm must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            problems.append("ema_decay must be in [0, 1]")
        if self.regime not in ("realtime", "curriculum"):
            problems.append(f"regime must be realtime or curriculum, got {self.regime!r}")
        if problems:
            raise ParameterError("invalid training config: " + "; ".join(problems))

    @property
    def train_cycles(self) -> int:
        return 2 * self.d + 1

    def to_dict(self) -> Dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["mixer"] = self.mixer.value
        out["hyperparams"] = self.hyperparams.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        data = dict(data)
        if "hyperparams" in data and isinstance(data["hyperparams"], dict):
            data["hyperparams"] = Hyperparams.from_dict(data["hyperparams"])
        if "mixer" in data:
            data["mixer"] = MixerKind(data["mixer"])
        return cls(**data)

    @classmethod
    def finetune_defaults(cls, base: "TrainConfig", p: float, **overrides) -> "TrainConfig":
        cfg = replace(base, p=p, iterations=250_000, lr_init=2e-6, t_max=None)
        cfg.t_max = 64_000_000 / cfg.batch_size
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg


# ---------------------------------------------------------------------------
# on-the-fly data
# ---------------------------------------------------------------------------

class SyndromeDataSource:
    """Fresh batches per iteration from the frame sampler; circuits cached per
    cycle count. Deterministic given (config.seed, iteration)."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.layout = build_layout(config.d)
        self._circuits: Dict[int, object] = {}

    def circuit(self, cycles: int):
        if cycles not in self._circuits:
            clean = build_memory_circuit(self.layout, self.config.basis, cycles)
            self._circuits[cycles] = annotate_si1000(clean, NoiseParams(self.config.p))
        return self._circuits[cycles]

    def cycles_for(self, iteration: int) -> int:
        cfg = self.config
        if cfg.regime == "realtime":
            return cfg.train_cycles
        active = curriculum_cycles(iteration, cfg.curriculum_initial,
                                   cfg.curriculum_stride, cfg.curriculum_step)
        rng = derive_rng(cfg.seed, "cycle-choice", iteration)
        return int(active[rng.integers(len(active))])

    def batch(self, iteration: int) -> Tuple[np.ndarray, np.ndarray]:
        cycles = self.cycles_for(iteration)
        seed = int(derive_rng(self.config.seed, "data", iteration).integers(2 ** 62))
        b = sample_shots(self.circuit(cycles), self.config.batch_size, seed=seed, p=self.config.p)
        return b.events, b.labels

    def heldout(self, shots: int) -> Tuple[np.ndarray, np.ndarray]:
        cycles = self.config.train_cycles
        seed = int(derive_rng(self.config.seed, "heldout").integers(2 ** 62))
        b = sample_shots(self.circuit(cycles), shots, seed=seed, p=self.config.p)
        return b.events, b.labels


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    final_iteration: int
    final_loss: float
    eval_history: List[Tuple[int, float, float]]   # (iter, ema_acc, live_acc)
    clip_activations: int
    steps: int


def _checkpoint_metadata(config: TrainConfig, iteration: int) -> Dict:
    return {
        "kind": "decoder",
        "mixer": config.mixer.value,
        "d": config.d,
        "basis": config.basis,
        "p": config.p,
        "iteration": iteration,
        "seed": config.seed,
        "hyperparams": config.hyperparams.to_dict(),
    }


def _save_state(path: Path, config: TrainConfig, iteration: int,
                decoder: Decoder, ema: EmaWeights, opt: OptimizerState):
    params = decoder.params.arrays()
    extras = {OPT_PREFIX + k: v for k, v in opt.momentum.items()}
    save_checkpoint(path, _checkpoint_metadata(config, iteration),
                    {**params, **extras}, ema=ema.shadow)


def load_decoder(path, dtype=np.float32, use_ema: bool = True) -> Tuple[Decoder, Dict]:
    """Rebuild a decoder from a checkpoint; EMA weights by default."""
    meta, params, ema = load_checkpoint(path)
    if meta.get("kind") != "decoder":
        raise CheckpointError(f"{path}: not a decoder checkpoint")
    hp = Hyperparams.from_dict(meta["hyperparams"])
    dec = Decoder(hp, meta["d"], dtype=dtype)
    weights = {k: v for k, v in params.items() if not k.startswith(OPT_PREFIX)}
    if use_ema and ema:
        weights = ema
    dec.params.load_arrays(weights)
    return dec, meta


def _accuracy(decoder: Decoder, arrays: Dict[str, np.ndarray],
              events: np.ndarray, labels: np.ndarray) -> float:
    saved = decoder.params.copy_arrays()
    decoder.params.load_arrays(arrays)
    try:
        p = decoder.predict(events)
    finally:
        decoder.params.load_arrays(saved)
    return float(((p > 0.5).astype(np.uint8) == labels).mean())


def _read_metrics_rows(path: Path) -> List[List[str]]:
    if not path.exists():
        return []
    with open(path) as f:
        reader = csv.reader(f)
        rows = list(reader)
    return rows[1:] if rows else []


def train(config: TrainConfig, out_dir,
          data_source: Optional[SyndromeDataSource] = None,
          resume_from=None,
          progress: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Run the training loop; emits checkpoints and a metrics CSV under out_dir.

    Fully resumable: fixed seeds give a bit-identical trajectory whether or
    not the run was interrupted at a checkpoint.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "checkpoint.qecd"
    source = data_source or SyndromeDataSource(config)

    decoder = Decoder(config.hyperparams, config.d,
                      seed=int(derive_rng(config.seed, "init").integers(2 ** 62)))
    opt = OptimizerState.init(decoder.params.arrays())
    ema = EmaWeights.init(decoder.params.arrays(), decay=config.ema_decay)
    start_iter = 0

    if resume_from is not None:
        meta, params, ema_arrays = load_checkpoint(resume_from)
        if meta.get("mixer") != config.mixer.value:
            raise CheckpointError(f"checkpoint mixer {meta.get('mixer')!r} does not "
                                  f"match config {config.mixer.value!r}")
        weights = {k: v for k, v in params.items() if not k.startswith(OPT_PREFIX)}
        decoder.params.load_arrays(weights)
        opt = OptimizerState(momentum={k[len(OPT_PREFIX):]: v.astype(np.float32)
                                       for k, v in params.items() if k.startswith(OPT_PREFIX)},
                             step_count=int(meta["iteration"]))
        if ema_arrays:
            ema = EmaWeights({k: v.copy() for k, v in ema_arrays.items()}, decay=config.ema_decay)
        start_iter = int(meta["iteration"])

    # keep metrics rows strictly below the resume point: no gaps, no duplicates
    old_rows = [r for r in _read_metrics_rows(metrics_path) if int(r[0]) < start_iter]
    with open(metrics_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        writer.writerows(old_rows)

    eval_events, eval_labels = source.heldout(config.eval_shots)
    eval_history: List[Tuple[int, float, float]] = []
    clip_activations = 0
    steps = 0
    last_wall = time.perf_counter()
    final_loss = math.nan

    with threadpool_limits(limits=config.threads):
        with open(metrics_path, "a", newline="") as f:
            writer = csv.writer(f)
            for it in range(start_iter, config.iterations):
                lr = cosine_lr(it, config.lr_init, config.lr_min, config.t_max)
                events, labels = source.batch(it)
                decoder.params.zero_grads()
                with Tape() as tape:
                    logits = decoder.forward_logits(events)
                    loss_t = bce_with_logits(logits, labels)
                loss_v = float(loss_t.data)
                if not math.isfinite(loss_v):
                    raise NumericError(
                        f"non-finite loss at iteration {it}; last checkpoint retained at {ckpt_path}")
                tape.backward(loss_t)
                grads = decoder.params.grads()
                norm = clip_grad_norm(grads, config.clip_norm)
                if norm > config.clip_norm:
                    clip_activations += 1
                lion_step(decoder.params.arrays(), grads, opt, lr=lr,
                          wd=config.weight_decay, beta1=config.beta1, beta2=config.beta2)
                ema_update(decoder.params.arrays(), ema)
                steps += 1
                final_loss = loss_v

                is_last = it == config.iterations - 1
                eval_acc = ""
                if config.eval_every and (it % config.eval_every == config.eval_every - 1 or is_last):
                    acc_ema = _accuracy(decoder, ema.shadow, eval_events, eval_labels)
                    acc_live = _accuracy(decoder, decoder.params.arrays(), eval_events, eval_labels)
                    eval_history.append((it + 1, acc_ema, acc_live))
                    eval_acc = f"{acc_ema:.6f}"
                if it % config.metrics_every == 0 or is_last or eval_acc:
                    now = time.perf_counter()
                    writer.writerow([it, f"{loss_v:.6f}", f"{lr:.3e}", f"{norm:.4f}",
                                     eval_acc, f"{(now - last_wall) * 1000:.1f}"])
                    f.flush()
                    last_wall = now
                if progress is not None:
                    progress(it, loss_v)
                if config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
                    _save_state(ckpt_path, config, it + 1, decoder, ema, opt)

    _save_state(ckpt_path, config, config.iterations, decoder, ema, opt)
    summary = {
        "iterations": config.iterations,
        "final_loss": final_loss,
        "clip_activations": clip_activations,
        "steps": steps,
        "eval_history": eval_history,
    }
    with open(out_dir / "train_summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    return TrainResult(checkpoint_path=ckpt_path, metrics_path=metrics_path,
                       final_iteration=config.iterations, final_loss=final_loss,
                       eval_history=eval_history, clip_activations=clip_activations,
                       steps=steps)


def finetune(base_checkpoint, p: float, out_dir, config: Optional[TrainConfig] = None,
             **overrides) -> TrainResult:
    """Adapt a trained decoder to a shifted noise level.

    The optimizer state and EMA tracker are reset; training resumes from the
    stored live weights at the fine-tune schedule (lr 2e-6, half duration).
    """
    meta, params, _ = load_checkpoint(base_checkpoint)
    if meta.get("kind") != "decoder":
        raise CheckpointError(f"{base_checkpoint}: not a decoder checkpoint")
    base_cfg = config or TrainConfig(
        d=meta["d"], basis=meta["basis"], p=meta["p"], mixer=MixerKind(meta["mixer"]),
        hyperparams=Hyperparams.from_dict(meta["hyperparams"]))
    if base_cfg.mixer.value != meta["mixer"]:
        raise CheckpointError(f"checkpoint mixer {meta['mixer']!r} does not match "
                              f"requested {base_cfg.mixer.value!r}")
    cfg = TrainConfig.finetune_defaults(base_cfg, p, **overrides)
    cfg.validate()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights = {k: v for k, v in params.items() if not k.startswith(OPT_PREFIX)}

    if cfg.iterations == 0:
        decoder = Decoder(cfg.hyperparams, cfg.d)
        decoder.params.load_arrays(weights)
        ema = EmaWeights.init(decoder.params.arrays(), decay=cfg.ema_decay)
        opt = OptimizerState.init(decoder.params.arrays())
        ckpt = out_dir / "checkpoint.qecd"
        _save_state(ckpt, cfg, 0, decoder, ema, opt)
        metrics = out_dir / "metrics.csv"
        with open(metrics, "w", newline="") as f:
            csv.writer(f).writerow(METRICS_HEADER)
        return TrainResult(ckpt, metrics, 0, math.nan, [], 0, 0)

    # stage the base weights as the init by writing a resume checkpoint at iter 0
    stage = out_dir / "finetune_init.qecd"
    decoder = Decoder(cfg.hyperparams, cfg.d)
    decoder.params.load_arrays(weights)
    ema = EmaWeights.init(decoder.params.arrays(), decay=cfg.ema_decay)
    opt = OptimizerState.init(decoder.params.arrays())
    meta0 = _checkpoint_metadata(cfg, 0)
    extras = {OPT_PREFIX + k: v for k, v in opt.momentum.items()}
    save_checkpoint(stage, meta0, {**decoder.params.arrays(), **extras}, ema=ema.shadow)
    try:
        return train(cfg, out_dir, resume_from=stage)
    finally:
        if stage.exists():
            os.unlink(stage)
