"""Desk-scale laboratory for real-time neural decoding of surface codes.

Builds rotated-surface-code memory circuits, samples them under SI1000
circuit noise with a Pauli-frame simulator, trains recurrent decoders whose
global mixer is either multi-head attention or a selective state-space scan,
evaluates them under latency-induced decoder noise, and measures the
latency-scaling exponents that motivate the comparison.
"""

from .bench import BenchResult, bench_block, fit_scaling_exponent
from .circuits import StabilizerCircuit, build_memory_circuit, circuit_stats, dump_circuit
from .errors import (CheckpointError, DataError, FitError, NumericError,
                     ParameterError, QecdError, ReproducibilityError, ShapeError,
                     StateError)
from .evaluation import (LerFit, RealtimeResult, ThresholdResult, error_bars,
                         fidelity, find_threshold, fit_ler, realtime_eval)
from .layout import CodeLayout, GridEmbedding, build_layout, grid_embed_map
from .model import Decoder, DecoderParams, Hyperparams, MixerKind, init_params
from .noise import (DecoderNoiseSpec, NoiseParams, annotate_si1000,
                    decoder_noise_strength, inject_decoder_noise)
from .sampler import (ErrorMechanism, SyndromeBatch, dem_sample, detection_fraction,
                      extract_dem, load_batch, sample_shots, save_batch)
from .training import (EmaWeights, SyndromeDataSource, TrainConfig, TrainResult,
                       bce_with_logits, cosine_lr, curriculum_cycles, ema_update,
                       finetune, load_decoder, loss, train)

__version__ = "0.1.0"
