"""Recurrent syndrome decoder with pluggable global mixer.

Per cycle, detection-event and measurement bits are embedded per stabilizer
slot, combined with the hidden state, and passed through three syndrome-mixer
layers: a global mixer (multi-head attention, or a selective state-space
module with a parallel MLP path), a gated dense block, and three dilated
convolutions on the (d+1) x (d+1) plaquette grid. A readout head turns the
final hidden state into the logical-flip probability P_L.

The recurrence keeps the hidden state contracting: with all mixer branches at
their zero initialization, one step reduces to h' = skip_scale * (h + s).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, ShapeError
from .layout import CodeLayout, GridEmbedding, build_layout, grid_embed_map
from .rng import derive_rng


class MixerKind(str, Enum):
    ATTENTION = "attention"
    MAMBA = "mamba"


def default_dilations(d: int) -> Tuple[int, int, int]:
    if d <= 3:
        return (1, 1, 1)
    if d <= 5:
        return (1, 1, 2)
    return (1, 2, 4)


@dataclass(frozen=True)
class Hyperparams:
    """Model dimensions; defaults follow the real-time configuration."""

    mixer: MixerKind = MixerKind.MAMBA
    d_model: int = 256
    heads: int = 4                 # attention heads H
    d_b: int = 48                  # attention output-projection width
    d_attn: int = 32               # per-head query/key/value dimension
    d_mid: int = 32                # attention feed-forward intermediate width
    d_state: int = 16              # SSM latent dimension
    d_conv: int = 4                # SSM depthwise-conv kernel
    w_mamba: int = 1               # SSM expansion factor
    l_stab: int = 2                # embedder residual blocks
    l_read: int = 16               # readout residual blocks
    d_read: int = 48               # readout width
    w_gate: int = 5                # gated-dense widening factor
    dilations: Optional[Tuple[int, int, int]] = None   # per-distance default if None
    layers_per_step: int = 3
    skip_scale: float = 0.7071
    combine: str = "add"           # "add" | "concat" for h_n with S_n
    causal_conv: bool = True       # depthwise conv ahead of the SSM scan

    def __post_init__(self):
        for name in ("d_model", "heads", "d_b", "d_attn", "d_mid", "d_state",
                     "d_conv", "w_mamba", "l_stab", "l_read", "d_read",
                     "w_gate", "layers_per_step"):
            if getattr(self, name) < 1:
                raise ParameterError(f"hyperparameter {name} must be positive")
        if self.dilations is not None and len(self.dilations) != 3:
            raise ParameterError("dilations must have exactly 3 entries")
        if self.combine not in ("add", "concat"):
            raise ParameterError(f"combine must be 'add' or 'concat', got {self.combine!r}")

    def dilations_for(self, d: int) -> Tuple[int, int, int]:
        return self.dilations if self.dilations is not None else default_dilations(d)

    def to_dict(self) -> Dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["mixer"] = self.mixer.value
        out["dilations"] = list(self.dilations) if self.dilations is not None else None
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> "Hyperparams":
        data = dict(data)
        data["mixer"] = MixerKind(data["mixer"])
        if data.get("dilations") is not None:
            data["dilations"] = tuple(data["dilations"])
        return cls(**data)


class DecoderParams:
    """Named, ordered parameter tensors; addressable by layer path."""

    def __init__(self, tensors: Dict[str, Tensor]):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: t.grad for k, t in self.tensors.items() if t.grad is not None}

    def zero_grads(self):
        for t in self.tensors.values():
            t.zero_grad()

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy_arrays(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        for k, t in self.tensors.items():
            if k not in arrays:
                raise ParameterError(f"missing parameter '{k}'")
            if arrays[k].shape != t.data.shape:
                raise ShapeError(f"parameter '{k}': stored shape {arrays[k].shape} "
                                 f"does not match model shape {t.data.shape}")
            t.data = arrays[k].astype(t.data.dtype, copy=True)


def _trunc_normal(rng, shape, std=0.02):
    return np.clip(rng.normal(0.0, std, size=shape), -2 * std, 2 * std)


def init_params(hp: Hyperparams, d: int, seed: int = 0, dtype=np.float32,
                zero_residual_outputs: bool = True) -> DecoderParams:
    """Build every learnable array.

    Projections are truncated-normal (std 0.02); biases and the output
    projection of every residual branch start at zero, which makes each block
    the identity at initialization. `zero_residual_outputs=False` randomizes
    those too (used by gradient checking, where zero branches would hide
    backward bugs behind zero gradients).
    """
    rng = derive_rng(seed, "init")
    l = d * d - 1
    dm = hp.d_model
    ee = hp.w_mamba * dm
    gg = hp.w_gate * dm
    p: Dict[str, Tensor] = {}

    def add_param(name, arr):
        p[name] = Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

    def tn(shape, std=0.02):
        return _trunc_normal(rng, shape, std)

    def res_out(shape):
        return np.zeros(shape) if zero_residual_outputs else tn(shape)

    add_param("embed/event_w", tn((dm,)))
    add_param("embed/meas_w", tn((dm,)))
    add_param("embed/bias", np.zeros(dm))
    add_param("embed/pos", tn((l, dm)))
    for j in range(hp.l_stab):
        add_param(f"embed/res{j}/w1", tn((dm, dm)))
        add_param(f"embed/res{j}/b1", np.zeros(dm))
        add_param(f"embed/res{j}/w2", res_out((dm, dm)))
        add_param(f"embed/res{j}/b2", np.zeros(dm))

    if hp.combine == "concat":
        add_param("combine/wh", tn((dm, dm)))
        add_param("combine/ws", tn((dm, dm)))
        add_param("combine/b", np.zeros(dm))

    for i in range(hp.layers_per_step):
        base = f"core/layer{i}"
        add_param(f"{base}/ln1/gamma", np.ones(dm))
        add_param(f"{base}/ln1/beta", np.zeros(dm))
        if hp.mixer == MixerKind.ATTENTION:
            width = hp.heads * hp.d_attn
            for nm in ("wq", "wk", "wv"):
                add_param(f"{base}/attn/{nm}", tn((dm, width)))
            for nm in ("bq", "bk", "bv"):
                add_param(f"{base}/attn/{nm}", np.zeros(width))
            add_param(f"{base}/attn/wo1", tn((width, hp.d_b)))
            add_param(f"{base}/attn/bo1", np.zeros(hp.d_b))
            add_param(f"{base}/attn/wo2", res_out((hp.d_b, dm)))
            add_param(f"{base}/attn/bo2", np.zeros(dm))
            add_param(f"{base}/ffn_ln/gamma", np.ones(dm))
            add_param(f"{base}/ffn_ln/beta", np.zeros(dm))
            add_param(f"{base}/ffn/w1", tn((dm, hp.d_mid)))
            add_param(f"{base}/ffn/b1", np.zeros(hp.d_mid))
            add_param(f"{base}/ffn/w2", res_out((hp.d_mid, dm)))
            add_param(f"{base}/ffn/b2", np.zeros(dm))
        else:
            add_param(f"{base}/mamba/in_w", tn((dm, ee)))
            add_param(f"{base}/mamba/in_b", np.zeros(ee))
            add_param(f"{base}/mamba/mlp_w1", tn((ee, ee)))
            add_param(f"{base}/mamba/mlp_b1", np.zeros(ee))
            add_param(f"{base}/mamba/mlp_w2", tn((ee, ee)))
            add_param(f"{base}/mamba/mlp_b2", np.zeros(ee))
            if hp.causal_conv:
                add_param(f"{base}/mamba/conv_w", tn((ee, hp.d_conv), std=1.0 / np.sqrt(hp.d_conv)))
                add_param(f"{base}/mamba/conv_b", np.zeros(ee))
            add_param(f"{base}/mamba/wb", tn((ee, hp.d_state)))
            add_param(f"{base}/mamba/bb", np.zeros(hp.d_state))
            add_param(f"{base}/mamba/wc", tn((ee, hp.d_state)))
            add_param(f"{base}/mamba/bc", np.zeros(hp.d_state))
            add_param(f"{base}/mamba/wdt", tn((ee, ee)))
            # softplus(bdt) log-uniform in [1e-3, 1e-1]
            dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=ee))
            add_param(f"{base}/mamba/bdt", np.log(np.expm1(dt)))
            a_init = np.tile(np.log(np.arange(1, hp.d_state + 1, dtype=np.float64)), (ee, 1))
            add_param(f"{base}/mamba/a_log", a_init)
            add_param(f"{base}/mamba/d", np.ones(ee))
            add_param(f"{base}/mamba/out_w", res_out((ee, dm)))
            add_param(f"{base}/mamba/out_b", np.zeros(dm))
        add_param(f"{base}/gd_ln/gamma", np.ones(dm))
        add_param(f"{base}/gd_ln/beta", np.zeros(dm))
        add_param(f"{base}/gd/wv", tn((dm, gg)))
        add_param(f"{base}/gd/bv", np.zeros(gg))
        add_param(f"{base}/gd/wg", tn((dm, gg)))
        add_param(f"{base}/gd/bg", np.zeros(gg))
        add_param(f"{base}/gd/wp", res_out((gg, dm)))
        add_param(f"{base}/gd/bp", np.zeros(dm))
        add_param(f"{base}/conv_ln/gamma", np.ones(dm))
        add_param(f"{base}/conv_ln/beta", np.zeros(dm))
        for j in range(3):
            add_param(f"{base}/conv{j}/k", res_out((dm, dm, 3, 3)))
            add_param(f"{base}/conv{j}/b", np.zeros(dm))

    for j in range(2):
        add_param(f"readout/conv{j}/k", tn((dm, dm, 3, 3), std=0.02 / 3.0))
        add_param(f"readout/conv{j}/b", np.zeros(dm))
    add_param("readout/proj/w", tn((dm, hp.d_read)))
    add_param("readout/proj/b", np.zeros(hp.d_read))
    for j in range(hp.l_read):
        add_param(f"readout/res{j}/w1", tn((hp.d_read, hp.d_read)))
        add_param(f"readout/res{j}/b1", np.zeros(hp.d_read))
        add_param(f"readout/res{j}/w2", res_out((hp.d_read, hp.d_read)))
        add_param(f"readout/res{j}/b2", np.zeros(hp.d_read))
    add_param("readout/out/w", tn((hp.d_read, 1)))
    add_param("readout/out/b", np.zeros(1))

    return DecoderParams(p)


class Decoder:
    """One decoder instance bound to a code distance."""

    def __init__(self, hp: Hyperparams, d: int, params: Optional[DecoderParams] = None,
                 seed: int = 0, dtype=np.float32, zero_residual_outputs: bool = True):
        self.hp = hp
        self.d = d
        self.layout: CodeLayout = build_layout(d)
        self.grid: GridEmbedding = grid_embed_map(self.layout)
        self.l = self.layout.n_stabilizers
        self.dtype = dtype
        self.dilations = hp.dilations_for(d)
        self.params = params if params is not None else init_params(
            hp, d, seed=seed, dtype=dtype, zero_residual_outputs=zero_residual_outputs)

    # -- embedder ----------------------------------------------------------

    def embed_cycle(self, events_row: np.ndarray, meas_row: np.ndarray) -> Tensor:
        """Per-stabilizer features from one cycle's bits; slot-local."""
        if events_row.shape[-1] != self.l or meas_row.shape[-1] != self.l:
            raise ShapeError(f"event row length {events_row.shape[-1]} does not match "
                             f"{self.l} stabilizer slots")
        p = self.params
        ev = Tensor(events_row[..., None].astype(self.dtype))
        me = Tensor(meas_row[..., None].astype(self.dtype))
        x = ad.add(ad.add(ad.mul(ev, p["embed/event_w"]), ad.mul(me, p["embed/meas_w"])),
                   ad.add(p["embed/bias"], p["embed/pos"]))
        for j in range(self.hp.l_stab):
            inner = ad.silu(ad.linear(x, p[f"embed/res{j}/w1"], p[f"embed/res{j}/b1"]))
            x = ad.add(x, ad.linear(inner, p[f"embed/res{j}/w2"], p[f"embed/res{j}/b2"]))
        return x

    # -- mixer blocks --------------------------------------------------------

    def attention_mixer(self, x: Tensor, layer: int, mask: Optional[np.ndarray] = None) -> Tensor:
        """Multi-head attention over stabilizer slots, then a d_mid feed-forward."""
        p = self.params
        base = f"core/layer{layer}"
        bsz, l, dm = x.shape
        if l == 0:
            raise ShapeError("attention mixer on an empty slot sequence")
        h = ad.layer_norm(x, p[f"{base}/ln1/gamma"], p[f"{base}/ln1/beta"])
        heads, da = self.hp.heads, self.hp.d_attn

        def project(nm_w, nm_b):
            y = ad.linear(h, p[f"{base}/attn/{nm_w}"], p[f"{base}/attn/{nm_b}"])
            y = ad.reshape(y, (bsz, l, heads, da))
            return ad.transpose(y, (0, 2, 1, 3))

        q = project("wq", "bq")
        k = project("wk", "bk")
        v = project("wv", "bv")
        att = ad.scaled_dot_product_attention(q, k, v, mask=mask)
        att = ad.reshape(ad.transpose(att, (0, 2, 1, 3)), (bsz, l, heads * da))
        out = ad.linear(att, p[f"{base}/attn/wo1"], p[f"{base}/attn/bo1"])
        out = ad.linear(out, p[f"{base}/attn/wo2"], p[f"{base}/attn/bo2"])
        x = ad.add(x, out)
        f = ad.layer_norm(x, p[f"{base}/ffn_ln/gamma"], p[f"{base}/ffn_ln/beta"])
        f = ad.silu(ad.linear(f, p[f"{base}/ffn/w1"], p[f"{base}/ffn/b1"]))
        f = ad.linear(f, p[f"{base}/ffn/w2"], p[f"{base}/ffn/b2"])
        return ad.add(x, f)

    def mamba_mixer(self, x: Tensor, layer: int) -> Tensor:
        """Expansion, then an MLP path summed with a selective-scan path."""
        p = self.params
        base = f"core/layer{layer}"
        h = ad.layer_norm(x, p[f"{base}/ln1/gamma"], p[f"{base}/ln1/beta"])
        xe = ad.linear(h, p[f"{base}/mamba/in_w"], p[f"{base}/mamba/in_b"])
        mlp = ad.silu(ad.linear(xe, p[f"{base}/mamba/mlp_w1"], p[f"{base}/mamba/mlp_b1"]))
        mlp = ad.linear(mlp, p[f"{base}/mamba/mlp_w2"], p[f"{base}/mamba/mlp_b2"])
        u = xe
        if self.hp.causal_conv:
            u = ad.depthwise_conv1d_causal(u, p[f"{base}/mamba/conv_w"], p[f"{base}/mamba/conv_b"])
        u = ad.silu(u)
        b_in = ad.linear(u, p[f"{base}/mamba/wb"], p[f"{base}/mamba/bb"])
        c_out = ad.linear(u, p[f"{base}/mamba/wc"], p[f"{base}/mamba/bc"])
        delta = ad.softplus(ad.linear(u, p[f"{base}/mamba/wdt"], p[f"{base}/mamba/bdt"]))
        y = ad.selective_scan(u, delta, p[f"{base}/mamba/a_log"], b_in, c_out,
                              p[f"{base}/mamba/d"])
        out = ad.linear(ad.add(mlp, y), p[f"{base}/mamba/out_w"], p[f"{base}/mamba/out_b"])
        return ad.add(x, out)

    # -- syndrome mixer layer ------------------------------------------------

    def gated_dense(self, x: Tensor, layer: int) -> Tensor:
        p = self.params
        base = f"core/layer{layer}"
        g = ad.layer_norm(x, p[f"{base}/gd_ln/gamma"], p[f"{base}/gd_ln/beta"])
        value = ad.silu(ad.linear(g, p[f"{base}/gd/wv"], p[f"{base}/gd/bv"]))
        gate = ad.sigmoid(ad.linear(g, p[f"{base}/gd/wg"], p[f"{base}/gd/bg"]))
        out = ad.linear(ad.mul(value, gate), p[f"{base}/gd/wp"], p[f"{base}/gd/bp"])
        return ad.add(x, out)

    def grid_convs(self, x: Tensor, layer: int) -> Tensor:
        # normalized input keeps the branch gain independent of the state scale;
        # only the stack's delta is added back, so zero kernels give the identity
        p = self.params
        base = f"core/layer{layer}"
        h = ad.layer_norm(x, p[f"{base}/conv_ln/gamma"], p[f"{base}/conv_ln/beta"])
        g0 = ad.scatter_to_grid(h, self.grid.rows, self.grid.cols, self.grid.size)
        g = g0
        for j, dil in enumerate(self.dilations):
            branch = ad.silu(ad.conv2d_dilated(g, p[f"{base}/conv{j}/k"], dil,
                                               bias=p[f"{base}/conv{j}/b"]))
            g = ad.add(g, branch)
        delta = ad.add(g, ad.mul(g0, -1.0))
        return ad.add(x, ad.gather_from_grid(delta, self.grid.rows, self.grid.cols))

    def syndrome_mixer_layer(self, x: Tensor, layer: int) -> Tensor:
        if self.hp.mixer == MixerKind.ATTENTION:
            x = self.attention_mixer(x, layer)
        else:
            x = self.mamba_mixer(x, layer)
        x = self.gated_dense(x, layer)
        return self.grid_convs(x, layer)

    # -- recurrence ----------------------------------------------------------

    def initial_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.l, self.hp.d_model), dtype=self.dtype))

    def combine_state(self, h: Tensor, s: Tensor) -> Tensor:
        if self.hp.combine == "add":
            return ad.add(h, s)
        p = self.params
        return ad.add(ad.add(ad.matmul(h, p["combine/wh"]), ad.matmul(s, p["combine/ws"])),
                      p["combine/b"])

    def rnn_step(self, h: Tensor, s: Tensor) -> Tensor:
        """h' = skip_scale*u + (stack(u) - u), u = combine(h, S).

        The mixer stack contributes only its delta beyond the pass-through, so
        zeroed mixer branches give exactly h' = skip_scale * u.
        """
        u = self.combine_state(h, s)
        v = u
        for i in range(self.hp.layers_per_step):
            v = self.syndrome_mixer_layer(v, i)
        return ad.add(v, ad.mul(u, self.hp.skip_scale - 1.0))

    # -- readout ---------------------------------------------------------------

    def readout(self, h: Tensor) -> Tensor:
        """Final hidden state -> pre-sigmoid logit per shot."""
        p = self.params
        g = ad.scatter_to_grid(h, self.grid.rows, self.grid.cols, self.grid.size)
        for j in range(2):
            g = ad.silu(ad.conv2d_dilated(g, p[f"readout/conv{j}/k"], 1,
                                          bias=p[f"readout/conv{j}/b"]))
        pooled = ad.tmean(g, axis=(2, 3))
        r = ad.silu(ad.linear(pooled, p["readout/proj/w"], p["readout/proj/b"]))
        for j in range(self.hp.l_read):
            inner = ad.silu(ad.linear(r, p[f"readout/res{j}/w1"], p[f"readout/res{j}/b1"]))
            r = ad.add(r, ad.linear(inner, p[f"readout/res{j}/w2"], p[f"readout/res{j}/b2"]))
        logit = ad.linear(r, p["readout/out/w"], p["readout/out/b"])
        return ad.reshape(logit, (h.shape[0],))

    # -- full forward ------------------------------------------------------------

    def measurement_rows(self, events: np.ndarray) -> np.ndarray:
        """Reconstruct per-cycle measurement deviations as the cumulative XOR
        of event rows (the raw-measurement input channel)."""
        return np.bitwise_xor.accumulate(events.astype(np.uint8), axis=-2)

    def forward_logits(self, events: np.ndarray, check: bool = False) -> Tensor:
        """events uint8 [B, n+1, l] -> pre-sigmoid logits Tensor [B]."""
        if events.ndim != 3:
            raise ShapeError(f"events must be [shots, rows, slots], got shape {events.shape}")
        bsz, rows, slots = events.shape
        if rows < 1:
            raise ShapeError("events tensor has zero cycle rows")
        if slots != self.l:
            raise ShapeError(f"events have {slots} slots, model expects {self.l}")
        meas = self.measurement_rows(events)
        h = self.initial_state(bsz)
        for r in range(rows):
            s = self.embed_cycle(events[:, r, :], meas[:, r, :])
            if check:
                ad.assert_finite(s, f"embedder (cycle {r})")
            h = self.rnn_step(h, s)
            if check:
                ad.assert_finite(h, f"rnn core (cycle {r})")
        logit = self.readout(h)
        if check:
            ad.assert_finite(logit, "readout")
        return logit

    def forward(self, events: np.ndarray, check: bool = True) -> np.ndarray:
        """events uint8 [B, n+1, l] -> P_L per shot (inference, no tape)."""
        logit = self.forward_logits(events, check=check)
        return ad.sigmoid(logit).data

    def predict(self, events: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        """Chunked inference over a large batch."""
        outs = []
        for start in range(0, events.shape[0], batch_size):
            outs.append(self.forward(events[start:start + batch_size]))
        return np.concatenate(outs)
