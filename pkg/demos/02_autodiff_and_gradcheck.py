"""The tensor engine: forward ops, reverse-mode gradients, finite differences.

Shows the building blocks the decoder is made of, then verifies a whole tiny
decoder's gradients against central differences in float64.
"""

import numpy as np

from qecd import Decoder, Hyperparams, MixerKind
from qecd.autodiff import (Tape, Tensor, scaled_dot_product_attention,
                           selective_scan, silu, softmax, tsum)
from qecd.gradcheck import gradient_check


def main():
    rng = np.random.default_rng(0)

    # softmax rows are probabilities
    x = Tensor(rng.normal(size=(2, 5)))
    print("softmax row sums:", softmax(x, axis=-1).data.sum(axis=-1))

    # attention with a single token returns the value vector untouched
    q = Tensor(rng.normal(size=(1, 1, 4)))
    v = Tensor(rng.normal(size=(1, 1, 4)))
    out = scaled_dot_product_attention(q, q, v)
    print("1-token attention == value:", np.allclose(out.data, v.data))

    # a gradient through the selective scan
    u = Tensor(rng.normal(size=(1, 6, 3)).astype(np.float64), requires_grad=True)
    delta = Tensor(rng.uniform(0.1, 0.3, size=(1, 6, 3)), requires_grad=True)
    a_log = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b_in = Tensor(rng.normal(size=(1, 6, 4)), requires_grad=True)
    c_out = Tensor(rng.normal(size=(1, 6, 4)), requires_grad=True)
    d_skip = Tensor(rng.normal(size=(3,)), requires_grad=True)
    with Tape() as tape:
        y = tsum(silu(selective_scan(u, delta, a_log, b_in, c_out, d_skip)))
    tape.backward(y)
    print("scan input gradient norm:", float(np.linalg.norm(u.grad)))

    # end-to-end check of a tiny decoder, float64, vs finite differences
    hp = Hyperparams(mixer=MixerKind.MAMBA, d_model=8, d_state=2, d_conv=2,
                     l_stab=1, l_read=1, d_read=8, w_gate=2)
    dec = Decoder(hp, d=3, seed=1, dtype=np.float64, zero_residual_outputs=False)
    events = (rng.random((2, 3, 8)) < 0.2).astype(np.uint8)

    def forward():
        return tsum(dec.forward_logits(events))

    report = gradient_check(forward, dec.params.tensors, tolerance=1e-3,
                            max_elements_per_group=4)
    print(report.summary())


if __name__ == "__main__":
    main()
