"""Named parameter collection and seeded initialisation."""
from __future__ import annotations

import hashlib

import numpy as np

from .tensor import Tensor, default_dtype


def param_shapes(dims, vocab_size):
    """Every trainable tensor of the model, in a fixed order."""
    d = dims
    g = 4 * d.d_dec
    return {
        "enc.W": (d.d_v, d.d_h),
        "enc.b": (d.d_h,),
        "enc.pool_W": (d.d_h, d.d_s),
        "enc.pool_b": (d.d_s,),
        "text.embed": (vocab_size, d.d_t),
        "text.W": (d.d_t, d.d_s),
        "text.b": (d.d_s,),
        "dec.embed": (vocab_size, d.d_e),
        # attention LSTM input: [word ; mean clip state ; h_lang ; h_att]
        "dec.att_W": (d.d_e + d.d_h + 2 * d.d_dec, g),
        "dec.att_b": (g,),
        "dec.attn_Wv": (d.d_h, d.d_att),
        "dec.attn_Wh": (d.d_dec, d.d_att),
        "dec.attn_b": (d.d_att,),
        "dec.attn_w": (d.d_att, 1),
        # language LSTM input: [context ; h_att ; h_lang]
        "dec.lang_W": (d.d_h + 2 * d.d_dec, g),
        "dec.lang_b": (g,),
        "dec.out_W": (d.d_dec, vocab_size),
        "dec.out_b": (vocab_size,),
    }


class ModelParams:
    """Ordered name -> Tensor mapping; every entry requires grad."""

    def __init__(self, tensors):
        self._t = dict(tensors)

    def __getitem__(self, name):
        return self._t[name]

    def __contains__(self, name):
        return name in self._t

    def __iter__(self):
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def items(self):
        return self._t.items()

    def names(self):
        return list(self._t)

    def shapes(self):
        return {k: v.shape for k, v in self._t.items()}

    def zero_grad(self):
        for t in self._t.values():
            t.grad = None

    def copy(self, dtype=None):
        out = {}
        for k, v in self._t.items():
            data = v.data.astype(dtype if dtype is not None else v.dtype, copy=True)
            out[k] = Tensor(data, requires_grad=True, name=k)
        return ModelParams(out)

    def digest(self):
        h = hashlib.sha256()
        for k, v in self._t.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v.data).tobytes())
        return h.hexdigest()

    def n_entries(self):
        return sum(v.size for v in self._t.values())


def init_params(dims, vocab_size, seed=0, dtype=None, zero=False):
    """Seeded init: uniform(±1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    dtype = dtype or default_dtype()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(dims, vocab_size).items():
        if zero:
            arr = np.zeros(shape)
        elif name.endswith("embed"):
            arr = rng.uniform(-0.1, 0.1, size=shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
            if name in ("dec.att_b", "dec.lang_b"):
                h = shape[0] // 4
                arr[h:2 * h] = 1.0
        else:
            k = 1.0 / np.sqrt(shape[0])
            arr = rng.uniform(-k, k, size=shape)
        tensors[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    return ModelParams(tensors)
