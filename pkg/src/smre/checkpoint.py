"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SMRE" | u32 format version | u32 header length | header (UTF-8 JSON) | payload

The header carries the tensor manifest -- one ``{name, dtype, shape, offset,
nbytes}`` entry per tensor, offsets relative to the payload start -- plus the
training config, vocabulary and optimizer step.  Payloads are raw
little-endian arrays in manifest order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .encoders import Vocabulary
from .errors import CheckpointError, ShapeError
from .optim import AdamState
from .params import ModelParams, param_shapes
from .tensor import Tensor

MAGIC = b"SMRE"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


@dataclass
class Checkpoint:
    params: ModelParams
    opt_state: AdamState
    cfg: TrainConfig
    vocab: Vocabulary
    meta: dict


def _le(arr):
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))


def dumps_checkpoint(params, opt_state, cfg, vocab, meta=None):
    tensors = [(f"param/{k}", p.data) for k, p in params.items()]
    if opt_state is not None:
        tensors += [(f"adam_m/{k}", v) for k, v in opt_state.m.items()]
        tensors += [(f"adam_v/{k}", v) for k, v in opt_state.v.items()]
    manifest, chunks, offset = [], [], 0
    for name, arr in tensors:
        raw = _le(arr).tobytes()
        manifest.append({"name": name, "dtype": _le(arr).dtype.str,
                         "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "manifest": manifest,
        "config": cfg.to_dict(),
        "vocab": {"itos": list(vocab.itos), "min_count": vocab.min_count},
        "adam_step": opt_state.step if opt_state is not None else None,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def save_checkpoint(params, opt_state, cfg, path, vocab, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(params, opt_state, cfg, vocab, meta))


def loads_checkpoint(blob, cfg=None):
    if len(blob) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing header prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    start = _PREFIX.size + hlen
    if len(blob) < start:
        raise CheckpointError("truncated checkpoint: header cut short")
    try:
        header = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc

    stored_cfg = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary(header["vocab"]["itos"], header["vocab"]["min_count"])
    expected = param_shapes((cfg or stored_cfg).dims, len(vocab))

    arrays = {}
    for entry in header["manifest"]:
        lo = start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(blob):
            raise CheckpointError(f"truncated checkpoint: payload of {entry['name']} cut short")
        arr = np.frombuffer(blob[lo:hi], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(
            np.dtype(entry["dtype"]).newbyteorder("="))

    params = {}
    for name, shape in expected.items():
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
        if arrays[key].shape != shape:
            raise ShapeError(f"tensor {name!r} has shape {arrays[key].shape}, config expects {shape}")
        params[name] = Tensor(arrays[key], requires_grad=True, name=name)
    extra = {k for k in arrays if k.startswith("param/")} - {f"param/{n}" for n in expected}
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors {sorted(extra)}")

    opt = None
    if header["adam_step"] is not None:
        opt = AdamState({n: arrays[f"adam_m/{n}"] for n in expected},
                        {n: arrays[f"adam_v/{n}"] for n in expected},
                        int(header["adam_step"]))
    return Checkpoint(ModelParams(params), opt, stored_cfg, vocab, header["meta"])


def load_checkpoint(path, cfg=None):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read(), cfg)
