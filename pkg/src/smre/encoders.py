"""Video encoder, text-embedding stand-in, vocabulary and batching."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import instrument
from . import tensor as T
from .errors import ContractError, DegenerateInputError, ShapeError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


@dataclass
class Vocabulary:
    itos: list
    min_count: int = 2

    def __post_init__(self):
        if self.min_count < 1:
            raise ContractError("min_count must be ≥ 1")
        if tuple(self.itos[:4]) != RESERVED:
            raise ContractError("vocabulary must start with the reserved tokens")
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        """Token list -> ids wrapped in BOS ... EOS."""
        return [BOS] + [self.stoi.get(w, UNK) for w in tokens] + [EOS]

    def decode(self, ids):
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out


def build_vocabulary(captions, min_count=2):
    """Keep tokens seen at least ``min_count`` times; ids ordered by (-count, token)."""
    captions = list(captions)
    if not captions:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ContractError("min_count must be ≥ 1")
    counts = Counter(w for cap in captions for w in cap)
    kept = sorted((w for w, c in counts.items() if c >= min_count and w not in RESERVED),
                  key=lambda w: (-counts[w], w))
    return Vocabulary(list(RESERVED) + kept, min_count=min_count)


@dataclass
class Batch:
    video_features: np.ndarray  # [B, T, d_v]
    captions: np.ndarray  # [B, L] int, BOS ... EOS PAD*
    caption_mask: np.ndarray  # [B, L] {0,1}
    video_ids: tuple = ()

    @property
    def size(self):
        return self.captions.shape[0]


def make_batch(features, token_lists, vocab, clips=None, video_ids=()):
    """Stack per-video features and pad encoded captions to the longest one."""
    feats = np.stack([np.asarray(f) for f in features])
    if clips is not None and feats.shape[1] != clips:
        raise ShapeError(f"expected {clips} clips per video, got {feats.shape[1]}")
    encoded = [vocab.encode(toks) for toks in token_lists]
    L = max(len(e) for e in encoded)
    caps = np.full((len(encoded), L), PAD, dtype=np.int64)
    mask = np.zeros((len(encoded), L), dtype=np.int64)
    for i, e in enumerate(encoded):
        caps[i, :len(e)] = e
        mask[i, :len(e)] = 1
    return Batch(feats, caps, mask, tuple(video_ids))


@dataclass
class EncodedBatch:
    vo_mid: T.Tensor  # [B, T, d_h]
    vo_pooled: T.Tensor  # [B, d_s]
    t_gt: T.Tensor | None = None  # [B, d_s]
    vs: T.Tensor | None = None  # [B, T, d_v]
    vs_mid: T.Tensor | None = None
    vs_pooled: T.Tensor | None = None

    @property
    def has_support(self):
        return self.vs is not None


def encode_video(v_o, params):
    """Per-clip affine projection, shared by the original and support branches."""
    v_o = T.as_tensor(v_o)
    W = params["enc.W"]
    if v_o.ndim != 3 or v_o.shape[-1] != W.shape[0]:
        raise ContractError(
            f"video features {v_o.shape} do not match encoder input dim {W.shape[0]}")
    return v_o @ W + params["enc.b"]


def pool_temporal(x):
    """Mean over the clip axis: [B, T, d] -> [B, d]."""
    if x.ndim != 3 or x.shape[1] == 0:
        raise ShapeError(f"temporal pooling needs [B, T≥1, d], got {x.shape}")
    return x.mean(axis=1)


def project_pooled(vo_mid, params):
    """Pooled clip states mapped into the shared semantic space."""
    return pool_temporal(vo_mid) @ params["enc.pool_W"] + params["enc.pool_b"]


def _text_param(params, name, freeze):
    p = params[name]
    return T.Tensor(p.data) if freeze else p


def encode_text_gt(captions, mask, params, freeze=False):
    """Trainable stand-in for a pretrained sentence encoder.

    Mean of token embeddings over word positions (BOS/EOS/PAD excluded),
    then an affine map into the shared space.  Mean pooling makes the result
    invariant to token order.
    """
    instrument.bump("encode_text_gt")
    captions = np.asarray(captions, dtype=np.int64)
    mask = np.asarray(mask)
    if captions.shape != mask.shape:
        raise ShapeError(f"captions {captions.shape} and mask {mask.shape} disagree")
    words = (mask > 0) & (captions != BOS) & (captions != EOS) & (captions != PAD)
    counts = words.sum(axis=1)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise DegenerateInputError(f"caption {int(empty[0])} has no word tokens")
    embed = _text_param(params, "text.embed", freeze)
    e = T.embedding(embed, captions)  # [B, L, d_t]
    weights = (words / counts[:, None]).astype(e.dtype)[..., None]
    sent = (e * weights).sum(axis=1)
    return sent @ _text_param(params, "text.W", freeze) + _text_param(params, "text.b", freeze)


def encode_batch(batch, params, cfg=None, with_text=True):
    """Original-branch encoding: V_O', its pooled vector and (optionally) T_GT."""
    vo_mid = encode_video(batch.video_features.astype(params["enc.W"].dtype), params)
    vo_pooled = project_pooled(vo_mid, params)
    t_gt = None
    if with_text:
        freeze = bool(cfg.freeze_text) if cfg is not None else False
        t_gt = encode_text_gt(batch.captions, batch.caption_mask, params, freeze=freeze)
    return EncodedBatch(vo_mid=vo_mid, vo_pooled=vo_pooled, t_gt=t_gt)
