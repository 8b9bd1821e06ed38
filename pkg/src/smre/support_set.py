"""Support-set construction: text-guided convex mixing of a minibatch's videos."""
from __future__ import annotations

import dataclasses

import numpy as np

from . import instrument
from . import tensor as T
from .encoders import encode_batch, encode_video, project_pooled
from .errors import ContractError, DegenerateInputError, ModeError

_MASKED = -1e30


def compute_weights(t_gt, vo_pooled, cfg):
    """Mixing weights W[i, j] = softmax_j(theta * cos(text_i, video_j))."""
    instrument.bump("compute_weights")
    sim = T.cosine_similarity_matrix(t_gt, vo_pooled)
    logits = sim * cfg.theta_scale
    if not cfg.include_self:
        B = sim.shape[0]
        if B < 2:
            raise DegenerateInputError("include_self=False leaves nothing to mix when B=1")
        logits = logits + np.where(np.eye(B, dtype=bool), _MASKED, 0.0).astype(sim.dtype)
    return T.softmax_lastdim(logits, 1.0)


def build_support_set(w, v_o):
    """V_S[i] = sum_j W[i, j] V_O[j] at every clip and channel."""
    w = T.as_tensor(w)
    v_o = T.as_tensor(v_o)
    B = v_o.shape[0]
    if w.shape != (B, B):
        raise ContractError(f"weights {w.shape} do not match batch size {B}")
    rows = w.data.sum(axis=1)
    bad = np.nonzero(np.abs(rows - 1.0) > 1e-5)[0]
    if bad.size:
        raise ContractError(f"weight row {int(bad[0])} sums to {rows[bad[0]]!r}, not 1")
    instrument.bump("build_support_set")
    flat = v_o.reshape(B, -1)
    return (w @ flat).reshape(v_o.shape)


def forward_support_branch(batch, params, cfg, encoded=None, training=True):
    """Encode a batch and, when enabled, its support set through the shared encoder.

    ``cfg`` is a TrainConfig.  The support set never exists outside training.
    """
    if not training:
        raise ModeError("the support branch is training-only")
    if encoded is None:
        encoded = encode_batch(batch, params, cfg, with_text=cfg.support.enabled)
    if not cfg.support.enabled:
        return encoded
    if encoded.t_gt is None:
        raise ContractError("support construction needs text embeddings")
    w = compute_weights(encoded.t_gt, encoded.vo_pooled, cfg.support)
    v_o = T.Tensor(batch.video_features.astype(params["enc.W"].dtype))
    vs = build_support_set(w, v_o)
    vs_mid = encode_video(vs, params)
    return dataclasses.replace(encoded, vs=vs, vs_mid=vs_mid,
                               vs_pooled=project_pooled(vs_mid, params))
