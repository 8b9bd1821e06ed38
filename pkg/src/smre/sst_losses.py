"""Semantic-space losses: hard-negative triplet (inter) and Y-blended contrastive (intra)."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, NonFiniteError


def hardest_negatives(sim):
    """Indices of the hardest off-diagonal negatives of a [B, B] similarity matrix.

    ``sim[i, j]`` scores video i against text j.  Returns ``(idx_t, idx_v)``:
    ``idx_t[i]`` is the most similar wrong text for video i and ``idx_v[j]``
    the most similar wrong video for text j.  Ties go to the lowest index.
    """
    s = np.array(sim.data if isinstance(sim, T.Tensor) else sim, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError(f"similarity must be square, got {s.shape}")
    B = s.shape[0]
    if B < 2:
        raise ContractError("hard negatives need at least two pairs")
    np.fill_diagonal(s, -np.inf)
    return np.argmax(s, axis=1), np.argmax(s, axis=0)


def triplet_loss_from_similarity(sim, alpha):
    """Max-of-hinges loss on a precomputed similarity matrix, averaged over pairs."""
    sim = T.as_tensor(sim)
    if not np.isfinite(sim.data).all():
        raise NonFiniteError("non-finite similarity in triplet loss")
    B = sim.shape[0]
    if B < 2:
        return T.Tensor(np.zeros((), dtype=sim.dtype))
    idx_t, idx_v = hardest_negatives(sim)
    ar = np.arange(B)
    pos = sim[ar, ar]
    neg_text = sim[ar, idx_t]
    neg_video = sim[idx_v, ar]
    hinge_t = T.relu(neg_text - pos + alpha)
    hinge_v = T.relu(neg_video - pos + alpha)
    return (hinge_t + hinge_v).mean()


def triplet_loss_inter(vo_pooled, t_gt, cfg):
    return triplet_loss_from_similarity(T.cosine_similarity_matrix(vo_pooled, t_gt), cfg.alpha)


def contrastive_from_distance(d, y, m):
    """Mean of (1-Y) D^2 + Y max(0, m - D)^2 over the entries of ``d``."""
    d = T.as_tensor(d)
    pull = d * d
    push = T.relu(m - d)
    return (pull * (1.0 - y) + push * push * y).mean()


def contrastive_loss_intra(vo_pooled, vs_pooled, cfg):
    d = 1.0 - T.paired_cosine(vo_pooled, vs_pooled)
    return contrastive_from_distance(d, cfg.y_signal, cfg.m)
