"""Small corpora and configs that train in well under a second."""
from smre.config import TrainConfig
from smre.data import CorpusSpec, generate_corpus

from conftest import SMALL_DIMS


def tiny_corpus(n=24, seed=0):
    return generate_corpus(CorpusSpec(n_videos=n, d_v=SMALL_DIMS.d_v, n_subjects=3, n_verbs=3,
                                      n_objects=3, n_scenes=2, captions_per_video=2, seed=seed))


def tiny_config(**changes):
    cfg = TrainConfig(dims=SMALL_DIMS, lr=3e-3, epochs=2, batch_size=8, beam_size=2, max_len=12)
    return cfg.replace(**changes) if changes else cfg
