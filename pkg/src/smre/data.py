"""Synthetic compositional video-caption corpus and its JSON-lines file format.

Every video has a latent (subject, verb, object, scene) tuple.  Its features
are the concatenation of one orthonormal code vector per factor, tiled over
the clips, plus Gaussian noise; so two noiseless videos sharing k of the 4
factors have cosine similarity exactly k/4.  Captions realise the tuple
through a fixed template with occasional synonyms and rare filler words.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DatasetError

CLIPS = 26

SUBJECTS = [("man", "guy"), ("woman", "lady"), ("boy", "kid"), ("girl", "youngster"),
            ("chef", "cook"), ("dog", "puppy"), ("cat", "kitten"), ("player", "athlete")]
VERBS = [("slicing", "cutting"), ("washing", "cleaning"), ("throwing", "tossing"),
         ("holding", "carrying"), ("painting", "coloring"), ("opening", "unwrapping"),
         ("kicking", "hitting")]
OBJECTS = [("onion", "shallot"), ("ball", "sphere"), ("box", "crate"), ("bottle", "flask"),
           ("book", "novel"), ("guitar", "instrument"), ("carrot", "vegetable"),
           ("shirt", "garment")]
SCENES = [("kitchen", "galley"), ("park", "garden"), ("street", "road"), ("room", "studio"),
          ("beach", "shore"), ("yard", "lawn")]
# each appears at most a handful of times, so most fall under the vocabulary threshold
RARE = ["quickly", "slowly", "carefully", "happily", "briskly", "calmly", "gently",
        "eagerly", "quietly", "boldly", "lazily", "neatly", "proudly", "swiftly", "warmly"]
FACTORS = (SUBJECTS, VERBS, OBJECTS, SCENES)


@dataclass
class CorpusSpec:
    n_videos: int = 200
    n_subjects: int = 6
    n_verbs: int = 5
    n_objects: int = 6
    n_scenes: int = 4
    captions_per_video: int = 3
    noise_sigma: float = 0.1
    d_v: int = 64
    synonym_prob: float = 0.2
    rare_prob: float = 0.03
    seed: int = 0

    def factor_sizes(self):
        return (self.n_subjects, self.n_verbs, self.n_objects, self.n_scenes)

    def validate(self):
        sizes = self.factor_sizes()
        if min(sizes) < 1 or self.n_videos < 1 or self.captions_per_video < 1:
            raise ContractError("corpus counts must all be ≥ 1")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be ≥ 0")
        for size, pool, label in zip(sizes, FACTORS, ("subjects", "verbs", "objects", "scenes")):
            if size > len(pool):
                raise ContractError(f"{size} {label} requested but only {len(pool)} available")
        block = self.d_v // 4
        if block < max(sizes):
            raise ContractError(
                f"d_v={self.d_v} gives {block}-dim factor codes, too few for {max(sizes)} values")


@dataclass
class VideoRecord:
    video_id: str
    features: np.ndarray  # [CLIPS, d_v]
    captions: list
    split: str = "train"
    latent: tuple = field(default=())

    def validate(self, d_v=None):
        f = np.asarray(self.features)
        if f.ndim != 2 or f.shape[0] != CLIPS:
            raise DatasetError(f"{self.video_id}: features must have {CLIPS} rows, got shape {f.shape}")
        if d_v is not None and f.shape[1] != d_v:
            raise DatasetError(f"{self.video_id}: feature dim {f.shape[1]}, expected {d_v}")
        if not np.isfinite(f).all():
            raise DatasetError(f"{self.video_id}: non-finite feature values")
        if not self.captions or any(not c for c in self.captions):
            raise DatasetError(f"{self.video_id}: needs at least one non-empty caption")


def factor_codes(spec, rng):
    """Orthonormal code rows per factor, each in a d_v//4 block."""
    block = spec.d_v // 4
    codes = []
    for size in spec.factor_sizes():
        q, _ = np.linalg.qr(rng.normal(size=(block, block)))
        codes.append(q[:, :size].T)
    return codes


def prototype(latent, codes, d_v):
    vec = np.zeros(d_v)
    block = d_v // 4
    for k, (value, code) in enumerate(zip(latent, codes)):
        vec[k * block:(k + 1) * block] = code[value]
    return np.tile(vec, (CLIPS, 1))


def _caption(latent, spec, rng):
    words = []
    for pool, value in zip(FACTORS, latent):
        main, syn = pool[value]
        words.append(syn if rng.random() < spec.synonym_prob else main)
    subj, verb, obj, scene = words
    caption = ["a", subj, "is", verb, "a", obj, "in", "the", scene]
    if rng.random() < spec.rare_prob:
        caption.insert(4, RARE[rng.integers(len(RARE))])
    return caption


def generate_corpus(spec=None):
    """Seeded corpus; splits are 60/20/20 by shuffled video id."""
    spec = spec or CorpusSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    codes = factor_codes(spec, rng)
    sizes = spec.factor_sizes()
    records = []
    for i in range(spec.n_videos):
        latent = tuple(int(rng.integers(s)) for s in sizes)
        feats = prototype(latent, codes, spec.d_v)
        if spec.noise_sigma > 0:
            feats = feats + rng.normal(scale=spec.noise_sigma, size=feats.shape)
        caps = [_caption(latent, spec, rng) for _ in range(spec.captions_per_video)]
        records.append(VideoRecord(f"vid{i:04d}", np.round(feats, 6), caps, latent=latent))
    order = rng.permutation(spec.n_videos)
    n_train = int(round(0.6 * spec.n_videos))
    n_val = int(round(0.2 * spec.n_videos))
    for rank, idx in enumerate(order):
        records[idx].split = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return records


def split(records, name):
    return [r for r in records if r.split == name]


def dumps_record(rec):
    return json.dumps({
        "video_id": rec.video_id,
        "split": rec.split,
        "latent": list(rec.latent),
        "captions": rec.captions,
        "features": np.asarray(rec.features).tolist(),
    }, separators=(",", ":"))


def write_dataset(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(records, key=lambda r: r.video_id):
            fh.write(dumps_record(rec) + "\n")


def load_dataset(path):
    """Parse and validate a corpus file; records come back ordered by video_id."""
    records, d_v, seen = [], None, set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = VideoRecord(
                    video_id=str(obj["video_id"]),
                    features=np.asarray(obj["features"], dtype=np.float64),
                    captions=[list(map(str, c)) for c in obj["captions"]],
                    split=str(obj.get("split", "train")),
                    latent=tuple(obj.get("latent", ())),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"line {lineno}: cannot parse record ({exc})") from exc
            rec.validate(d_v)
            d_v = rec.features.shape[1]
            if rec.video_id in seen:
                raise DatasetError(f"line {lineno}: duplicate video_id {rec.video_id}")
            seen.add(rec.video_id)
            records.append(rec)
    if not records:
        raise DatasetError(f"{path}: no records")
    return sorted(records, key=lambda r: r.video_id)
