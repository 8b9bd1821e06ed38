"""Hyperparameter containers and the flat ``key = value`` config file."""
from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ContractError


@dataclass
class SSTConfig:
    alpha: float = 0.2  # triplet margin
    m: float = 0.2  # contrastive margin
    y_signal: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.y_signal <= 1.0:
            raise ContractError(f"y_signal must lie in [0, 1], got {self.y_signal}")
        if self.alpha <= 0 or self.m <= 0:
            raise ContractError("margins alpha and m must be positive")


@dataclass
class SupportConfig:
    theta_scale: float = 10.0
    include_self: bool = True
    enabled: bool = True

    def __post_init__(self):
        if not self.theta_scale > 0:
            raise ContractError(f"theta_scale must be positive, got {self.theta_scale}")


@dataclass
class Dims:
    d_v: int = 64
    d_h: int = 128
    d_s: int = 128
    d_t: int = 128  # text-encoder token embedding
    d_e: int = 128  # decoder word embedding
    d_dec: int = 128
    d_att: int = 128
    clips: int = 26

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ContractError(f"dimension {f.name} must be ≥ 1")


@dataclass
class TrainConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    use_inter: bool = True
    use_intra: bool = True
    use_sup_cap: bool = True
    sst: SSTConfig = field(default_factory=SSTConfig)
    support: SupportConfig = field(default_factory=SupportConfig)
    dims: Dims = field(default_factory=Dims)
    lr: float = 1e-4
    epochs: int = 20
    batch_size: int = 16
    beam_size: int = 5
    max_len: int = 20
    length_norm: bool = False
    tel_prob: float = 1.0
    clip_norm: float = 5.0
    min_count: int = 2
    freeze_text: bool = False
    select_by_val: bool = True
    seed: int = 0
    determinism: bool = False

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ContractError("lambda weights must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be ≥ 1")
        if not 0.0 <= self.tel_prob <= 1.0:
            raise ContractError(f"tel_prob must lie in [0, 1], got {self.tel_prob}")
        if self.lr < 0:
            raise ContractError("lr must be non-negative")
        if self.beam_size < 1 or self.max_len < 1:
            raise ContractError("beam_size and max_len must be ≥ 1")

    # the support branch exists only to feed these three losses
    @property
    def support_active(self):
        return self.support.enabled and (self.use_inter or self.use_intra or self.use_sup_cap)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        nested = {"sst": SSTConfig, "support": SupportConfig, "dims": Dims}
        for key, typ in nested.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        """Copy with changes; dotted keys (``sst.y_signal``) reach nested fields."""
        d = self.to_dict()
        for key, value in changes.items():
            _set_dotted(d, key, value)
        return TrainConfig.from_dict(d)


def _set_dotted(d, key, value):
    parts = key.split(".")
    target = d
    for p in parts[:-1]:
        if p not in target or not isinstance(target[p], dict):
            raise ContractError(f"unknown config key {key!r}")
        target = target[p]
    if parts[-1] not in target:
        raise ContractError(f"unknown config key {key!r}")
    target[parts[-1]] = value


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def dumps_config(cfg):
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in _flatten(cfg.to_dict()))


def loads_config(text, base=None):
    """Parse ``key = value`` lines; values are JSON scalars (bare strings allowed)."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ContractError(f"malformed config: {exc}") from exc
    changes = {}
    for key, raw in parser.items("config"):
        try:
            changes[key] = json.loads(raw)
        except json.JSONDecodeError:
            changes[key] = raw
    return (base or TrainConfig()).replace(**changes)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read(), base)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_config(cfg))
