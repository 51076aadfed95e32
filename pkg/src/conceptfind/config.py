"""Pipeline configuration: one YAML file drives every stage.

Unknown keys are rejected so typos fail loudly.  The canonical JSON dump
of the parsed config is hashed into every artifact, and per-stage seeds
are derived from the master seed so stages stay independently
reproducible.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .artifacts import config_hash as _hash_text
from .artifacts import derive_seed
from .corpus import ConceptSpec
from .errors import ConfigError


@dataclass
class ConceptConfig:
    name: str
    slot: int
    attributes: list[str]
    mask: str
    optional: bool = False
    ordered: bool = False
    slot_overrides: dict[str, int] = field(default_factory=dict)


@dataclass
class CorpusConfig:
    n_items: int = 2000
    noise_sigma: float = 0.05
    height: int = 8
    width: int = 8
    channels: int = 64
    concepts: list[ConceptConfig] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass
class Word2vecConfig:
    dim: int = 64
    window: int = 1  # 0 = whole description
    negatives: int = 5
    epochs: int = 15
    lr: float = 0.025
    min_count: int = 5


@dataclass
class EmbeddingConfig:
    embed_dim: int = 64
    lr: float = 0.05
    lr_decay_factor: float = 2.0
    lr_decay_every: int = 8
    batch_size: int = 32
    margin: float = 0.2
    epochs: int = 30


@dataclass
class ClusterConfig:
    k: int = 6
    restarts: int = 10


@dataclass
class SubspaceConfig:
    hidden: int = 128
    lr: float = 0.1
    epochs: int = 10
    neg_ratio: float = 0.5
    batch_size: int = 8


@dataclass
class EvaluateConfig:
    ks: list[int] = field(default_factory=lambda: [1, 5, 10, 20, 30, 40, 50])
    gallery_split: str = "test"


@dataclass
class PipelineConfig:
    master_seed: int = 7
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    word2vec: Word2vecConfig = field(default_factory=Word2vecConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    def seed_for(self, module: str) -> int:
        return derive_seed(self.master_seed, module)

    def canonical(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    def hash(self) -> str:
        return _hash_text(self.canonical())


def _from_dict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        spot = f"{where}.{name}"
        ftype = known[name].type
        if name == "concepts":
            value = [_from_dict(ConceptConfig, c, f"{spot}[{i}]")
                     for i, c in enumerate(value)]
        elif ftype in ("CorpusConfig", "Word2vecConfig", "EmbeddingConfig",
                       "ClusterConfig", "SubspaceConfig", "EvaluateConfig"):
            value = _from_dict(globals()[ftype], value, spot)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    cfg = _from_dict(PipelineConfig, data, "config")
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    c = cfg.corpus
    if c.n_items < 1:
        raise ConfigError("corpus.n_items must be >= 1")
    if c.noise_sigma < 0:
        raise ConfigError("corpus.noise_sigma must be >= 0")
    if not c.concepts:
        raise ConfigError("corpus.concepts is empty")
    for field_name in ("dim", "negatives", "epochs"):
        if getattr(cfg.word2vec, field_name) < 0:
            raise ConfigError(f"word2vec.{field_name} must be >= 0")
    if cfg.cluster.k < 1:
        raise ConfigError("cluster.k must be >= 1")
    if not cfg.evaluate.ks:
        raise ConfigError("evaluate.ks is empty")


def parse_mask(text: str, height: int, width: int) -> np.ndarray:
    """Mask DSL: "full" or "+"-joined "rect:r0,c0,r1,c1" (inclusive)."""
    mask = np.zeros((height, width), dtype=bool)
    if text.strip() == "full":
        mask[:] = True
        return mask
    for part in text.split("+"):
        part = part.strip()
        if not part.startswith("rect:"):
            raise ConfigError(f"bad mask spec {text!r}")
        try:
            r0, c0, r1, c1 = (int(x) for x in part[len("rect:"):].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad mask spec {part!r}") from exc
        if not (0 <= r0 <= r1 < height and 0 <= c0 <= c1 < width):
            raise ConfigError(f"mask rect {part!r} out of bounds")
        mask[r0:r1 + 1, c0:c1 + 1] = True
    return mask


def build_concept_specs(corpus_cfg: CorpusConfig) -> list[ConceptSpec]:
    specs = []
    for concept in corpus_cfg.concepts:
        specs.append(ConceptSpec(
            name=concept.name,
            attributes=tuple(concept.attributes),
            spatial_mask=parse_mask(concept.mask, corpus_cfg.height,
                                    corpus_cfg.width),
            semantic_slot=concept.slot,
            optional=concept.optional,
            ordered=concept.ordered,
            slot_overrides=dict(concept.slot_overrides),
        ))
    return specs
