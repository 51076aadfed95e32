"""Synthetic corpus with planted concepts, plus on-disk (de)serialization.

Items are H x W x K activation grids paired with short attribute-label
descriptions.  Each concept owns a spatial mask and a description slot;
each attribute owns a dedicated channel, so the planted structure is
exactly recoverable and every downstream stage can be scored against
known ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

MAGIC = "CFDS"
VERSION = 1

# Presence probability for concepts marked optional.
OPTIONAL_PRESENCE = 0.5

SPLIT_FRACTIONS = {"train": 0.80, "val": 0.05, "test": 0.15}


@dataclass(frozen=True, eq=False)
class ConceptSpec:
    """One planted concept: a group of attributes sharing a spatial mask.

    ``semantic_slot`` fixes where the concept's word appears in generated
    descriptions.  ``slot_overrides`` may scatter individual attributes to
    other slots, which makes their co-occurrence contexts diverge from the
    rest of the concept.  ``ordered`` concepts give attribute i a cumulative
    channel signature (channels of attributes 0..i), planting a graded,
    one-dimensional structure such as garment length.
    """

    name: str
    attributes: tuple[str, ...]
    spatial_mask: np.ndarray  # H x W, bool
    semantic_slot: int
    optional: bool = False
    ordered: bool = False
    slot_overrides: dict[str, int] = field(default_factory=dict)

    def slot_of(self, attribute: str) -> int:
        return self.slot_overrides.get(attribute, self.semantic_slot)


@dataclass
class Item:
    id: int
    feature_map: np.ndarray  # H x W x K, float32
    description: tuple[int, ...]  # attribute ids, slot order


@dataclass
class Dataset:
    items: list[Item]
    vocab: dict[int, str]
    dims: tuple[int, int, int]  # (H, W, K)
    ground_truth: dict[int, int] | None
    splits: dict[str, list[int]]

    def label(self, attr_id: int) -> str:
        return self.vocab[attr_id]

    def attr_id(self, label: str) -> int:
        return self._label_index()[label]

    def _label_index(self) -> dict[str, int]:
        if not hasattr(self, "_labels"):
            self._labels = {v: k for k, v in self.vocab.items()}
        return self._labels

    def item(self, item_id: int) -> Item:
        return self.items[item_id]

    def split_of(self, item_id: int) -> str:
        for name, ids in self.splits.items():
            if item_id in self._split_sets()[name]:
                return name
        raise KeyError(item_id)

    def _split_sets(self) -> dict[str, set[int]]:
        if not hasattr(self, "_splitsets"):
            self._splitsets = {n: set(ids) for n, ids in self.splits.items()}
        return self._splitsets


@dataclass(frozen=True)
class QueryPair:
    """Two items whose descriptions differ in exactly one attribute."""

    query_id: int
    target_id: int
    added_attribute: int
    removed_attribute: int


def _validate_spec(spec: list[ConceptSpec], dims: tuple[int, int, int]) -> None:
    height, width, channels = dims
    if not spec:
        raise ConfigError("concept spec list is empty")
    seen_labels: set[str] = set()
    seen_slots: set[int] = set()
    total_attrs = 0
    for concept in spec:
        if len(concept.attributes) < 2:
            raise ConfigError(f"concept {concept.name!r} needs >= 2 attributes")
        if concept.spatial_mask.shape != (height, width):
            raise ConfigError(
                f"concept {concept.name!r} mask shape {concept.spatial_mask.shape} "
                f"!= ({height}, {width})")
        if not concept.spatial_mask.any():
            raise ConfigError(f"concept {concept.name!r} mask has no active cell")
        if concept.semantic_slot in seen_slots:
            raise ConfigError(f"duplicate semantic slot {concept.semantic_slot}")
        seen_slots.add(concept.semantic_slot)
        for attr in concept.attributes:
            if attr in seen_labels:
                raise ConfigError(f"attribute label {attr!r} used twice")
            seen_labels.add(attr)
        for attr in concept.slot_overrides:
            if attr not in concept.attributes:
                raise ConfigError(
                    f"slot override for unknown attribute {attr!r} in {concept.name!r}")
        total_attrs += len(concept.attributes)
    if channels < total_attrs:
        raise ConfigError(
            f"K={channels} channels cannot host {total_attrs} attributes")


def generate_synthetic(spec: list[ConceptSpec], n_items: int,
                       noise_sigma: float, seed: int,
                       dims: tuple[int, int, int] = (8, 8, 64)) -> Dataset:
    """Sample a planted dataset; identical (spec, seed) gives identical bytes."""
    _validate_spec(spec, dims)
    height, width, channels = dims
    rng = np.random.default_rng(seed)

    vocab: dict[int, str] = {}
    ground_truth: dict[int, int] = {}
    channel_of: dict[str, int] = {}
    for concept_idx, concept in enumerate(spec):
        for attr in concept.attributes:
            attr_id = len(vocab)
            vocab[attr_id] = attr
            ground_truth[attr_id] = concept_idx
            channel_of[attr] = attr_id

    # Cumulative signature for ordered concepts, single channel otherwise.
    signature: dict[str, list[int]] = {}
    for concept in spec:
        for j, attr in enumerate(concept.attributes):
            if concept.ordered:
                signature[attr] = [channel_of[a] for a in concept.attributes[: j + 1]]
            else:
                signature[attr] = [channel_of[attr]]

    label_to_id = {v: k for k, v in vocab.items()}
    items: list[Item] = []
    for item_id in range(n_items):
        chosen: list[tuple[int, str]] = []  # (slot, attribute label)
        for concept in spec:
            if concept.optional and rng.random() >= OPTIONAL_PRESENCE:
                continue
            attr = concept.attributes[int(rng.integers(len(concept.attributes)))]
            chosen.append((concept.slot_of(attr), attr))
        chosen.sort(key=lambda pair: (pair[0], pair[1]))

        fmap = np.zeros((height, width, channels), dtype=np.float32)
        for concept in spec:
            present = [a for _, a in chosen if a in concept.attributes]
            if not present:
                continue
            mask = concept.spatial_mask.astype(np.float32)
            for ch in signature[present[0]]:
                fmap[:, :, ch] += mask
        if noise_sigma > 0:
            fmap += rng.normal(0.0, noise_sigma,
                               size=fmap.shape).astype(np.float32)

        description = tuple(label_to_id[a] for _, a in chosen)
        items.append(Item(id=item_id, feature_map=fmap, description=description))

    ids = rng.permutation(n_items)
    n_train = int(round(SPLIT_FRACTIONS["train"] * n_items))
    n_val = int(round(SPLIT_FRACTIONS["val"] * n_items))
    splits = {
        "train": sorted(int(i) for i in ids[:n_train]),
        "val": sorted(int(i) for i in ids[n_train:n_train + n_val]),
        "test": sorted(int(i) for i in ids[n_train + n_val:]),
    }
    return Dataset(items=items, vocab=vocab, dims=dims,
                   ground_truth=ground_truth, splits=splits)


def save_dataset(dataset: Dataset, path: str | Path,
                 config_hash: str | None = None) -> None:
    """Write the directory format: manifest, features.bin, descriptions."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    height, width, channels = dataset.dims

    lines = [f"{MAGIC} {VERSION}",
             f"dims {height} {width} {channels}",
             f"nitems {len(dataset.items)}"]
    if config_hash is not None:
        lines.append(f"config_hash {config_hash}")
    for attr_id in sorted(dataset.vocab):
        lines.append(f"vocab {attr_id} {dataset.vocab[attr_id]}")
    if dataset.ground_truth is not None:
        for attr_id in sorted(dataset.ground_truth):
            lines.append(f"truth {attr_id} {dataset.ground_truth[attr_id]}")
    for split in sorted(dataset.splits):
        members = " ".join(str(i) for i in dataset.splits[split])
        lines.append(f"split {split} {members}")
    (root / "manifest").write_text("\n".join(lines) + "\n")

    with open(root / "features.bin", "wb") as fh:
        for item in dataset.items:
            fh.write(np.ascontiguousarray(item.feature_map, dtype="<f4").tobytes())

    with open(root / "descriptions", "w") as fh:
        for item in dataset.items:
            fh.write(" ".join([str(item.id)] + [str(a) for a in item.description]))
            fh.write("\n")


def dataset_config_hash(path: str | Path) -> str | None:
    """Config hash recorded in a saved dataset's manifest, if any."""
    for line in (Path(path) / "manifest").read_text().splitlines():
        if line.startswith("config_hash "):
            return line.split()[1]
    return None


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest"
    if not manifest_path.exists():
        raise FormatError(f"{manifest_path}: missing manifest")
    lines = manifest_path.read_text().splitlines()
    if not lines:
        raise FormatError(f"{manifest_path}: empty manifest")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise FormatError(f"{manifest_path}: bad magic line {lines[0]!r}")
    if head[1] != str(VERSION):
        raise FormatError(f"{manifest_path}: unsupported version {head[1]}")

    dims: tuple[int, int, int] | None = None
    n_items: int | None = None
    vocab: dict[int, str] = {}
    ground_truth: dict[int, int] = {}
    splits: dict[str, list[int]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "dims":
                dims = (int(parts[1]), int(parts[2]), int(parts[3]))
            elif kind == "nitems":
                n_items = int(parts[1])
            elif kind == "config_hash":
                pass
            elif kind == "vocab":
                vocab[int(parts[1])] = parts[2]
            elif kind == "truth":
                ground_truth[int(parts[1])] = int(parts[2])
            elif kind == "split":
                splits[parts[1]] = [int(x) for x in parts[2:]]
            else:
                raise FormatError(
                    f"{manifest_path}:{lineno}: unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{manifest_path}:{lineno}: {exc}") from exc
    if dims is None or n_items is None or not vocab:
        raise FormatError(f"{manifest_path}: missing dims/nitems/vocab records")

    height, width, channels = dims
    item_floats = height * width * channels
    raw = (root / "features.bin").read_bytes() if (root / "features.bin").exists() else None
    if raw is None:
        raise FormatError(f"{root / 'features.bin'}: missing")
    if len(raw) != 4 * item_floats * n_items:
        raise FormatError(
            f"{root / 'features.bin'}: {len(raw)} bytes, expected "
            f"{4 * item_floats * n_items} for {n_items} items of dims {dims}")
    feats = np.frombuffer(raw, dtype="<f4").reshape(n_items, height, width, channels)

    desc_path = root / "descriptions"
    if not desc_path.exists():
        raise FormatError(f"{desc_path}: missing")
    descriptions: dict[int, tuple[int, ...]] = {}
    for lineno, line in enumerate(desc_path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            item_id = int(parts[0])
            attrs = tuple(int(x) for x in parts[1:])
        except ValueError as exc:
            raise FormatError(f"{desc_path}:{lineno}: {exc}") from exc
        if not attrs:
            raise FormatError(f"{desc_path}:{lineno}: empty description")
        if len(set(attrs)) != len(attrs):
            raise FormatError(f"{desc_path}:{lineno}: duplicate attribute id")
        for attr in attrs:
            if attr not in vocab:
                raise FormatError(
                    f"{desc_path}:{lineno}: unknown attribute id {attr}")
        descriptions[item_id] = attrs
    if sorted(descriptions) != list(range(n_items)):
        raise FormatError(f"{desc_path}: item ids do not cover 0..{n_items - 1}")

    all_split_ids = [i for ids in splits.values() for i in ids]
    if sorted(all_split_ids) != list(range(n_items)):
        raise FormatError(f"{manifest_path}: splits do not partition item ids")

    items = [Item(id=i, feature_map=np.array(feats[i], dtype=np.float32),
                  description=descriptions[i])
             for i in range(n_items)]
    return Dataset(items=items, vocab=vocab, dims=dims,
                   ground_truth=ground_truth or None, splits=splits)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    if a.vocab != b.vocab or a.dims != b.dims or a.splits != b.splits:
        return False
    if (a.ground_truth or None) != (b.ground_truth or None):
        return False
    if len(a.items) != len(b.items):
        return False
    for x, y in zip(a.items, b.items):
        if x.id != y.id or x.description != y.description:
            return False
        if not np.array_equal(x.feature_map, y.feature_map):
            return False
    return True


def make_query_pairs(dataset: Dataset, split: str) -> list[QueryPair]:
    """All ordered in-split pairs differing in exactly one same-concept attribute."""
    ids = dataset.splits[split]
    if not ids:
        raise ConfigError(f"split {split!r} is empty")
    desc_sets = {i: frozenset(dataset.items[i].description) for i in ids}
    truth = dataset.ground_truth
    pairs: list[QueryPair] = []
    for q in ids:
        for t in ids:
            if q == t:
                continue
            removed = desc_sets[q] - desc_sets[t]
            added = desc_sets[t] - desc_sets[q]
            if len(removed) != 1 or len(added) != 1:
                continue
            rem, add = next(iter(removed)), next(iter(added))
            if truth is not None and truth[rem] != truth[add]:
                continue
            pairs.append(QueryPair(query_id=q, target_id=t,
                                   added_attribute=add, removed_attribute=rem))
    pairs.sort(key=lambda p: (p.query_id, p.target_id))
    return pairs
