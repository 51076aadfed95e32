"""Pooled features and attribute activation maps.

The pooled feature of a grid sums each channel over all cells.  Because
the image projection is linear in that sum, the image-attribute score
decomposes cell by cell into an activation map whose total equals the
score computed on the unnormalized projection; per-image maps averaged
over an attribute's positive items give its spatial signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import ArtifactReader, ArtifactWriter
from .corpus import Dataset
from .embedding import EmbeddingModel
from .errors import DegenerateFeatureError, EmptySupportError

MAGIC = "CFAM"
VERSION = 1


@dataclass
class AttributeMap:
    grid: np.ndarray  # (H, W)
    kind: str  # "eaam" | "aam"
    attribute_id: int
    support_count: int = 1


def gap(feature_map: np.ndarray) -> np.ndarray:
    """Per-channel spatial sum (the pooled feature f)."""
    return feature_map.sum(axis=(0, 1))


def gap_matrix(dataset: Dataset) -> np.ndarray:
    """Pooled features for every item, indexed by item id."""
    return np.stack([gap(item.feature_map) for item in dataset.items])


def _unit(row: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(row)
    if norm == 0:
        raise DegenerateFeatureError("attribute row is zero")
    return row / norm


def eaam(feature_map: np.ndarray, w_i: np.ndarray,
         attribute_row: np.ndarray, attribute_id: int = -1) -> AttributeMap:
    """Per-image activation map of one attribute.

    The attribute row is unit-normalized; the cells then sum to the dot
    product of the normalized row with the unnormalized image projection.
    """
    height, width, channels = feature_map.shape
    w_hat = _unit(attribute_row)
    cells = feature_map.reshape(height * width, channels) @ w_i  # (HW, D)
    grid = (cells @ w_hat).reshape(height, width)
    return AttributeMap(grid=grid, kind="eaam", attribute_id=attribute_id)


def aam(attribute_id: int, dataset: Dataset, model: EmbeddingModel) -> AttributeMap:
    """Mean of the attribute's per-image maps over its positive training items."""
    row = model.w_t[attribute_id]
    positives = [i for i in dataset.splits["train"]
                 if attribute_id in dataset.items[i].description]
    if not positives:
        raise EmptySupportError(
            f"attribute {attribute_id} ({dataset.vocab.get(attribute_id)}) "
            "has no positive training item")
    height, width, _ = dataset.dims
    acc = np.zeros((height, width))
    for i in positives:
        acc += eaam(dataset.items[i].feature_map, model.w_i, row,
                    attribute_id).grid
    return AttributeMap(grid=acc / len(positives), kind="aam",
                        attribute_id=attribute_id,
                        support_count=len(positives))


def compute_all_aams(dataset: Dataset,
                     model: EmbeddingModel) -> tuple[dict[int, AttributeMap], list[int]]:
    """AAMs for the whole vocabulary; unsupported attributes go to a skip list.

    One pass over the training items: each item contributes its map to
    every attribute in its own description.
    """
    height, width, channels = dataset.dims
    w_hats = np.stack([_unit(model.w_t[a]) for a in sorted(dataset.vocab)])
    id_order = sorted(dataset.vocab)
    row_of = {a: i for i, a in enumerate(id_order)}

    acc = np.zeros((len(id_order), height, width))
    counts = np.zeros(len(id_order), dtype=np.int64)
    for i in dataset.splits["train"]:
        item = dataset.items[i]
        cells = item.feature_map.reshape(height * width, channels) @ model.w_i
        rows = [row_of[a] for a in item.description]
        grids = (cells @ w_hats[rows].T).T.reshape(len(rows), height, width)
        for r, g in zip(rows, grids):
            acc[r] += g
            counts[r] += 1

    maps: dict[int, AttributeMap] = {}
    skipped: list[int] = []
    for attr_id in id_order:
        r = row_of[attr_id]
        if counts[r] == 0:
            skipped.append(attr_id)
            continue
        maps[attr_id] = AttributeMap(grid=acc[r] / counts[r], kind="aam",
                                     attribute_id=attr_id,
                                     support_count=int(counts[r]))
    return maps, skipped


def positive_mass_fraction(amap: AttributeMap, mask: np.ndarray) -> float:
    """Share of the map's positive mass that falls inside a binary mask."""
    positive = np.maximum(amap.grid, 0.0)
    total = positive.sum()
    if total == 0:
        return 0.0
    return float(positive[mask.astype(bool)].sum() / total)


def save_aams(maps: dict[int, AttributeMap], skipped: list[int],
              dims: tuple[int, int, int], path: str | Path,
              vhash: str, chash: str) -> None:
    height, width, _ = dims
    with open(path, "wb") as fh:
        w = ArtifactWriter(fh, MAGIC, VERSION, vhash, chash)
        w.u32(height)
        w.u32(width)
        w.u32(len(maps) + len(skipped))
        for attr_id in sorted(maps):
            amap = maps[attr_id]
            w.u32(attr_id)
            w.u32(amap.support_count)
            w.f32s(amap.grid)
        for attr_id in sorted(skipped):
            w.u32(attr_id)
            w.u32(0)


def load_aams(path: str | Path) -> tuple[dict[int, AttributeMap], list[int], str, str]:
    with open(path, "rb") as fh:
        r = ArtifactReader(fh, MAGIC, VERSION, str(path))
        height = r.u32()
        width = r.u32()
        count = r.u32()
        maps: dict[int, AttributeMap] = {}
        skipped: list[int] = []
        for _ in range(count):
            attr_id = r.u32()
            support = r.u32()
            if support == 0:
                skipped.append(attr_id)
                continue
            grid = r.f32s((height, width))
            maps[attr_id] = AttributeMap(grid=grid, kind="aam",
                                         attribute_id=attr_id,
                                         support_count=support)
        r.expect_eof()
    return maps, skipped, r.vocab_hash, r.config_hash
