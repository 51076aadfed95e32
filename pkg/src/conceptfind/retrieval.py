"""Attribute-feedback retrieval over the joint embedding space.

The baseline ranks the gallery by cosine against query + added-attribute;
the concept-aware method first asks the attribute's concept subspace
which attribute the query image already shows, and subtracts it, unless
the subspace answers none-of-above, in which case it degenerates to the
baseline ranking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, QueryPair
from .embedding import EmbeddingModel, project_image
from .errors import ConfigError
from .subspace import SubspaceModel, predict

log = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10, 20, 30, 40, 50)


@dataclass(frozen=True)
class Query:
    query_id: int
    added_attribute: int  # w_p
    gallery: tuple[int, ...]


@dataclass
class RankedResult:
    items: list[tuple[int, float]]  # (item id, score), non-increasing
    detected_negative: int | None
    method: str  # "baseline" | "concept_aware"
    fallback: bool = False


@dataclass
class GalleryCache:
    """Normalized image embeddings for every item, indexed by item id."""

    embeddings: np.ndarray  # (n_items, D)

    def vector(self, item_id: int) -> np.ndarray:
        return self.embeddings[item_id]


def build_gallery(dataset: Dataset, model: EmbeddingModel,
                  gap_features: np.ndarray) -> GalleryCache:
    rows = np.stack([project_image(gap_features[item.id], model.w_i)
                     for item in dataset.items])
    return GalleryCache(embeddings=rows)


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigError("composite query vector is zero")
    return vec / norm


def _rank(composite: np.ndarray, cache: GalleryCache, query: Query) -> list[tuple[int, float]]:
    gallery = list(query.gallery)
    scores = cache.embeddings[gallery] @ composite
    order = np.lexsort((gallery, -scores))
    return [(int(gallery[j]), float(scores[j])) for j in order]


def baseline_query(query: Query, model: EmbeddingModel,
                   cache: GalleryCache) -> RankedResult:
    """Rank by cosine against normalize(x_q + attribute direction)."""
    if not query.gallery:
        raise ConfigError("empty gallery")
    if not (0 <= query.added_attribute < model.n_attributes):
        raise ConfigError(f"unknown attribute id {query.added_attribute}")
    x_q = cache.vector(query.query_id)
    composite = _normalize(x_q + model.attribute_direction(query.added_attribute))
    return RankedResult(items=_rank(composite, cache, query),
                        detected_negative=None, method="baseline")


def concept_query(query: Query, model: EmbeddingModel, cache: GalleryCache,
                  subspaces: dict[int, SubspaceModel],
                  attribute_concept: dict[int, int]) -> RankedResult:
    """Detect the implicit negative attribute and subtract it before ranking.

    Falls back to the baseline ranking when the added attribute has no
    concept subspace or the subspace predicts none-of-above.
    """
    if not (0 <= query.added_attribute < model.n_attributes):
        raise ConfigError(f"unknown attribute id {query.added_attribute}")
    concept_id = attribute_concept.get(query.added_attribute)
    if concept_id is None or concept_id not in subspaces:
        log.warning("attribute %d has no trained subspace; using baseline",
                    query.added_attribute)
        base = baseline_query(query, model, cache)
        return RankedResult(items=base.items, detected_negative=None,
                            method="concept_aware", fallback=True)

    sub = subspaces[concept_id]
    x_q = cache.vector(query.query_id)
    probs = predict(sub, x_q)
    winner = int(probs.argmax())
    if winner == sub.none_class:
        base = baseline_query(query, model, cache)
        return RankedResult(items=base.items, detected_negative=None,
                            method="concept_aware", fallback=True)

    w_n = sub.attribute_ids[winner]
    composite = _normalize(x_q
                           + model.attribute_direction(query.added_attribute)
                           - model.attribute_direction(w_n))
    return RankedResult(items=_rank(composite, cache, query),
                        detected_negative=int(w_n), method="concept_aware")


@dataclass
class TopkReport:
    accuracy: dict[str, dict[int, float]]  # method -> k -> accuracy
    n_queries: int
    fallback_count: int


def evaluate_topk(pairs: list[QueryPair], dataset: Dataset,
                  model: EmbeddingModel, cache: GalleryCache,
                  subspaces: dict[int, SubspaceModel],
                  attribute_concept: dict[int, int],
                  gallery_split: str = "test",
                  ks: tuple[int, ...] = DEFAULT_KS) -> TopkReport:
    """Top-k accuracy for both methods over query pairs.

    A retrieved item whose description equals the target's counts as a
    hit, so duplicated products are not penalized.
    """
    if not pairs:
        raise ConfigError("no query pairs to evaluate")
    split_ids = list(dataset.splits[gallery_split])
    desc_sets = {i: frozenset(dataset.items[i].description) for i in split_ids}

    hits: dict[str, list[list[bool]]] = {"baseline": [], "concept_aware": []}
    fallback_count = 0
    for pair in pairs:
        # The query image itself is left out: retrieving it is never a hit.
        gallery = tuple(i for i in split_ids if i != pair.query_id)
        query = Query(query_id=pair.query_id,
                      added_attribute=pair.added_attribute, gallery=gallery)
        target_desc = desc_sets[pair.target_id]
        results = {
            "baseline": baseline_query(query, model, cache),
            "concept_aware": concept_query(query, model, cache, subspaces,
                                           attribute_concept),
        }
        fallback_count += results["concept_aware"].fallback
        for method, result in results.items():
            row = [desc_sets[item_id] == target_desc
                   for item_id, _ in result.items]
            hits[method].append(row)

    accuracy: dict[str, dict[int, float]] = {}
    for method, rows in hits.items():
        accuracy[method] = {}
        for k in ks:
            found = sum(any(row[:k]) for row in rows)
            accuracy[method][k] = found / len(rows)
    return TopkReport(accuracy=accuracy, n_queries=len(pairs),
                      fallback_count=fallback_count)


def write_topk_report(report: TopkReport, path) -> None:
    lines = ["method\tk\taccuracy\tn_queries"]
    for method in sorted(report.accuracy):
        for k in sorted(report.accuracy[method]):
            lines.append(f"{method}\t{k}\t{report.accuracy[method][k]:.6f}"
                         f"\t{report.n_queries}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
