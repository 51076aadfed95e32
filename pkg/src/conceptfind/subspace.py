"""Per-concept classifiers over frozen image embeddings.

Each discovered concept gets a one-hidden-layer softmax network that
classifies which of the concept's attributes an image shows, with one
extra class for none-of-above.  The hidden activations double as the
concept-specific similarity features used for structured browsing.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import ArtifactReader, ArtifactWriter
from .corpus import Dataset
from .embedding import EmbeddingModel, project_image
from .errors import ConfigError, EmptySupportError

MAGIC = "CFSS"
VERSION = 1

HIDDEN_UNITS = 128

log = logging.getLogger(__name__)


@dataclass
class SubspaceModel:
    concept_id: int
    attribute_ids: tuple[int, ...]  # class order; class len(...) is none-of-above
    w_h: np.ndarray  # (D, hidden)
    b_h: np.ndarray  # (hidden,)
    w_s: np.ndarray  # (hidden, n + 1)
    b_s: np.ndarray  # (n + 1,)

    @property
    def none_class(self) -> int:
        return len(self.attribute_ids)


def subspace_feature(model: SubspaceModel, x: np.ndarray) -> np.ndarray:
    """Hidden-layer representation (affine + ReLU)."""
    return np.maximum(0.0, x @ model.w_h + model.b_h)


def predict(model: SubspaceModel, x: np.ndarray) -> np.ndarray:
    """Softmax over the concept's attributes plus none-of-above."""
    hidden = subspace_feature(model, x)
    logits = hidden @ model.w_s + model.b_s
    logits = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(logits)
    return expd / expd.sum(axis=-1, keepdims=True)


def xent_loss_and_grads(model: SubspaceModel, xs: np.ndarray,
                        labels: np.ndarray):
    """Mean cross-entropy and gradients for a batch; manual backprop."""
    batch = xs.shape[0]
    hidden_pre = xs @ model.w_h + model.b_h
    hidden = np.maximum(0.0, hidden_pre)
    logits = hidden @ model.w_s + model.b_s
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(batch), labels].mean())

    probs = np.exp(log_probs)
    g_logits = probs.copy()
    g_logits[np.arange(batch), labels] -= 1.0
    g_logits /= batch

    g_ws = hidden.T @ g_logits
    g_bs = g_logits.sum(axis=0)
    g_hidden = g_logits @ model.w_s.T
    g_hidden[hidden_pre <= 0] = 0.0
    g_wh = xs.T @ g_hidden
    g_bh = g_hidden.sum(axis=0)
    return loss, g_wh, g_bh, g_ws, g_bs


def _weights_digest(model: EmbeddingModel) -> str:
    h = hashlib.sha256()
    h.update(model.w_i.tobytes())
    h.update(model.w_t.tobytes())
    return h.hexdigest()


def training_examples(concept_attrs: tuple[int, ...], dataset: Dataset,
                      neg_ratio: float, rng: np.random.Generator):
    """(item id, class label) pairs for one concept's training set.

    Items holding exactly one concept attribute are positives; items with
    none feed the none-of-above class, subsampled at neg_ratio per
    positive.  Items with two or more concept attributes are ambiguous
    and excluded with a warning.
    """
    attr_set = set(concept_attrs)
    label_of = {a: i for i, a in enumerate(concept_attrs)}
    positives: list[tuple[int, int]] = []
    negative_pool: list[int] = []
    for i in dataset.splits["train"]:
        present = attr_set.intersection(dataset.items[i].description)
        if len(present) > 1:
            log.warning("item %d holds %d attributes of one concept; excluded",
                        i, len(present))
            continue
        if present:
            positives.append((i, label_of[present.pop()]))
        else:
            negative_pool.append(i)
    n_neg = min(len(negative_pool), int(round(neg_ratio * len(positives))))
    none_label = len(concept_attrs)
    negatives = []
    if n_neg > 0:
        chosen = rng.choice(len(negative_pool), size=n_neg, replace=False)
        negatives = [(negative_pool[j], none_label) for j in sorted(chosen)]
    return positives, negatives


def train_subspace(concept_id: int, concept_attrs, embedding_model: EmbeddingModel,
                   dataset: Dataset, gap_features: np.ndarray,
                   neg_ratio: float = 0.5, lr: float = 0.1, epochs: int = 10,
                   hidden: int = HIDDEN_UNITS, batch_size: int = 8,
                   seed: int = 0) -> SubspaceModel:
    """SGD over frozen embeddings; the embedding weights are asserted intact."""
    concept_attrs = tuple(sorted(concept_attrs))
    if len(concept_attrs) < 2:
        raise ConfigError(f"concept {concept_id} has fewer than 2 attributes")
    before = _weights_digest(embedding_model)

    rng = np.random.default_rng(seed)
    positives, negatives = training_examples(concept_attrs, dataset,
                                             neg_ratio, rng)
    if not positives:
        raise EmptySupportError(f"concept {concept_id} has no positive items")
    examples = positives + negatives
    xs = np.stack([project_image(gap_features[i], embedding_model.w_i)
                   for i, _ in examples])
    ys = np.array([label for _, label in examples])

    dim = embedding_model.embed_dim
    n_classes = len(concept_attrs) + 1
    # He-scaled init: unit-norm inputs with the fixed 0.1 rate need hidden
    # activations of order one to train within the short epoch budget.
    model = SubspaceModel(
        concept_id=concept_id,
        attribute_ids=concept_attrs,
        w_h=rng.normal(0.0, np.sqrt(2.0 / dim), (dim, hidden)),
        b_h=np.zeros(hidden),
        w_s=rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, n_classes)),
        b_s=np.zeros(n_classes),
    )
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            _, g_wh, g_bh, g_ws, g_bs = xent_loss_and_grads(model, xs[idx], ys[idx])
            model.w_h -= lr * g_wh
            model.b_h -= lr * g_bh
            model.w_s -= lr * g_ws
            model.b_s -= lr * g_bs

    after = _weights_digest(embedding_model)
    if before != after:
        raise AssertionError("embedding weights changed during subspace training")
    return model


def train_all_subspaces(assignment, embedding_model: EmbeddingModel,
                        dataset: Dataset, gap_features: np.ndarray,
                        neg_ratio: float = 0.5, lr: float = 0.1,
                        epochs: int = 10, hidden: int = HIDDEN_UNITS,
                        batch_size: int = 8, seed: int = 0) -> dict[int, SubspaceModel]:
    """One subspace per discovered cluster with at least two attributes."""
    models: dict[int, SubspaceModel] = {}
    for cluster_id in range(assignment.k):
        attrs = assignment.members(cluster_id)
        if len(attrs) < 2:
            log.warning("cluster %d has %d attribute(s); subspace skipped",
                        cluster_id, len(attrs))
            continue
        models[cluster_id] = train_subspace(
            cluster_id, attrs, embedding_model, dataset, gap_features,
            neg_ratio=neg_ratio, lr=lr, epochs=epochs, hidden=hidden,
            batch_size=batch_size, seed=seed + cluster_id)
    return models


def save_subspace(model: SubspaceModel, path: str | Path,
                  vhash: str, chash: str) -> None:
    with open(path, "wb") as fh:
        w = ArtifactWriter(fh, MAGIC, VERSION, vhash, chash)
        w.u32(model.concept_id)
        w.u32(len(model.attribute_ids))
        w.u32(model.w_h.shape[0])
        w.u32(model.w_h.shape[1])
        w.u32s(model.attribute_ids)
        w.f32s(model.w_h)
        w.f32s(model.b_h)
        w.f32s(model.w_s)
        w.f32s(model.b_s)


def load_subspace(path: str | Path) -> tuple[SubspaceModel, str, str]:
    with open(path, "rb") as fh:
        r = ArtifactReader(fh, MAGIC, VERSION, str(path))
        concept_id = r.u32()
        n = r.u32()
        dim = r.u32()
        hidden = r.u32()
        attrs = tuple(int(a) for a in r.u32s(n))
        w_h = r.f32s((dim, hidden))
        b_h = r.f32s((hidden,))
        w_s = r.f32s((hidden, n + 1))
        b_s = r.f32s((n + 1,))
        r.expect_eof()
    model = SubspaceModel(concept_id=concept_id, attribute_ids=attrs,
                          w_h=w_h, b_h=b_h, w_s=w_s, b_s=b_s)
    return model, r.vocab_hash, r.config_hash
