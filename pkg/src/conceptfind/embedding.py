"""Joint visual-semantic embedding trained with a bidirectional hinge loss.

Images enter as pooled feature vectors f and are projected by W_I; a
description is the mean of its attribute rows of W_T.  Both sides are
unit-normalized and compared by cosine.  Gradients are derived by hand
through the hinge, the cosine and the normalizations, so the whole module
is dependency-free and finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import ArtifactReader, ArtifactWriter
from .corpus import Dataset
from .errors import ConfigError, DegenerateFeatureError, DivergenceError

MAGIC = "CFEM"
VERSION = 1


@dataclass
class EmbeddingModel:
    w_i: np.ndarray  # (K', D): pooled features -> embedding
    w_t: np.ndarray  # (M, D): one row per attribute
    margin: float

    @property
    def feature_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w_i.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.w_t.shape[0]

    def attribute_direction(self, attr_id: int) -> np.ndarray:
        """Unit-normalized row of W_T for vector arithmetic."""
        row = self.w_t[attr_id]
        norm = np.linalg.norm(row)
        if norm == 0:
            raise DegenerateFeatureError(f"attribute {attr_id} row is zero")
        return row / norm


@dataclass
class TrainConfig:
    lr: float = 0.05
    lr_decay_factor: float = 2.0
    lr_decay_every: int = 8
    batch_size: int = 32
    margin: float = 0.2
    epochs: int = 30
    embed_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "lr_decay_factor", "lr_decay_every", "batch_size",
                     "margin", "epochs", "embed_dim"):
            if getattr(self, name) <= 0 and name != "epochs":
                raise ConfigError(f"TrainConfig.{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("TrainConfig.epochs must be >= 0")

    def lr_at(self, epoch: int) -> float:
        return self.lr / self.lr_decay_factor ** (epoch // self.lr_decay_every)


def encode_description(description, w_t: np.ndarray) -> np.ndarray:
    """Unit-normalized mean of the description's attribute rows."""
    ids = list(description)
    if not ids:
        raise ConfigError("empty description")
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate attribute id in description")
    if max(ids) >= w_t.shape[0] or min(ids) < 0:
        raise ConfigError("attribute id out of range")
    mean = w_t[ids].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise DegenerateFeatureError("description encodes to the zero vector")
    return mean / norm


def project_image(f: np.ndarray, w_i: np.ndarray,
                  normalize: bool = True) -> np.ndarray:
    if f.shape[0] != w_i.shape[0]:
        raise ConfigError(f"feature length {f.shape[0]} != {w_i.shape[0]}")
    x = f @ w_i
    if not normalize:
        return x
    norm = np.linalg.norm(x)
    if norm == 0:
        raise DegenerateFeatureError("zero image projection has no direction")
    return x / norm


def _normalize_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise DegenerateFeatureError("zero vector cannot be normalized")
    return mat / norms[:, None], norms


def contrastive_loss(feats: np.ndarray, descriptions, w_i: np.ndarray,
                     w_t: np.ndarray, margin: float):
    """Bidirectional hinge over a batch, with in-batch negatives.

    feats: (B, K') pooled image features; descriptions: length-B list of
    attribute-id tuples.  Negatives for each pair are the other batch
    members; in-batch members with an identical description are masked
    out of the hinge (they are not truly non-matching).

    Returns (loss, grad_w_i, grad_w_t); the loss is the Eq-style sum of
    both hinge directions divided by the batch size.
    """
    batch = feats.shape[0]
    if batch < 2:
        raise ConfigError("contrastive loss needs a batch of >= 2 pairs")
    desc_sets = [frozenset(d) for d in descriptions]

    u = feats @ w_i  # unnormalized image projections
    x, u_norms = _normalize_rows(u)
    t = np.stack([w_t[list(d)].mean(axis=0) for d in descriptions])
    v, t_norms = _normalize_rows(t)

    scores = x @ v.T  # (B, B) cosine matrix
    pos = np.diag(scores)

    group_of: dict[frozenset, int] = {}
    groups = np.array([group_of.setdefault(d, len(group_of)) for d in desc_sets])
    same = groups[:, None] == groups[None, :]  # diagonal = the positive pair

    # hinge_img[i, k]: image i anchored against description k
    # hinge_txt[i, k]: description i anchored against image k
    hinge_img = np.maximum(0.0, margin - pos[:, None] + scores)
    hinge_txt = np.maximum(0.0, margin - pos[:, None] + scores.T)
    hinge_img[same] = 0.0
    hinge_txt[same] = 0.0
    loss = (hinge_img.sum() + hinge_txt.sum()) / batch

    act_img = (hinge_img > 0).astype(float)
    act_txt = (hinge_txt > 0).astype(float)
    g_scores = act_img + act_txt.T  # off-diagonal contributions
    diag = -(act_img.sum(axis=1) + act_txt.sum(axis=1))
    np.fill_diagonal(g_scores, diag)
    g_scores /= batch

    g_x = g_scores @ v
    g_v = g_scores.T @ x
    # back through the normalizations
    g_u = (g_x - (g_x * x).sum(axis=1, keepdims=True) * x) / u_norms[:, None]
    g_t = (g_v - (g_v * v).sum(axis=1, keepdims=True) * v) / t_norms[:, None]

    grad_w_i = feats.T @ g_u
    grad_w_t = np.zeros_like(w_t)
    for i, desc in enumerate(descriptions):
        ids = list(desc)
        grad_w_t[ids] += g_t[i] / len(ids)
    return loss, grad_w_i, grad_w_t


def train_embedding(dataset: Dataset, gap_features: np.ndarray,
                    cfg: TrainConfig) -> EmbeddingModel:
    """Mini-batch SGD on the training split; deterministic under cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    k_prime = gap_features.shape[1]
    n_attrs = len(dataset.vocab)
    w_i = rng.uniform(-0.05, 0.05, (k_prime, cfg.embed_dim))
    w_t = rng.uniform(-0.05, 0.05, (n_attrs, cfg.embed_dim))

    train_ids = np.array(dataset.splits["train"])
    descs = {i: dataset.items[i].description for i in train_ids}
    for epoch in range(cfg.epochs):
        alpha = cfg.lr_at(epoch)
        order = rng.permutation(train_ids)
        for start in range(0, len(order), cfg.batch_size):
            ids = order[start:start + cfg.batch_size]
            if len(ids) < 2:
                continue  # no in-batch negatives for a singleton tail
            feats = gap_features[ids]
            batch_descs = [descs[int(i)] for i in ids]
            loss, g_i, g_t = contrastive_loss(feats, batch_descs, w_i, w_t,
                                              cfg.margin)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            w_i -= alpha * g_i
            w_t -= alpha * g_t
    return EmbeddingModel(w_i=w_i, w_t=w_t, margin=cfg.margin)


def mean_epoch_loss(dataset: Dataset, gap_features: np.ndarray,
                    model: EmbeddingModel, split: str = "train",
                    batch_size: int = 32) -> float:
    """Average contrastive loss over a split without updating weights."""
    ids = np.array(dataset.splits[split])
    losses = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        if len(chunk) < 2:
            continue
        descs = [dataset.items[int(i)].description for i in chunk]
        loss, _, _ = contrastive_loss(gap_features[chunk], descs,
                                      model.w_i, model.w_t, model.margin)
        losses.append(loss)
    return float(np.mean(losses))


def retrieval_sanity(model: EmbeddingModel, dataset: Dataset,
                     gap_features: np.ndarray, split: str) -> tuple[float, float]:
    """Median rank of the matching item, both directions; rank 1 is best.

    Any gallery member whose description equals the anchor's counts as a
    match, so duplicated descriptions do not penalize the score.
    """
    ids = dataset.splits[split]
    x = np.stack([project_image(gap_features[i], model.w_i) for i in ids])
    v = np.stack([encode_description(dataset.items[i].description, model.w_t)
                  for i in ids])
    desc_sets = [frozenset(dataset.items[i].description) for i in ids]
    scores = x @ v.T

    def median_rank(score_rows: np.ndarray) -> float:
        ranks = []
        for i in range(len(ids)):
            order = np.lexsort((np.arange(len(ids)), -score_rows[i]))
            matches = [pos for pos, j in enumerate(order)
                       if desc_sets[j] == desc_sets[i]]
            ranks.append(matches[0] + 1)
        return float(np.median(ranks))

    image_to_desc = median_rank(scores)
    desc_to_image = median_rank(scores.T)
    return desc_to_image, image_to_desc


def save_embedding(model: EmbeddingModel, path: str | Path,
                   vhash: str, chash: str) -> None:
    with open(path, "wb") as fh:
        w = ArtifactWriter(fh, MAGIC, VERSION, vhash, chash)
        w.u32(model.feature_dim)
        w.u32(model.embed_dim)
        w.u32(model.n_attributes)
        w.f32(model.margin)
        w.f32s(model.w_i)
        w.f32s(model.w_t)


def load_embedding(path: str | Path) -> tuple[EmbeddingModel, str, str]:
    with open(path, "rb") as fh:
        r = ArtifactReader(fh, MAGIC, VERSION, str(path))
        k_prime = r.u32()
        embed_dim = r.u32()
        n_attrs = r.u32()
        margin = r.f32()
        w_i = r.f32s((k_prime, embed_dim))
        w_t = r.f32s((n_attrs, embed_dim))
        r.expect_eof()
    model = EmbeddingModel(w_i=w_i, w_t=w_t, margin=margin)
    return model, r.vocab_hash, r.config_hash
