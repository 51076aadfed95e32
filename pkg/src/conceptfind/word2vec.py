"""Skip-gram-with-negative-sampling word vectors over item descriptions.

Descriptions are short attribute lists, so the default context window is
the whole description (window=0); a positive window is a sliding radius
over the slot-ordered sequence.  Training is plain sequential SGD, kept
single-threaded so a fixed seed reproduces the vectors bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import ArtifactReader, ArtifactWriter
from .corpus import Dataset
from .errors import ConfigError

MAGIC = "CFW2"
VERSION = 1

MIN_LR_FRACTION = 1e-4
NOISE_POWER = 0.75


@dataclass
class Vocab:
    labels: list[str]  # position = internal word index
    counts: np.ndarray
    index: dict[str, int]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class SemanticEmbeddings:
    """Per-attribute word vectors keyed by dataset attribute id."""

    dim: int
    ids: np.ndarray  # dataset attribute ids, ascending
    vectors: np.ndarray  # (len(ids), dim) target vectors
    context_vectors: np.ndarray | None = None

    def __post_init__(self):
        self._row = {int(a): i for i, a in enumerate(self.ids)}

    def has(self, attr_id: int) -> bool:
        return int(attr_id) in self._row

    def vector(self, attr_id: int) -> np.ndarray:
        return self.vectors[self._row[int(attr_id)]]


def build_vocab(descriptions, min_count: int = 5) -> Vocab:
    """Count words, drop those below min_count, assign stable indices.

    Indices are ordered by (frequency desc, label asc) so rebuilding from
    the same corpus always yields the same assignment.
    """
    counts: dict[str, int] = {}
    for desc in descriptions:
        for word in desc:
            counts[word] = counts.get(word, 0) + 1
    kept = sorted((w for w, c in counts.items() if c >= min_count),
                  key=lambda w: (-counts[w], w))
    if not kept:
        raise ConfigError(f"every word occurs fewer than {min_count} times")
    return Vocab(labels=kept,
                 counts=np.array([counts[w] for w in kept], dtype=np.int64),
                 index={w: i for i, w in enumerate(kept)})


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pair_loss_and_grads(v_center: np.ndarray, u_context: np.ndarray,
                        u_negatives: np.ndarray):
    """Negative-sampling loss for one (center, context) event.

    L = -log sigma(u_c . v) - sum_n log sigma(-u_n . v)

    Returns (loss, grad wrt v, grad wrt u_context, grads wrt each negative).
    """
    pos = float(u_context @ v_center)
    loss = -np.log(_sigmoid(pos))
    g_pos = -(1.0 - _sigmoid(pos))  # dL/d(pos score)
    grad_v = g_pos * u_context
    grad_ctx = g_pos * v_center
    if len(u_negatives):
        neg = u_negatives @ v_center
        loss -= float(np.log(_sigmoid(-neg)).sum())
        g_neg = _sigmoid(neg)  # dL/d(neg scores)
        grad_v = grad_v + u_negatives.T @ g_neg
        grad_negs = np.outer(g_neg, v_center)
    else:
        grad_negs = np.zeros((0, v_center.shape[0]))
    return loss, grad_v, grad_ctx, grad_negs


def _context_pairs(sequences: list[list[int]], window: int) -> np.ndarray:
    pairs: list[tuple[int, int]] = []
    for seq in sequences:
        n = len(seq)
        for i in range(n):
            if window == 0:
                ctx = range(n)
            else:
                ctx = range(max(0, i - window), min(n, i + window + 1))
            for j in ctx:
                if j != i:
                    pairs.append((seq[i], seq[j]))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _noise_cdf(counts: np.ndarray) -> np.ndarray:
    weights = counts.astype(np.float64) ** NOISE_POWER
    return np.cumsum(weights / weights.sum())


def train_skipgram(dataset: Dataset, dim: int = 64, window: int = 0,
                   negatives: int = 5, epochs: int = 15, lr: float = 0.025,
                   min_count: int = 5, seed: int = 0) -> SemanticEmbeddings:
    """Train on the training split's descriptions; deterministic under seed."""
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    train_ids = dataset.splits.get("train", [i.id for i in dataset.items])
    descriptions = [[dataset.vocab[a] for a in dataset.items[i].description]
                    for i in train_ids]
    vocab = build_vocab(descriptions, min_count=min_count)
    sequences = [[vocab.index[w] for w in desc if w in vocab.index]
                 for desc in descriptions]
    pairs = _context_pairs(sequences, window)
    if len(pairs) == 0:
        raise ConfigError("no training pairs (window too small or descriptions too short)")

    rng = np.random.default_rng(seed)
    n_words = len(vocab)
    target = (rng.random((n_words, dim)) - 0.5) / dim
    context = np.zeros((n_words, dim))

    if epochs > 0:
        cdf = _noise_cdf(vocab.counts)
        n_pairs = len(pairs)
        total = epochs * n_pairs
        step = 0
        for _ in range(epochs):
            order = rng.permutation(n_pairs)
            draws = np.searchsorted(cdf, rng.random((n_pairs, negatives)))
            for row in range(n_pairs):
                center, ctx = pairs[order[row]]
                alpha = lr * max(MIN_LR_FRACTION, 1.0 - step / total)
                step += 1
                negs = draws[row]
                # Dedupe so the vectorized row assignment below is exact.
                negs = np.unique(negs[negs != ctx])
                v = target[center]
                u_c = context[ctx]
                g_pos = _sigmoid(u_c @ v) - 1.0
                u_n = context[negs]
                g_neg = _sigmoid(u_n @ v)
                target[center] = v - alpha * (g_pos * u_c + u_n.T @ g_neg)
                context[ctx] = u_c - alpha * g_pos * v
                context[negs] = u_n - alpha * np.outer(g_neg, v)

    # Map internal word indices back to dataset attribute ids.
    label_to_id = {v: k for k, v in dataset.vocab.items()}
    kept_ids = sorted(label_to_id[w] for w in vocab.labels)
    rows = np.array([vocab.index[dataset.vocab[a]] for a in kept_ids])
    return SemanticEmbeddings(dim=dim, ids=np.array(kept_ids, dtype=np.int64),
                              vectors=target[rows],
                              context_vectors=context[rows])


def neg_sample_gradcheck(toy_corpus: list[list[str]], dim: int = 4,
                         negatives: int = 2, seed: int = 0,
                         step: float = 1e-4) -> float:
    """Analytic gradients vs central finite differences on a tiny corpus.

    Returns the max relative error over every touched parameter of the
    summed negative-sampling loss for all (center, context) events.
    """
    n_words = sum(len(d) for d in toy_corpus)
    if n_words > 10:
        raise ConfigError("toy corpus must hold at most 10 words")
    vocab = build_vocab(toy_corpus, min_count=1)
    sequences = [[vocab.index[w] for w in d] for d in toy_corpus]
    pairs = _context_pairs(sequences, window=0)
    rng = np.random.default_rng(seed)
    target = rng.normal(0, 0.5, (len(vocab), dim))
    context = rng.normal(0, 0.5, (len(vocab), dim))
    cdf = _noise_cdf(vocab.counts)
    events = []
    for center, ctx in pairs:
        draws = np.searchsorted(cdf, rng.random(negatives))
        events.append((int(center), int(ctx), draws[draws != ctx]))

    def total_loss(t: np.ndarray, c: np.ndarray) -> float:
        acc = 0.0
        for center, ctx, negs in events:
            acc += pair_loss_and_grads(t[center], c[ctx], c[negs])[0]
        return acc

    grad_t = np.zeros_like(target)
    grad_c = np.zeros_like(context)
    for center, ctx, negs in events:
        _, g_v, g_c, g_n = pair_loss_and_grads(target[center], context[ctx],
                                               context[negs])
        grad_t[center] += g_v
        grad_c[ctx] += g_c
        for row, g in zip(negs, g_n):
            grad_c[row] += g

    worst = 0.0
    for arr, grad in ((target, grad_t), (context, grad_c)):
        flat, gflat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = total_loss(target, context)
            flat[i] = keep - step
            lo = total_loss(target, context)
            flat[i] = keep
            numeric = (hi - lo) / (2 * step)
            denom = max(abs(numeric) + abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def save_word2vec(sems: SemanticEmbeddings, path: str | Path,
                  vhash: str, chash: str) -> None:
    with open(path, "wb") as fh:
        w = ArtifactWriter(fh, MAGIC, VERSION, vhash, chash)
        w.u32(len(sems.ids))
        w.u32(sems.dim)
        w.u32s(sems.ids)
        w.f32s(sems.vectors)


def load_word2vec(path: str | Path) -> tuple[SemanticEmbeddings, str, str]:
    with open(path, "rb") as fh:
        r = ArtifactReader(fh, MAGIC, VERSION, str(path))
        n = r.u32()
        dim = r.u32()
        ids = r.u32s(n)
        vectors = r.f32s((n, dim))
        r.expect_eof()
    return SemanticEmbeddings(dim=dim, ids=ids, vectors=vectors), r.vocab_hash, r.config_hash
