"""Attribute clustering into concepts and clustering-quality scores.

An attribute's feature concatenates its unit-normalized flattened
activation map with its unit-normalized word vector; k-means over those
features groups attributes that are both spatially consistent and
semantically similar.  Quality against a reference assignment is scored
with entropy-based homogeneity, completeness and their harmonic mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activation import AttributeMap
from .errors import ConfigError, DegenerateFeatureError
from .word2vec import SemanticEmbeddings

MODES = ("joint", "spatial_only", "semantic_only")


@dataclass
class SpatialSemanticFeature:
    attribute_id: int
    vector: np.ndarray


@dataclass
class ConceptAssignment:
    k: int
    assignment: dict[int, int]  # attribute id -> cluster id
    centroids: np.ndarray
    inertia: float

    def members(self, cluster_id: int) -> list[int]:
        return sorted(a for a, c in self.assignment.items() if c == cluster_id)


@dataclass
class ClusterScores:
    homogeneity: float
    completeness: float
    v_measure: float


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise DegenerateFeatureError(f"{what} is the zero vector")
    return vec / norm


def build_features(aams: dict[int, AttributeMap], sems: SemanticEmbeddings,
                   mode: str = "joint") -> list[SpatialSemanticFeature]:
    """Per-attribute clustering features for attributes present in both inputs."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    features = []
    for attr_id in sorted(aams):
        if not sems.has(attr_id):
            continue
        spatial = aams[attr_id].grid.ravel()
        semantic = sems.vector(attr_id)
        if mode == "spatial_only":
            vec = _unit(spatial, f"AAM of attribute {attr_id}")
        elif mode == "semantic_only":
            vec = _unit(semantic, f"word vector of attribute {attr_id}")
        else:
            vec = np.concatenate([
                _unit(spatial, f"AAM of attribute {attr_id}"),
                _unit(semantic, f"word vector of attribute {attr_id}"),
            ])
        features.append(SpatialSemanticFeature(attribute_id=attr_id, vector=vec))
    return features


def _plusplus_init(points: np.ndarray, k: int,
                   rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            centroids[j] = points[rng.integers(n)]
        else:
            probs = d2 / total
            centroids[j] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray, float]:
    k = centroids.shape[0]
    labels = np.full(points.shape[0], -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        assigned_d2 = d2[np.arange(len(points)), new_labels].copy()
        for j in range(k):
            if not np.any(new_labels == j):
                # re-seed an empty cluster at the farthest point
                farthest = int(assigned_d2.argmax())
                centroids[j] = points[farthest]
                new_labels[farthest] = j
                assigned_d2[farthest] = 0.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = points[labels == j].mean(axis=0)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    return labels, centroids, inertia


def kmeans(features: list[SpatialSemanticFeature], k: int, seed: int = 0,
           restarts: int = 10) -> ConceptAssignment:
    """Lloyd's algorithm with ++-style seeding, best of `restarts` by inertia."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > len(features):
        raise ConfigError(f"k={k} exceeds {len(features)} features")
    points = np.stack([f.vector for f in features])
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for _ in range(max(1, restarts)):
        labels, centroids, inertia = _lloyd(points, _plusplus_init(points, k, rng))
        if best is None or inertia < best[0]:
            best = (inertia, labels, centroids)
    inertia, labels, centroids = best
    assignment = {f.attribute_id: int(c) for f, c in zip(features, labels)}
    return ConceptAssignment(k=k, assignment=assignment,
                             centroids=centroids, inertia=inertia)


def _entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    probs = counts[counts > 0] / total
    return float(-(probs * np.log(probs)).sum())


def cluster_scores(assignment: ConceptAssignment | dict[int, int],
                   ground_truth: dict[int, int]) -> ClusterScores:
    """Homogeneity / completeness / V-measure with natural-log entropies.

    Conventions: homogeneity is 1 when the class entropy is 0, and
    completeness is 1 when the cluster entropy is 0.
    """
    mapping = assignment.assignment if isinstance(assignment, ConceptAssignment) \
        else assignment
    if not mapping:
        raise ConfigError("empty assignment")
    attrs = sorted(mapping)
    for a in attrs:
        if a not in ground_truth:
            raise ConfigError(f"attribute {a} missing from ground truth")
    clusters = sorted({mapping[a] for a in attrs})
    classes = sorted({ground_truth[a] for a in attrs})
    table = np.zeros((len(clusters), len(classes)))
    c_index = {c: i for i, c in enumerate(clusters)}
    y_index = {y: i for i, y in enumerate(classes)}
    for a in attrs:
        table[c_index[mapping[a]], y_index[ground_truth[a]]] += 1

    n = table.sum()
    h_class = _entropy(table.sum(axis=0))
    h_cluster = _entropy(table.sum(axis=1))
    h_class_given_cluster = sum(
        (row.sum() / n) * _entropy(row) for row in table)
    h_cluster_given_class = sum(
        (col.sum() / n) * _entropy(col) for col in table.T)

    homogeneity = 1.0 if h_class == 0 else 1.0 - h_class_given_cluster / h_class
    completeness = 1.0 if h_cluster == 0 else 1.0 - h_cluster_given_class / h_cluster
    if homogeneity + completeness == 0:
        v = 0.0
    else:
        v = 2 * homogeneity * completeness / (homogeneity + completeness)
    return ClusterScores(homogeneity=homogeneity, completeness=completeness,
                         v_measure=v)


def discover(dataset, model, sems: SemanticEmbeddings, k: int, seed: int = 0,
             restarts: int = 10, aams: dict[int, AttributeMap] | None = None,
             mode: str = "joint", out_dir: str | Path | None = None):
    """Feature building, clustering and (when ground truth exists) scoring."""
    from .activation import compute_all_aams

    if aams is None:
        aams, _ = compute_all_aams(dataset, model)
    features = build_features(aams, sems, mode=mode)
    assignment = kmeans(features, k=k, seed=seed, restarts=restarts)
    scores = None
    if dataset.ground_truth is not None:
        scores = cluster_scores(assignment, dataset.ground_truth)
    if out_dir is not None:
        save_assignment(assignment, scores, dataset.vocab, out_dir)
    return assignment, scores


def save_assignment(assignment: ConceptAssignment,
                    scores: ClusterScores | None, vocab: dict[int, str],
                    out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{vocab[a]}\t{assignment.assignment[a]}"
             for a in sorted(assignment.assignment)]
    (out / "concepts.tsv").write_text("\n".join(lines) + "\n")
    if scores is not None:
        text = (f"homogeneity {scores.homogeneity:.9f}\n"
                f"completeness {scores.completeness:.9f}\n"
                f"v_measure {scores.v_measure:.9f}\n")
        (out / "scores").write_text(text)


def load_assignment(path: str | Path, vocab: dict[int, str]) -> ConceptAssignment:
    label_to_id = {v: k for k, v in vocab.items()}
    mapping: dict[int, int] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        label, _, cluster = line.partition("\t")
        if label not in label_to_id:
            raise ConfigError(f"{path}:{lineno}: unknown attribute {label!r}")
        mapping[label_to_id[label]] = int(cluster)
    k = len(set(mapping.values()))
    return ConceptAssignment(k=k, assignment=mapping,
                             centroids=np.zeros((k, 0)), inertia=math.nan)
