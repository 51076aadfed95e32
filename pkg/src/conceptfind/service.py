"""HTTP service over a trained artifact bundle.

The bundle is loaded once and never mutated; every endpoint is a pure
function of (bundle, request), so identical requests always produce
identical bodies regardless of concurrency.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import activation, concepts, corpus, embedding, retrieval, subspace, word2vec
from .artifacts import vocab_hash
from .errors import ConfigError, HashMismatchError, MissingArtifactError

EXPECTED_FILES = (
    "dataset/manifest",
    "dataset/features.bin",
    "dataset/descriptions",
    "word2vec.bin",
    "embedding.bin",
    "aams.bin",
    "concepts.tsv",
    "scores",
    "subspace_<concept_id>.bin",
)


@dataclass
class Projection2D:
    concept_id: int
    points: dict[int, tuple[float, float]]
    grid: dict | None = None  # {"rows": R, "cols": C, "cells": {id: (r, c)}}


@dataclass
class ModelBundle:
    dataset: corpus.Dataset
    gap_features: np.ndarray
    model: embedding.EmbeddingModel
    sems: word2vec.SemanticEmbeddings
    aams: dict[int, activation.AttributeMap]
    assignment: concepts.ConceptAssignment
    subspaces: dict[int, subspace.SubspaceModel]
    gallery: retrieval.GalleryCache
    vocab_hash: str
    config_hash: str

    @property
    def bundle_hash(self) -> str:
        return hashlib.sha256(
            (self.vocab_hash + self.config_hash).encode()).hexdigest()[:16]


def load_bundle(artifacts: str | Path) -> ModelBundle:
    """Load and cross-check every artifact; build the gallery cache."""
    root = Path(artifacts)
    missing = [name for name in EXPECTED_FILES[:-1] if not (root / name).exists()]
    if not sorted(root.glob("subspace_*.bin")):
        missing.append(EXPECTED_FILES[-1])
    if missing:
        raise MissingArtifactError(
            f"{root}: missing {', '.join(missing)}; expected artifacts: "
            + ", ".join(EXPECTED_FILES))

    dataset = corpus.load_dataset(root / "dataset")
    vhash = vocab_hash(dataset.vocab)
    chash = corpus.dataset_config_hash(root / "dataset")

    def check(name: str, got_vhash: str, got_chash: str) -> str:
        if got_vhash != vhash:
            raise HashMismatchError(
                f"{root / name}: vocab hash {got_vhash} != dataset {vhash}")
        if chash is not None and got_chash != chash:
            raise HashMismatchError(
                f"{root / name}: config hash {got_chash} != dataset {chash}")
        return got_chash

    sems, v1, c1 = word2vec.load_word2vec(root / "word2vec.bin")
    effective_chash = check("word2vec.bin", v1, c1)
    model, v2, c2 = embedding.load_embedding(root / "embedding.bin")
    check("embedding.bin", v2, c2)
    aams, _, v3, c3 = activation.load_aams(root / "aams.bin")
    check("aams.bin", v3, c3)
    if len({c1, c2, c3}) != 1:
        raise HashMismatchError(f"{root}: artifacts carry mixed config hashes")

    assignment = concepts.load_assignment(root / "concepts.tsv", dataset.vocab)
    subspaces: dict[int, subspace.SubspaceModel] = {}
    for path in sorted(root.glob("subspace_*.bin")):
        sub, v4, c4 = subspace.load_subspace(path)
        check(path.name, v4, c4)
        if c4 != effective_chash:
            raise HashMismatchError(f"{path}: config hash differs from bundle")
        subspaces[sub.concept_id] = sub

    gap_features = activation.gap_matrix(dataset)
    gallery = retrieval.build_gallery(dataset, model, gap_features)
    return ModelBundle(dataset=dataset, gap_features=gap_features, model=model,
                       sems=sems, aams=aams, assignment=assignment,
                       subspaces=subspaces, gallery=gallery,
                       vocab_hash=vhash, config_hash=effective_chash)


def pca_project(features: np.ndarray) -> np.ndarray:
    """Project rows onto the top-2 principal axes, deterministic sign.

    Each component's largest-magnitude loading is made positive, so the
    projection does not depend on eigensolver sign conventions.
    """
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / max(1, centered.shape[0])
    eigvals, eigvecs = np.linalg.eigh(cov)
    points = np.zeros((features.shape[0], 2))
    for out_axis, col in enumerate((-1, -2)):
        if eigvecs.shape[1] < abs(col):
            continue
        component = eigvecs[:, col]
        anchor = np.argmax(np.abs(component))
        if component[anchor] < 0:
            component = -component
        points[:, out_axis] = centered @ component
    return points


def _snap_to_grid(points: np.ndarray, ids: list[int], rows: int,
                  cols: int) -> dict[int, tuple[int, int]]:
    """Greedy nearest-free-cell snap, processed in ascending item id."""
    if len(ids) > rows * cols:
        raise ConfigError(f"{len(ids)} items exceed a {rows}x{cols} grid")
    spread_u = points[:, 0].max() - points[:, 0].min()
    spread_v = points[:, 1].max() - points[:, 1].min()
    col_pos = (points[:, 0] - points[:, 0].min()) / (spread_u or 1.0) * (cols - 1)
    row_pos = (points[:, 1] - points[:, 1].min()) / (spread_v or 1.0) * (rows - 1)
    free = np.ones((rows, cols), dtype=bool)
    cell_r, cell_c = np.indices((rows, cols))
    cells: dict[int, tuple[int, int]] = {}
    for idx in np.argsort(ids):
        d2 = (cell_r - row_pos[idx]) ** 2 + (cell_c - col_pos[idx]) ** 2
        d2 = np.where(free, d2, np.inf)
        flat = int(d2.argmin())
        r, c = divmod(flat, cols)
        free[r, c] = False
        cells[ids[idx]] = (int(r), int(c))
    return cells


def project_subspace(bundle: ModelBundle, concept_id: int, split: str,
                     grid: tuple[int, int] | None = None) -> Projection2D:
    if concept_id not in bundle.subspaces:
        raise KeyError(f"concept {concept_id} has no trained subspace")
    if split not in bundle.dataset.splits:
        raise KeyError(f"unknown split {split!r}")
    sub = bundle.subspaces[concept_id]
    ids = list(bundle.dataset.splits[split])
    feats = np.stack([subspace.subspace_feature(sub, bundle.gallery.vector(i))
                      for i in ids])
    points = pca_project(feats)
    projection = Projection2D(
        concept_id=concept_id,
        points={i: (float(points[j, 0]), float(points[j, 1]))
                for j, i in enumerate(ids)})
    if grid is not None:
        rows, cols = grid
        projection.grid = {"rows": rows, "cols": cols,
                           "cells": _snap_to_grid(points, ids, rows, cols)}
    return projection


def _label_color(label: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(label.encode()).digest()
    return (80 + digest[0] % 160, 80 + digest[1] % 160, 80 + digest[2] % 160)


def thumbnail_png(bundle: ModelBundle, item_id: int,
                  size: tuple[int, int] = (144, 180)) -> bytes:
    """Placeholder product shot: color swatch plus the attribute labels."""
    from PIL import Image, ImageDraw

    item = bundle.dataset.items[item_id]
    labels = [bundle.dataset.vocab[a] for a in item.description]
    img = Image.new("RGB", size, (245, 245, 245))
    draw = ImageDraw.Draw(img)
    draw.rectangle([0, 0, size[0] - 1, 27], fill=_label_color(labels[0] if labels else ""))
    draw.text((6, 8), f"item {item_id}", fill=(255, 255, 255))
    for row, label in enumerate(labels):
        swatch = _label_color(label)
        y = 36 + row * 22
        draw.rectangle([6, y + 3, 18, y + 15], fill=swatch)
        draw.text((24, y), label, fill=(30, 30, 30))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def run_query(bundle: ModelBundle, image_id: int, add_attribute: str,
              method: str, k: int) -> dict:
    """Shared by the HTTP handler and tests; mirrors the library calls."""
    dataset = bundle.dataset
    if image_id < 0 or image_id >= len(dataset.items):
        raise KeyError(f"unknown image id {image_id}")
    try:
        attr_id = dataset.attr_id(add_attribute)
    except KeyError:
        raise KeyError(f"unknown attribute {add_attribute!r}") from None
    if method not in ("baseline", "concept"):
        raise ConfigError(f"method must be 'baseline' or 'concept', got {method!r}")
    gallery = tuple(item.id for item in dataset.items if item.id != image_id)
    query = retrieval.Query(query_id=image_id, added_attribute=attr_id,
                            gallery=gallery)
    if method == "baseline":
        result = retrieval.baseline_query(query, bundle.model, bundle.gallery)
    else:
        result = retrieval.concept_query(query, bundle.model, bundle.gallery,
                                         bundle.subspaces,
                                         bundle.assignment.assignment)
    detected = (dataset.vocab[result.detected_negative]
                if result.detected_negative is not None else None)
    return {
        "results": [{"id": i, "score": s} for i, s in result.items[:k]],
        "detected_negative": detected,
        "fallback": result.fallback,
    }


try:
    from pydantic import BaseModel
except ImportError:  # pragma: no cover
    BaseModel = object


class QueryRequest(BaseModel):
    image_id: int
    add_attribute: str
    method: str = "concept"
    k: int = 10


def make_app(bundle: ModelBundle, ui_dir: str | None = None):
    from fastapi import FastAPI, HTTPException, Response

    app = FastAPI(title="conceptfind")

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "bundle_hash": bundle.bundle_hash}

    @app.get("/v1/concepts")
    def list_concepts():
        return [
            {"concept_id": cid,
             "attributes": [bundle.dataset.vocab[a]
                            for a in bundle.assignment.members(cid)],
             "has_subspace": cid in bundle.subspaces}
            for cid in range(bundle.assignment.k)
        ]

    @app.get("/v1/items/{item_id}")
    def get_item(item_id: int):
        if item_id < 0 or item_id >= len(bundle.dataset.items):
            raise HTTPException(status_code=404,
                                detail=f"unknown item {item_id}")
        item = bundle.dataset.items[item_id]
        return {"id": item.id,
                "description": [bundle.dataset.vocab[a] for a in item.description],
                "splits": [bundle.dataset.split_of(item_id)]}

    @app.get("/v1/items/{item_id}/thumbnail")
    def get_thumbnail(item_id: int):
        if item_id < 0 or item_id >= len(bundle.dataset.items):
            raise HTTPException(status_code=404,
                                detail=f"unknown item {item_id}")
        return Response(content=thumbnail_png(bundle, item_id),
                        media_type="image/png")

    @app.get("/v1/subspaces/{concept_id}/projection")
    def get_projection(concept_id: int, split: str = "test",
                       grid: str | None = None):
        grid_dims = None
        if grid:
            try:
                r, c = grid.lower().split("x")
                grid_dims = (int(r), int(c))
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"bad grid spec {grid!r}") from None
        try:
            proj = project_subspace(bundle, concept_id, split, grid_dims)
        except (KeyError, ConfigError) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        body = {"concept_id": proj.concept_id,
                "points": {str(i): [u, v] for i, (u, v) in proj.points.items()}}
        if proj.grid is not None:
            body["grid"] = {"rows": proj.grid["rows"], "cols": proj.grid["cols"],
                            "cells": {str(i): [r, c]
                                      for i, (r, c) in proj.grid["cells"].items()}}
        else:
            body["grid"] = None
        return body

    @app.post("/v1/query")
    def post_query(req: QueryRequest):
        try:
            return run_query(bundle, req.image_id, req.add_attribute,
                             req.method, req.k)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc.args[0])) from None
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
