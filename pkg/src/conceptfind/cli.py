"""Command-line pipeline: generate -> train -> cluster -> evaluate -> serve.

Each subcommand reads one YAML config, consumes the artifacts of earlier
stages and writes its own, plus a run manifest under runs/ (the manifest
carries wall time and is not part of the reproducible artifact set).
Exit codes: 0 success, 2 missing upstream artifact, 64 config error,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import activation, concepts, corpus, embedding, retrieval, subspace, word2vec
from .artifacts import vocab_hash
from .config import PipelineConfig, build_concept_specs, load_config
from .errors import ConceptFindError, ConfigError, MissingArtifactError

EX_MISSING = 2
EX_CONFIG = 64


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifactError(str(path))
    return path


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_run_manifest(artifacts: Path, command: str, cfg: PipelineConfig,
                        started: float) -> None:
    runs = artifacts / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": cfg.hash(),
        "git_describe": _git_describe(),
        "wall_time_s": round(time.time() - started, 3),
    }
    (runs / f"{command}.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_dataset(artifacts: Path, cfg: PipelineConfig) -> corpus.Dataset:
    dataset_dir = _require(artifacts / "dataset")
    _require(dataset_dir / "manifest")
    dataset = corpus.load_dataset(dataset_dir)
    recorded = corpus.dataset_config_hash(dataset_dir)
    if recorded is not None and recorded != cfg.hash():
        raise ConfigError(
            f"dataset was generated with config hash {recorded}, "
            f"current config hashes to {cfg.hash()}")
    return dataset


def cmd_generate(cfg: PipelineConfig, artifacts: Path) -> None:
    spec = build_concept_specs(cfg.corpus)
    dataset = corpus.generate_synthetic(
        spec, n_items=cfg.corpus.n_items, noise_sigma=cfg.corpus.noise_sigma,
        seed=cfg.seed_for("corpus"), dims=cfg.corpus.dims)
    corpus.save_dataset(dataset, artifacts / "dataset", config_hash=cfg.hash())
    print(f"generated {len(dataset.items)} items, vocab {len(dataset.vocab)}")


def cmd_train_word2vec(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    sems = word2vec.train_skipgram(
        dataset, dim=cfg.word2vec.dim, window=cfg.word2vec.window,
        negatives=cfg.word2vec.negatives, epochs=cfg.word2vec.epochs,
        lr=cfg.word2vec.lr, min_count=cfg.word2vec.min_count,
        seed=cfg.seed_for("word2vec"))
    word2vec.save_word2vec(sems, artifacts / "word2vec.bin",
                           vocab_hash(dataset.vocab), cfg.hash())
    print(f"trained word vectors for {len(sems.ids)} attributes")


def cmd_train_embedding(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    gap_features = activation.gap_matrix(dataset)
    train_cfg = embedding.TrainConfig(
        lr=cfg.embedding.lr, lr_decay_factor=cfg.embedding.lr_decay_factor,
        lr_decay_every=cfg.embedding.lr_decay_every,
        batch_size=cfg.embedding.batch_size, margin=cfg.embedding.margin,
        epochs=cfg.embedding.epochs, embed_dim=cfg.embedding.embed_dim,
        seed=cfg.seed_for("embedding"))
    model = embedding.train_embedding(dataset, gap_features, train_cfg)
    embedding.save_embedding(model, artifacts / "embedding.bin",
                             vocab_hash(dataset.vocab), cfg.hash())
    d2i, i2d = embedding.retrieval_sanity(model, dataset, gap_features, "val")
    print(f"trained embedding; val median rank desc->img {d2i}, img->desc {i2d}")


def cmd_compute_aams(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    model, _, _ = embedding.load_embedding(_require(artifacts / "embedding.bin"))
    maps, skipped = activation.compute_all_aams(dataset, model)
    activation.save_aams(maps, skipped, dataset.dims, artifacts / "aams.bin",
                         vocab_hash(dataset.vocab), cfg.hash())
    print(f"computed {len(maps)} attribute maps ({len(skipped)} skipped)")


def cmd_cluster(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    model, _, _ = embedding.load_embedding(_require(artifacts / "embedding.bin"))
    sems, _, _ = word2vec.load_word2vec(_require(artifacts / "word2vec.bin"))
    maps, _, _, _ = activation.load_aams(_require(artifacts / "aams.bin"))
    assignment, scores = concepts.discover(
        dataset, model, sems, k=cfg.cluster.k, seed=cfg.seed_for("cluster"),
        restarts=cfg.cluster.restarts, aams=maps, out_dir=artifacts)
    if scores:
        print(f"clustered: V-measure {scores.v_measure:.3f}")
    else:
        print("clustered (no ground truth to score against)")


def cmd_train_subspaces(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    model, _, _ = embedding.load_embedding(_require(artifacts / "embedding.bin"))
    assignment = concepts.load_assignment(_require(artifacts / "concepts.tsv"),
                                          dataset.vocab)
    gap_features = activation.gap_matrix(dataset)
    models = subspace.train_all_subspaces(
        assignment, model, dataset, gap_features,
        neg_ratio=cfg.subspace.neg_ratio, lr=cfg.subspace.lr,
        epochs=cfg.subspace.epochs, hidden=cfg.subspace.hidden,
        batch_size=cfg.subspace.batch_size, seed=cfg.seed_for("subspace"))
    vhash = vocab_hash(dataset.vocab)
    for cid, sub in models.items():
        subspace.save_subspace(sub, artifacts / f"subspace_{cid}.bin",
                               vhash, cfg.hash())
    print(f"trained {len(models)} concept subspaces")


def _load_subspaces(artifacts: Path, expected_vhash: str,
                    expected_chash: str) -> dict[int, subspace.SubspaceModel]:
    paths = sorted(artifacts.glob("subspace_*.bin"))
    if not paths:
        raise MissingArtifactError(str(artifacts / "subspace_<concept_id>.bin"))
    models = {}
    for path in paths:
        sub, vhash, chash = subspace.load_subspace(path)
        if vhash != expected_vhash or chash != expected_chash:
            raise ConfigError(f"{path}: hash mismatch with other artifacts")
        models[sub.concept_id] = sub
    return models


def cmd_evaluate(cfg: PipelineConfig, artifacts: Path) -> None:
    dataset = _load_dataset(artifacts, cfg)
    vhash = vocab_hash(dataset.vocab)
    chash = cfg.hash()
    model, em_vhash, em_chash = embedding.load_embedding(
        _require(artifacts / "embedding.bin"))
    if (em_vhash, em_chash) != (vhash, chash):
        raise ConfigError("embedding.bin hash mismatch with dataset/config")
    assignment = concepts.load_assignment(_require(artifacts / "concepts.tsv"),
                                          dataset.vocab)
    subspaces = _load_subspaces(artifacts, vhash, chash)

    reports = artifacts / "reports"
    reports.mkdir(parents=True, exist_ok=True)

    scores_path = _require(artifacts / "scores")
    (reports / "clustering.tsv").write_text(scores_path.read_text())

    gap_features = activation.gap_matrix(dataset)
    cache = retrieval.build_gallery(dataset, model, gap_features)
    pairs = corpus.make_query_pairs(dataset, cfg.evaluate.gallery_split)
    report = retrieval.evaluate_topk(
        pairs, dataset, model, cache, subspaces, assignment.assignment,
        gallery_split=cfg.evaluate.gallery_split, ks=tuple(cfg.evaluate.ks))
    retrieval.write_topk_report(report, reports / "topk.tsv")
    top10 = {m: report.accuracy[m].get(10) for m in report.accuracy}
    print(f"evaluated {report.n_queries} query pairs; top-10 {top10}")


def cmd_serve(cfg: PipelineConfig, artifacts: Path, port: int, bind: str,
              ui: str | None) -> None:
    import uvicorn

    from .service import load_bundle, make_app

    bundle = load_bundle(artifacts)
    app = make_app(bundle, ui_dir=ui)
    uvicorn.run(app, host=bind, port=port, log_level="info")


PIPELINE = [
    ("generate", cmd_generate),
    ("train-word2vec", cmd_train_word2vec),
    ("train-embedding", cmd_train_embedding),
    ("compute-aams", cmd_compute_aams),
    ("cluster", cmd_cluster),
    ("train-subspaces", cmd_train_subspaces),
    ("evaluate", cmd_evaluate),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptfind",
        description="Concept discovery and attribute-feedback retrieval pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, _ in PIPELINE + [("run-all", None)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        p.add_argument("--artifacts", required=True, help="artifact directory")
    serve = sub.add_parser("serve")
    serve.add_argument("--config", required=True)
    serve.add_argument("--bundle", required=True, help="artifact directory to serve")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--bind", default="127.0.0.1")
    serve.add_argument("--ui", default=None, help="static UI directory to mount at /")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EX_CONFIG
    try:
        if args.command == "serve":
            cmd_serve(cfg, Path(args.bundle), args.port, args.bind, args.ui)
            return 0
        artifacts = Path(args.artifacts)
        artifacts.mkdir(parents=True, exist_ok=True)
        steps = PIPELINE if args.command == "run-all" \
            else [(args.command, dict(PIPELINE)[args.command])]
        for name, fn in steps:
            started = time.time()
            fn(cfg, artifacts)
            _write_run_manifest(artifacts, name, cfg, started)
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EX_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EX_CONFIG
    except ConceptFindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
