"""Acceptance suite: one test per release criterion, on the default corpus
(6 concepts, 30 attributes, 2000 items, master seed 7).

Each test prints a single PASS line with the measured value so a full run
doubles as the acceptance report:  pytest -s tests/test_acceptance.py
"""

import concurrent.futures
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conceptfind import (activation, cli, concepts, corpus, embedding,
                         retrieval, subspace, word2vec)
from conceptfind.retrieval import Query, baseline_query, concept_query
from conceptfind.service import make_app, run_query

from conftest import DEFAULT_CONFIG


def test_criterion_1_eaam_sum_identity():
    """Eq-identity: cell sums equal the bilinear score, 100 random triples."""
    started = time.time()
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(100):
        fmap = rng.normal(size=(8, 8, 32))
        w_i = rng.normal(size=(32, 16))
        row = rng.normal(size=16)
        amap = activation.eaam(fmap, w_i, row)
        w_hat = row / np.linalg.norm(row)
        score = float(w_hat @ (activation.gap(fmap) @ w_i))
        worst = max(worst, abs(amap.grid.sum() - score) / (1.0 + abs(score)))
    elapsed = time.time() - started
    assert worst < 1e-4
    assert elapsed < 1.0
    print(f"PASS criterion 1: EAAM sum identity, max rel err {worst:.2e} "
          f"in {elapsed:.2f}s")


def test_criterion_2_gradient_checks():
    """Contrastive, skip-gram and subspace losses vs central differences."""
    started = time.time()
    step = 1e-5

    def max_rel_err(loss_fn, params_and_grads):
        worst = 0.0
        for arr, grad in params_and_grads:
            flat, gflat = arr.ravel(), grad.ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                hi = loss_fn()
                flat[i] = keep - step
                lo = loss_fn()
                flat[i] = keep
                numeric = (hi - lo) / (2 * step)
                denom = max(abs(numeric) + abs(gflat[i]), 1e-8)
                worst = max(worst, abs(numeric - gflat[i]) / denom)
        return worst

    rng = np.random.default_rng(77)

    # contrastive (batch 4, D = 8)
    feats = rng.normal(size=(4, 5))
    w_i = rng.normal(size=(5, 8)) * 0.5
    w_t = rng.normal(size=(6, 8)) * 0.5
    descs = [(0, 1), (2,), (3, 4), (5,)]
    _, g_i, g_t = embedding.contrastive_loss(feats, descs, w_i, w_t, 0.2)
    err_con = max_rel_err(
        lambda: embedding.contrastive_loss(feats, descs, w_i, w_t, 0.2)[0],
        [(w_i, g_i), (w_t, g_t)])

    # skip-gram negative sampling (toy corpus, dim 4)
    err_sg = word2vec.neg_sample_gradcheck([["a", "b", "c"]], dim=4,
                                           negatives=2, seed=1)

    # subspace cross-entropy (D = 4, hidden 3, batch 4)
    model = subspace.SubspaceModel(
        concept_id=0, attribute_ids=(0, 1),
        w_h=rng.normal(size=(4, 3)), b_h=rng.normal(size=3),
        w_s=rng.normal(size=(3, 3)), b_s=rng.normal(size=3))
    xs = rng.normal(size=(4, 4))
    ys = np.array([0, 1, 2, 0])
    _, g_wh, g_bh, g_ws, g_bs = subspace.xent_loss_and_grads(model, xs, ys)
    err_sub = max_rel_err(
        lambda: subspace.xent_loss_and_grads(model, xs, ys)[0],
        [(model.w_h, g_wh), (model.b_h, g_bh), (model.w_s, g_ws),
         (model.b_s, g_bs)])

    elapsed = time.time() - started
    assert err_con < 1e-4 and err_sg < 1e-4 and err_sub < 1e-4
    assert elapsed < 5.0
    print(f"PASS criterion 2: gradient checks (contrastive {err_con:.2e}, "
          f"skip-gram {err_sg:.2e}, subspace {err_sub:.2e}) in {elapsed:.2f}s")


def test_criterion_3_clustering_recovery_and_ablation(bundle, dataset,
                                                      default_cfg,
                                                      pipeline_dir):
    """Joint V >= 0.9 and joint > semantic-only > spatial-only via run-all."""
    import json

    joint = concepts.cluster_scores(bundle.assignment, dataset.ground_truth)
    seed = default_cfg.seed_for("cluster")
    vs = {"joint": joint.v_measure}
    for mode in ("semantic_only", "spatial_only"):
        feats = concepts.build_features(bundle.aams, bundle.sems, mode=mode)
        assignment = concepts.kmeans(feats, k=6, seed=seed, restarts=10)
        vs[mode] = concepts.cluster_scores(assignment,
                                           dataset.ground_truth).v_measure
    wall = sum(json.loads(p.read_text())["wall_time_s"]
               for p in (pipeline_dir / "runs").glob("*.json"))
    assert joint.v_measure >= 0.9
    assert vs["joint"] > vs["semantic_only"] > vs["spatial_only"]
    assert wall < 300.0
    print(f"PASS criterion 3: joint V={vs['joint']:.3f} > "
          f"semantic={vs['semantic_only']:.3f} > "
          f"spatial={vs['spatial_only']:.3f}; run-all {wall:.1f}s")


def test_criterion_4_v_measure_oracle():
    """Hand-computed entropies for the fixed contingency tables, 1e-9."""
    scores = concepts.cluster_scores({"a": 0, "b": 0, "c": 1, "d": 1},
                                     {"a": 0, "b": 0, "c": 0, "d": 1})
    h_class = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    h_c_given_k = 0.5 * math.log(2)
    h_cluster = math.log(2)
    h_k_given_c = 0.75 * -(2 / 3 * math.log(2 / 3) + 1 / 3 * math.log(1 / 3))
    h_expected = 1.0 - h_c_given_k / h_class
    c_expected = 1.0 - h_k_given_c / h_cluster
    v_expected = 2 * h_expected * c_expected / (h_expected + c_expected)
    assert abs(scores.homogeneity - h_expected) < 1e-9
    assert abs(scores.completeness - c_expected) < 1e-9
    assert abs(scores.v_measure - v_expected) < 1e-9

    perfect = concepts.cluster_scores({0: 1, 1: 1, 2: 0}, {0: 5, 1: 5, 2: 6})
    assert (perfect.homogeneity, perfect.completeness,
            perfect.v_measure) == (1.0, 1.0, 1.0)

    single = concepts.cluster_scores({0: 0, 1: 0, 2: 0, 3: 0},
                                     {0: 0, 1: 0, 2: 1, 3: 1})
    assert single.homogeneity == 0.0 and single.completeness == 1.0
    print(f"PASS criterion 4: V-measure oracle (h={h_expected:.6f}, "
          f"c={c_expected:.6f}, v={v_expected:.6f})")


def test_criterion_5_aam_spatial_recovery(bundle, dataset, default_spec):
    """Mean positive AAM mass inside each planted mask >= 0.6."""
    means = {}
    for concept_idx, concept in enumerate(default_spec):
        fractions = [
            activation.positive_mass_fraction(bundle.aams[a],
                                              concept.spatial_mask)
            for a in dataset.vocab if dataset.ground_truth[a] == concept_idx]
        means[concept.name] = float(np.mean(fractions))
    assert all(v >= 0.6 for v in means.values()), means
    pretty = ", ".join(f"{k}={v:.2f}" for k, v in means.items())
    print(f"PASS criterion 5: AAM mass inside planted masks ({pretty})")


def test_criterion_6_retrieval_ordering_and_fallback(bundle, dataset):
    """Concept top-10 >= baseline top-10 > random; fallbacks equal baseline."""
    pairs = corpus.make_query_pairs(dataset, "test")
    report = retrieval.evaluate_topk(
        pairs, dataset, bundle.model, bundle.gallery, bundle.subspaces,
        bundle.assignment.assignment, ks=(10,))
    concept_10 = report.accuracy["concept_aware"][10]
    baseline_10 = report.accuracy["baseline"][10]
    random_floor = 10 / len(dataset.splits["test"])
    assert concept_10 >= baseline_10 > random_floor

    # constructed fallback cases: query item lacks the optional concept
    belt_ids = {dataset.attr_id(a)
                for a in ("belted", "sashed", "corset", "ribbon", "chain")}
    gallery = tuple(dataset.splits["test"])
    checked = 0
    for item_id in dataset.splits["test"]:
        if belt_ids & set(dataset.items[item_id].description):
            continue
        query = Query(query_id=item_id,
                      added_attribute=dataset.attr_id("belted"),
                      gallery=gallery)
        concept_result = concept_query(query, bundle.model, bundle.gallery,
                                       bundle.subspaces,
                                       bundle.assignment.assignment)
        if not concept_result.fallback:
            continue
        base_result = baseline_query(query, bundle.model, bundle.gallery)
        assert concept_result.items == base_result.items  # bit identical
        checked += 1
        if checked == 25:
            break
    assert checked > 0
    print(f"PASS criterion 6: top-10 concept={concept_10:.3f} >= "
          f"baseline={baseline_10:.3f} > random={random_floor:.3f}; "
          f"{checked} fallbacks bit-identical")


def test_criterion_7_negative_attribute_detection(bundle, dataset):
    """Detected w_n equals the query item's own concept attribute >= 90%."""
    pairs = corpus.make_query_pairs(dataset, "test")
    gallery = tuple(dataset.splits["test"])
    eligible = hits = 0
    for pair in pairs:
        concept_id = bundle.assignment.assignment[pair.added_attribute]
        attrs = set(bundle.subspaces[concept_id].attribute_ids)
        present = attrs & set(dataset.items[pair.query_id].description)
        if len(present) != 1:
            continue
        eligible += 1
        query = Query(query_id=pair.query_id,
                      added_attribute=pair.added_attribute, gallery=gallery)
        result = concept_query(query, bundle.model, bundle.gallery,
                               bundle.subspaces, bundle.assignment.assignment)
        hits += (result.detected_negative == next(iter(present)))
    rate = hits / eligible
    assert eligible > 0
    assert rate >= 0.9
    print(f"PASS criterion 7: negative-attribute detection "
          f"{hits}/{eligible} = {rate:.3f}")


def test_criterion_8_determinism(pipeline_dir, tmp_path):
    """A second run-all reproduces every artifact and report byte for byte."""
    second = tmp_path / "again"
    rc = cli.main(["run-all", "--config", str(DEFAULT_CONFIG),
                   "--artifacts", str(second)])
    assert rc == 0

    def files(root: Path):
        return sorted(p.relative_to(root) for p in root.rglob("*")
                      if p.is_file() and "runs" not in p.parts)

    first_files, second_files = files(pipeline_dir), files(second)
    assert first_files == second_files
    different = [str(rel) for rel in first_files
                 if not filecmp.cmp(pipeline_dir / rel, second / rel,
                                    shallow=False)]
    assert not different, different
    print(f"PASS criterion 8: {len(first_files)} artifacts byte-identical "
          f"across two runs")


def test_criterion_9_service_conformance(bundle, dataset):
    """Every /v1/query response equals the library call; 64-way storm agrees."""
    client = TestClient(make_app(bundle))
    test_ids = dataset.splits["test"]
    rng = np.random.default_rng(5)
    checked = 0
    for item_id in rng.choice(test_ids, size=12, replace=False):
        for method in ("baseline", "concept"):
            label = dataset.vocab[int(rng.integers(len(dataset.vocab)))]
            body = client.post("/v1/query", json={
                "image_id": int(item_id), "add_attribute": label,
                "method": method, "k": 10}).json()
            assert body == run_query(bundle, int(item_id), label, method, 10)
            checked += 1

    payload = {"image_id": int(test_ids[0]), "add_attribute": "micro",
               "method": "concept", "k": 10}
    with concurrent.futures.ThreadPoolExecutor(max_workers=64) as pool:
        bodies = list(pool.map(
            lambda _: client.post("/v1/query", json=payload).text, range(64)))
    assert len(set(bodies)) == 1
    print(f"PASS criterion 9: {checked} service responses equal library "
          f"calls; 64 concurrent bodies identical")
