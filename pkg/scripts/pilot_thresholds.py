#!/usr/bin/env python3
"""Recompute every pinned pilot statistic from a trained artifact directory.

Run after `conceptfind run-all` to see where the regression floors sit:

    python3 scripts/pilot_thresholds.py --artifacts /tmp/artifacts
"""

import argparse
import itertools
from pathlib import Path

import numpy as np

from conceptfind import concepts, config, corpus, retrieval, subspace
from conceptfind.activation import positive_mass_fraction
from conceptfind.retrieval import Query, concept_query
from conceptfind.service import load_bundle, pca_project, project_subspace


def unit(v):
    return v / np.linalg.norm(v)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--artifacts", required=True)
    parser.add_argument("--config",
                        default=Path(__file__).parent.parent / "configs" / "default.yaml")
    args = parser.parse_args()

    cfg = config.load_config(args.config)
    spec = config.build_concept_specs(cfg.corpus)
    bundle = load_bundle(args.artifacts)
    ds = bundle.dataset

    print("== clustering ablations (V-measure)")
    seed = cfg.seed_for("cluster")
    for mode in ("joint", "semantic_only", "spatial_only"):
        feats = concepts.build_features(bundle.aams, bundle.sems, mode=mode)
        assignment = concepts.kmeans(feats, k=cfg.cluster.k, seed=seed,
                                     restarts=cfg.cluster.restarts)
        scores = concepts.cluster_scores(assignment, ds.ground_truth)
        print(f"  {mode:14s} h={scores.homogeneity:.4f} "
              f"c={scores.completeness:.4f} v={scores.v_measure:.4f}")

    print("== AAM positive mass inside planted masks")
    for idx, concept in enumerate(spec):
        fracs = [positive_mass_fraction(bundle.aams[a], concept.spatial_mask)
                 for a in ds.vocab if ds.ground_truth[a] == idx]
        print(f"  {concept.name:9s} mean={np.mean(fracs):.3f} "
              f"min={np.min(fracs):.3f}")

    print("== word-vector margin (same concept+slot vs cross concept)")
    slot = {ds.attr_id(a): c.slot_of(a) for c in spec for a in c.attributes}
    same, cross = [], []
    for a, b in itertools.combinations(sorted(ds.vocab), 2):
        cos = float(unit(bundle.sems.vector(a)) @ unit(bundle.sems.vector(b)))
        if ds.ground_truth[a] == ds.ground_truth[b]:
            if slot[a] == slot[b]:
                same.append(cos)
        else:
            cross.append(cos)
    print(f"  same={np.mean(same):.3f} cross={np.mean(cross):.3f} "
          f"margin={np.mean(same) - np.mean(cross):.3f}")

    print("== subspace held-out accuracy")
    test_ids = ds.splits["test"]
    for cid, sub in sorted(bundle.subspaces.items()):
        correct = total = none_hits = none_total = 0
        for i in test_ids:
            present = set(sub.attribute_ids) & set(ds.items[i].description)
            winner = int(subspace.predict(sub, bundle.gallery.vector(i)).argmax())
            if present:
                total += 1
                correct += (winner < len(sub.attribute_ids)
                            and sub.attribute_ids[winner] in present)
            else:
                none_total += 1
                none_hits += (winner == sub.none_class)
        none = f" none={none_hits / none_total:.3f}" if none_total else ""
        label = ds.vocab[sub.attribute_ids[0]]
        print(f"  concept {cid} ({label:9s}) acc={correct / total:.3f}{none}")

    print("== retrieval")
    pairs = corpus.make_query_pairs(ds, "test")
    report = retrieval.evaluate_topk(pairs, ds, bundle.model, bundle.gallery,
                                     bundle.subspaces,
                                     bundle.assignment.assignment,
                                     ks=tuple(cfg.evaluate.ks))
    for method, by_k in sorted(report.accuracy.items()):
        row = " ".join(f"@{k}={v:.3f}" for k, v in sorted(by_k.items()))
        print(f"  {method:14s} {row}")
    gallery = tuple(test_ids)
    detected = sum(
        concept_query(Query(p.query_id, p.added_attribute, gallery),
                      bundle.model, bundle.gallery, bundle.subspaces,
                      bundle.assignment.assignment).detected_negative
        == p.removed_attribute for p in pairs)
    print(f"  negative-attribute detection {detected}/{len(pairs)} "
          f"= {detected / len(pairs):.3f}")

    print("== length-subspace ordering (first PCA axis vs planted index)")
    length = spec[0]
    length_ids = {ds.attr_id(a) for a in length.attributes}
    cid = next(cid for cid, sub in bundle.subspaces.items()
               if set(sub.attribute_ids) == length_ids)
    proj = project_subspace(bundle, cid, "test")
    index_of = {ds.attr_id(a): i for i, a in enumerate(length.attributes)}
    coords, levels = [], []
    for item_id, (u, _) in proj.points.items():
        attr = next(a for a in ds.items[item_id].description if a in length_ids)
        coords.append(u)
        levels.append(index_of[attr])
    coords, levels = np.array(coords), np.array(levels, dtype=float)

    def ranks(x):
        order = np.argsort(x, kind="stable")
        r = np.empty(len(x))
        r[order] = np.arange(len(x))
        return r

    rc, rl = ranks(coords), ranks(levels)
    rho = np.corrcoef(rc, rl)[0, 1]
    print(f"  spearman |rho|={abs(rho):.3f}")


if __name__ == "__main__":
    main()
