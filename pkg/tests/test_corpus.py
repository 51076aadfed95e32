import itertools

import numpy as np
import pytest

from conceptfind import corpus
from conceptfind.errors import ConfigError, FormatError

from conftest import tiny_spec


def test_default_corpus_shape(dataset, default_spec):
    assert len(dataset.vocab) == 30
    non_optional = sum(not c.optional for c in default_spec)
    lengths = {len(item.description) for item in dataset.items}
    assert min(lengths) >= non_optional
    assert max(lengths) <= len(default_spec)
    assert len(dataset.items) == 2000


def test_description_ids_unique_and_known(dataset):
    for item in dataset.items:
        assert len(set(item.description)) == len(item.description)
        for attr in item.description:
            assert attr in dataset.vocab


def test_splits_partition_items(dataset):
    all_ids = sorted(i for ids in dataset.splits.values() for i in ids)
    assert all_ids == list(range(len(dataset.items)))


def test_generator_determinism_bytes(tmp_path):
    spec = tiny_spec()
    a = corpus.generate_synthetic(spec, 40, 0.1, seed=9, dims=(4, 4, 6))
    b = corpus.generate_synthetic(spec, 40, 0.1, seed=9, dims=(4, 4, 6))
    corpus.save_dataset(a, tmp_path / "a")
    corpus.save_dataset(b, tmp_path / "b")
    for name in ("manifest", "features.bin", "descriptions"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_zero_noise_channel_equals_mask(tiny_dataset):
    """With no noise, an attribute's channel is exactly its concept mask."""
    spec = tiny_spec()
    mask_of = {}
    channel = 0
    for concept_idx, concept in enumerate(spec):
        for attr in concept.attributes:
            mask_of[channel] = concept.spatial_mask.astype(np.float32)
            channel += 1
    for item in tiny_dataset.items:
        for attr in item.description:
            np.testing.assert_array_equal(item.feature_map[:, :, attr],
                                          mask_of[attr])


def test_planted_separability_zero_noise():
    spec = tiny_spec()
    ds = corpus.generate_synthetic(spec, 120, 0.0, seed=3, dims=(4, 4, 6))
    by_desc = {}
    for item in ds.items:
        by_desc.setdefault(item.description, []).append(item)
    for group in by_desc.values():
        for other in group[1:]:
            np.testing.assert_array_equal(group[0].feature_map,
                                          other.feature_map)


def test_ordered_concept_cumulative_channels():
    mask = np.ones((4, 4), dtype=bool)
    spec = [corpus.ConceptSpec(name="size", attributes=("s", "m", "l"),
                               spatial_mask=mask, semantic_slot=0,
                               ordered=True),
            corpus.ConceptSpec(name="hue", attributes=("a", "b"),
                               spatial_mask=mask, semantic_slot=1)]
    ds = corpus.generate_synthetic(spec, 50, 0.0, seed=1, dims=(4, 4, 5))
    for item in ds.items:
        size_attr = [a for a in item.description if a < 3][0]
        for ch in range(size_attr + 1):
            assert item.feature_map[:, :, ch].sum() == 16
        for ch in range(size_attr + 1, 3):
            assert item.feature_map[:, :, ch].sum() == 0


def test_spec_validation_errors():
    mask = np.ones((4, 4), dtype=bool)
    good = corpus.ConceptSpec("a", ("x", "y"), mask, 0)
    with pytest.raises(ConfigError):
        corpus.generate_synthetic([], 10, 0.0, seed=0, dims=(4, 4, 6))
    with pytest.raises(ConfigError):  # K too small
        corpus.generate_synthetic([good], 10, 0.0, seed=0, dims=(4, 4, 1))
    with pytest.raises(ConfigError):  # single attribute
        corpus.generate_synthetic(
            [corpus.ConceptSpec("a", ("x",), mask, 0)], 10, 0.0, seed=0,
            dims=(4, 4, 6))
    with pytest.raises(ConfigError):  # duplicate label
        corpus.generate_synthetic(
            [good, corpus.ConceptSpec("b", ("x", "z"), mask, 1)],
            10, 0.0, seed=0, dims=(4, 4, 6))
    with pytest.raises(ConfigError):  # duplicate slot
        corpus.generate_synthetic(
            [good, corpus.ConceptSpec("b", ("p", "q"), mask, 0)],
            10, 0.0, seed=0, dims=(4, 4, 6))
    with pytest.raises(ConfigError):  # empty mask
        corpus.generate_synthetic(
            [corpus.ConceptSpec("a", ("x", "y"),
                                np.zeros((4, 4), dtype=bool), 0)],
            10, 0.0, seed=0, dims=(4, 4, 6))


def test_roundtrip_equality(tiny_dataset, tmp_path):
    corpus.save_dataset(tiny_dataset, tmp_path / "ds", config_hash="ab" * 8)
    loaded = corpus.load_dataset(tmp_path / "ds")
    assert corpus.datasets_equal(tiny_dataset, loaded)
    assert corpus.dataset_config_hash(tmp_path / "ds") == "ab" * 8


def test_truncated_features_is_format_error(tiny_dataset, tmp_path):
    corpus.save_dataset(tiny_dataset, tmp_path / "ds")
    blob = (tmp_path / "ds" / "features.bin").read_bytes()
    (tmp_path / "ds" / "features.bin").write_bytes(blob[:-8])
    with pytest.raises(FormatError):
        corpus.load_dataset(tmp_path / "ds")


def test_dims_mismatch_is_format_error(tiny_dataset, tmp_path):
    corpus.save_dataset(tiny_dataset, tmp_path / "ds")
    manifest = (tmp_path / "ds" / "manifest").read_text()
    (tmp_path / "ds" / "manifest").write_text(
        manifest.replace("dims 4 4 6", "dims 5 4 6"))
    with pytest.raises(FormatError):
        corpus.load_dataset(tmp_path / "ds")


def test_bad_magic_and_unknown_attr(tiny_dataset, tmp_path):
    corpus.save_dataset(tiny_dataset, tmp_path / "ds")
    manifest = tmp_path / "ds" / "manifest"
    original = manifest.read_text()
    manifest.write_text(original.replace("CFDS 1", "XXXX 1"))
    with pytest.raises(FormatError):
        corpus.load_dataset(tmp_path / "ds")
    manifest.write_text(original)
    desc = tmp_path / "ds" / "descriptions"
    lines = desc.read_text().splitlines()
    lines[0] = lines[0] + " 99"
    desc.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="unknown attribute"):
        corpus.load_dataset(tmp_path / "ds")


def _toy_pairs_dataset():
    """Hand-built items: {red, v-neck}, {blue, v-neck}, {blue, round-neck}."""
    vocab = {0: "red", 1: "blue", 2: "v-neck", 3: "round-neck"}
    fmap = np.zeros((2, 2, 4), dtype=np.float32)
    items = [corpus.Item(0, fmap, (0, 2)),
             corpus.Item(1, fmap, (1, 2)),
             corpus.Item(2, fmap, (1, 3))]
    return corpus.Dataset(items=items, vocab=vocab, dims=(2, 2, 4),
                          ground_truth={0: 0, 1: 0, 2: 1, 3: 1},
                          splits={"test": [0, 1, 2]})


def test_query_pairs_definition():
    ds = _toy_pairs_dataset()
    pairs = corpus.make_query_pairs(ds, "test")
    assert corpus.QueryPair(0, 1, added_attribute=1, removed_attribute=0) in pairs
    assert corpus.QueryPair(1, 0, added_attribute=0, removed_attribute=1) in pairs
    # items 0 and 2 differ in two attributes: no pair
    assert not any({p.query_id, p.target_id} == {0, 2} for p in pairs)


def test_query_pairs_match_brute_force_oracle(dataset):
    pairs = corpus.make_query_pairs(dataset, "test")
    ids = dataset.splits["test"]
    descs = {i: frozenset(dataset.items[i].description) for i in ids}
    expected = set()
    for q, t in itertools.combinations(ids, 2):
        diff = descs[q] ^ descs[t]
        if len(diff) != 2:
            continue
        removed = next(iter(descs[q] - descs[t]), None)
        added = next(iter(descs[t] - descs[q]), None)
        if removed is None or added is None:
            continue
        if dataset.ground_truth[removed] != dataset.ground_truth[added]:
            continue
        expected.add((q, t, added, removed))
        expected.add((t, q, removed, added))
    got = {(p.query_id, p.target_id, p.added_attribute, p.removed_attribute)
           for p in pairs}
    assert got == expected
    assert len(pairs) == len(expected)


def test_query_pair_symmetry(dataset):
    pairs = corpus.make_query_pairs(dataset, "test")
    index = {(p.query_id, p.target_id): p for p in pairs}
    for p in pairs:
        mirror = index[(p.target_id, p.query_id)]
        assert mirror.added_attribute == p.removed_attribute
        assert mirror.removed_attribute == p.added_attribute


def test_query_pairs_deterministic_order(dataset):
    a = corpus.make_query_pairs(dataset, "test")
    b = corpus.make_query_pairs(dataset, "test")
    assert a == b
    assert a == sorted(a, key=lambda p: (p.query_id, p.target_id))


def test_empty_split_is_error(tiny_dataset):
    tiny_dataset.splits["empty"] = []
    with pytest.raises(ConfigError):
        corpus.make_query_pairs(tiny_dataset, "empty")
