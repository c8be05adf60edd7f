import numpy as np
import pytest

from sagediff.data import (WorldGenerationError, build_grouped_dataset, dataset_equal,
                           embedding_data_coupling, make_world, read_dataset,
                           read_world, sample_records, separation_rates, spearman,
                           validate_dataset, write_dataset, write_world)
from sagediff.grouping import cosine_matrix
from sagediff.numerics import Rng


@pytest.fixture(scope="module")
def small_world():
    return make_world(Rng(1, 0), n_meta=50, children_per_meta=3,
                      embed_dim=16, data_dim=2, tau_min=0.6, tau_max=0.9)


def test_world_embeddings_are_unit_norm(small_world):
    e = small_world.embedding_matrix()
    assert np.allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-9)


def test_sibling_pairs_land_in_window(small_world):
    sib_rate, cross_rate = separation_rates(small_world)
    assert sib_rate >= 0.95
    assert cross_rate >= 0.95


def test_all_sibling_pairs_strictly_inside_window(small_world):
    # The placement routine verifies each family, so the rate is exactly 1.
    sims = cosine_matrix(small_world.embedding_matrix())
    metas = np.array([c.meta_id for c in small_world.concepts])
    for i in range(len(small_world.concepts)):
        for j in range(i + 1, len(small_world.concepts)):
            if metas[i] == metas[j]:
                assert 0.6 < sims[i, j] < 0.9


def test_single_child_families_have_no_sibling_pairs():
    world = make_world(Rng(4, 0), n_meta=8, children_per_meta=1)
    records = sample_records(Rng(3, 0), world, per_concept=2)
    ds = build_grouped_dataset(records, 0.6, 0.9, target_groups=10)
    assert ds.provenance["short_of_target"]
    # same-concept records sit at cosine 1.0, outside the open window
    assert all(len(g) < 2 for g in ds.groups) or not ds.groups


def test_infeasible_window_raises():
    with pytest.raises(WorldGenerationError):
        make_world(Rng(4, 0), n_meta=2, children_per_meta=3,
                   tau_min=0.999, tau_max=1.0)


def test_world_regeneration_is_bit_identical(small_world):
    again = make_world(Rng(1, 0), n_meta=50, children_per_meta=3,
                       embed_dim=16, data_dim=2, tau_min=0.6, tau_max=0.9)
    for a, b in zip(small_world.concepts, again.concepts):
        assert np.array_equal(a.embedding, b.embedding)
        assert np.array_equal(a.mean, b.mean)
        assert a.spread == b.spread and a.meta_id == b.meta_id


def test_embedding_data_coupling_is_strong(small_world):
    assert embedding_data_coupling(small_world) > 0.5


def test_spearman_on_monotone_data():
    x = np.array([0.1, 0.5, 0.2, 0.9])
    assert spearman(x, 2 * x + 1) == pytest.approx(1.0)
    assert spearman(x, -x) == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# records


def test_zero_spread_records_sit_on_the_mean():
    world = make_world(Rng(5, 0), n_meta=3, children_per_meta=2, spread=0.0)
    records = sample_records(Rng(6, 0), world, per_concept=3)
    for r in records:
        assert np.array_equal(r.x, world.concept(r.concept_id).mean)


def test_record_sample_mean_obeys_clt():
    world = make_world(Rng(7, 0), n_meta=1, children_per_meta=1, spread=0.2)
    records = sample_records(Rng(8, 0), world, per_concept=10**5)
    xs = np.stack([r.x for r in records])
    concept = world.concepts[0]
    bound = 3.0 * concept.spread / np.sqrt(10**5)
    assert np.all(np.abs(xs.mean(axis=0) - concept.mean) < bound)


def test_records_deterministic_for_fixed_seed(small_world):
    a = sample_records(Rng(9, 1), small_world, per_concept=2)
    b = sample_records(Rng(9, 1), small_world, per_concept=2)
    assert all(np.array_equal(x.x, y.x) for x, y in zip(a, b))
    assert [r.id for r in a] == list(range(len(a)))


# ---------------------------------------------------------------------------
# grouped dataset


def test_dissimilar_records_give_zero_groups_and_warning(small_world):
    records = sample_records(Rng(10, 0), small_world, per_concept=1)
    ds = build_grouped_dataset(records[:4], 0.99, 0.999, target_groups=100)
    assert ds.groups == []
    assert ds.provenance["short_of_target"]


def test_three_siblings_make_four_cliques(small_world):
    # First family: three records of three sibling concepts, one each.
    records = sample_records(Rng(11, 0), small_world, per_concept=1)[:3]
    ds = build_grouped_dataset(records, 0.6, 0.9, target_groups=100)
    assert sorted(ds.groups) == [(0, 1), (0, 1, 2), (0, 2), (1, 2)]


def test_dataset_groups_revalidate_as_cliques(small_world):
    records = sample_records(Rng(12, 0), small_world, per_concept=2)
    ds = build_grouped_dataset(records, 0.6, 0.9, target_groups=200)
    assert len(ds.groups) == 200
    assert validate_dataset(ds)
    assert all(2 <= len(g) <= 5 for g in ds.groups)


def test_subsample_is_even_stride(small_world):
    records = sample_records(Rng(13, 0), small_world, per_concept=2)
    full = build_grouped_dataset(records, 0.6, 0.9, target_groups=10**9)
    total = full.provenance["n_cliques"]
    ds = build_grouped_dataset(records, 0.6, 0.9, target_groups=50)
    expected = [full.groups[(i * total) // 50] for i in range(50)]
    assert ds.groups == expected


def test_dataset_round_trip(tmp_path, small_world):
    records = sample_records(Rng(14, 0), small_world, per_concept=2)
    ds = build_grouped_dataset(records, 0.6, 0.9, target_groups=100,
                               extra_provenance={"seed": 14, "config_hash": "deadbeef"})
    write_dataset(tmp_path / "records.jsonl", tmp_path / "groups.txt", ds)
    loaded = read_dataset(tmp_path / "records.jsonl", tmp_path / "groups.txt")
    assert dataset_equal(ds, loaded)


def test_world_file_round_trip(tmp_path, small_world):
    write_world(tmp_path / "world.json", small_world)
    loaded = read_world(tmp_path / "world.json")
    assert loaded.provenance == small_world.provenance
    for a, b in zip(small_world.concepts, loaded.concepts):
        assert np.array_equal(a.embedding, b.embedding)
        assert np.array_equal(a.mean, b.mean)
        assert (a.id, a.meta_id, a.spread) == (b.id, b.meta_id, b.spread)
