import numpy as np
import pytest

from sagediff.data import Concept, GroupedDataset, Record
from sagediff.metrics import (GaussianFit, MetricsReport, alignment_score, diversity,
                              evaluate, fit_gaussian, frechet_distance, read_report,
                              write_report)
from sagediff.numerics import Rng
from sagediff.sampling import CostReport, GeneratedSample


def _concept(mean, spread=0.15, cid=0):
    m = np.asarray(mean, dtype=np.float64)
    emb = np.zeros(4)
    emb[0] = 1.0
    return Concept(cid, 0, emb, m, spread)


# ---------------------------------------------------------------------------
# frechet


def test_frechet_identical_fits_is_zero():
    fit = GaussianFit(np.array([1.0, 2.0]), np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert frechet_distance(fit, fit) <= 1e-10


def test_frechet_mean_term_only():
    a = GaussianFit(np.zeros(2), np.eye(2))
    b = GaussianFit(np.array([3.0, 4.0]), np.eye(2))
    assert frechet_distance(a, b) == pytest.approx(25.0, abs=1e-10)


def test_frechet_scalar_closed_form():
    # 1-D, variances 1 and 4, equal means: (sigma_a - sigma_b)^2 = 1.
    a = GaussianFit(np.zeros(1), np.array([[1.0]]))
    b = GaussianFit(np.zeros(1), np.array([[4.0]]))
    assert frechet_distance(a, b) == pytest.approx(1.0, abs=1e-12)


def test_frechet_symmetric_and_non_negative():
    rng = Rng(3, 0)
    for _ in range(20):
        raw_a = rng.gaussian(6).reshape(3, 2)
        raw_b = rng.gaussian(6).reshape(3, 2)
        a = GaussianFit(rng.gaussian(2), raw_a.T @ raw_a)
        b = GaussianFit(rng.gaussian(2), raw_b.T @ raw_b)
        ab, ba = frechet_distance(a, b), frechet_distance(b, a)
        assert abs(ab - ba) <= 1e-10
        assert ab >= 0.0


def test_frechet_identity_of_indiscernibles_on_fits():
    samples = Rng(4, 0).gaussian(400).reshape(200, 2)
    fit = fit_gaussian(samples)
    other = fit_gaussian(samples + np.array([0.5, 0.0]))
    assert frechet_distance(fit, fit) <= 1e-10
    assert frechet_distance(fit, other) > 0.1


def test_gaussian_fit_validates():
    with pytest.raises(ValueError):
        GaussianFit(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        GaussianFit(np.zeros(2), -np.eye(2))


# ---------------------------------------------------------------------------
# alignment


def test_alignment_perfect_samples():
    c = _concept([2.0, -1.0])
    samples = np.tile(c.mean, (5, 1))
    assert alignment_score(samples, c) == 1.0


def test_alignment_one_spread_away():
    c = _concept([0.0, 0.0], spread=0.3)
    sample = np.array([[0.3, 0.0]])
    assert alignment_score(sample, c) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_alignment_expectation_for_own_distribution():
    # x ~ N(mu, s^2 I) scored with kernel width s gives 2^(-d/2) = 0.5 in 2-D.
    c = _concept([1.0, 2.0], spread=0.2)
    rng = Rng(5, 0)
    samples = c.mean + c.spread * rng.gaussian(2 * 10**4).reshape(10**4, 2)
    assert alignment_score(samples, c) == pytest.approx(0.5, abs=0.02)


def test_alignment_zero_spread_is_indicator():
    c = _concept([1.0, 1.0], spread=0.0)
    samples = np.array([[1.0, 1.0], [1.0, 1.000001]])
    assert alignment_score(samples, c) == 0.5


def test_alignment_translation_equivariance():
    c = _concept([0.5, -0.5], spread=0.25)
    rng = Rng(6, 0)
    samples = rng.gaussian(20).reshape(10, 2)
    shift = np.array([3.0, -7.0])
    shifted = _concept(c.mean + shift, spread=0.25)
    assert alignment_score(samples + shift, shifted) == pytest.approx(
        alignment_score(samples, c), abs=1e-12)


def test_alignment_bounded():
    c = _concept([0.0, 0.0], spread=0.1)
    samples = Rng(7, 0).gaussian(40).reshape(20, 2) * 5
    assert 0.0 <= alignment_score(samples, c) <= 1.0


# ---------------------------------------------------------------------------
# diversity


def test_diversity_two_points_is_their_distance():
    group = np.array([[0.0, 0.0], [3.0, 0.0]])
    assert diversity([group]) == pytest.approx(3.0, abs=1e-12)


def test_diversity_identical_members_is_zero():
    group = np.tile(np.array([1.0, 2.0]), (4, 1))
    assert diversity([group]) == 0.0


def test_diversity_skips_singletons_and_reports_absent():
    assert diversity([np.array([[1.0, 2.0]])]) is None
    mixed = diversity([np.array([[0.0, 0.0]]), np.array([[0.0, 0.0], [2.0, 0.0]])])
    assert mixed == pytest.approx(2.0)


def test_diversity_well_separated_concepts():
    rng = Rng(8, 0)
    groups = []
    for _ in range(200):
        a = np.array([0.0, 0.0]) + 0.1 * rng.gaussian(2)
        b = np.array([10.0, 0.0]) + 0.1 * rng.gaussian(2)
        groups.append(np.stack([a, b]))
    assert 9.5 <= diversity(groups) <= 10.5


def test_diversity_permutation_invariant_and_scales_linearly():
    rng = Rng(9, 0)
    group = rng.gaussian(10).reshape(5, 2)
    base = diversity([group])
    assert diversity([group[::-1]]) == pytest.approx(base, abs=1e-12)
    assert diversity([3.0 * group]) == pytest.approx(3.0 * base, rel=1e-12)


# ---------------------------------------------------------------------------
# evaluate


def _world_with(concepts):
    from sagediff.data import OracleWorld
    return OracleWorld(list(concepts), {"n_meta": 1})


def test_evaluate_reference_against_itself_is_zero_frechet():
    rng = Rng(10, 0)
    concepts = [_concept([i * 2.0, 0.0], cid=i) for i in range(3)]
    records, samples = [], []
    rid = 0
    for c in concepts:
        for _ in range(40):
            x = c.mean + 0.15 * rng.gaussian(2)
            records.append(Record(rid, c.id, c.embedding.copy(), x))
            samples.append(GeneratedSample(c.id, None, x.copy(), 0.0, 1.0, 1))
            rid += 1
    dataset = GroupedDataset(records, [(0, 1)], {"tau_min": 0.6, "tau_max": 0.9})
    result = evaluate(samples, dataset, _world_with(concepts), None,
                      model="ref", scheme="independent", beta=0.0)
    assert result.report.frechet <= 1e-9
    assert result.report.diversity == 0.0  # no group ids -> reported as zero
    assert result.skipped_prompt_ids == []


def test_evaluate_skips_unresolvable_prompts():
    concepts = [_concept([0.0, 0.0], cid=0)]
    samples = [GeneratedSample(0, 0, np.zeros(2), 0.3, 1.0, 1),
               GeneratedSample(0, 0, np.zeros(2), 0.3, 1.0, 1),
               GeneratedSample(99, 0, np.ones(2), 0.3, 1.0, 1)]
    result = evaluate(samples, None, _world_with(concepts),
                      CostReport(100, 90), model="m", scheme="shared", beta=0.3)
    assert result.skipped_prompt_ids == [99]
    assert result.report.alignment == 1.0
    assert result.report.cost_saving == pytest.approx(0.1)
    assert result.report.frechet is None  # no reference dataset given


def test_report_csv_round_trips_unchanged(tmp_path):
    rows = [
        MetricsReport("sage", "shared", 0.3, 0.123456789, 0.5, 1.25, 0.19),
        MetricsReport("ldm", "independent", 0.0, None, 0.25, 0.0, 0.0),
    ]
    path = tmp_path / "report.csv"
    write_report(path, rows, config_hash="beef99")
    first = path.read_bytes()
    loaded, stamp = read_report(path)
    assert stamp == "beef99"
    assert loaded == rows
    write_report(path, loaded, config_hash=stamp)
    assert path.read_bytes() == first
    header = first.decode().splitlines()[1]
    assert header == "model,scheme,beta,frechet,alignment,diversity,cost_saving"
