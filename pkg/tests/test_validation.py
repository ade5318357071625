import itertools

import numpy as np
import pytest

from homux.candidates import CandidateSet
from homux.config import ValidationConfig
from homux.errors import ConfigError
from homux.info import CopulaScores, copula_transform
from homux.model import InteractionType, Multiplet, Provenance
from homux.synth import calibrate_loadings, regime_system, sample_system
from homux.utils import derive_rng
from homux.validation import (
    CandidateRecord,
    FailureReason,
    StageReport,
    _permutation_null,
    bca_interval,
    benjamini_hochberg,
    intervals_overlap,
    percentile_interval,
    split_by_sign,
    stage1_permutation,
    stage2_bootstrap,
    validate_all,
)

from conftest import equicorrelation

COMMON_EFFECT = np.array([[1.0, 0.0, 0.6], [0.0, 1.0, 0.6], [0.6, 0.6, 1.0]])


def cfg(**overrides):
    base = dict(n_perm=200, n_boot=1000, effect_floor=0.15, seed=1)
    base.update(overrides)
    return ValidationConfig(**base)


def candidates(*items, provenance=Provenance.NETWORK_BASED):
    return CandidateSet.from_multiplets([Multiplet.of(i) for i in items], provenance, "test")


def triplet_plus_noise(rho=0.7):
    cov = np.eye(4)
    cov[:3, :3] = equicorrelation(3, rho)
    return cov


class TestBenjaminiHochberg:
    def test_worked_example(self):
        reject, p_adj = benjamini_hochberg([0.01, 0.02, 0.04, 0.5], 0.05)
        assert reject.tolist() == [True, True, False, False]
        assert np.all(p_adj >= np.array([0.01, 0.02, 0.04, 0.5]) - 1e-12)

    def test_matches_step_up_definition(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            m = int(rng.integers(1, 30))
            p = rng.random(m) ** 3
            reject, _ = benjamini_hochberg(p, 0.05)
            order = np.sort(p)
            passing = [i for i in range(m) if order[i] <= (i + 1) / m * 0.05]
            expected = p <= order[passing[-1]] if passing else np.zeros(m, dtype=bool)
            assert reject.tolist() == expected.tolist()

    def test_empty(self):
        reject, p_adj = benjamini_hochberg([], 0.05)
        assert reject.size == 0 and p_adj.size == 0


class TestIntervals:
    def test_bca_reduces_to_percentile_without_bias_or_skew(self):
        rng = np.random.default_rng(0)
        half = rng.normal(size=500)
        boot = np.concatenate([half, -half]) + 2.0
        jack = np.ones(10)
        lo, hi = bca_interval(2.0, boot, jack, 0.95)
        p_lo, p_hi = percentile_interval(boot, 0.95)
        assert lo == pytest.approx(p_lo, abs=1e-9)
        assert hi == pytest.approx(p_hi, abs=1e-9)

    @pytest.mark.slow
    def test_bca_coverage_for_gaussian_mean(self):
        rng = np.random.default_rng(12)
        n, reps, B = 100, 1000, 1000
        covered = 0
        for _ in range(reps):
            x = rng.normal(size=n)
            boot = x[rng.integers(0, n, size=(B, n))].mean(axis=1)
            jack = (x.sum() - x) / (n - 1)
            lo, hi = bca_interval(x.mean(), boot, jack, 0.90)
            covered += lo <= 0.0 <= hi
        assert 0.87 <= covered / reps <= 0.93

    def test_closed_overlap(self):
        assert intervals_overlap((0.1, 0.2), (0.2, 0.3))
        assert not intervals_overlap((0.1, 0.2), (0.21, 0.3))
        assert intervals_overlap((0.1, 0.2), (-np.inf, np.inf))


class TestStageOne:
    def test_effect_floor(self, gaussian_scores):
        scores = gaussian_scores(equicorrelation(3, 0.5), 2000, seed=5)
        cands = candidates([0, 1, 2])
        strict = stage1_permutation(scores, cands, cfg(effect_floor=0.15))
        loose = stage1_permutation(scores, cands, cfg(effect_floor=0.05))
        record = strict.records[Multiplet.of([0, 1, 2])]
        assert record.reason is FailureReason.BELOW_FLOOR
        assert record.p_raw == pytest.approx(1.0 / 201.0)
        assert loose.records[Multiplet.of([0, 1, 2])].stage1 is True

    def test_independent_noise_rarely_passes(self, gaussian_scores):
        scores = gaussian_scores(np.eye(12), 500, seed=6)
        triplets = list(itertools.combinations(range(12), 3))[:100]
        report = stage1_permutation(scores, candidates(*triplets), cfg(effect_floor=0.0))
        assert len(report) == 100
        assert len(report.survivors(1)) <= 5

    def test_singular_candidate_is_recorded(self):
        values = np.random.default_rng(0).normal(size=(50, 3))
        values[:, 2] = 0.0
        scores = CopulaScores(values, ("a", "b", "c"), "AN")
        report = stage1_permutation(scores, candidates([0, 1, 2]), cfg())
        record = report.records[Multiplet.of([0, 1, 2])]
        assert record.reason is FailureReason.NOT_SIGNIFICANT
        assert record.note == "singular correlation"

    def test_each_column_has_its_own_stream(self, gaussian_scores):
        columns = gaussian_scores(equicorrelation(3, 0.5), 200, seed=3).scores

        def streams(*seeds):
            return [derive_rng(s, "stage1", "AN", "1-2-3", j) for j, s in enumerate(seeds)]

        a = _permutation_null(columns, 50, streams(1, 1, 1), batch_size=16)
        b = _permutation_null(columns, 50, streams(1, 1, 1), batch_size=16)
        c = _permutation_null(columns, 50, streams(1, 1, 2), batch_size=16)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        with pytest.raises(ValueError, match="2 streams for 3 columns"):
            _permutation_null(columns, 50, streams(1, 1), batch_size=16)

    def test_reproducible_across_jobs(self, gaussian_scores):
        scores = gaussian_scores(triplet_plus_noise(0.5), 400, seed=2)
        cands = candidates([0, 1, 2], [0, 1, 3], [1, 2, 3])
        a = stage1_permutation(scores, cands, cfg(), jobs=1)
        b = stage1_permutation(scores, cands, cfg(), jobs=3)
        assert [r.p_raw for r in a.records.values()] == [r.p_raw for r in b.records.values()]


class TestStageTwo:
    def test_synergy_interval_below_zero(self, gaussian_scores):
        scores = gaussian_scores(COMMON_EFFECT, 5000, seed=8)
        edges, report = validate_all(scores, candidates([0, 1, 2]), cfg())
        record = report.records[Multiplet.of([0, 1, 2])]
        assert record.stage2 is True
        assert record.ci_high < 0
        assert edges[0].interaction_type is InteractionType.SYNERGY

    def test_noise_intervals_usually_span_zero(self, gaussian_scores):
        scores = gaussian_scores(np.eye(6), 500, seed=10)
        triplets = list(itertools.combinations(range(6), 3))[:10]
        forced = StageReport({
            Multiplet.of(t): CandidateRecord(Multiplet.of(t), Provenance.NETWORK_BASED, stage1=True)
            for t in triplets
        })
        report = stage2_bootstrap(scores, forced, cfg())
        spans = [r for r in report.records.values() if r.reason is FailureReason.CI_SPANS_ZERO]
        assert len(spans) >= 7


class TestStageThree:
    def test_triplet_always_kept(self, gaussian_scores):
        scores = gaussian_scores(triplet_plus_noise(), 3000, seed=1)
        edges, report = validate_all(scores, candidates([0, 1, 2]), cfg())
        assert report.records[Multiplet.of([0, 1, 2])].stage3 is True
        assert [e.multiplet for e in edges] == [Multiplet.of([0, 1, 2])]

    def test_triplet_plus_noise_removed(self, gaussian_scores):
        scores = gaussian_scores(triplet_plus_noise(), 3000, seed=1)
        edges, report = validate_all(scores, candidates([0, 1, 2], [0, 1, 2, 3]), cfg())
        record = report.records[Multiplet.of([0, 1, 2, 3])]
        assert record.stage2 is True
        assert record.reason is FailureReason.SUBSUMED_BY_SUBORDER
        assert [e.multiplet for e in edges] == [Multiplet.of([0, 1, 2])]

    @pytest.mark.slow
    def test_triplet_plus_noise_removed_across_seeds(self, gaussian_scores):
        removed = 0
        for seed in range(100):
            scores = gaussian_scores(triplet_plus_noise(), 3000, seed=seed)
            _, report = validate_all(scores, candidates([0, 1, 2, 3]), cfg(n_perm=100, seed=seed))
            removed += report.records[Multiplet.of([0, 1, 2, 3])].reason is FailureReason.SUBSUMED_BY_SUBORDER
        assert removed >= 95

    def test_genuine_quadruplet_retained(self, gaussian_scores):
        scores = gaussian_scores(equicorrelation(4, 0.5), 5000, seed=3)
        edges, report = validate_all(scores, candidates([0, 1, 2, 3]), cfg())
        assert report.records[Multiplet.of([0, 1, 2, 3])].stage3 is True
        assert edges[0].omega == pytest.approx(0.2232, abs=0.03)


class TestValidateAll:
    def test_empty_candidates(self, gaussian_scores):
        edges, report = validate_all(gaussian_scores(np.eye(3), 50), CandidateSet(), cfg())
        assert edges == [] and len(report) == 0

    def test_monotone_filtering_and_accounting(self, gaussian_scores):
        scores = gaussian_scores(triplet_plus_noise(), 1500, seed=4)
        cands = candidates([0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3], [0, 1, 2, 3])
        edges, report = validate_all(scores, cands, cfg())
        s1 = {r.multiplet for r in report.survivors(1)}
        s2 = {r.multiplet for r in report.survivors(2)}
        s3 = {r.multiplet for r in report.survivors(3)}
        assert s3 <= s2 <= s1
        assert len(report.removed()) + len(s3) == len(cands)
        assert {e.multiplet for e in edges} == s3
        for edge in edges:
            assert edge.interaction_type is InteractionType.of(edge.omega)
            assert not edge.ci_low <= 0.0 <= edge.ci_high

    def test_reproducible_across_jobs(self, gaussian_scores):
        scores = gaussian_scores(triplet_plus_noise(), 1500, seed=4)
        cands = candidates([0, 1, 2], [0, 1, 3], [0, 1, 2, 3])
        _, a = validate_all(scores, cands, cfg(), jobs=1)
        _, b = validate_all(scores, cands, cfg(), jobs=4)
        for m in a.records:
            ra, rb = a.records[m], b.records[m]
            assert (ra.stage1, ra.stage2, ra.stage3, ra.reason) == (rb.stage1, rb.stage2, rb.stage3, rb.reason)
            np.testing.assert_array_equal([ra.omega, ra.p_adj, ra.ci_low, ra.ci_high],
                                          [rb.omega, rb.p_adj, rb.ci_low, rb.ci_high])

    @pytest.mark.slow
    def test_cross_block_multiplets_rejected(self):
        spec = regime_system("mixed", 5000, seed=17, loadings=calibrate_loadings(0.15).loadings, n_triplets=9)
        scores = copula_transform(sample_system(spec, layer_id="mixed").data)
        rng = np.random.default_rng(17)
        drawn = set()
        while len(drawn) < 200:
            items = rng.choice(spec.n_items, size=int(rng.integers(3, 6)), replace=False)
            if len({int(i) // 3 for i in items}) >= 2:
                drawn.add(Multiplet.of(items))
        edges, report = validate_all(scores, candidates(*[m.items for m in drawn]), ValidationConfig(seed=17), jobs=4)
        assert len(report) == 200
        assert len(edges) <= 10

    def test_split_by_sign(self, make_edge):
        edges = [make_edge([0, 1, 2], 0.3), make_edge([1, 2, 3], -0.2)]
        split = split_by_sign(edges)
        assert len(split[InteractionType.REDUNDANCY]) == 1
        assert len(split[InteractionType.SYNERGY]) == 1


def test_config_lower_bounds():
    with pytest.raises(ConfigError):
        ValidationConfig(n_perm=50)
    with pytest.raises(ConfigError):
        ValidationConfig(n_boot=500)
