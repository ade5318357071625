import numpy as np
import pytest

from homux.errors import SpecificationError
from homux.info import copula_transform, o_information
from homux.model import Multiplet, Provenance
from homux.synth import (
    DEFAULT_LOADINGS,
    MIXED_CYCLE,
    BlockSystemSpec,
    TripletSpec,
    analytic_omega,
    calibrate_loadings,
    discretize_likert,
    recovery_summary,
    regime_omegas,
    regime_system,
    sample_system,
    triplet_covariance,
)


@pytest.fixture(scope="module")
def calibration():
    return calibrate_loadings(0.15)


class TestTripletCovariance:
    def test_single_factor(self):
        corr = triplet_covariance(TripletSpec((0.6, 0.6, 0.6)))
        assert corr[0, 1] == pytest.approx(0.36)
        assert corr[0, 2] == pytest.approx(0.36)
        assert analytic_omega(TripletSpec((0.6, 0.6, 0.6))) > 0

    def test_independent_items(self):
        spec = TripletSpec((0.0, 0.0, 0.0))
        np.testing.assert_array_equal(triplet_covariance(spec), np.eye(3))
        assert analytic_omega(spec) == 0.0

    def test_residual_cancels_common_cause(self):
        corr = triplet_covariance(TripletSpec((0.6, 0.6, 0.6), e_cov=-0.36))
        assert corr[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_invalid_specs(self):
        with pytest.raises(SpecificationError):
            triplet_covariance(TripletSpec((0.9, 0.9, 0.9), e_cov=-0.5))
        with pytest.raises(SpecificationError):
            triplet_covariance(TripletSpec((1.2, 0.5, 0.5)))
        with pytest.raises(SpecificationError):
            TripletSpec((0.5, 0.5))

    def test_closed_form_values(self):
        equi = TripletSpec((np.sqrt(0.5),) * 3)
        assert analytic_omega(equi) == pytest.approx(0.0849, abs=1e-4)
        common_effect = TripletSpec((0.6, 0.6, 1.0), e_cov=-0.36)
        assert analytic_omega(common_effect) == pytest.approx(-0.1902, abs=1e-4)


class TestCalibration:
    def test_default_loadings_give_expected_signs(self):
        omegas = regime_omegas(DEFAULT_LOADINGS)
        assert omegas["redundant"] > 0
        assert omegas["synergistic"] < 0

    def test_calibrated_regimes_clear_the_floor(self, calibration):
        omegas = calibration.omegas
        assert calibration.meets_floor()
        assert omegas["redundant"] > 0.15
        assert omegas["synergistic"] < -0.15
        assert abs(omegas["near_zero"]) < 0.15
        a1, a2, _ = calibration.loadings
        assert a1 == a2

    def test_mixed_regime_cycles(self, calibration):
        spec = regime_system("mixed", 100, seed=1, loadings=calibration.loadings, n_triplets=6)
        assert [t.regime for t in spec.triplets] == list(MIXED_CYCLE) * 2
        assert spec.n_items == 18

    def test_unknown_regime(self):
        with pytest.raises(SpecificationError):
            regime_system("chaotic", 100, seed=1, loadings=DEFAULT_LOADINGS)


class TestSampling:
    def test_standardized_columns(self):
        spec = BlockSystemSpec((TripletSpec(DEFAULT_LOADINGS),) * 9, n_samples=500, seed=3)
        sample = sample_system(spec)
        X = sample.data.values
        assert X.shape == (500, 27)
        assert np.abs(X.mean(axis=0)).max() < 1e-12
        assert np.abs(X.std(axis=0) - 1.0).max() < 1e-12
        assert sample.data.likert is None

    def test_seed_reproducibility(self):
        spec = BlockSystemSpec((TripletSpec(DEFAULT_LOADINGS),), n_samples=50, seed=8)
        np.testing.assert_array_equal(sample_system(spec).data.values, sample_system(spec).data.values)

    def test_ground_truth(self):
        spec = BlockSystemSpec((TripletSpec(DEFAULT_LOADINGS),) * 2, n_samples=20, seed=1)
        truth = sample_system(spec).truth
        assert truth.planted[1].multiplet == Multiplet.of([3, 4, 5])
        assert truth.omega_of(Multiplet.of([0, 1, 3])) == 0.0
        assert truth.omega_of(Multiplet.of([0, 1, 2])) == pytest.approx(analytic_omega(TripletSpec(DEFAULT_LOADINGS)))

    def test_sample_correlation_near_truth(self):
        spec = BlockSystemSpec((TripletSpec(DEFAULT_LOADINGS, e_cov=0.22),), n_samples=10000, seed=5)
        X = sample_system(spec).data.values
        expected = triplet_covariance(spec.triplets[0])
        observed = np.corrcoef(X, rowvar=False)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            se = (1 - expected[i, j] ** 2) / np.sqrt(10000)
            assert abs(observed[i, j] - expected[i, j]) < 3 * se

    @pytest.mark.slow
    @pytest.mark.parametrize("n_samples, tolerance", [(50000, 0.02), (5000, 0.05)])
    def test_estimator_accuracy(self, n_samples, tolerance):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 20:
            loadings = tuple(rng.uniform(-0.8, 0.8, size=3))
            bound = np.sqrt((1 - loadings[0] ** 2) * (1 - loadings[1] ** 2))
            spec = TripletSpec(loadings, e_cov=float(rng.uniform(-0.8, 0.8) * bound))
            try:
                truth = analytic_omega(spec)
            except SpecificationError:
                continue
            sample = sample_system(BlockSystemSpec((spec,), n_samples=n_samples, seed=checked))
            est = o_information(copula_transform(sample.data), Multiplet.of([0, 1, 2])).omega
            assert abs(est - truth) <= tolerance
            checked += 1


def test_discretize_likert():
    spec = BlockSystemSpec((TripletSpec(DEFAULT_LOADINGS),), n_samples=1000, seed=2)
    coded = discretize_likert(sample_system(spec).data, levels=5)
    assert coded.likert == (0, 4)
    for j in range(3):
        counts = np.bincount(coded.values[:, j], minlength=5)
        assert counts.tolist() == [200] * 5


def test_recovery_summary(make_edge):
    spec = BlockSystemSpec(
        (TripletSpec(DEFAULT_LOADINGS, 0.22, "redundant"), TripletSpec(DEFAULT_LOADINGS, -0.39, "synergistic")),
        n_samples=20, seed=0,
    )
    truth = sample_system(spec).truth
    edges = [
        make_edge([0, 1, 2], 0.2),
        make_edge([3, 4, 5], 0.1),
        make_edge([0, 1, 3], -0.2, Provenance.SUBSCALE_INTER),
    ]
    summary = recovery_summary(edges, truth)
    assert summary["per_regime"]["redundant"] == {"planted": 1, "recovered": 1, "sign_correct": 1}
    assert summary["per_regime"]["synergistic"] == {"planted": 1, "recovered": 1, "sign_correct": 0}
    assert summary["validated"] == 3
    assert summary["unplanted"] == 1
    assert summary["cross_block"] == 1
    assert summary["sign_mismatches"] == 1
