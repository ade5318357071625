import numpy as np
import pytest

from homux.info import copula_transform
from homux.model import InteractionType, Multiplet, Provenance, ResponseMatrix, ValidatedHyperedge
from homux.network import CorrelationMethod, DyadicNetwork


def equicorrelation(k: int, rho: float) -> np.ndarray:
    cov = np.full((k, k), rho)
    np.fill_diagonal(cov, 1.0)
    return cov


@pytest.fixture
def gaussian_layer():
    """Factory: continuous ResponseMatrix drawn from a given correlation matrix."""
    def make(cov, n, seed=0, layer_id="test"):
        cov = np.asarray(cov, dtype=float)
        rng = np.random.default_rng(seed)
        values = rng.multivariate_normal(np.zeros(cov.shape[0]), cov, size=n)
        ids = tuple(f"x{i + 1}" for i in range(cov.shape[0]))
        return ResponseMatrix(values=values, item_ids=ids, layer_id=layer_id, likert=None)
    return make


@pytest.fixture
def gaussian_scores(gaussian_layer):
    def make(cov, n, seed=0, layer_id="test"):
        return copula_transform(gaussian_layer(cov, n, seed, layer_id))
    return make


@pytest.fixture
def make_network():
    """Factory: DyadicNetwork from a partial-correlation matrix."""
    def make(pcor):
        pcor = np.asarray(pcor, dtype=float)
        n = pcor.shape[0]
        return DyadicNetwork(
            partial_corr=pcor,
            precision=np.eye(n),
            covariance=np.eye(n),
            lambda_selected=0.1,
            ebic_gamma=0.5,
            method=CorrelationMethod.NONPARANORMAL,
            n_samples=100,
        )
    return make


@pytest.fixture
def make_edge():
    """Factory: valid hyperedge with a CI around omega."""
    def make(items, omega, provenance=Provenance.NETWORK_BASED):
        lo, hi = sorted((0.5 * omega, 1.5 * omega))
        return ValidatedHyperedge(
            multiplet=Multiplet.of(items),
            omega=omega,
            ci_low=lo,
            ci_high=hi,
            p_adj=0.01,
            interaction_type=InteractionType.of(omega),
            provenance=provenance,
        )
    return make
