"""
homux Synthetic Systems
Gaussian systems with planted higher-order structure of known sign and
magnitude: independent single-factor triplets assembled block-diagonally.

Each triplet follows X_i = a_i F + e_i with Var(e_i) = 1 - a_i^2 and a
residual covariance e_cov between X_1 and X_2. Positive e_cov adds shared
information (redundancy), negative e_cov cancels part of the common cause
between X_1 and X_2 and leaves X_3 as their common effect (synergy).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from homux.errors import SpecificationError
from homux.model import InteractionType, Multiplet, ResponseMatrix, ValidatedHyperedge
from homux.utils import derive_rng

logger = logging.getLogger(__name__)

REGIME_ECOV = {
    "near_zero": -0.15,
    "redundant": 0.22,
    "synergistic": -0.39,
}
MIXED_CYCLE = ("redundant", "synergistic", "near_zero")
DEFAULT_LOADINGS = (0.6, 0.6, 0.6)
DEFAULT_TRIPLETS = 9


@dataclass(frozen=True)
class TripletSpec:
    loadings: Tuple[float, float, float]
    e_cov: float = 0.0
    regime: str = ""

    def __post_init__(self):
        loadings = tuple(float(a) for a in self.loadings)
        if len(loadings) != 3:
            raise SpecificationError(f"Triplet needs three loadings, got {len(loadings)}")
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "e_cov", float(self.e_cov))


@dataclass(frozen=True)
class BlockSystemSpec:
    triplets: Tuple[TripletSpec, ...]
    n_samples: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "triplets", tuple(self.triplets))
        if not self.triplets:
            raise SpecificationError("Block system needs at least one triplet")
        if self.n_samples < 4:
            raise SpecificationError(f"n_samples must be >= 4, got {self.n_samples}")

    @property
    def n_items(self) -> int:
        return 3 * len(self.triplets)


def triplet_covariance(spec: TripletSpec) -> np.ndarray:
    """Implied correlation matrix of one triplet (unit marginal variances)."""
    a1, a2, a3 = spec.loadings
    if any(abs(a) > 1 for a in spec.loadings):
        raise SpecificationError(f"{spec}: loadings must lie in [-1, 1]")
    residual_1 = 1.0 - a1 * a1
    residual_2 = 1.0 - a2 * a2
    if spec.e_cov * spec.e_cov > residual_1 * residual_2 + 1e-15:
        raise SpecificationError(f"{spec}: residual covariance exceeds residual variances")

    corr = np.array([
        [1.0, a1 * a2 + spec.e_cov, a1 * a3],
        [a1 * a2 + spec.e_cov, 1.0, a2 * a3],
        [a1 * a3, a2 * a3, 1.0],
    ])
    if np.linalg.eigvalsh(corr)[0] <= 0:
        raise SpecificationError(f"{spec}: implied covariance is not positive definite")
    return corr


def omega_of_corr(corr: np.ndarray) -> float:
    """Exact Gaussian O-information (nats) from determinants, no regularization."""
    corr = np.asarray(corr, dtype=np.float64)
    k = corr.shape[0]
    sign, logdet = np.linalg.slogdet(corr)
    if sign <= 0:
        raise SpecificationError("Correlation matrix is not positive definite")
    total = (k - 2) * logdet
    for i in range(k):
        rest = [j for j in range(k) if j != i]
        total += np.log(corr[i, i]) - np.linalg.slogdet(corr[np.ix_(rest, rest)])[1]
    return float(0.5 * total)


def analytic_omega(spec: TripletSpec) -> float:
    return omega_of_corr(triplet_covariance(spec))


def system_covariance(spec: BlockSystemSpec) -> np.ndarray:
    return block_diag(*[triplet_covariance(t) for t in spec.triplets])


# === Ground truth ===

@dataclass(frozen=True)
class PlantedTriplet:
    multiplet: Multiplet
    spec: TripletSpec
    omega: float

    @property
    def regime(self) -> str:
        return self.spec.regime


@dataclass(frozen=True)
class GroundTruth:
    planted: Tuple[PlantedTriplet, ...]
    n_items: int
    floor: float = 0.15

    def block_of(self, item: int) -> int:
        return item // 3

    def omega_of(self, multiplet: Multiplet) -> float:
        """Analytic Omega of any multiplet of the block system."""
        blocks = {self.block_of(i) for i in multiplet.items}
        if len(blocks) > 1:
            return 0.0
        planted = self.planted[blocks.pop()]
        if multiplet == planted.multiplet:
            return planted.omega
        return 0.0

    def expected(self, floor: Optional[float] = None) -> List[PlantedTriplet]:
        """Planted triplets whose Omega clears the floor."""
        floor = self.floor if floor is None else floor
        return [p for p in self.planted if abs(p.omega) >= floor]


@dataclass(frozen=True)
class SyntheticSample:
    data: ResponseMatrix
    truth: GroundTruth
    spec: BlockSystemSpec = field(repr=False)


def sample_system(spec: BlockSystemSpec, layer_id: str = "synthetic", floor: float = 0.15) -> SyntheticSample:
    """
    Draw n_samples rows from the block-diagonal Gaussian and standardize
    every column to zero mean and unit (population) variance.
    """
    cov = system_covariance(spec)
    chol = np.linalg.cholesky(cov)
    rng = derive_rng(spec.seed, "synth", "sample")
    X = rng.standard_normal((spec.n_samples, cov.shape[0])) @ chol.T
    X = X - X.mean(axis=0)
    X = X / X.std(axis=0)
    X = X - X.mean(axis=0)

    planted = tuple(
        PlantedTriplet(Multiplet((3 * b, 3 * b + 1, 3 * b + 2)), t, analytic_omega(t))
        for b, t in enumerate(spec.triplets)
    )
    item_ids = tuple(f"x{i + 1}" for i in range(spec.n_items))
    data = ResponseMatrix(values=X, item_ids=item_ids, layer_id=layer_id, likert=None)
    logger.info("Sampled %d x %d synthetic system (%d planted triplets)", spec.n_samples, spec.n_items, len(planted))
    return SyntheticSample(data=data, truth=GroundTruth(planted, spec.n_items, floor), spec=spec)


# === Calibration ===

@dataclass(frozen=True)
class Calibration:
    """Shared (a, a, b) loadings and the analytic Omega per regime."""
    loadings: Tuple[float, float, float]
    omegas: Dict[str, float]
    margin: float
    floor: float

    def meets_floor(self) -> bool:
        return self.margin > 0


def regime_omegas(loadings: Sequence[float], e_covs: Dict[str, float] = None) -> Dict[str, float]:
    """Analytic Omega of each regime under the given loadings."""
    e_covs = REGIME_ECOV if e_covs is None else e_covs
    return {name: analytic_omega(TripletSpec(tuple(loadings), e)) for name, e in sorted(e_covs.items())}


def regime_margin(omegas: Dict[str, float], floor: float) -> float:
    """Smallest slack of (|near_zero| < floor, redundant > floor, synergistic < -floor)."""
    return min(
        omegas["redundant"] - floor,
        -floor - omegas["synergistic"],
        floor - abs(omegas["near_zero"]),
    )


def calibrate_loadings(
    floor: float = 0.15,
    e_covs: Dict[str, float] = None,
    a_grid: Optional[Iterable[float]] = None,
    b_grid: Optional[Iterable[float]] = None,
) -> Calibration:
    """
    Grid search over (a, a, b) loadings maximizing the minimum regime
    margin. Infeasible points (invalid residuals, non-PD) are skipped;
    ties keep the first grid point.
    """
    e_covs = REGIME_ECOV if e_covs is None else e_covs
    a_grid = np.round(np.linspace(0.05, 0.95, 91), 4) if a_grid is None else a_grid
    b_grid = np.round(np.linspace(0.05, 0.99, 95), 4) if b_grid is None else b_grid

    default = regime_omegas(DEFAULT_LOADINGS, e_covs)
    logger.info("Default loadings %s: %s", DEFAULT_LOADINGS,
                ", ".join(f"{k}={v:+.4f}" for k, v in default.items()))

    best: Optional[Calibration] = None
    for a, b in itertools.product(a_grid, b_grid):
        loadings = (float(a), float(a), float(b))
        try:
            omegas = regime_omegas(loadings, e_covs)
        except SpecificationError:
            continue
        margin = regime_margin(omegas, floor)
        if best is None or margin > best.margin:
            best = Calibration(loadings, omegas, margin, floor)

    if best is None:
        raise SpecificationError("No feasible loadings on the calibration grid")
    if not best.meets_floor():
        logger.warning("Calibration margin %.4f <= 0: regimes not separable at floor %.3f", best.margin, floor)
    logger.info("Calibrated loadings %s (margin %.4f): %s", best.loadings, best.margin,
                ", ".join(f"{k}={v:+.4f}" for k, v in best.omegas.items()))
    return best


def regime_system(
    regime: str,
    n_samples: int,
    seed: int,
    loadings: Optional[Sequence[float]] = None,
    n_triplets: int = DEFAULT_TRIPLETS,
    floor: float = 0.15,
) -> BlockSystemSpec:
    """
    Block system for a named regime; "mixed" cycles redundant, synergistic
    and near-zero triplets.
    """
    if regime != "mixed" and regime not in REGIME_ECOV:
        raise SpecificationError(f"Unknown regime '{regime}'")
    if loadings is None:
        loadings = calibrate_loadings(floor).loadings
    loadings = tuple(float(a) for a in loadings)
    names = [MIXED_CYCLE[b % len(MIXED_CYCLE)] if regime == "mixed" else regime for b in range(n_triplets)]
    triplets = tuple(TripletSpec(loadings, REGIME_ECOV[name], name) for name in names)
    return BlockSystemSpec(triplets=triplets, n_samples=n_samples, seed=seed)


def discretize_likert(data: ResponseMatrix, levels: int = 5) -> ResponseMatrix:
    """Quantile-bin each continuous column into codes 0..levels-1."""
    if levels < 2:
        raise SpecificationError(f"Likert discretization needs >= 2 levels, got {levels}")
    values = np.asarray(data.values, dtype=np.float64)
    codes = np.empty(values.shape, dtype=np.int64)
    cuts = np.linspace(0.0, 1.0, levels + 1)[1:-1]
    for j in range(values.shape[1]):
        edges = np.quantile(values[:, j], cuts)
        codes[:, j] = np.searchsorted(edges, values[:, j], side="right")
    return ResponseMatrix(values=codes, item_ids=data.item_ids, layer_id=data.layer_id, likert=(0, levels - 1))


# === Recovery scoring ===

def recovery_summary(hyperedges: Iterable[ValidatedHyperedge], truth: GroundTruth) -> Dict:
    """
    Score validated hyperedges against the planted blocks: which planted
    triplets were recovered with the right sign, and which validated
    hyperedges have no planted counterpart.
    """
    edges = {e.multiplet: e for e in hyperedges}
    per_regime: Dict[str, Dict[str, int]] = {}
    planted_rows = []
    for p in truth.planted:
        edge = edges.get(p.multiplet)
        expected_type = InteractionType.of(p.omega) if p.omega != 0 else None
        recovered = edge is not None
        sign_ok = recovered and edge.interaction_type is expected_type
        counts = per_regime.setdefault(p.regime or "unlabelled", {"planted": 0, "recovered": 0, "sign_correct": 0})
        counts["planted"] += 1
        counts["recovered"] += int(recovered)
        counts["sign_correct"] += int(sign_ok)
        planted_rows.append({
            "items": [i + 1 for i in p.multiplet.items],
            "regime": p.regime,
            "omega_true": p.omega,
            "recovered": recovered,
            "omega_est": edge.omega if recovered else None,
            "sign_correct": sign_ok,
        })

    planted_set = {p.multiplet for p in truth.planted}
    extra = [m for m in edges if m not in planted_set]
    cross_block = [m for m in extra if len({truth.block_of(i) for i in m.items}) > 1]
    sign_mismatch = [
        m for m in edges
        if truth.omega_of(m) != 0 and edges[m].interaction_type is not InteractionType.of(truth.omega_of(m))
    ]
    return {
        "planted": planted_rows,
        "per_regime": dict(sorted(per_regime.items())),
        "validated": len(edges),
        "unplanted": len(extra),
        "cross_block": len(cross_block),
        "sign_mismatches": len(sign_mismatch),
    }
