"""
homux Validation
Three-stage inference turning candidate multiplets into validated
hyperedges:

1. Permutation null (columns shuffled independently), Benjamini-Hochberg
   adjustment per family and an absolute effect floor.
2. Row bootstrap with BCa intervals; intervals touching zero or point
   estimates outside the bulk of the bootstrap distribution fail.
3. Hierarchical comparison of each k-multiplet interval with the
   intervals of its (k-1)-sub-multiplets.

Every candidate ends up in the StageReport exactly once, with the stage
that removed it and why.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats
from statsmodels.stats.multitest import multipletests

from homux.candidates import CandidateSet
from homux.config import ValidationConfig
from homux.info import CopulaScores, jackknife_corr, omega_from_corr, sample_corr
from homux.model import InteractionType, Multiplet, Provenance, ValidatedHyperedge
from homux.utils import derive_rng

logger = logging.getLogger(__name__)

__all__ = [
    "ValidationConfig", "FailureReason", "CandidateRecord", "StageReport",
    "benjamini_hochberg", "percentile_interval", "bca_interval",
    "stage1_permutation", "stage2_bootstrap", "stage3_hierarchical",
    "validate_all", "split_by_sign",
]

T = TypeVar("T")
R = TypeVar("R")


class FailureReason(Enum):
    NOT_SIGNIFICANT = "not_significant"
    BELOW_FLOOR = "below_floor"
    CI_SPANS_ZERO = "ci_spans_zero"
    UNSTABLE_POINT = "unstable_point"
    SUBSUMED_BY_SUBORDER = "subsumed_by_suborder"


@dataclass(frozen=True)
class CandidateRecord:
    """Audit trail of one candidate through the stages."""
    multiplet: Multiplet
    provenance: Provenance
    omega: float = math.nan
    p_raw: float = math.nan
    p_adj: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    dropped_resamples: int = 0
    stage1: Optional[bool] = None
    stage2: Optional[bool] = None
    stage3: Optional[bool] = None
    reason: Optional[FailureReason] = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.reason is None and self.stage3 is True

    @property
    def failed_stage(self) -> Optional[int]:
        for stage, outcome in ((1, self.stage1), (2, self.stage2), (3, self.stage3)):
            if outcome is False:
                return stage
        return None

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["multiplet"] = self.multiplet.key
        data["order"] = self.multiplet.order
        data["provenance"] = self.provenance.value
        data["reason"] = self.reason.value if self.reason else None
        data["failed_stage"] = self.failed_stage
        return data


@dataclass(frozen=True)
class StageReport:
    """Per-candidate records keyed (and sorted) by multiplet."""
    records: Dict[Multiplet, CandidateRecord]

    def __post_init__(self):
        object.__setattr__(self, "records", {m: self.records[m] for m in sorted(self.records)})

    def __len__(self) -> int:
        return len(self.records)

    def survivors(self, stage: int) -> List[CandidateRecord]:
        attr = f"stage{stage}"
        return [r for r in self.records.values() if getattr(r, attr) is True]

    def removed(self) -> List[CandidateRecord]:
        return [r for r in self.records.values() if r.reason is not None]

    def updated(self, changes: Iterable[CandidateRecord]) -> "StageReport":
        records = dict(self.records)
        for record in changes:
            records[record.multiplet] = record
        return StageReport(records)

    def reason_counts(self) -> Dict[str, int]:
        counts = {reason.value: 0 for reason in FailureReason}
        for record in self.removed():
            counts[record.reason.value] += 1
        return counts


# === Inference building blocks ===

def benjamini_hochberg(p_values: Sequence[float], alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Step-up FDR control.

    Returns:
        Tuple of (reject mask, adjusted p-values)
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=bool), np.zeros(0)
    reject, p_adj, _, _ = multipletests(p, alpha=alpha, method="fdr_bh")
    return np.asarray(reject, dtype=bool), np.minimum(np.asarray(p_adj, dtype=np.float64), 1.0)


def percentile_interval(boot: np.ndarray, ci_level: float) -> Tuple[float, float]:
    tail = (1.0 - ci_level) / 2.0
    lo, hi = np.quantile(np.asarray(boot, dtype=np.float64), [tail, 1.0 - tail])
    return float(lo), float(hi)


def bca_acceleration(jack: np.ndarray) -> float:
    """Acceleration from jackknife values; zero when they carry no spread."""
    jack = np.asarray(jack, dtype=np.float64)
    u = jack.mean() - jack
    den = 6.0 * np.sum(u * u) ** 1.5
    if den == 0 or not np.isfinite(den):
        return 0.0
    return float(np.sum(u ** 3) / den)


def bca_interval(
    theta_hat: float, boot: np.ndarray, jack: np.ndarray, ci_level: float
) -> Tuple[float, float]:
    """
    Bias-corrected and accelerated bootstrap interval.

    z0 comes from the share of bootstrap values below the point estimate,
    the acceleration from the jackknife values.
    """
    boot = np.asarray(boot, dtype=np.float64)
    B = boot.size
    share = np.sum(boot < theta_hat) / B
    share = min(max(share, 1.0 / (B + 1)), B / (B + 1.0))
    z0 = stats.norm.ppf(share)
    a = bca_acceleration(jack)

    tail = (1.0 - ci_level) / 2.0
    zs = stats.norm.ppf([tail, 1.0 - tail])
    adjusted = stats.norm.cdf(z0 + (z0 + zs) / (1.0 - a * (z0 + zs)))
    lo, hi = np.quantile(boot, np.clip(adjusted, 0.0, 1.0))
    return float(lo), float(hi)


# === Resampling engines ===

def _permutation_null(columns: np.ndarray, n_perm: int, rngs: Sequence[np.random.Generator], batch_size: int) -> np.ndarray:
    """Omega under independent row shuffles, column j drawn from rngs[j]."""
    n, k = columns.shape
    if len(rngs) != k:
        raise ValueError(f"{len(rngs)} streams for {k} columns")
    out = np.empty(n_perm)
    done = 0
    while done < n_perm:
        b = min(batch_size, n_perm - done)
        shuffled = np.empty((b, n, k))
        for j, rng in enumerate(rngs):
            shuffled[:, :, j] = rng.permuted(np.tile(columns[:, j], (b, 1)), axis=1)
        out[done:done + b] = omega_from_corr(sample_corr(shuffled))
        done += b
    return out


def _bootstrap_omegas(columns: np.ndarray, n_boot: int, rng: np.random.Generator, batch_size: int) -> np.ndarray:
    """Omega over row resamples with replacement; NaN marks singular resamples."""
    n = columns.shape[0]
    out = np.empty(n_boot)
    done = 0
    while done < n_boot:
        b = min(batch_size, n_boot - done)
        idx = rng.integers(0, n, size=(b, n))
        out[done:done + b] = omega_from_corr(sample_corr(columns[idx]))
        done += b
    return out


@dataclass(frozen=True)
class BootstrapResult:
    omega: float
    ci_low: float
    ci_high: float
    dropped: int
    reason: Optional[FailureReason] = None
    note: str = ""


def bootstrap_ci(columns: np.ndarray, cfg: ValidationConfig, rng: np.random.Generator) -> BootstrapResult:
    """
    BCa interval for Omega on the given columns, with the stability rules:
    too many singular resamples, or a point estimate outside the central
    outlier_level mass of the bootstrap distribution, fail as unstable.
    """
    theta_hat = float(omega_from_corr(sample_corr(columns)))
    if not np.isfinite(theta_hat):
        return BootstrapResult(theta_hat, -math.inf, math.inf, 0, FailureReason.UNSTABLE_POINT, "singular correlation")

    boot = _bootstrap_omegas(columns, cfg.n_boot, rng, cfg.batch_size)
    finite = boot[np.isfinite(boot)]
    dropped = int(boot.size - finite.size)
    if dropped > cfg.max_dropped * cfg.n_boot:
        return BootstrapResult(theta_hat, -math.inf, math.inf, dropped, FailureReason.UNSTABLE_POINT,
                               f"{dropped} singular resamples")

    jack = omega_from_corr(jackknife_corr(columns))
    jack = jack[np.isfinite(jack)]
    lo, hi = bca_interval(theta_hat, finite, jack, cfg.ci_level)

    bulk_lo, bulk_hi = percentile_interval(finite, cfg.outlier_level)
    if not bulk_lo <= theta_hat <= bulk_hi:
        return BootstrapResult(theta_hat, lo, hi, dropped, FailureReason.UNSTABLE_POINT,
                               "point estimate outside bootstrap bulk")
    if lo <= 0.0 <= hi:
        return BootstrapResult(theta_hat, lo, hi, dropped, FailureReason.CI_SPANS_ZERO)
    if not lo <= theta_hat <= hi:
        return BootstrapResult(theta_hat, lo, hi, dropped, FailureReason.UNSTABLE_POINT,
                               "point estimate outside interval")
    return BootstrapResult(theta_hat, lo, hi, dropped)


def _parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> List[R]:
    """Order-preserving map; results never depend on the worker count."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# === Stages ===

def stage1_permutation(scores: CopulaScores, cands: CandidateSet, cfg: ValidationConfig, jobs: int = 1) -> StageReport:
    """Permutation p-values, BH adjustment per family, effect floor."""
    layer = scores.layer_id
    multiplets = cands.multiplets

    def evaluate(m: Multiplet) -> Tuple[float, float]:
        columns = scores.columns(m)
        omega = float(omega_from_corr(sample_corr(columns)))
        if not np.isfinite(omega):
            return omega, math.nan
        streams = [derive_rng(cfg.seed, "stage1", layer, m.key, item) for item in m.items]
        null = _permutation_null(columns, cfg.n_perm, streams, cfg.batch_size)
        exceed = int(np.sum(np.abs(null[np.isfinite(null)]) >= abs(omega)))
        return omega, (1.0 + exceed) / (cfg.n_perm + 1.0)

    results = dict(zip(multiplets, _parallel_map(evaluate, multiplets, jobs)))

    families: Dict[object, List[Multiplet]] = {}
    for m, (_, p) in results.items():
        if np.isfinite(p):
            families.setdefault(m.order if cfg.fdr_family == "order" else layer, []).append(m)

    adjusted: Dict[Multiplet, float] = {}
    for family in families.values():
        _, p_adj = benjamini_hochberg([results[m][1] for m in family], cfg.alpha_fdr)
        adjusted.update(zip(family, p_adj.tolist()))

    records = {}
    for m in multiplets:
        omega, p = results[m]
        record = CandidateRecord(m, cands.provenance[m], omega=omega, p_raw=p, p_adj=adjusted.get(m, math.nan))
        if m not in adjusted:
            record = replace(record, stage1=False, reason=FailureReason.NOT_SIGNIFICANT, note="singular correlation")
        elif record.p_adj > cfg.alpha_fdr:
            record = replace(record, stage1=False, reason=FailureReason.NOT_SIGNIFICANT)
        elif abs(omega) < cfg.effect_floor:
            record = replace(record, stage1=False, reason=FailureReason.BELOW_FLOOR)
        else:
            record = replace(record, stage1=True)
        records[m] = record

    report = StageReport(records)
    logger.info("Layer '%s' stage 1: %d/%d candidates pass", layer, len(report.survivors(1)), len(report))
    return report


def stage2_bootstrap(scores: CopulaScores, report: StageReport, cfg: ValidationConfig, jobs: int = 1) -> StageReport:
    """BCa stability for stage-1 survivors."""
    layer = scores.layer_id
    survivors = report.survivors(1)

    def evaluate(record: CandidateRecord) -> CandidateRecord:
        m = record.multiplet
        result = bootstrap_ci(scores.columns(m), cfg, derive_rng(cfg.seed, "stage2", layer, m.key))
        return replace(
            record,
            ci_low=result.ci_low,
            ci_high=result.ci_high,
            dropped_resamples=result.dropped,
            stage2=result.reason is None,
            reason=result.reason,
            note=result.note,
        )

    updated = report.updated(_parallel_map(evaluate, survivors, jobs))
    logger.info("Layer '%s' stage 2: %d/%d survivors stable", layer, len(updated.survivors(2)), len(survivors))
    return updated


def intervals_overlap(a: Tuple[float, float], b: Tuple[float, float]) -> bool:
    """Closed-interval overlap; touching endpoints count."""
    return a[0] <= b[1] and b[0] <= a[1]


class SubIntervalCache:
    """BCa intervals of sub-multiplets, computed once per layer."""

    def __init__(self, scores: CopulaScores, cfg: ValidationConfig):
        self.scores = scores
        self.cfg = cfg
        self._cache: Dict[Multiplet, Tuple[float, float]] = {}

    def get(self, m: Multiplet) -> Tuple[float, float]:
        cached = self._cache.get(m)
        if cached is not None:
            return cached
        rng = derive_rng(self.cfg.seed, "stage3", self.scores.layer_id, m.key)
        result = bootstrap_ci(self.scores.columns(m), self.cfg, rng)
        if result.dropped > self.cfg.max_dropped * self.cfg.n_boot or not np.isfinite(result.omega):
            logger.info("Sub-multiplet %s singular; its interval spans the real line", m.key)
            interval = (-math.inf, math.inf)
        else:
            interval = (result.ci_low, result.ci_high)
        # Deterministic per key, so a racing duplicate computation is harmless.
        return self._cache.setdefault(m, interval)

    def __len__(self) -> int:
        return len(self._cache)


def stage3_hierarchical(report: StageReport, scores: CopulaScores, cfg: ValidationConfig, jobs: int = 1) -> StageReport:
    """Remove k-multiplets whose interval overlaps any (k-1)-sub-multiplet interval."""
    layer = scores.layer_id
    survivors = report.survivors(2)
    cache = SubIntervalCache(scores, cfg)

    def evaluate(record: CandidateRecord) -> CandidateRecord:
        subs = record.multiplet.sub_multiplets()
        own = (record.ci_low, record.ci_high)
        for sub in subs:
            if intervals_overlap(own, cache.get(sub)):
                return replace(record, stage3=False, reason=FailureReason.SUBSUMED_BY_SUBORDER, note=f"overlaps {sub.key}")
        return replace(record, stage3=True)

    updated = report.updated(_parallel_map(evaluate, survivors, jobs))
    logger.info("Layer '%s' stage 3: %d/%d retained (%d sub-multiplet intervals)",
                layer, len(updated.survivors(3)), len(survivors), len(cache))
    return updated


def validate_all(
    scores: CopulaScores, cands: CandidateSet, cfg: ValidationConfig, jobs: int = 1
) -> Tuple[List[ValidatedHyperedge], StageReport]:
    """Stages 1-3 in order; returns validated hyperedges sorted by multiplet."""
    if len(cands) == 0:
        return [], StageReport({})
    report = stage1_permutation(scores, cands, cfg, jobs)
    report = stage2_bootstrap(scores, report, cfg, jobs)
    report = stage3_hierarchical(report, scores, cfg, jobs)

    hyperedges = [
        ValidatedHyperedge(
            multiplet=r.multiplet,
            omega=r.omega,
            ci_low=r.ci_low,
            ci_high=r.ci_high,
            p_adj=r.p_adj,
            interaction_type=InteractionType.of(r.omega),
            provenance=r.provenance,
        )
        for r in report.survivors(3)
    ]
    logger.info("Layer '%s': %d validated hyperedges; removed %s",
                scores.layer_id, len(hyperedges), report.reason_counts())
    return hyperedges, report


def split_by_sign(hyperedges: Iterable[ValidatedHyperedge]) -> Dict[InteractionType, List[ValidatedHyperedge]]:
    split = {InteractionType.REDUNDANCY: [], InteractionType.SYNERGY: []}
    for edge in hyperedges:
        split[edge.interaction_type].append(edge)
    return split
