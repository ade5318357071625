"""
homux Information Core
Gaussian-copula entropy estimation and O-information for multiplets.

Units are nats throughout. The estimator ranks each item, maps ranks to
r/(n+1), pushes them through the standard normal quantile function and
evaluates closed-form Gaussian entropies on the sample correlation matrix.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special, stats

from homux.errors import DegenerateVariableError, SchemaError, SingularCovarianceError
from homux.model import MIN_ORDER, Multiplet, ResponseMatrix

logger = logging.getLogger(__name__)

RIDGE = 1e-10
LOG_2PIE = float(np.log(2.0 * np.pi * np.e))


@dataclass(frozen=True)
class CopulaScores:
    """Normal scores (respondents x items); columns follow the source matrix."""
    scores: np.ndarray
    item_ids: Tuple[str, ...]
    layer_id: str

    def __post_init__(self):
        arr = np.array(self.scores, dtype=np.float64, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def n_respondents(self) -> int:
        return self.scores.shape[0]

    @property
    def n_items(self) -> int:
        return self.scores.shape[1]

    def columns(self, multiplet: Multiplet) -> np.ndarray:
        multiplet.check_bounds(self.n_items, k_max=self.n_items)
        return self.scores[:, list(multiplet.items)]


@dataclass(frozen=True)
class OmegaEstimate:
    omega: float
    order: int


def copula_transform(data: ResponseMatrix, tie_jitter_seed: Optional[int] = None) -> CopulaScores:
    """
    Rank-based normal scores per column.

    Ties take average ranks, or are broken at random when a jitter seed
    is given (sensitivity analysis). Columns are centred so each has an
    exactly zero sample mean.
    """
    values = np.asarray(data.values, dtype=np.float64)
    n = values.shape[0]
    if n < 3:
        raise SchemaError(f"Layer '{data.layer_id}': copula transform needs at least 3 respondents")

    rng = np.random.default_rng(tie_jitter_seed) if tie_jitter_seed is not None else None
    scores = np.empty_like(values)
    for j in range(values.shape[1]):
        column = values[:, j]
        if np.all(column == column[0]):
            raise DegenerateVariableError(
                f"Layer '{data.layer_id}': item '{data.item_ids[j]}' is constant", item=data.item_ids[j]
            )
        if rng is None:
            ranks = stats.rankdata(column, method="average")
        else:
            order = np.lexsort((rng.random(n), column))
            ranks = np.empty(n)
            ranks[order] = np.arange(1, n + 1)
        scores[:, j] = special.ndtri(ranks / (n + 1.0))

    repeated = [
        data.item_ids[j] for j in range(values.shape[1])
        if np.unique(values[:, j]).size / float(n) < 0.9
    ]
    if repeated and rng is None:
        logger.warning("Layer '%s': %d items with >10%% repeated values use average ranks", data.layer_id, len(repeated))

    scores -= scores.mean(axis=0)
    return CopulaScores(scores=scores, item_ids=data.item_ids, layer_id=data.layer_id)


def _regularized(cov: np.ndarray) -> np.ndarray:
    k = cov.shape[-1]
    return cov + RIDGE * np.eye(k)


def gaussian_entropy(cov: np.ndarray) -> float:
    """
    Differential entropy (nats) of a Gaussian with covariance `cov`:
    0.5 * ln((2*pi*e)^k * det(cov)).
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise SingularCovarianceError("Covariance must be square and symmetric")
    reg = _regularized(cov)
    if np.linalg.eigvalsh(reg)[0] <= 0:
        raise SingularCovarianceError("Covariance not positive definite after ridge")
    k = cov.shape[0]
    return 0.5 * (k * LOG_2PIE + np.linalg.slogdet(reg)[1])


def omega_entropy_form(cov: np.ndarray) -> float:
    """
    O-information from entropies:
    (n-2) H(X) + sum_i [H(X_i) - H(X_{-i})].
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0]
    if n < MIN_ORDER:
        raise ValueError(f"O-information needs at least {MIN_ORDER} variables")
    total = (n - 2) * gaussian_entropy(cov)
    for i in range(n):
        rest = [j for j in range(n) if j != i]
        total += gaussian_entropy(cov[i:i + 1, i:i + 1]) - gaussian_entropy(cov[np.ix_(rest, rest)])
    return float(total)


def omega_from_corr(corr: np.ndarray) -> np.ndarray:
    """
    Log-determinant form of O-information over a stack of matrices.

    For shape (..., k, k) returns shape (...): the (2*pi*e) constants of
    the entropy form cancel, leaving
    0.5 * [(k-2) ln det C + sum_i (ln C_ii - ln det C_{-i})].
    Entries whose matrix is not positive definite after the ridge are NaN.
    """
    corr = np.asarray(corr, dtype=np.float64)
    k = corr.shape[-1]
    if k < MIN_ORDER:
        raise ValueError(f"O-information needs at least {MIN_ORDER} variables")

    finite = np.all(np.isfinite(corr), axis=(-2, -1))
    safe = np.where(finite[..., None, None], corr, np.eye(k))
    reg = _regularized(safe)
    ok = finite & (np.linalg.eigvalsh(reg)[..., 0] > 0)

    ld_full = np.linalg.slogdet(reg)[1]
    total = (k - 2) * ld_full
    diag = np.diagonal(reg, axis1=-2, axis2=-1)
    for i in range(k):
        rest = [j for j in range(k) if j != i]
        minor = reg[..., rest, :][..., :, rest]
        total = total + np.log(diag[..., i]) - np.linalg.slogdet(minor)[1]

    return np.where(ok, 0.5 * total, np.nan)


def sample_corr(columns: np.ndarray) -> np.ndarray:
    """
    Sample correlation over axis -2 for arrays shaped (..., n, k).
    Constant columns give NaN rows/columns.
    """
    centred = columns - columns.mean(axis=-2, keepdims=True)
    cross = np.einsum("...ni,...nj->...ij", centred, centred)
    scale = np.sqrt(np.diagonal(cross, axis1=-2, axis2=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cross / (scale[..., :, None] * scale[..., None, :])
    return corr


def jackknife_corr(columns: np.ndarray) -> np.ndarray:
    """
    Leave-one-row-out correlation matrices, shape (n, k, k), from running
    sums rather than n separate passes.
    """
    x = np.asarray(columns, dtype=np.float64)
    n = x.shape[0]
    total = x.sum(axis=0)
    cross = x.T @ x
    means = (total[None, :] - x) / (n - 1)
    outer = np.einsum("ni,nj->nij", x, x)
    cov = (cross[None, :, :] - outer) / (n - 1) - np.einsum("ni,nj->nij", means, means)
    scale = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return cov / (scale[:, :, None] * scale[:, None, :])


def o_information(scores: CopulaScores, multiplet: Multiplet) -> OmegaEstimate:
    """Omega of one multiplet on copula scores (nats)."""
    corr = np.corrcoef(scores.columns(multiplet), rowvar=False)
    if not np.all(np.isfinite(corr)):
        raise SingularCovarianceError(f"Multiplet {multiplet.key}: undefined correlation")
    return OmegaEstimate(omega=omega_entropy_form(corr), order=multiplet.order)
