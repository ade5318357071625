"""
homux Dyadic Networks
Sparse signed partial-correlation networks from ordinal data: nonparanormal
or polychoric correlation followed by EBIC-selected graphical lasso.
"""

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import special, stats
from scipy.optimize import minimize_scalar
from sklearn.covariance import graphical_lasso
from sklearn.exceptions import ConvergenceWarning
from statsmodels.stats.correlation_tools import corr_nearest

from homux.errors import ConfigError, DegenerateVariableError, EstimationError
from homux.info import RIDGE, copula_transform
from homux.model import ResponseMatrix

logger = logging.getLogger(__name__)

RHO_MARGIN = 1e-6
CDF_ZERO_NUDGE = 1e-12
PROB_FLOOR = 1e-300


class CorrelationMethod(Enum):
    NONPARANORMAL = "nonparanormal"
    POLYCHORIC = "polychoric"


@dataclass(frozen=True)
class CorrelationEstimate:
    """Symmetric unit-diagonal correlation matrix and the method that built it."""
    matrix: np.ndarray
    method: CorrelationMethod
    n_samples: int
    item_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        m = 0.5 * (m + m.T)
        np.fill_diagonal(m, 1.0)
        m = np.clip(m, -1.0, 1.0)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class LambdaDiagnostic:
    """Per-lambda record of the EBIC sweep."""
    lam: float
    edges: int
    ebic: float
    converged: bool
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"lambda": self.lam, "edges": self.edges, "ebic": self.ebic,
                "converged": self.converged, "message": self.message}


@dataclass(frozen=True)
class DyadicNetwork:
    """Sparse partial-correlation network selected by EBIC."""
    partial_corr: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray
    lambda_selected: float
    ebic_gamma: float
    method: CorrelationMethod
    n_samples: int
    diagnostics: Tuple[LambdaDiagnostic, ...] = field(default_factory=tuple)

    @property
    def n_nodes(self) -> int:
        return self.partial_corr.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.partial_corr, 1)))

    def skeleton(self, positive_only: bool = False) -> nx.Graph:
        """Undirected graph on all nodes; edges carry the signed weight."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_nodes))
        rows, cols = np.nonzero(np.triu(self.partial_corr, 1))
        for i, j in zip(rows.tolist(), cols.tolist()):
            weight = float(self.partial_corr[i, j])
            if positive_only and weight <= 0:
                continue
            graph.add_edge(i, j, weight=weight)
        return graph

    def components(self) -> List[List[int]]:
        return sorted(sorted(c) for c in nx.connected_components(self.skeleton()))


# === Correlation estimators ===

def nonparanormal_corr(data: ResponseMatrix, winsorize: bool = False) -> CorrelationEstimate:
    """
    Pearson correlation of normal scores.

    With `winsorize`, the uniform ranks are truncated to
    [delta, 1 - delta], delta = 1 / (4 n^(1/4) sqrt(pi ln n)).
    """
    if not winsorize:
        scores = copula_transform(data).scores
    else:
        values = np.asarray(data.values, dtype=np.float64)
        n = values.shape[0]
        delta = 1.0 / (4.0 * n ** 0.25 * np.sqrt(np.pi * np.log(n)))
        scores = np.empty_like(values)
        for j in range(values.shape[1]):
            if np.all(values[:, j] == values[0, j]):
                raise DegenerateVariableError(
                    f"Layer '{data.layer_id}': item '{data.item_ids[j]}' is constant", item=data.item_ids[j]
                )
            u = stats.rankdata(values[:, j], method="average") / (n + 1.0)
            scores[:, j] = special.ndtri(np.clip(u, delta, 1.0 - delta))
    return CorrelationEstimate(
        matrix=np.corrcoef(scores, rowvar=False),
        method=CorrelationMethod.NONPARANORMAL,
        n_samples=data.n_respondents,
        item_ids=data.item_ids,
    )


def bvn_cdf(h: np.ndarray, k: np.ndarray, rho: float) -> np.ndarray:
    """
    Standard bivariate normal CDF P(X <= h, Y <= k) for correlation rho.

    Uses Owen's T function:
    Phi2 = (Phi(h) + Phi(k)) / 2 - T(h, a_h) - T(k, a_k) - beta,
    with beta = 1/2 when h and k have opposite signs. Infinite limits are
    resolved to the univariate marginals.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=np.float64), np.asarray(k, dtype=np.float64))
    out = np.zeros(h.shape)

    neg_inf = np.isneginf(h) | np.isneginf(k)
    h_inf = np.isposinf(h) & ~neg_inf
    k_inf = np.isposinf(k) & ~neg_inf & ~h_inf
    finite = ~(neg_inf | h_inf | k_inf)

    out[h_inf] = special.ndtr(k[h_inf])
    out[k_inf] = special.ndtr(h[k_inf])

    if np.any(finite):
        hf = h[finite]
        kf = k[finite]
        hf = np.where(hf == 0.0, CDF_ZERO_NUDGE, hf)
        kf = np.where(kf == 0.0, CDF_ZERO_NUDGE, kf)
        s = np.sqrt(1.0 - rho * rho)
        a_h = (kf - rho * hf) / (hf * s)
        a_k = (hf - rho * kf) / (kf * s)
        beta = np.where(hf * kf > 0, 0.0, 0.5)
        out[finite] = (
            0.5 * (special.ndtr(hf) + special.ndtr(kf))
            - special.owens_t(hf, a_h)
            - special.owens_t(kf, a_k)
            - beta
        )
    return np.clip(out, 0.0, 1.0)


def _ordinal_levels(column: np.ndarray, label: str, layer: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Category indices and thresholds for one item.

    Only observed categories count, so an empty code is merged with its
    neighbour before thresholding.
    """
    levels, codes, counts = np.unique(column, return_inverse=True, return_counts=True)
    if levels.size < 2:
        raise DegenerateVariableError(f"Layer '{layer}': item '{label}' has a single observed category", item=label)
    cum = np.cumsum(counts)[:-1] / float(column.size)
    thresholds = np.concatenate([[-np.inf], special.ndtri(cum), [np.inf]])
    return codes, thresholds


def polychoric_pair(
    codes_x: np.ndarray, tau_x: np.ndarray, codes_y: np.ndarray, tau_y: np.ndarray
) -> Tuple[float, bool]:
    """
    Two-step polychoric estimate for one pair of items.

    Returns:
        Tuple of (rho, converged)
    """
    cx = tau_x.size - 1
    cy = tau_y.size - 1
    table = np.bincount(codes_x * cy + codes_y, minlength=cx * cy).reshape(cx, cy)
    H, K = np.meshgrid(tau_x, tau_y, indexing="ij")

    def negloglik(rho: float) -> float:
        grid = bvn_cdf(H, K, rho)
        probs = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
        return -float(np.sum(table * np.log(np.maximum(probs, PROB_FLOOR))))

    result = minimize_scalar(
        negloglik,
        bounds=(-1.0 + RHO_MARGIN, 1.0 - RHO_MARGIN),
        method="bounded",
        options={"xatol": 1e-8, "maxiter": 500},
    )
    return float(result.x), bool(result.success)


def polychoric_corr(data: ResponseMatrix) -> CorrelationEstimate:
    """Pairwise two-step polychoric correlation matrix."""
    values = np.asarray(data.values)
    p = values.shape[1]
    levels = [_ordinal_levels(values[:, j], data.item_ids[j], data.layer_id) for j in range(p)]

    matrix = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            rho, ok = polychoric_pair(levels[i][0], levels[i][1], levels[j][0], levels[j][1])
            if not ok:
                raise EstimationError(
                    f"Layer '{data.layer_id}': polychoric estimate did not converge for items "
                    f"'{data.item_ids[i]}' and '{data.item_ids[j]}'"
                )
            matrix[i, j] = matrix[j, i] = rho

    return CorrelationEstimate(
        matrix=matrix,
        method=CorrelationMethod.POLYCHORIC,
        n_samples=data.n_respondents,
        item_ids=data.item_ids,
    )


def estimate_correlation(data: ResponseMatrix, method: CorrelationMethod, winsorize: bool = False) -> CorrelationEstimate:
    if method is CorrelationMethod.POLYCHORIC:
        return polychoric_corr(data)
    return nonparanormal_corr(data, winsorize=winsorize)


# === Graphical lasso ===

def positive_definite_corr(matrix: np.ndarray) -> np.ndarray:
    """
    Repair a pairwise correlation matrix that is not positive definite
    (common for polychoric estimates) with the nearest correlation matrix.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if np.linalg.eigvalsh(m)[0] > RIDGE:
        return m
    logger.warning("Correlation matrix not positive definite; using nearest correlation matrix")
    repaired = corr_nearest(m, threshold=1e-8, n_fact=100)
    repaired = 0.5 * (repaired + repaired.T)
    np.fill_diagonal(repaired, 1.0)
    return repaired + RIDGE * np.eye(m.shape[0])


def partial_correlation(precision: np.ndarray) -> np.ndarray:
    """-Theta_ij / sqrt(Theta_ii Theta_jj) with a zero diagonal."""
    d = np.sqrt(np.diag(precision))
    pcor = -precision / np.outer(d, d)
    np.fill_diagonal(pcor, 0.0)
    return pcor


def default_lambda_grid(S: np.ndarray, n_lambda: int = 100, min_ratio: float = 0.01) -> np.ndarray:
    """Log-spaced grid from max |off-diagonal| down to min_ratio of it."""
    off = np.abs(S - np.diag(np.diag(S)))
    lam_max = float(off.max()) if off.size else 0.0
    if lam_max <= 0.0:
        return np.array([])
    return np.logspace(np.log10(lam_max), np.log10(min_ratio * lam_max), n_lambda)


def _symmetric_precision(precision: np.ndarray) -> np.ndarray:
    theta = 0.5 * (precision + precision.T)
    zero = (precision == 0) | (precision.T == 0)
    np.fill_diagonal(zero, False)
    theta[zero] = 0.0
    return theta


def ebic_glasso(
    corr: CorrelationEstimate,
    n: int,
    gamma: float = 0.5,
    lambda_grid: Optional[Sequence[float]] = None,
    n_lambda: int = 100,
    lambda_min_ratio: float = 0.01,
) -> DyadicNetwork:
    """
    Graphical lasso over a lambda grid, selected by
    EBIC = -2 loglik + E ln n + 4 E gamma ln N.

    Args:
        corr: Correlation estimate (repaired to positive definite if needed)
        n: Sample size
        gamma: EBIC hyperparameter (>= 0)
        lambda_grid: Strictly decreasing penalties; default log-spaced grid

    Returns:
        DyadicNetwork at the EBIC-minimizing lambda
    """
    if gamma < 0:
        raise ConfigError(f"EBIC gamma must be >= 0, got {gamma}")
    S = positive_definite_corr(corr.matrix)
    N = S.shape[0]

    grid = default_lambda_grid(S, n_lambda, lambda_min_ratio) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) >= 0):
        raise ConfigError("Lambda grid must be strictly decreasing")

    if grid.size == 0:
        logger.info("No off-diagonal dependence; returning the empty network")
        return DyadicNetwork(
            partial_corr=np.zeros((N, N)),
            precision=np.linalg.inv(S),
            covariance=S.copy(),
            lambda_selected=0.0,
            ebic_gamma=gamma,
            method=corr.method,
            n_samples=n,
        )

    diagnostics: List[LambdaDiagnostic] = []
    fits: List[Tuple[float, float, np.ndarray, np.ndarray]] = []

    for lam in grid:
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConvergenceWarning)
                covariance, precision = graphical_lasso(
                    S, alpha=float(lam), mode="cd", tol=1e-6, enet_tol=1e-10, max_iter=1000
                )
            converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
            message = "" if converged else "duality gap above tolerance"
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            diagnostics.append(LambdaDiagnostic(float(lam), -1, float("nan"), False, str(exc)))
            continue

        theta = _symmetric_precision(precision)
        edges = int(np.count_nonzero(np.triu(theta, 1)))
        sign, logdet = np.linalg.slogdet(theta)
        if sign <= 0:
            diagnostics.append(LambdaDiagnostic(float(lam), edges, float("nan"), False, "precision not positive definite"))
            continue
        loglik = 0.5 * n * (logdet - float(np.trace(S @ theta)))
        ebic = -2.0 * loglik + edges * np.log(n) + 4.0 * edges * gamma * np.log(N)
        diagnostics.append(LambdaDiagnostic(float(lam), edges, float(ebic), converged, message))
        if converged:
            fits.append((float(ebic), float(lam), theta, covariance))

    if not fits:
        raise EstimationError("Graphical lasso did not converge at any lambda",
                              diagnostics=[d.to_dict() for d in diagnostics])

    # Grid is decreasing: on EBIC ties the first (sparser) fit wins.
    best = min(range(len(fits)), key=lambda idx: (fits[idx][0], idx))
    ebic, lam, theta, covariance = fits[best]

    network = DyadicNetwork(
        partial_corr=partial_correlation(theta),
        precision=theta,
        covariance=0.5 * (covariance + covariance.T),
        lambda_selected=lam,
        ebic_gamma=gamma,
        method=corr.method,
        n_samples=n,
        diagnostics=tuple(diagnostics),
    )
    logger.info("%s network: lambda*=%.5g, %d edges, EBIC=%.4f",
                corr.method.value, lam, network.n_edges, ebic)

    components = network.components()
    if len(components) > 1:
        logger.warning("%s network is disconnected (%d components); continuing per component",
                       corr.method.value, len(components))
    return network
