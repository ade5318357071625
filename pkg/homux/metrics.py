"""
homux Metrics
Node weighted degrees, Normalized Scale Weighted Degree (NSWD) and
scale-pattern extraction over validated multiplex hypergraphs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from homux.model import UNASSIGNED, MultiplexHypergraph, Multiplet, ScaleMap, incidence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerDegrees:
    """Raw weighted degree k_i = sum_e H_ie w_e and k~_i = |k_i| / sum_e |w_e|."""
    raw: np.ndarray
    normalized: np.ndarray
    total_strength: float
    n_hyperedges: int


@dataclass(frozen=True)
class NodeDegreeProfile:
    node_ids: Tuple[str, ...]
    layers: Dict[str, LayerDegrees]


def weighted_degrees(mux: MultiplexHypergraph) -> NodeDegreeProfile:
    layers = {}
    for name, edges in mux.layers.items():
        H, w = incidence(edges, mux.n_nodes)
        raw = H.astype(np.float64) @ w
        total = float(np.sum(np.abs(w)))
        normalized = np.abs(raw) / total if total > 0 else np.zeros(mux.n_nodes)
        layers[name] = LayerDegrees(raw=raw, normalized=normalized, total_strength=total, n_hyperedges=len(edges))
    return NodeDegreeProfile(node_ids=mux.node_ids, layers=layers)


@dataclass(frozen=True)
class LayerStructure:
    """Hyperedge count per order and the items touched by at least one hyperedge."""
    hyperedges_by_order: Dict[int, int]
    active_by_order: Dict[int, int]
    active_nodes: int

    @property
    def n_hyperedges(self) -> int:
        return sum(self.hyperedges_by_order.values())


def layer_structure(mux: MultiplexHypergraph) -> Dict[str, LayerStructure]:
    """Order distribution and active-node counts per layer."""
    result = {}
    for name, edges in mux.layers.items():
        counts: Dict[int, int] = {}
        touched: Dict[int, set] = {}
        for edge in edges:
            counts[edge.order] = counts.get(edge.order, 0) + 1
            touched.setdefault(edge.order, set()).update(edge.multiplet.items)
        active = set().union(*touched.values())
        result[name] = LayerStructure(
            hyperedges_by_order=dict(sorted(counts.items())),
            active_by_order={k: len(touched[k]) for k in sorted(touched)},
            active_nodes=len(active),
        )
    return result


def nswd(profile: NodeDegreeProfile, scale_map: ScaleMap) -> Dict[str, Dict[str, float]]:
    """
    Per layer: v_s = S_s / sum_r S_r with S_s the mean normalized degree of
    the items of scale s. Unassigned items take no part.
    """
    if scale_map.n_items != len(profile.node_ids):
        raise ValueError(f"Scale map covers {scale_map.n_items} items, profile has {len(profile.node_ids)}")
    result = {}
    for layer, degrees in profile.layers.items():
        means = {
            name: float(np.mean(degrees.normalized[sorted(items)]))
            for name, items in scale_map.scales.items()
        }
        total = sum(means.values())
        if total <= 0:
            logger.warning("Layer '%s': no scale activity; NSWD undefined", layer)
            result[layer] = {}
            continue
        result[layer] = {name: value / total for name, value in means.items()}
    return result


def top_items(
    profile: NodeDegreeProfile, scale_map: Optional[ScaleMap], layer: str, n: Optional[int] = 10
) -> List[Tuple[int, str, float, str]]:
    """
    Items ranked by normalized degree (descending, ties by item number).

    Returns:
        List of (item number, item id, normalized degree, scale)
    """
    degrees = profile.layers[layer].normalized
    ranked = sorted((i for i in range(len(degrees)) if degrees[i] > 0), key=lambda i: (-degrees[i], i))
    if n is not None:
        ranked = ranked[:n]
    rows = []
    for i in ranked:
        scale = (scale_map.scale_of(i) if scale_map else None) or UNASSIGNED
        rows.append((i + 1, profile.node_ids[i], float(degrees[i]), scale))
    return rows


@dataclass(frozen=True)
class ScalePattern:
    scale_set: Tuple[str, ...]
    orders_present: Tuple[int, ...]
    hyperedge_count: int
    cumulative_weight: float
    counts_by_order: Dict[int, int] = field(default_factory=dict)

    @property
    def monoscale(self) -> bool:
        return len(self.scale_set) == 1 and not self.unassigned

    @property
    def multiscale(self) -> bool:
        return len(self.scale_set) > 1

    @property
    def unassigned(self) -> bool:
        return self.scale_set == (UNASSIGNED,)

    @property
    def label(self) -> str:
        return "+".join(self.scale_set)


def scale_set_of(multiplet: Multiplet, scale_map: ScaleMap) -> Tuple[str, ...]:
    """Scales touched by the assigned items; {UNASSIGNED} when there are none."""
    scales = {scale_map.scale_of(i) for i in multiplet.items} - {None}
    return tuple(sorted(scales)) if scales else (UNASSIGNED,)


def extract_patterns(mux: MultiplexHypergraph, scale_map: ScaleMap) -> Dict[str, List[ScalePattern]]:
    """
    Aggregate hyperedges by scale set; rank by |cumulative weight|, then
    hyperedge count, then scale set.
    """
    result = {}
    for layer, edges in mux.layers.items():
        groups: Dict[Tuple[str, ...], List] = {}
        for edge in edges:
            groups.setdefault(scale_set_of(edge.multiplet, scale_map), []).append(edge)

        patterns = []
        for scale_set, members in groups.items():
            counts: Dict[int, int] = {}
            for edge in members:
                counts[edge.order] = counts.get(edge.order, 0) + 1
            patterns.append(ScalePattern(
                scale_set=scale_set,
                orders_present=tuple(sorted(counts)),
                hyperedge_count=len(members),
                cumulative_weight=float(sum(edge.omega for edge in members)),
                counts_by_order=dict(sorted(counts.items())),
            ))
        patterns.sort(key=lambda p: (-abs(p.cumulative_weight), -p.hyperedge_count, p.scale_set))
        result[layer] = patterns
    return result
