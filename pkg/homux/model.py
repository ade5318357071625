"""
homux Data Model
Core domain types shared by every stage: response matrices, scale maps,
multiplets, validated hyperedges and the two multiplex hypergraphs.

Item indices are 0-based everywhere in this module; file formats and
reports use 1-based item numbers.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from homux.errors import SchemaError, StructuralError

logger = logging.getLogger(__name__)

DEFAULT_LIKERT = (0, 4)
MIN_ORDER = 3
UNASSIGNED = "UNASSIGNED"


class InteractionType(Enum):
    """Sign class of a hyperedge."""
    SYNERGY = "synergy"
    REDUNDANCY = "redundancy"

    @classmethod
    def of(cls, omega: float) -> "InteractionType":
        if omega > 0:
            return cls.REDUNDANCY
        if omega < 0:
            return cls.SYNERGY
        raise StructuralError("Omega of exactly zero has no interaction type")


class Provenance(Enum):
    """Which candidate strategy produced a multiplet."""
    NETWORK_BASED = "network_based"
    SUBSCALE_INTRA = "subscale_intra"
    SUBSCALE_INTER = "subscale_inter"


def _frozen_array(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ResponseMatrix:
    """
    Respondents x items data for one diagnostic layer.

    `likert` is the declared inclusive code range; None marks continuous
    data (synthetic Gaussian systems analysed raw).
    """
    values: np.ndarray
    item_ids: Tuple[str, ...]
    layer_id: str
    likert: Optional[Tuple[int, int]] = DEFAULT_LIKERT

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise SchemaError(f"Layer '{self.layer_id}': response matrix must be 2-D")
        item_ids = tuple(str(i) for i in self.item_ids)
        if values.shape[1] != len(item_ids):
            raise SchemaError(
                f"Layer '{self.layer_id}': {values.shape[1]} columns but {len(item_ids)} item labels"
            )
        if len(item_ids) < MIN_ORDER:
            raise SchemaError(f"Layer '{self.layer_id}': at least {MIN_ORDER} items required")
        if len(set(item_ids)) != len(item_ids):
            raise SchemaError(f"Layer '{self.layer_id}': item labels must be unique")

        if self.likert is not None:
            lo, hi = self.likert
            if lo >= hi:
                raise SchemaError(f"Layer '{self.layer_id}': empty Likert range {self.likert}")
            if values.size:
                if not np.all(np.equal(np.mod(values, 1), 0)):
                    raise SchemaError(f"Layer '{self.layer_id}': Likert data must be integer codes")
                if values.min() < lo or values.max() > hi:
                    raise SchemaError(
                        f"Layer '{self.layer_id}': codes outside declared range {lo}..{hi}"
                    )
            values = values.astype(np.int64)
            object.__setattr__(self, "likert", (int(lo), int(hi)))
        else:
            values = values.astype(np.float64)
            if values.size and not np.all(np.isfinite(values)):
                raise SchemaError(f"Layer '{self.layer_id}': non-finite values")

        object.__setattr__(self, "values", _frozen_array(values))
        object.__setattr__(self, "item_ids", item_ids)

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    def require_full_rank(self) -> None:
        """Respondent count must exceed item count for a full-rank correlation."""
        n, p = self.values.shape
        if n < p + 1:
            raise SchemaError(
                f"Layer '{self.layer_id}': {n} respondents for {p} items; at least {p + 1} required"
            )
        if n < 2 * p:
            logger.warning(
                "Layer '%s': %d respondents for %d items (2x items recommended)",
                self.layer_id, n, p,
            )


def merge_layers(a: ResponseMatrix, b: ResponseMatrix) -> ResponseMatrix:
    """
    Row-concatenate two layers sharing items and Likert range.

    The merged layer is named "a/b" (e.g. BED/OSFED); merging with an
    empty matrix returns the other operand unchanged.
    """
    if a.item_ids != b.item_ids:
        raise SchemaError(f"Cannot merge '{a.layer_id}' and '{b.layer_id}': item sets differ")
    if a.likert != b.likert:
        raise SchemaError(f"Cannot merge '{a.layer_id}' and '{b.layer_id}': Likert ranges differ")
    if b.n_respondents == 0:
        return a
    if a.n_respondents == 0:
        return b
    return ResponseMatrix(
        values=np.vstack([a.values, b.values]),
        item_ids=a.item_ids,
        layer_id=f"{a.layer_id}/{b.layer_id}",
        likert=a.likert,
    )


@dataclass(frozen=True)
class ScaleMap:
    """Partition-with-exceptions assigning items to named subscales."""
    scales: Dict[str, FrozenSet[int]]
    unassigned: FrozenSet[int]
    n_items: int

    def __post_init__(self):
        scales = {str(k): frozenset(int(i) for i in v) for k, v in self.scales.items()}
        unassigned = frozenset(int(i) for i in self.unassigned)
        seen = set()
        for name, items in sorted(scales.items()):
            if not items:
                raise SchemaError(f"Scale '{name}' is empty")
            overlap = seen & items
            if overlap:
                raise SchemaError(
                    f"Scale '{name}' overlaps other scales at items {sorted(i + 1 for i in overlap)}"
                )
            seen |= items
        if seen & unassigned:
            raise SchemaError(
                f"Items both assigned and unassigned: {sorted(i + 1 for i in seen & unassigned)}"
            )
        covered = seen | unassigned
        if covered != set(range(self.n_items)):
            missing = sorted(i + 1 for i in set(range(self.n_items)) - covered)
            extra = sorted(i + 1 for i in covered - set(range(self.n_items)))
            raise SchemaError(f"Scale map does not cover items 1..{self.n_items} (missing {missing}, out of range {extra})")
        object.__setattr__(self, "scales", dict(sorted(scales.items())))
        object.__setattr__(self, "unassigned", unassigned)

    @property
    def names(self) -> List[str]:
        return list(self.scales)

    def scale_of(self, item: int) -> Optional[str]:
        for name, items in self.scales.items():
            if item in items:
                return name
        return None

    def size(self, name: str) -> int:
        return len(self.scales[name])

    @classmethod
    def from_dict(cls, data: Dict[str, Sequence[int]], n_items: int) -> "ScaleMap":
        """
        Build from the JSON form {scale: [item numbers]} with an optional
        "unassigned" list; item numbers are 1-based. Without an explicit
        list, every item outside the scales is unassigned.
        """
        raw = dict(data)
        explicit = raw.pop("unassigned", None)
        scales = {name: frozenset(int(i) - 1 for i in items) for name, items in raw.items()}
        if explicit is None:
            assigned = set().union(*scales.values()) if scales else set()
            unassigned = frozenset(set(range(n_items)) - assigned)
        else:
            unassigned = frozenset(int(i) - 1 for i in explicit)
        return cls(scales=scales, unassigned=unassigned, n_items=n_items)

    def to_dict(self) -> Dict[str, List[int]]:
        data = {name: sorted(i + 1 for i in items) for name, items in self.scales.items()}
        data["unassigned"] = sorted(i + 1 for i in self.unassigned)
        return data


@dataclass(frozen=True, order=True)
class Multiplet:
    """An ordered set of item indices under evaluation (order >= 3)."""
    items: Tuple[int, ...]

    def __post_init__(self):
        items = tuple(int(i) for i in self.items)
        if len(items) < MIN_ORDER:
            raise StructuralError(f"Multiplet {items} has order {len(items)} < {MIN_ORDER}")
        if any(b <= a for a, b in zip(items, items[1:])):
            raise StructuralError(f"Multiplet indices must be strictly increasing: {items}")
        if items[0] < 0:
            raise StructuralError(f"Negative item index in {items}")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, items: Iterable[int]) -> "Multiplet":
        items = [int(i) for i in items]
        if len(set(items)) != len(items):
            raise StructuralError(f"Duplicate items in {items}")
        return cls(tuple(sorted(items)))

    @property
    def order(self) -> int:
        return len(self.items)

    @property
    def key(self) -> str:
        """1-based identifier, e.g. "1-5-12"."""
        return "-".join(str(i + 1) for i in self.items)

    def check_bounds(self, n_items: int, k_min: int = MIN_ORDER, k_max: int = 5) -> None:
        if self.items[-1] >= n_items:
            raise StructuralError(f"Multiplet {self.key} references item beyond {n_items}")
        if not k_min <= self.order <= k_max:
            raise StructuralError(f"Multiplet {self.key} order {self.order} outside [{k_min}, {k_max}]")

    def sub_multiplets(self) -> List["Multiplet"]:
        """All (k-1)-subsets; empty for order 3 (no order-2 Omega)."""
        if self.order - 1 < MIN_ORDER:
            return []
        return [Multiplet(sub) for sub in itertools.combinations(self.items, self.order - 1)]


@dataclass(frozen=True)
class ValidatedHyperedge:
    """A multiplet that survived all three validation stages."""
    multiplet: Multiplet
    omega: float
    ci_low: float
    ci_high: float
    p_adj: float
    interaction_type: InteractionType
    provenance: Provenance

    def __post_init__(self):
        if InteractionType.of(self.omega) is not self.interaction_type:
            raise StructuralError(
                f"Hyperedge {self.multiplet.key}: omega {self.omega} inconsistent with {self.interaction_type.value}"
            )
        if not self.ci_low <= self.omega <= self.ci_high:
            raise StructuralError(f"Hyperedge {self.multiplet.key}: omega outside its interval")
        if self.ci_low <= 0.0 <= self.ci_high:
            raise StructuralError(f"Hyperedge {self.multiplet.key}: interval spans zero")
        if not 0.0 <= self.p_adj <= 1.0:
            raise StructuralError(f"Hyperedge {self.multiplet.key}: adjusted p outside [0, 1]")

    @property
    def order(self) -> int:
        return self.multiplet.order


@dataclass(frozen=True)
class MultiplexHypergraph:
    """Shared node set with per-layer hyperedge sets of one interaction type."""
    node_ids: Tuple[str, ...]
    layers: Dict[str, Tuple[ValidatedHyperedge, ...]]
    interaction_type: InteractionType

    def __post_init__(self):
        n = len(self.node_ids)
        layers = {}
        for name in sorted(self.layers):
            edges = sorted(self.layers[name], key=lambda e: e.multiplet)
            seen = set()
            for edge in edges:
                if edge.interaction_type is not self.interaction_type:
                    raise StructuralError(
                        f"Layer '{name}': {edge.interaction_type.value} hyperedge {edge.multiplet.key} "
                        f"in a {self.interaction_type.value} multiplex"
                    )
                if edge.multiplet.items[-1] >= n:
                    raise StructuralError(f"Layer '{name}': hyperedge {edge.multiplet.key} outside node set")
                if edge.multiplet in seen:
                    raise StructuralError(f"Layer '{name}': duplicate hyperedge {edge.multiplet.key}")
                seen.add(edge.multiplet)
            layers[name] = tuple(edges)
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        object.__setattr__(self, "layers", layers)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @classmethod
    def from_hyperedges(
        cls,
        node_ids: Sequence[str],
        per_layer: Dict[str, Iterable[ValidatedHyperedge]],
        interaction_type: InteractionType,
    ) -> "MultiplexHypergraph":
        """Keep only the hyperedges of the requested type from each layer."""
        return cls(
            node_ids=tuple(node_ids),
            layers={
                name: tuple(e for e in edges if e.interaction_type is interaction_type)
                for name, edges in per_layer.items()
            },
            interaction_type=interaction_type,
        )


def incidence(layer: Sequence[ValidatedHyperedge], n_items: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Incidence matrix H (N x E, H[i, e] = 1 iff node i in hyperedge e) and
    the weight vector w (w[e] = omega of hyperedge e).
    """
    H = np.zeros((n_items, len(layer)), dtype=np.int8)
    w = np.zeros(len(layer), dtype=np.float64)
    for e, edge in enumerate(layer):
        items = edge.multiplet.items
        if items[-1] >= n_items:
            raise StructuralError(f"Hyperedge {edge.multiplet.key} outside {n_items} nodes")
        H[list(items), e] = 1
        w[e] = edge.omega
    return H, w


def hyperedges_from_incidence(H: np.ndarray, w: np.ndarray) -> List[Tuple[Multiplet, float]]:
    """Inverse of `incidence`: (multiplet, weight) per column."""
    H = np.asarray(H)
    if H.shape[1] != len(w):
        raise StructuralError(f"Incidence has {H.shape[1]} columns for {len(w)} weights")
    return [
        (Multiplet(tuple(int(i) for i in np.flatnonzero(H[:, e]))), float(w[e]))
        for e in range(H.shape[1])
    ]
