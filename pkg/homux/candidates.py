"""
homux Candidate Generation
Builds the candidate multiplet pool from dyadic-network mesoscale structure
(spinglass communities, maximal cliques, greedy expansion) and from
subscale-guided combinatorics.
"""

import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import igraph as ig
import networkx as nx
import numpy as np

from homux.config import CandidateConfig
from homux.errors import ConfigError
from homux.model import Multiplet, Provenance, ScaleMap
from homux.network import DyadicNetwork
from homux.utils import derive_rng, derive_seed

logger = logging.getLogger(__name__)

PROVENANCE_PRECEDENCE = [Provenance.NETWORK_BASED, Provenance.SUBSCALE_INTRA, Provenance.SUBSCALE_INTER]


@dataclass(frozen=True)
class CommunityDecomposition:
    """Hard memberships and mean absolute inter-community coupling W."""
    membership: Dict[int, int]
    affinity: np.ndarray
    energy: float = 0.0

    @property
    def n_communities(self) -> int:
        return self.affinity.shape[0]

    def coupling(self, i: int, j: int) -> float:
        """u_i^T W u_j for one-hot memberships."""
        return float(self.affinity[self.membership[i], self.membership[j]])


@dataclass(frozen=True)
class CandidateSet:
    """Candidate multiplets with a primary provenance and all origins."""
    provenance: Dict[Multiplet, Provenance] = field(default_factory=dict)
    origins: Dict[Multiplet, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        keys = sorted(self.provenance)
        object.__setattr__(self, "provenance", {m: self.provenance[m] for m in keys})
        object.__setattr__(self, "origins", {m: tuple(sorted(set(self.origins.get(m, ())))) for m in keys})

    def __len__(self) -> int:
        return len(self.provenance)

    def __iter__(self):
        return iter(self.provenance)

    @property
    def multiplets(self) -> List[Multiplet]:
        return list(self.provenance)

    @property
    def by_order(self) -> Dict[int, List[Multiplet]]:
        grouped: Dict[int, List[Multiplet]] = {}
        for m in self.provenance:
            grouped.setdefault(m.order, []).append(m)
        return dict(sorted(grouped.items()))

    @classmethod
    def from_multiplets(cls, multiplets: Iterable[Multiplet], provenance: Provenance, origin: str) -> "CandidateSet":
        items = set(multiplets)
        return cls({m: provenance for m in items}, {m: (origin,) for m in items})

    @classmethod
    def merge(cls, *sets: "CandidateSet") -> "CandidateSet":
        """Union deduplicated on item set; earlier provenance kinds win."""
        provenance: Dict[Multiplet, Provenance] = {}
        origins: Dict[Multiplet, Set[str]] = {}
        for cs in sets:
            for m, prov in cs.provenance.items():
                current = provenance.get(m)
                if current is None or PROVENANCE_PRECEDENCE.index(prov) < PROVENANCE_PRECEDENCE.index(current):
                    provenance[m] = prov
                origins.setdefault(m, set()).update(cs.origins.get(m, ()))
        return cls(provenance, {m: tuple(o) for m, o in origins.items()})

    def restrict(self, k_min: int, k_max: int) -> "CandidateSet":
        keep = [m for m in self.provenance if k_min <= m.order <= k_max]
        return CandidateSet({m: self.provenance[m] for m in keep}, {m: self.origins[m] for m in keep})


# === Communities ===

def _signed_matrix(net: DyadicNetwork) -> np.ndarray:
    return np.array(net.partial_corr, dtype=np.float64)


def potts_energy(weights: np.ndarray, membership: Sequence[int], gamma: float = 1.0, lam: float = 1.0) -> float:
    """
    Signed Potts Hamiltonian with configuration null models:
    positive couplings reward co-membership, negative ones penalize it.
    """
    A = np.asarray(weights, dtype=np.float64).copy()
    np.fill_diagonal(A, 0.0)
    pos = np.clip(A, 0.0, None)
    neg = np.clip(-A, 0.0, None)
    labels = np.asarray(membership)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)

    energy = 0.0
    k_pos = pos.sum(axis=1)
    if k_pos.sum() > 0:
        null = gamma * np.outer(k_pos, k_pos) / k_pos.sum()
        energy -= float(np.sum((pos - null)[same]))
    k_neg = neg.sum(axis=1)
    if k_neg.sum() > 0:
        null = lam * np.outer(k_neg, k_neg) / k_neg.sum()
        energy += float(np.sum((neg - null)[same]))
    return energy


def _canonical_labels(labels: Sequence[int]) -> List[int]:
    mapping: Dict[int, int] = {}
    out = []
    for label in labels:
        if label not in mapping:
            mapping[label] = len(mapping)
        out.append(mapping[label])
    return out


def community_affinity(weights: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """W[c, d] = mean |weight| over edges between c and d (within for c == d)."""
    labels = np.asarray(labels)
    C = int(labels.max()) + 1 if labels.size else 0
    sums = np.zeros((C, C))
    counts = np.zeros((C, C))
    rows, cols = np.nonzero(np.triu(weights, 1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        c, d = labels[i], labels[j]
        w = abs(float(weights[i, j]))
        sums[c, d] += w
        counts[c, d] += 1
        if c != d:
            sums[d, c] += w
            counts[d, c] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def _spinglass_component(
    weights: np.ndarray, nodes: List[int], gamma_potts: float, spins_max: int, seed: int,
    start_temp: float, stop_temp: float, cool_fact: float, restarts: int,
) -> List[int]:
    """Best-of-restarts spinglass labels for one connected component."""
    sub = weights[np.ix_(nodes, nodes)]
    rows, cols = np.nonzero(np.triu(sub, 1))
    graph = ig.Graph(n=len(nodes), edges=list(zip(rows.tolist(), cols.tolist())))
    graph.es["weight"] = [float(sub[i, j]) for i, j in zip(rows.tolist(), cols.tolist())]

    best_labels: Optional[List[int]] = None
    best_energy = math.inf
    try:
        for restart in range(restarts):
            ig.set_random_number_generator(random.Random(derive_seed(seed, "spinglass", restart)))
            clustering = graph.community_spinglass(
                weights="weight",
                spins=max(2, min(spins_max, len(nodes))),
                parupdate=False,
                start_temp=start_temp,
                stop_temp=stop_temp,
                cool_fact=cool_fact,
                update_rule="config",
                gamma=gamma_potts,
                implementation="neg",
                lambda_=gamma_potts,
            )
            labels = _canonical_labels(clustering.membership)
            energy = potts_energy(sub, labels, gamma_potts, gamma_potts)
            logger.debug("spinglass restart %d: %d communities, energy %.6f", restart, max(labels) + 1, energy)
            # Strict improvement only: ties keep the lowest restart.
            if energy < best_energy - 1e-12:
                best_energy = energy
                best_labels = labels
    finally:
        ig.set_random_number_generator(random)
    return best_labels


def spinglass_communities(
    net: DyadicNetwork,
    gamma_potts: float = 1.0,
    spins_max: int = 25,
    seed: int = 0,
    start_temp: float = 1.0,
    stop_temp: float = 0.01,
    cool_fact: float = 0.99,
    restarts: int = 5,
) -> CommunityDecomposition:
    """
    Hard communities minimizing a signed Potts Hamiltonian by simulated
    annealing, run per connected component; isolated nodes form their own
    communities. Deterministic given the seed.
    """
    weights = _signed_matrix(net)
    n = weights.shape[0]
    if net.n_edges == 0:
        logger.warning("Edgeless network: single-community degenerate decomposition")
        return CommunityDecomposition({i: 0 for i in range(n)}, np.zeros((1, 1)), 0.0)

    raw = [-1] * n
    next_label = 0
    for index, component in enumerate(net.components()):
        if len(component) == 1:
            raw[component[0]] = next_label
            next_label += 1
            continue
        labels = _spinglass_component(
            weights, component, gamma_potts, spins_max, derive_seed(seed, "component", index),
            start_temp, stop_temp, cool_fact, restarts,
        )
        for node, label in zip(component, labels):
            raw[node] = next_label + label
        next_label += max(labels) + 1

    labels = _canonical_labels(raw)
    affinity = community_affinity(weights, labels)
    energy = potts_energy(weights, labels, gamma_potts, gamma_potts)
    decomposition = CommunityDecomposition({i: labels[i] for i in range(n)}, affinity, energy)
    logger.info("spinglass: %d communities (energy %.6f)", decomposition.n_communities, energy)
    return decomposition


# === Network-based candidates ===

def maximal_cliques(net: DyadicNetwork, k_min: int, k_max: int, positive_only: bool = False) -> List[Tuple[int, ...]]:
    """
    Maximal cliques of the unweighted skeleton sized within [k_min, k_max];
    larger cliques contribute all their k_max-subsets.
    """
    if k_min < 3:
        raise ConfigError(f"k_min must be >= 3, got {k_min}")
    if k_max < k_min:
        raise ConfigError(f"k_max ({k_max}) below k_min ({k_min})")
    found: Set[Tuple[int, ...]] = set()
    for clique in nx.find_cliques(net.skeleton(positive_only=positive_only)):
        clique = tuple(sorted(clique))
        if len(clique) < k_min:
            continue
        if len(clique) <= k_max:
            found.add(clique)
        else:
            found.update(itertools.combinations(clique, k_max))
    return sorted(found)


def score_seed(items: Iterable[int], comm: CommunityDecomposition) -> float:
    """S(e) = (1 / |e|!) * sum over pairs of W[c(i), c(j)]."""
    items = sorted(items)
    pair_sum = sum(comm.coupling(i, j) for i, j in itertools.combinations(items, 2))
    return pair_sum / math.factorial(len(items))


def expand_seeds(
    seeds: Sequence[Tuple[Tuple[int, ...], float]],
    net: DyadicNetwork,
    comm: CommunityDecomposition,
    top_m: int,
    min_gain: float,
    k_max: int,
    k_min: int = 3,
    positive_only: bool = False,
    origin: str = "network",
) -> CandidateSet:
    """
    Greedy growth of the top_m seeds: add the neighbouring node that
    maximizes the structural score while the relative gain stays at or
    above min_gain and the size at or below k_max. Every intermediate set
    of order >= k_min is emitted.
    """
    if top_m < 1:
        raise ConfigError(f"top_m must be >= 1, got {top_m}")
    graph = net.skeleton(positive_only=positive_only)
    ranked = sorted(seeds, key=lambda s: (-s[1], tuple(sorted(s[0]))))[:top_m]

    emitted: Set[Multiplet] = set()
    for items, score in ranked:
        current = set(items)
        current_score = score_seed(current, comm)
        if k_min <= len(current) <= k_max:
            emitted.add(Multiplet.of(current))

        while len(current) < k_max and not math.isinf(min_gain):
            neighbours = set()
            for member in current:
                neighbours.update(graph.neighbors(member))
            neighbours -= current
            if not neighbours:
                break
            best = min(neighbours, key=lambda v: (-score_seed(current | {v}, comm), v))
            new_score = score_seed(current | {best}, comm)
            if current_score != 0:
                gain = (new_score - current_score) / abs(current_score)
            else:
                gain = math.inf if new_score > 0 else 0.0
            if gain < min_gain:
                break
            current.add(best)
            current_score = new_score
            if len(current) >= k_min:
                emitted.add(Multiplet.of(current))

    return CandidateSet.from_multiplets(emitted, Provenance.NETWORK_BASED, origin)


def network_candidates(net: DyadicNetwork, cfg: CandidateConfig, seed: int, origin: str) -> CandidateSet:
    """Communities, clique seeds and greedy expansion for one network."""
    if net.n_edges == 0:
        logger.warning("%s network has no edges; no network-based candidates", origin)
        return CandidateSet()
    comm = spinglass_communities(
        net,
        gamma_potts=cfg.gamma_potts,
        spins_max=cfg.spins_max,
        seed=seed,
        start_temp=cfg.start_temp,
        stop_temp=cfg.stop_temp,
        cool_fact=cfg.cool_fact,
        restarts=cfg.restarts,
    )
    cliques = maximal_cliques(net, cfg.k_min, cfg.k_max, positive_only=cfg.positive_only)
    seeds = [(c, score_seed(c, comm)) for c in cliques]
    expanded = expand_seeds(
        seeds, net, comm, cfg.top_m, cfg.min_gain, cfg.k_max,
        k_min=cfg.k_min, positive_only=cfg.positive_only, origin=origin,
    )
    logger.info("%s: %d cliques, %d network-based candidates", origin, len(cliques), len(expanded))
    return expanded


# === Subscale-guided candidates ===

def _sample_subsets(
    pool: Sequence[int], k: int, count: int, rng: np.random.Generator, accept=None,
) -> List[Tuple[int, ...]]:
    """Distinct uniformly drawn k-subsets of pool (optionally filtered)."""
    pool = np.asarray(sorted(pool))
    chosen: Set[Tuple[int, ...]] = set()
    while len(chosen) < count:
        subset = tuple(sorted(int(x) for x in rng.choice(pool, size=k, replace=False)))
        if accept is not None and not accept(subset):
            continue
        chosen.add(subset)
    return sorted(chosen)


def mixed_subset_count(size_a: int, size_b: int, k: int) -> int:
    """Number of k-subsets of A u B holding at least one item of each."""
    return math.comb(size_a + size_b, k) - math.comb(size_a, k) - math.comb(size_b, k)


def subscale_candidates(
    scale_map: ScaleMap,
    k_min: int,
    k_max: int,
    sample_per_pair: int,
    seed: int,
    intra_cap: Optional[int] = 5000,
    inter: bool = True,
) -> CandidateSet:
    """
    Intra-subscale k-subsets (capped, deterministic sampling above the cap)
    and inter-subscale combinations: every mixed order-3 set per scale pair,
    sample_per_pair sampled mixed sets for each higher order.
    """
    if sample_per_pair < 0:
        raise ConfigError(f"sample_per_pair must be >= 0, got {sample_per_pair}")
    intra: Set[Multiplet] = set()
    for name, members in scale_map.scales.items():
        for k in range(k_min, k_max + 1):
            if len(members) < k:
                logger.info("scale '%s' has %d items; skipping intra order %d", name, len(members), k)
                continue
            total = math.comb(len(members), k)
            if intra_cap is None or total <= intra_cap:
                subsets = itertools.combinations(sorted(members), k)
            else:
                subsets = _sample_subsets(members, k, intra_cap, derive_rng(seed, "intra", name, k))
            intra.update(Multiplet(s) for s in subsets)

    mixed: Set[Multiplet] = set()
    if inter:
        for name_a, name_b in itertools.combinations(scale_map.names, 2):
            a = scale_map.scales[name_a]
            b = scale_map.scales[name_b]
            union = sorted(a | b)

            def is_mixed(s: Tuple[int, ...]) -> bool:
                return any(i in a for i in s) and any(i in b for i in s)

            for k in range(k_min, k_max + 1):
                if k > len(union):
                    continue
                if k == 3:
                    mixed.update(Multiplet(s) for s in itertools.combinations(union, 3) if is_mixed(s))
                    continue
                if sample_per_pair == 0:
                    continue
                available = mixed_subset_count(len(a), len(b), k)
                if available <= sample_per_pair:
                    mixed.update(Multiplet(s) for s in itertools.combinations(union, k) if is_mixed(s))
                else:
                    rng = derive_rng(seed, "inter", name_a, name_b, k)
                    mixed.update(Multiplet(s) for s in _sample_subsets(union, k, sample_per_pair, rng, is_mixed))

    return CandidateSet.merge(
        CandidateSet.from_multiplets(intra, Provenance.SUBSCALE_INTRA, "intra"),
        CandidateSet.from_multiplets(mixed, Provenance.SUBSCALE_INTER, "inter"),
    )


def build_candidates(
    networks: Dict[str, DyadicNetwork],
    scale_map: Optional[ScaleMap],
    cfg: CandidateConfig,
    seed: int,
    layer: str,
) -> CandidateSet:
    """
    Union of network-based candidates (one pool per correlation method,
    origins record which) and subscale-guided candidates.
    """
    pools = []
    for method in sorted(networks):
        pools.append(network_candidates(networks[method], cfg, derive_seed(seed, "candidates", layer, method), method))
    if scale_map is not None:
        pools.append(subscale_candidates(
            scale_map, cfg.k_min, cfg.k_max, cfg.sample_per_pair,
            derive_seed(seed, "subscale", layer),
            intra_cap=None if cfg.intra_exhaustive else cfg.intra_cap,
            inter=cfg.inter_subscale,
        ))
    merged = CandidateSet.merge(*pools).restrict(cfg.k_min, cfg.k_max)
    logger.info("Layer '%s': %d candidates (%s)", layer, len(merged),
                ", ".join(f"k={k}: {len(v)}" for k, v in merged.by_order.items()))
    return merged
