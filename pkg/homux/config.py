"""
homux Configuration Module
Stage definitions, typed configuration views and constants.
"""

import os
import re
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

from homux import __version__
from homux.errors import ConfigError
from homux.utils import check_input_files, sha256_file

# Application metadata
APP_NAME = "homux"
APP_VERSION = __version__
APP_DESCRIPTION = "Higher-order O-information multiplex hypergraphs"

CORRELATION_METHODS = ("nonparanormal", "polychoric")
FDR_FAMILIES = ("order", "layer")
SYNTH_REGIMES = ("near_zero", "redundant", "synergistic", "mixed")
INTERACTION_KINDS = ("synergy", "redundancy")


@dataclass
class PipelineStage:
    """Represents a single pipeline stage."""
    name: str
    description: str
    produces: List[str] = field(default_factory=list)
    per_layer: bool = True

    def artifacts(self, methods: Sequence[str]) -> List[str]:
        """`produces` expanded over correlation methods and interaction kinds."""
        paths = []
        for template in self.produces:
            for method in (methods if "{method}" in template else [""]):
                for kind in (INTERACTION_KINDS if "{kind}" in template else [""]):
                    paths.append(template.format(method=method, kind=kind))
        return paths


# Pipeline stage definitions
PIPELINE_STAGES = [
    PipelineStage(
        name="network",
        description="Dyadic networks (correlation + EBIC graphical lasso)",
        produces=["network_{method}.tsv", "network_{method}.json"],
    ),
    PipelineStage(
        name="candidates",
        description="Candidate multiplets (communities, cliques, subscales)",
        produces=["candidates.jsonl"],
    ),
    PipelineStage(
        name="validate",
        description="Permutation, bootstrap and hierarchical validation",
        produces=["stage_report.tsv", "stage_report.json", "hyperedges.json"],
    ),
    PipelineStage(
        name="multiplex",
        description="Synergy and redundancy multiplex hypergraphs",
        produces=["multiplex_{kind}.json"],
        per_layer=False,
    ),
    PipelineStage(
        name="metrics",
        description="Degrees, top items, structure, NSWD and scale patterns",
        produces=["metrics/degrees_{kind}.tsv", "metrics/top_items_{kind}.tsv", "metrics/structure_{kind}.tsv"],
        per_layer=False,
    ),
]

STAGES_BY_NAME = {stage.name: stage for stage in PIPELINE_STAGES}


def _build(cls, section: str, values: Dict[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in '{section}': {', '.join(unknown)}")
    return cls(**values)


@dataclass(frozen=True)
class NetworkConfig:
    methods: Tuple[str, ...] = ("nonparanormal",)
    winsorize: bool = False
    ebic_gamma: float = 0.5
    n_lambda: int = 100
    lambda_min_ratio: float = 0.01
    lambda_grid: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        methods = tuple(self.methods)
        if not methods:
            raise ConfigError("network.methods must name at least one correlation method")
        for method in methods:
            if method not in CORRELATION_METHODS:
                raise ConfigError(f"Unknown correlation method '{method}' (choose from {CORRELATION_METHODS})")
        object.__setattr__(self, "methods", tuple(sorted(set(methods))))
        if self.ebic_gamma < 0:
            raise ConfigError(f"network.ebic_gamma must be >= 0, got {self.ebic_gamma}")
        if self.n_lambda < 2:
            raise ConfigError("network.n_lambda must be >= 2")
        if not 0 < self.lambda_min_ratio < 1:
            raise ConfigError("network.lambda_min_ratio must lie in (0, 1)")
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))


@dataclass(frozen=True)
class CandidateConfig:
    k_min: int = 3
    k_max: int = 5
    network_based: bool = True
    gamma_potts: float = 1.0
    spins_max: int = 25
    start_temp: float = 1.0
    stop_temp: float = 0.01
    cool_fact: float = 0.99
    restarts: int = 5
    positive_only: bool = False
    top_m: int = 200
    min_gain: float = 0.02
    sample_per_pair: int = 100
    intra_cap: int = 5000
    intra_exhaustive: bool = False
    inter_subscale: bool = True

    def __post_init__(self):
        if self.k_min < 3:
            raise ConfigError(f"candidates.k_min must be >= 3, got {self.k_min}")
        if self.k_max < self.k_min:
            raise ConfigError(f"candidates.k_max ({self.k_max}) below k_min ({self.k_min})")
        if self.spins_max < 2:
            raise ConfigError("candidates.spins_max must be >= 2")
        if not 0 < self.cool_fact < 1:
            raise ConfigError("candidates.cool_fact must lie in (0, 1)")
        if not self.start_temp > self.stop_temp > 0:
            raise ConfigError("candidates: need start_temp > stop_temp > 0")
        if self.restarts < 1:
            raise ConfigError("candidates.restarts must be >= 1")
        if self.top_m < 1:
            raise ConfigError("candidates.top_m must be >= 1")
        if self.sample_per_pair < 0:
            raise ConfigError("candidates.sample_per_pair must be >= 0")
        if self.intra_cap < 1:
            raise ConfigError("candidates.intra_cap must be >= 1")


@dataclass(frozen=True)
class ValidationConfig:
    """Inference settings; effect_floor is in nats."""
    n_perm: int = 1000
    n_boot: int = 2000
    alpha_fdr: float = 0.05
    ci_level: float = 0.95
    effect_floor: float = 0.15
    seed: int = 0
    outlier_level: float = 0.99
    max_dropped: float = 0.05
    batch_size: int = 100
    fdr_family: str = "order"

    def __post_init__(self):
        if self.n_perm < 100:
            raise ConfigError(f"validation.n_perm must be >= 100, got {self.n_perm}")
        if self.n_boot < 1000:
            raise ConfigError(f"validation.n_boot must be >= 1000, got {self.n_boot}")
        if not 0 < self.alpha_fdr < 1:
            raise ConfigError("validation.alpha_fdr must lie in (0, 1)")
        if not 0 < self.ci_level < 1:
            raise ConfigError("validation.ci_level must lie in (0, 1)")
        if self.effect_floor < 0:
            raise ConfigError("validation.effect_floor must be >= 0")
        if not 0 < self.outlier_level < 1:
            raise ConfigError("validation.outlier_level must lie in (0, 1)")
        if not 0 <= self.max_dropped < 1:
            raise ConfigError("validation.max_dropped must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("validation.batch_size must be >= 1")
        if self.fdr_family not in FDR_FAMILIES:
            raise ConfigError(f"validation.fdr_family must be one of {FDR_FAMILIES}")


@dataclass(frozen=True)
class MetricsConfig:
    top_n: int = 10
    multiscale_only: bool = False


@dataclass(frozen=True)
class LayerSource:
    """One diagnostic layer: one or more dataset files (row-merged)."""
    name: str
    data: Tuple[str, ...]
    ground_truth: Optional[str] = None

    @property
    def dirname(self) -> str:
        return layer_dirname(self.name)


def layer_dirname(name: str) -> str:
    """Filesystem-safe directory name for a layer (BED/OSFED -> BED_OSFED)."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


@dataclass(frozen=True)
class PipelineConfig:
    """Validated, typed view of the resolved settings."""
    seed: int
    layers: Tuple[LayerSource, ...]
    scale_map: Optional[str]
    network: NetworkConfig
    candidates: CandidateConfig
    validation: ValidationConfig
    metrics: MetricsConfig
    output_dir: str
    jobs: int
    settings: Dict[str, Any]

    @classmethod
    def from_settings(cls, settings: Dict[str, Any], base_dir: str = ".") -> "PipelineConfig":
        """
        Validate resolved settings; relative paths resolve against base_dir
        (the config file's directory).
        """
        seed = settings.get("seed")
        if seed is None or isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("A master 'seed' (integer) is mandatory")
        jobs = settings.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            raise ConfigError(f"jobs must be a positive integer, got {jobs!r}")

        raw_layers = settings.get("layers") or {}
        if not isinstance(raw_layers, dict) or not raw_layers:
            raise ConfigError("At least one layer must be configured under 'layers'")

        layers = []
        for name in sorted(raw_layers):
            entry = raw_layers[name]
            if isinstance(entry, str):
                entry = {"data": entry}
            data = entry.get("data")
            if not data:
                raise ConfigError(f"Layer '{name}' has no 'data' file")
            paths = tuple(_resolve(p, base_dir) for p in ([data] if isinstance(data, str) else data))
            truth = entry.get("ground_truth")
            layers.append(LayerSource(name, paths, _resolve(truth, base_dir) if truth else None))

        dirnames = [layer.dirname for layer in layers]
        if len(set(dirnames)) != len(dirnames):
            raise ConfigError("Layer names collide after path sanitization")

        scale_map = settings.get("scale_map")
        scale_map = _resolve(scale_map, base_dir) if scale_map else None

        required = [p for layer in layers for p in layer.data]
        required += [layer.ground_truth for layer in layers if layer.ground_truth]
        if scale_map:
            required.append(scale_map)
        _, missing = check_input_files(required)
        if missing:
            raise ConfigError(f"Missing input files: {', '.join(missing)}")

        validation = dict(settings.get("validation", {}))
        validation["seed"] = seed
        cfg = cls(
            seed=seed,
            layers=tuple(layers),
            scale_map=scale_map,
            network=_build(NetworkConfig, "network", settings.get("network", {})),
            candidates=_build(CandidateConfig, "candidates", settings.get("candidates", {})),
            validation=_build(ValidationConfig, "validation", validation),
            metrics=_build(MetricsConfig, "metrics", settings.get("metrics", {})),
            output_dir=settings.get("output_dir", "homux_out"),
            jobs=jobs,
            settings=settings,
        )
        if cfg.scale_map is None and not cfg.candidates.network_based:
            raise ConfigError("Candidates disabled: enable network_based or provide a scale_map")
        return cfg

    def input_digests(self) -> Dict[str, str]:
        """SHA-256 of every input file keyed by its role."""
        digests = {}
        for layer in self.layers:
            for index, path in enumerate(layer.data):
                digests[f"layer:{layer.name}:{index}"] = sha256_file(path)
        if self.scale_map:
            digests["scale_map"] = sha256_file(self.scale_map)
        return digests

    def layer(self, name: str) -> LayerSource:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ConfigError(f"Unknown layer '{name}' (configured: {', '.join(l.name for l in self.layers)})")

    def describe(self) -> Dict[str, Any]:
        """Typed parameter block for artifact metadata."""
        return {
            "seed": self.seed,
            "network": asdict(self.network),
            "candidates": asdict(self.candidates),
            "validation": asdict(self.validation),
            "metrics": asdict(self.metrics),
        }
