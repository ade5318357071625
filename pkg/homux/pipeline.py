"""
homux Pipeline Execution Module
Runs the stages per layer, writes artifacts, tracks completion flags and
assembles the run manifest.

Artifact tree under the output directory:

    config.json
    layers/<layer>/network_<method>.{tsv,json}
    layers/<layer>/candidates.jsonl
    layers/<layer>/stage_report.{tsv,json}, hyperedges.json
    multiplex_{synergy,redundancy}.json
    metrics/{degrees,nswd,patterns}_{synergy,redundancy}.tsv
    manifest.json
    failed/<layer>/...          (partial artifacts of a failed layer)
"""

import logging
import os
import shutil
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from homux.candidates import build_candidates
from homux.config import STAGES_BY_NAME, LayerSource, PipelineConfig
from homux.errors import ConfigError, SchemaError, StageFailure
from homux.formats import (
    read_candidates,
    read_dataset,
    read_ground_truth,
    read_hyperedges,
    read_json,
    read_multiplex,
    read_network,
    read_scale_map,
    write_candidates,
    write_degrees,
    write_hyperedges,
    write_json,
    write_multiplex,
    write_network,
    write_nswd,
    write_patterns,
    write_stage_report,
    write_structure,
    write_top_items,
)
from homux.info import copula_transform
from homux.metrics import extract_patterns, layer_structure, nswd, weighted_degrees
from homux.model import InteractionType, MultiplexHypergraph, ResponseMatrix, ScaleMap, merge_layers
from homux.network import CorrelationMethod, ebic_glasso, estimate_correlation
from homux.settings import config_hash, hashable_settings, save_settings
from homux.synth import recovery_summary
from homux.utils import (
    STAGE_NAMES,
    clear_stage_flag,
    is_stage_complete,
    mark_stage_complete,
    meta_block,
    sha256_file,
)
from homux.validation import validate_all

logger = logging.getLogger(__name__)

GLOBAL_SCOPE = "all"


class StageStatus(Enum):
    """Outcome of one executed stage."""
    COMPLETE = "complete"
    ERROR = "error"


@dataclass
class StageResult:
    """Result of one stage for one layer (or the global scope)."""
    stage: str
    layer: str
    status: StageStatus
    counts: Dict[str, Any] = field(default_factory=dict)
    error_message: Optional[str] = None


class PipelineExecutor:
    """Executes pipeline stages and manages state."""

    def __init__(self, cfg: PipelineConfig, on_output: Optional[Callable[[str], None]] = None):
        self.cfg = cfg
        self.output_dir = cfg.output_dir
        self.on_output = on_output
        self.config_hash = config_hash(cfg.settings, cfg.input_digests())
        self.results: List[StageResult] = []
        self._scale_map: Optional[ScaleMap] = None

    # === Paths and metadata ===

    def layer_dir(self, layer: LayerSource) -> str:
        return os.path.join(self.output_dir, "layers", layer.dirname)

    def stage_dir(self, stage: str, layer: Optional[LayerSource]) -> str:
        return self.layer_dir(layer) if layer is not None else self.output_dir

    def meta(self, stage: str, layer: Optional[str] = None, **extra) -> Dict[str, Any]:
        block = {"stage": stage, "config": hashable_settings(self.cfg.settings)}
        if layer is not None:
            block["layer"] = layer
        block.update(extra)
        return meta_block(self.config_hash, block)

    def _emit(self, message: str) -> None:
        logger.debug(message)
        if self.on_output:
            self.on_output(message)

    # === Inputs ===

    def load_layer(self, layer: LayerSource) -> ResponseMatrix:
        """Read a layer's dataset(s); several files are row-merged."""
        parts = [read_dataset(path, layer.name) for path in layer.data]
        data = parts[0]
        for part in parts[1:]:
            data = merge_layers(data, part)
        return ResponseMatrix(values=data.values, item_ids=data.item_ids, layer_id=layer.name, likert=data.likert)

    def scale_map(self, n_items: int) -> Optional[ScaleMap]:
        if self.cfg.scale_map is None:
            return None
        if self._scale_map is None or self._scale_map.n_items != n_items:
            self._scale_map = read_scale_map(self.cfg.scale_map, n_items)
        return self._scale_map

    # === Per-layer stages ===

    def run_network(self, layer: LayerSource) -> Dict[str, Any]:
        data = self.load_layer(layer)
        data.require_full_rank()
        net_cfg = self.cfg.network
        counts = {}
        for method in net_cfg.methods:
            if method == CorrelationMethod.POLYCHORIC.value and data.likert is None:
                raise ConfigError(f"Layer '{layer.name}': polychoric correlation needs ordinal (Likert) data")
            corr = estimate_correlation(data, CorrelationMethod(method), winsorize=net_cfg.winsorize)
            net = ebic_glasso(
                corr,
                data.n_respondents,
                gamma=net_cfg.ebic_gamma,
                lambda_grid=net_cfg.lambda_grid,
                n_lambda=net_cfg.n_lambda,
                lambda_min_ratio=net_cfg.lambda_min_ratio,
            )
            directory = self.layer_dir(layer)
            meta = self.meta("network", layer.name, method=method)
            write_network(
                os.path.join(directory, f"network_{method}.tsv"),
                os.path.join(directory, f"network_{method}.json"),
                net, data.item_ids, meta,
            )
            counts[method] = {"lambda": net.lambda_selected, "edges": net.n_edges}
        return counts

    def run_candidates(self, layer: LayerSource) -> Dict[str, Any]:
        directory = self.layer_dir(layer)
        networks = {}
        item_ids = None
        if self.cfg.candidates.network_based:
            for method in self.cfg.network.methods:
                net, item_ids = read_network(os.path.join(directory, f"network_{method}.json"))
                networks[method] = net
        if item_ids is None:
            item_ids = self.load_layer(layer).item_ids
        cands = build_candidates(
            networks, self.scale_map(len(item_ids)), self.cfg.candidates, self.cfg.seed, layer.name
        )
        write_candidates(os.path.join(directory, "candidates.jsonl"), cands, self.meta("candidates", layer.name))
        return {"total": len(cands), "by_order": {str(k): len(v) for k, v in cands.by_order.items()}}

    def run_validate(self, layer: LayerSource, jobs: int) -> Dict[str, Any]:
        directory = self.layer_dir(layer)
        data = self.load_layer(layer)
        cands = read_candidates(os.path.join(directory, "candidates.jsonl"), data.n_items)
        scores = copula_transform(data)
        hyperedges, report = validate_all(scores, cands, self.cfg.validation, jobs=jobs)
        meta = self.meta("validate", layer.name)
        write_stage_report(
            os.path.join(directory, "stage_report.tsv"),
            os.path.join(directory, "stage_report.json"),
            report, meta,
        )
        write_hyperedges(os.path.join(directory, "hyperedges.json"), layer.name, data.item_ids, hyperedges, meta)
        return {"validated": len(hyperedges), "reasons": report.reason_counts()}

    # === Global stages ===

    def run_multiplex(self) -> Dict[str, Any]:
        node_ids = None
        per_layer = {}
        for layer in self.cfg.layers:
            name, item_ids, edges = read_hyperedges(os.path.join(self.layer_dir(layer), "hyperedges.json"))
            if node_ids is None:
                node_ids = item_ids
            elif item_ids != node_ids:
                raise SchemaError(f"Layer '{layer.name}' item set differs from the other layers")
            per_layer[layer.name] = edges

        counts = {}
        for kind in (InteractionType.SYNERGY, InteractionType.REDUNDANCY):
            mux = MultiplexHypergraph.from_hyperedges(node_ids, per_layer, kind)
            write_multiplex(os.path.join(self.output_dir, f"multiplex_{kind.value}.json"), mux, self.meta("multiplex"))
            counts[kind.value] = {name: len(edges) for name, edges in mux.layers.items()}
        return counts

    def run_metrics(self) -> Dict[str, Any]:
        metrics_dir = os.path.join(self.output_dir, "metrics")
        counts = {}
        for kind in (InteractionType.SYNERGY, InteractionType.REDUNDANCY):
            mux = read_multiplex(os.path.join(self.output_dir, f"multiplex_{kind.value}.json"))
            scale_map = self.scale_map(mux.n_nodes)
            profile = weighted_degrees(mux)
            structure = layer_structure(mux)
            meta = self.meta("metrics", interaction_type=kind.value)
            write_degrees(os.path.join(metrics_dir, f"degrees_{kind.value}.tsv"), profile, scale_map, meta)
            write_top_items(os.path.join(metrics_dir, f"top_items_{kind.value}.tsv"), profile, scale_map,
                            self.cfg.metrics.top_n, meta)
            write_structure(os.path.join(metrics_dir, f"structure_{kind.value}.tsv"), structure, meta)
            counts[kind.value] = {"active_nodes": {layer: s.active_nodes for layer, s in structure.items()}}
            if scale_map is None:
                logger.warning("No scale map configured; skipping NSWD and patterns for %s", kind.value)
                continue
            write_nswd(os.path.join(metrics_dir, f"nswd_{kind.value}.tsv"), nswd(profile, scale_map), meta)
            patterns = extract_patterns(mux, scale_map)
            write_patterns(
                os.path.join(metrics_dir, f"patterns_{kind.value}.tsv"), patterns, meta,
                multiscale_only=self.cfg.metrics.multiscale_only,
            )
            counts[kind.value]["patterns"] = {layer: len(p) for layer, p in patterns.items()}
        return counts

    # === Execution ===

    def execute_stage(self, stage: str, layer: Optional[LayerSource], fn: Callable[[], Dict[str, Any]]) -> StageResult:
        """
        Run one stage; on failure move the layer's partial artifacts to
        failed/<layer>/ and raise StageFailure.
        """
        scope = layer.name if layer is not None else GLOBAL_SCOPE
        directory = self.stage_dir(stage, layer)
        self._emit(f">>> {stage} [{scope}]")
        clear_stage_flag(stage, directory)
        try:
            counts = fn()
        except Exception as exc:
            self.results.append(StageResult(stage, scope, StageStatus.ERROR, error_message=str(exc)))
            self._quarantine(layer)
            raise StageFailure(scope, stage, exc) from exc
        mark_stage_complete(stage, directory, self.config_hash)
        result = StageResult(stage, scope, StageStatus.COMPLETE, counts)
        self.results.append(result)
        return result

    def _quarantine(self, layer: Optional[LayerSource]) -> None:
        if layer is None:
            return
        source = self.layer_dir(layer)
        if not os.path.isdir(source):
            return
        target = os.path.join(self.output_dir, "failed", layer.dirname)
        if os.path.isdir(target):
            shutil.rmtree(target)
        os.makedirs(os.path.dirname(target), exist_ok=True)
        shutil.move(source, target)
        logger.error("Partial artifacts of layer '%s' moved to %s", layer.name, target)

    def _stage_done(self, stage: str, directory: str) -> bool:
        if not is_stage_complete(stage, directory, self.config_hash):
            return False
        expected = STAGES_BY_NAME[stage].artifacts(self.cfg.network.methods)
        return all(os.path.isfile(os.path.join(directory, path)) for path in expected)

    def stage_complete(self, stage: str) -> Dict[str, bool]:
        """
        Completion per scope: a flag written under the current config hash
        and every artifact the stage produces.
        """
        if STAGES_BY_NAME[stage].per_layer:
            return {layer.name: self._stage_done(stage, self.layer_dir(layer)) for layer in self.cfg.layers}
        return {GLOBAL_SCOPE: self._stage_done(stage, self.output_dir)}

    def check_prerequisites(self, stage: str) -> None:
        """Every earlier stage must be complete under the same config hash."""
        if stage not in STAGE_NAMES:
            raise ConfigError(f"Unknown stage '{stage}' (choose from {', '.join(STAGE_NAMES)})")
        stale = []
        for dep in STAGE_NAMES[:STAGE_NAMES.index(stage)]:
            stale += [f"{dep}[{scope}]" for scope, done in self.stage_complete(dep).items() if not done]
        if stale:
            raise ConfigError(f"Cannot start at '{stage}': missing or stale stages {', '.join(stale)}")

    def run(self, resume: Optional[str] = None, stages: Optional[List[str]] = None, jobs: Optional[int] = None) -> Dict[str, Any]:
        """
        Run stages in order (all by default, or from `resume` onward) and
        write the manifest.
        """
        jobs = self.cfg.jobs if jobs is None else jobs
        if stages is None:
            stages = STAGE_NAMES[STAGE_NAMES.index(resume):] if resume else list(STAGE_NAMES)
        if stages[0] != STAGE_NAMES[0]:
            self.check_prerequisites(stages[0])
        elif stages == list(STAGE_NAMES) and os.path.isdir(self.output_dir):
            for sub in ("layers", "metrics", "failed"):
                shutil.rmtree(os.path.join(self.output_dir, sub), ignore_errors=True)

        os.makedirs(self.output_dir, exist_ok=True)
        save_settings(hashable_settings(self.cfg.settings), os.path.join(self.output_dir, "config.json"))
        self._emit(f"config hash {self.config_hash[:12]}; seed {self.cfg.seed}; jobs {jobs}")

        for stage in stages:
            if stage == "network":
                for layer in self.cfg.layers:
                    self.execute_stage(stage, layer, lambda layer=layer: self.run_network(layer))
            elif stage == "candidates":
                for layer in self.cfg.layers:
                    self.execute_stage(stage, layer, lambda layer=layer: self.run_candidates(layer))
            elif stage == "validate":
                for layer in self.cfg.layers:
                    self.execute_stage(stage, layer, lambda layer=layer: self.run_validate(layer, jobs))
            elif stage == "multiplex":
                self.execute_stage(stage, None, self.run_multiplex)
            elif stage == "metrics":
                self.execute_stage(stage, None, self.run_metrics)

        return self.write_manifest()

    # === Manifest ===

    def _layer_summary(self, layer: LayerSource) -> Dict[str, Any]:
        directory = self.layer_dir(layer)
        summary: Dict[str, Any] = {"data": [os.path.basename(p) for p in layer.data]}
        networks = {}
        for method in self.cfg.network.methods:
            path = os.path.join(directory, f"network_{method}.json")
            if os.path.isfile(path):
                net = read_json(path)
                networks[method] = {"lambda": net["lambda_selected"], "edges": net["n_edges"],
                                    "components": len(net["components"])}
        summary["networks"] = networks

        cands_path = os.path.join(directory, "candidates.jsonl")
        if os.path.isfile(cands_path):
            cands = read_candidates(cands_path)
            by_prov: Dict[str, int] = {}
            for prov in cands.provenance.values():
                by_prov[prov.value] = by_prov.get(prov.value, 0) + 1
            summary["candidates"] = {
                "total": len(cands),
                "by_order": {str(k): len(v) for k, v in cands.by_order.items()},
                "by_provenance": dict(sorted(by_prov.items())),
            }

        report_path = os.path.join(directory, "stage_report.json")
        edges_path = os.path.join(directory, "hyperedges.json")
        if os.path.isfile(report_path) and os.path.isfile(edges_path):
            report = read_json(report_path)
            _, _, edges = read_hyperedges(edges_path)
            summary["validation"] = {
                "survivors": report["survivors"],
                "reasons": report["reasons"],
                "validated": len(edges),
                "synergy": sum(e.interaction_type is InteractionType.SYNERGY for e in edges),
                "redundancy": sum(e.interaction_type is InteractionType.REDUNDANCY for e in edges),
            }
            if layer.ground_truth:
                summary["recovery"] = recovery_summary(edges, read_ground_truth(layer.ground_truth))
        return summary

    def _structure_summary(self) -> Dict[str, Any]:
        """Order distribution and active nodes per layer for each multiplex on disk."""
        summary = {}
        for kind in (InteractionType.SYNERGY, InteractionType.REDUNDANCY):
            path = os.path.join(self.output_dir, f"multiplex_{kind.value}.json")
            if not os.path.isfile(path):
                continue
            summary[kind.value] = {
                layer: {"orders": {str(k): v for k, v in s.hyperedges_by_order.items()}, "active_nodes": s.active_nodes}
                for layer, s in layer_structure(read_multiplex(path)).items()
            }
        return summary

    def _artifact_hashes(self) -> Dict[str, str]:
        hashes = {}
        for root, dirs, files in os.walk(self.output_dir):
            dirs.sort()
            for name in sorted(files):
                path = os.path.join(root, name)
                rel = os.path.relpath(path, self.output_dir)
                if rel == "manifest.json":
                    continue
                hashes[rel.replace(os.sep, "/")] = sha256_file(path)
        return hashes

    def write_manifest(self) -> Dict[str, Any]:
        manifest = {
            "meta": meta_block(self.config_hash),
            "seeds": {
                "master": self.cfg.seed,
                "derivation": "Philox streams keyed by SHA-256 of (stage, layer, candidate)",
            },
            "parameters": self.cfg.describe(),
            "layers": {layer.name: self._layer_summary(layer) for layer in self.cfg.layers},
            "structure": self._structure_summary(),
            "stages": {stage: self.stage_complete(stage) for stage in STAGE_NAMES},
            "artifacts": self._artifact_hashes(),
        }
        write_json(os.path.join(self.output_dir, "manifest.json"), manifest)
        self._emit(f"manifest written ({len(manifest['artifacts'])} artifacts)")
        return manifest


def run_pipeline(cfg: PipelineConfig, resume: Optional[str] = None, jobs: Optional[int] = None,
                 on_output: Optional[Callable[[str], None]] = None) -> Dict[str, Any]:
    """Run every stage for every layer and return the manifest."""
    return PipelineExecutor(cfg, on_output=on_output).run(resume=resume, jobs=jobs)
