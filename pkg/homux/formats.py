"""
homux File Formats
Readers and writers for every artifact: dataset CSV, scale maps, networks,
candidate pools, stage reports, hyperedges, multiplexes, metric tables,
ground truth and the run manifest.

Text formats only. TSV files open with a "# {meta json}" line; JSON
files carry a "meta" block. Items are 1-based in every file.
"""

import csv
import json
import math
import os
import re
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from homux.candidates import CandidateSet
from homux.errors import SchemaError
from homux.metrics import LayerStructure, NodeDegreeProfile, ScalePattern, top_items
from homux.model import (
    DEFAULT_LIKERT,
    InteractionType,
    MultiplexHypergraph,
    Multiplet,
    Provenance,
    ResponseMatrix,
    ScaleMap,
    ValidatedHyperedge,
)
from homux.network import CorrelationMethod, DyadicNetwork, LambdaDiagnostic
from homux.synth import GroundTruth, PlantedTriplet, TripletSpec
from homux.utils import canonical_json, format_float
from homux.validation import StageReport

LIKERT_PATTERN = re.compile(r"^#\s*likert\s*=\s*(?:(-?\d+)\s*\.\.\s*(-?\d+)|(continuous))\s*$")
MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


# === JSON / TSV helpers ===

def _clean(obj: Any) -> Any:
    """NaN/inf become None so JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path: str, obj: Any) -> None:
    _ensure_parent(path)
    with open(path, "w") as f:
        json.dump(_clean(obj), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def read_json(path: str) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise SchemaError(f"File not found: {path}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from e


def write_tsv(path: str, meta: Dict[str, Any], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write("# " + canonical_json(_clean(meta)) + "\n")
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(_cell(v) for v in row) + "\n")


def read_tsv(path: str) -> Tuple[Dict[str, Any], List[Dict[str, str]]]:
    try:
        with open(path, "r") as f:
            first = f.readline()
            if not first.startswith("# "):
                raise SchemaError(f"{path}: missing metadata line")
            meta = json.loads(first[2:])
            reader = csv.DictReader(f, delimiter="\t")
            return meta, list(reader)
    except FileNotFoundError as e:
        raise SchemaError(f"File not found: {path}") from e
    except (csv.Error, json.JSONDecodeError) as e:
        raise SchemaError(f"{path}: malformed table ({e})") from e


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if value is None:
        return ""
    return str(value)


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


# === Dataset CSV ===

def read_dataset(path: str, layer_id: str) -> ResponseMatrix:
    """
    Respondent x item CSV with a header row of item labels. An optional
    first line "# likert=lo..hi" or "# likert=continuous" declares the
    code range (default 0..4). Missing cells reject the file.
    """
    if not os.path.isfile(path):
        raise SchemaError(f"Dataset not found: {path}")
    likert: Optional[Tuple[int, int]] = DEFAULT_LIKERT
    with open(path, "r", newline="") as f:
        lines = f.read().splitlines()
    if lines and lines[0].startswith("#"):
        match = LIKERT_PATTERN.match(lines[0].strip())
        if not match:
            raise SchemaError(f"{path}: unrecognized header comment '{lines[0]}'")
        likert = None if match.group(3) else (int(match.group(1)), int(match.group(2)))
        lines = lines[1:]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise SchemaError(f"{path}: no header row")

    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: {len(row)} cells for {len(header)} items")
        parsed = []
        for label, cell in zip(header, row):
            cell = cell.strip()
            if cell.lower() in MISSING_TOKENS:
                raise SchemaError(f"{path}:{lineno}: missing value for item '{label}'")
            try:
                parsed.append(float(cell))
            except ValueError as e:
                raise SchemaError(f"{path}:{lineno}: non-numeric value '{cell}' for item '{label}'") from e
        rows.append(parsed)

    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return ResponseMatrix(values=values, item_ids=tuple(header), layer_id=layer_id, likert=likert)


def write_dataset(path: str, data: ResponseMatrix) -> None:
    _ensure_parent(path)
    with open(path, "w", newline="") as f:
        if data.likert is None:
            f.write("# likert=continuous\n")
        else:
            f.write(f"# likert={data.likert[0]}..{data.likert[1]}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(data.item_ids)
        for row in data.values:
            if data.likert is None:
                writer.writerow([repr(float(v)) for v in row])
            else:
                writer.writerow([int(v) for v in row])


# === Scale map ===

def read_scale_map(path: str, n_items: int) -> ScaleMap:
    data = read_json(path)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: scale map must be a JSON object")
    return ScaleMap.from_dict(data, n_items)


def write_scale_map(path: str, scale_map: ScaleMap) -> None:
    write_json(path, scale_map.to_dict())


# === Networks ===

def write_network(tsv_path: str, json_path: str, net: DyadicNetwork, item_ids: Sequence[str], meta: Dict[str, Any]) -> None:
    """Edge list TSV plus a JSON sidecar holding the full matrices and sweep."""
    n = net.n_nodes
    rows = [
        (i + 1, j + 1, item_ids[i], item_ids[j], float(net.partial_corr[i, j]))
        for i in range(n) for j in range(i + 1, n)
        if net.partial_corr[i, j] != 0
    ]
    write_tsv(tsv_path, meta, ["item_i", "item_j", "label_i", "label_j", "partial_corr"], rows)
    write_json(json_path, {
        "meta": meta,
        "method": net.method.value,
        "item_ids": list(item_ids),
        "n_samples": net.n_samples,
        "lambda_selected": net.lambda_selected,
        "ebic_gamma": net.ebic_gamma,
        "n_edges": net.n_edges,
        "components": [[i + 1 for i in c] for c in net.components()],
        "partial_corr": net.partial_corr.tolist(),
        "precision": net.precision.tolist(),
        "covariance": net.covariance.tolist(),
        "diagnostics": [d.to_dict() for d in net.diagnostics],
    })


def read_network(json_path: str) -> Tuple[DyadicNetwork, Tuple[str, ...]]:
    data = read_json(json_path)
    try:
        diagnostics = tuple(
            LambdaDiagnostic(
                lam=d["lambda"], edges=d["edges"],
                ebic=math.nan if d["ebic"] is None else d["ebic"],
                converged=d["converged"], message=d.get("message", ""),
            )
            for d in data.get("diagnostics", [])
        )
        net = DyadicNetwork(
            partial_corr=np.array(data["partial_corr"], dtype=np.float64),
            precision=np.array(data["precision"], dtype=np.float64),
            covariance=np.array(data["covariance"], dtype=np.float64),
            lambda_selected=data["lambda_selected"],
            ebic_gamma=data["ebic_gamma"],
            method=CorrelationMethod(data["method"]),
            n_samples=data["n_samples"],
            diagnostics=diagnostics,
        )
        item_ids = tuple(data["item_ids"])
    except (KeyError, ValueError, TypeError, AttributeError) as e:
        raise SchemaError(f"{json_path}: malformed network file ({e})") from e
    return net, item_ids


# === Candidates (JSON lines) ===

def write_candidates(path: str, cands: CandidateSet, meta: Dict[str, Any]) -> None:
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(canonical_json({"meta": _clean(meta)}) + "\n")
        for m in cands.multiplets:
            f.write(canonical_json({
                "items": [i + 1 for i in m.items],
                "order": m.order,
                "provenance": cands.provenance[m].value,
                "origins": list(cands.origins[m]),
            }) + "\n")


def read_candidates(path: str, n_items: Optional[int] = None) -> CandidateSet:
    provenance: Dict[Multiplet, Provenance] = {}
    origins: Dict[Multiplet, Tuple[str, ...]] = {}
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if "meta" in record:
                    continue
                m = Multiplet.of(int(i) - 1 for i in record["items"])
                prov = Provenance(record["provenance"])
            except (KeyError, ValueError, TypeError) as e:
                raise SchemaError(f"{path}:{lineno}: malformed candidate ({e})") from e
            if n_items is not None:
                m.check_bounds(n_items, k_max=n_items)
            provenance[m] = prov
            origins[m] = tuple(record.get("origins", ()))
    return CandidateSet(provenance, origins)


# === Validation artifacts ===

REPORT_HEADER = [
    "candidate", "order", "provenance", "stage", "passed", "reason",
    "omega", "p_raw", "p_adj", "ci_low", "ci_high", "note",
]


def stage_report_rows(report: StageReport) -> List[List[Any]]:
    """One row per (candidate, stage reached)."""
    rows = []
    for record in report.records.values():
        for stage in (1, 2, 3):
            outcome = getattr(record, f"stage{stage}")
            if outcome is None:
                continue
            failed_here = outcome is False
            rows.append([
                record.multiplet.key, record.multiplet.order, record.provenance.value, stage, outcome,
                record.reason.value if failed_here else "",
                record.omega, record.p_raw, record.p_adj,
                record.ci_low if stage >= 2 else math.nan,
                record.ci_high if stage >= 2 else math.nan,
                record.note if failed_here else "",
            ])
    return rows


def write_stage_report(tsv_path: str, json_path: str, report: StageReport, meta: Dict[str, Any]) -> None:
    write_tsv(tsv_path, meta, REPORT_HEADER, stage_report_rows(report))
    write_json(json_path, {
        "meta": meta,
        "candidates": len(report),
        "reasons": report.reason_counts(),
        "survivors": {f"stage{s}": len(report.survivors(s)) for s in (1, 2, 3)},
        "removed_at": {f"stage{s}": sum(r.failed_stage == s for r in report.records.values()) for s in (1, 2, 3)},
        "records": [r.to_dict() for r in report.records.values()],
    })


def hyperedge_record(edge: ValidatedHyperedge) -> Dict[str, Any]:
    return {
        "items": [i + 1 for i in edge.multiplet.items],
        "order": edge.order,
        "omega": edge.omega,
        "ci": [edge.ci_low, edge.ci_high],
        "p_adj": edge.p_adj,
        "type": edge.interaction_type.value,
        "provenance": edge.provenance.value,
    }


def parse_hyperedge(record: Dict[str, Any]) -> ValidatedHyperedge:
    try:
        return ValidatedHyperedge(
            multiplet=Multiplet.of(int(i) - 1 for i in record["items"]),
            omega=float(record["omega"]),
            ci_low=float(record["ci"][0]),
            ci_high=float(record["ci"][1]),
            p_adj=float(record["p_adj"]),
            interaction_type=InteractionType(record["type"]),
            provenance=Provenance(record["provenance"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise SchemaError(f"Malformed hyperedge record {record} ({e})") from e


def write_hyperedges(path: str, layer: str, item_ids: Sequence[str], edges: Sequence[ValidatedHyperedge], meta: Dict[str, Any]) -> None:
    write_json(path, {
        "meta": meta,
        "layer": layer,
        "item_ids": list(item_ids),
        "hyperedges": [hyperedge_record(e) for e in sorted(edges, key=lambda e: e.multiplet)],
    })


def read_hyperedges(path: str) -> Tuple[str, Tuple[str, ...], List[ValidatedHyperedge]]:
    data = read_json(path)
    try:
        return data["layer"], tuple(data["item_ids"]), [parse_hyperedge(r) for r in data["hyperedges"]]
    except (KeyError, TypeError, AttributeError) as e:
        raise SchemaError(f"{path}: malformed hyperedge file ({e})") from e


# === Multiplex ===

def write_multiplex(path: str, mux: MultiplexHypergraph, meta: Dict[str, Any]) -> None:
    write_json(path, {
        "meta": meta,
        "interaction_type": mux.interaction_type.value,
        "nodes": list(mux.node_ids),
        "layers": {name: [hyperedge_record(e) for e in edges] for name, edges in mux.layers.items()},
    })


def read_multiplex(path: str) -> MultiplexHypergraph:
    data = read_json(path)
    try:
        return MultiplexHypergraph(
            node_ids=tuple(data["nodes"]),
            layers={name: tuple(parse_hyperedge(r) for r in records) for name, records in data["layers"].items()},
            interaction_type=InteractionType(data["interaction_type"]),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise SchemaError(f"{path}: malformed multiplex file ({e})") from e


# === Metric tables ===

def write_degrees(path: str, profile: NodeDegreeProfile, scale_map: Optional[ScaleMap], meta: Dict[str, Any]) -> None:
    """Per-layer item ranking: item, normalized WD, subscale (plus raw degree)."""
    rows = []
    for layer, degrees in profile.layers.items():
        for rank, (item, label, value, scale) in enumerate(top_items(profile, scale_map, layer, n=None), start=1):
            rows.append([layer, rank, item, label, value, float(degrees.raw[item - 1]), scale])
    write_tsv(path, meta, ["layer", "rank", "item", "label", "normalized_wd", "raw_wd", "scale"], rows)


def write_top_items(path: str, profile: NodeDegreeProfile, scale_map: Optional[ScaleMap], n: int, meta: Dict[str, Any]) -> None:
    """The n highest-ranked items per layer."""
    rows = [
        [layer, rank, item, label, value, scale]
        for layer in profile.layers
        for rank, (item, label, value, scale) in enumerate(top_items(profile, scale_map, layer, n=n), start=1)
    ]
    write_tsv(path, meta, ["layer", "rank", "item", "label", "normalized_wd", "scale"], rows)


def write_structure(path: str, structure: Dict[str, LayerStructure], meta: Dict[str, Any]) -> None:
    """Hyperedges and active nodes per (layer, order); order "all" sums the layer."""
    rows = []
    for layer, s in structure.items():
        for order, count in s.hyperedges_by_order.items():
            rows.append([layer, order, count, s.active_by_order[order]])
        rows.append([layer, "all", s.n_hyperedges, s.active_nodes])
    write_tsv(path, meta, ["layer", "order", "hyperedges", "active_nodes"], rows)


def write_nswd(path: str, values: Dict[str, Dict[str, float]], meta: Dict[str, Any]) -> None:
    rows = [[layer, scale, v] for layer, per_scale in values.items() for scale, v in per_scale.items()]
    write_tsv(path, meta, ["layer", "scale", "nswd"], rows)


def write_patterns(path: str, patterns: Dict[str, List[ScalePattern]], meta: Dict[str, Any], multiscale_only: bool = False) -> None:
    rows = []
    for layer, ranked in patterns.items():
        kept = [p for p in ranked if p.multiscale] if multiscale_only else ranked
        for rank, p in enumerate(kept, start=1):
            kind = "unassigned" if p.unassigned else ("multiscale" if p.multiscale else "monoscale")
            by_order = ";".join(f"k{k}={c}" for k, c in p.counts_by_order.items())
            rows.append([layer, rank, p.label, kind, p.hyperedge_count, p.cumulative_weight, by_order])
    write_tsv(path, meta, ["layer", "rank", "pattern", "kind", "hyperedges", "cumulative_weight", "by_order"], rows)


# === Ground truth ===

def write_ground_truth(path: str, truth: GroundTruth, meta: Dict[str, Any]) -> None:
    write_json(path, {
        "meta": meta,
        "n_items": truth.n_items,
        "floor": truth.floor,
        "blocks": [
            {
                "items": [i + 1 for i in p.multiplet.items],
                "loadings": list(p.spec.loadings),
                "e_cov": p.spec.e_cov,
                "regime": p.regime,
                "omega": p.omega,
            }
            for p in truth.planted
        ],
    })


def read_ground_truth(path: str) -> GroundTruth:
    data = read_json(path)
    try:
        planted = tuple(
            PlantedTriplet(
                multiplet=Multiplet.of(int(i) - 1 for i in b["items"]),
                spec=TripletSpec(tuple(b["loadings"]), b["e_cov"], b.get("regime", "")),
                omega=float(b["omega"]),
            )
            for b in data["blocks"]
        )
        return GroundTruth(planted=planted, n_items=int(data["n_items"]), floor=float(data.get("floor", 0.15)))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: malformed ground truth ({e})") from e
