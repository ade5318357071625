import json
import os

import numpy as np
import pytest

from homux.config import PipelineConfig
from homux.errors import ConfigError, StageFailure
from homux.formats import read_multiplex, read_tsv, write_dataset, write_ground_truth, write_scale_map
from homux.model import ResponseMatrix, ScaleMap
from homux.pipeline import PipelineExecutor, StageStatus, run_pipeline
from homux.settings import DEFAULT_SETTINGS, deep_merge
from homux.synth import calibrate_loadings, regime_system, sample_system
from homux.utils import meta_block


def write_synthetic(directory, n_samples=1500, n_triplets=3, seed=4):
    """Mixed-regime block system with its block scale map and ground truth."""
    loadings = calibrate_loadings(0.15).loadings
    spec = regime_system("mixed", n_samples, seed, loadings=loadings, n_triplets=n_triplets)
    sample = sample_system(spec, layer_id="mixed")
    os.makedirs(directory, exist_ok=True)
    write_dataset(os.path.join(directory, "data.csv"), sample.data)
    write_ground_truth(os.path.join(directory, "ground_truth.json"), sample.truth, meta_block("synthetic"))
    blocks = ScaleMap(
        scales={f"B{b + 1}": p.multiplet.items for b, p in enumerate(sample.truth.planted)},
        unassigned=frozenset(),
        n_items=spec.n_items,
    )
    write_scale_map(os.path.join(directory, "scale_map.json"), blocks)
    return sample


def synthetic_config(directory, output_dir, **overrides):
    settings = deep_merge(DEFAULT_SETTINGS, {
        "seed": 11,
        "output_dir": str(output_dir),
        "layers": {"mixed": {"data": "data.csv", "ground_truth": "ground_truth.json"}},
        "scale_map": "scale_map.json",
        "candidates": {"k_max": 4, "inter_subscale": False},
        "validation": {"n_perm": 100, "n_boot": 1000},
    })
    return PipelineConfig.from_settings(deep_merge(settings, overrides), base_dir=str(directory))


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    directory = tmp_path_factory.mktemp("synthetic")
    write_synthetic(directory)
    cfg = synthetic_config(directory, directory / "run")
    return directory, cfg, run_pipeline(cfg, jobs=1)


class TestEndToEnd:
    def test_artifact_tree(self, synthetic_run):
        directory, cfg, manifest = synthetic_run
        out = cfg.output_dir
        layer_dir = os.path.join(out, "layers", "mixed")
        for name in ("network_nonparanormal.tsv", "network_nonparanormal.json", "candidates.jsonl",
                     "stage_report.tsv", "stage_report.json", "hyperedges.json"):
            assert os.path.isfile(os.path.join(layer_dir, name)), name
        for kind in ("synergy", "redundancy"):
            assert os.path.isfile(os.path.join(out, f"multiplex_{kind}.json"))
            for table in ("degrees", "top_items", "structure", "nswd", "patterns"):
                assert os.path.isfile(os.path.join(out, "metrics", f"{table}_{kind}.tsv"))
        assert os.path.isfile(os.path.join(out, "manifest.json"))
        assert "manifest.json" not in manifest["artifacts"]
        assert all(all(done.values()) for done in manifest["stages"].values())

    def test_top_items_and_structure(self, synthetic_run):
        _, cfg, manifest = synthetic_run
        validated = manifest["layers"]["mixed"]["validation"]["validated"]
        hyperedges = 0
        for kind in ("synergy", "redundancy"):
            _, rows = read_tsv(os.path.join(cfg.output_dir, "metrics", f"top_items_{kind}.tsv"))
            assert len(rows) <= cfg.metrics.top_n
            _, rows = read_tsv(os.path.join(cfg.output_dir, "metrics", f"structure_{kind}.tsv"))
            total = next(r for r in rows if r["order"] == "all")
            assert int(total["active_nodes"]) == manifest["structure"][kind]["mixed"]["active_nodes"]
            hyperedges += int(total["hyperedges"])
        assert hyperedges == validated

    def test_top_n_limits_top_items(self, synthetic_run):
        directory, _, _ = synthetic_run
        cfg = synthetic_config(directory, directory / "run_top2", metrics={"top_n": 2})
        run_pipeline(cfg, jobs=1)
        for kind in ("synergy", "redundancy"):
            _, top = read_tsv(os.path.join(cfg.output_dir, "metrics", f"top_items_{kind}.tsv"))
            _, ranked = read_tsv(os.path.join(cfg.output_dir, "metrics", f"degrees_{kind}.tsv"))
            ranked = [r for r in ranked if float(r["normalized_wd"]) > 0]
            assert [r["item"] for r in top] == [r["item"] for r in ranked[:2]]

    def test_artifacts_carry_config_hash(self, synthetic_run):
        _, cfg, manifest = synthetic_run
        meta, _ = read_tsv(os.path.join(cfg.output_dir, "layers", "mixed", "stage_report.tsv"))
        assert meta["config_hash"] == manifest["meta"]["config_hash"]
        assert manifest["seeds"]["master"] == 11

    def test_planted_triplets_recovered(self, synthetic_run):
        _, _, manifest = synthetic_run
        recovery = manifest["layers"]["mixed"]["recovery"]
        per_regime = recovery["per_regime"]
        assert per_regime["redundant"]["sign_correct"] == per_regime["redundant"]["planted"] == 1
        assert per_regime["synergistic"]["sign_correct"] == per_regime["synergistic"]["planted"] == 1
        assert per_regime["near_zero"]["recovered"] == 0
        assert recovery["cross_block"] == 0
        assert recovery["sign_mismatches"] == 0

    def test_multiplex_split_by_sign(self, synthetic_run):
        _, cfg, _ = synthetic_run
        synergy = read_multiplex(os.path.join(cfg.output_dir, "multiplex_synergy.json"))
        redundancy = read_multiplex(os.path.join(cfg.output_dir, "multiplex_redundancy.json"))
        assert all(e.omega < 0 for e in synergy.layers["mixed"])
        assert all(e.omega > 0 for e in redundancy.layers["mixed"])

    def test_jobs_do_not_change_artifacts(self, synthetic_run):
        directory, _, manifest = synthetic_run
        cfg = synthetic_config(directory, directory / "run_parallel")
        parallel = run_pipeline(cfg, jobs=3)
        assert parallel["artifacts"] == manifest["artifacts"]

    def test_resume_requires_same_config(self, synthetic_run):
        directory, cfg, manifest = synthetic_run
        resumed = PipelineExecutor(cfg).run(resume="validate")
        assert resumed["artifacts"] == manifest["artifacts"]
        with pytest.raises(ConfigError, match="stale"):
            PipelineExecutor(synthetic_config(directory, cfg.output_dir, seed=12)).run(resume="validate")


def test_zero_candidates_is_a_valid_run(tmp_path):
    values = np.random.default_rng(0).normal(size=(200, 6))
    write_dataset(str(tmp_path / "data.csv"), ResponseMatrix(values, tuple(f"x{i}" for i in range(1, 7)), "AN", None))
    (tmp_path / "scales.json").write_text(json.dumps({"A": [1, 2], "B": [3, 4], "C": [5, 6]}))
    settings = deep_merge(DEFAULT_SETTINGS, {
        "seed": 1,
        "output_dir": str(tmp_path / "run"),
        "layers": {"AN": "data.csv"},
        "scale_map": "scales.json",
        "candidates": {"network_based": False, "inter_subscale": False},
        "validation": {"n_perm": 100, "n_boot": 1000},
    })
    manifest = run_pipeline(PipelineConfig.from_settings(settings, base_dir=str(tmp_path)))
    assert manifest["layers"]["AN"]["candidates"]["total"] == 0
    assert manifest["layers"]["AN"]["validation"]["validated"] == 0
    mux = read_multiplex(str(tmp_path / "run" / "multiplex_synergy.json"))
    assert mux.layers["AN"] == ()


def test_constant_column_fails_with_data_exit_code(tmp_path):
    rows = "\n".join(f"{i % 5},{(i * 3) % 5},2,{(i * 7) % 5}" for i in range(40))
    (tmp_path / "an.csv").write_text("q1,q2,q3,q4\n" + rows + "\n")
    settings = deep_merge(DEFAULT_SETTINGS, {
        "seed": 1,
        "output_dir": str(tmp_path / "run"),
        "layers": {"AN": "an.csv"},
        "validation": {"n_perm": 100, "n_boot": 1000},
    })
    with pytest.raises(StageFailure) as info:
        run_pipeline(PipelineConfig.from_settings(settings, base_dir=str(tmp_path)))
    assert info.value.exit_code == 3
    assert info.value.stage == "network"
    assert info.value.layer == "AN"


def test_failed_layer_is_quarantined(tmp_path):
    write_synthetic(tmp_path, n_samples=300, n_triplets=2, seed=2)
    cfg = synthetic_config(tmp_path, tmp_path / "run")
    executor = PipelineExecutor(cfg)
    executor.run(stages=["network", "candidates"])
    with open(os.path.join(cfg.output_dir, "layers", "mixed", "candidates.jsonl"), "a") as f:
        f.write("{broken\n")
    with pytest.raises(StageFailure) as info:
        PipelineExecutor(cfg).run(stages=["validate"])
    assert info.value.exit_code == 3
    assert not os.path.isdir(os.path.join(cfg.output_dir, "layers", "mixed"))
    assert os.path.isfile(os.path.join(cfg.output_dir, "failed", "mixed", "candidates.jsonl"))


def test_start_without_prerequisites(tmp_path):
    write_synthetic(tmp_path, n_samples=300, n_triplets=2, seed=2)
    cfg = synthetic_config(tmp_path, tmp_path / "run")
    with pytest.raises(ConfigError, match="missing or stale"):
        PipelineExecutor(cfg).run(resume="multiplex")
    assert not os.path.exists(os.path.join(cfg.output_dir, "config.json"))


def test_completion_needs_every_artifact(tmp_path):
    write_synthetic(tmp_path, n_samples=300, n_triplets=2, seed=2)
    cfg = synthetic_config(tmp_path, tmp_path / "run")
    executor = PipelineExecutor(cfg)
    executor.run(stages=["network", "candidates"])
    assert [(r.stage, r.layer, r.status) for r in executor.results] == [
        ("network", "mixed", StageStatus.COMPLETE),
        ("candidates", "mixed", StageStatus.COMPLETE),
    ]
    assert executor.stage_complete("candidates") == {"mixed": True}
    os.remove(os.path.join(cfg.output_dir, "layers", "mixed", "candidates.jsonl"))
    assert executor.stage_complete("candidates") == {"mixed": False}
    with pytest.raises(ConfigError, match=r"candidates\[mixed\]"):
        PipelineExecutor(cfg).run(resume="validate")


def test_malformed_hyperedges_fail_with_data_exit_code(tmp_path):
    write_synthetic(tmp_path, n_samples=300, n_triplets=2, seed=2)
    cfg = synthetic_config(tmp_path, tmp_path / "run")
    PipelineExecutor(cfg).run(stages=["network", "candidates", "validate"])
    path = os.path.join(cfg.output_dir, "layers", "mixed", "hyperedges.json")
    with open(path) as f:
        data = json.load(f)
    del data["layer"]
    with open(path, "w") as f:
        json.dump(data, f)
    executor = PipelineExecutor(cfg)
    with pytest.raises(StageFailure) as info:
        executor.run(stages=["multiplex"])
    assert info.value.exit_code == 3
    assert info.value.stage == "multiplex"
    assert executor.results[-1].status is StageStatus.ERROR


def test_unexpected_numerical_failure_maps_to_estimation_exit_code(tmp_path, monkeypatch):
    write_synthetic(tmp_path, n_samples=300, n_triplets=2, seed=2)
    cfg = synthetic_config(tmp_path, tmp_path / "run")

    def broken(self, layer):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(PipelineExecutor, "run_network", broken)
    with pytest.raises(StageFailure) as info:
        PipelineExecutor(cfg).run(stages=["network"])
    assert info.value.exit_code == 4
    assert info.value.layer == "mixed"


@pytest.mark.slow
class TestSyntheticAcceptance:
    """Nine-triplet block systems at n=5000 under the default validation settings."""

    @staticmethod
    def run_regime(tmp_path, regime):
        loadings = calibrate_loadings(0.15).loadings
        spec = regime_system(regime, 5000, 23, loadings=loadings, n_triplets=9)
        sample = sample_system(spec, layer_id=regime)
        write_dataset(str(tmp_path / "data.csv"), sample.data)
        write_ground_truth(str(tmp_path / "ground_truth.json"), sample.truth, meta_block("synthetic"))
        blocks = ScaleMap(
            scales={f"B{b + 1}": p.multiplet.items for b, p in enumerate(sample.truth.planted)},
            unassigned=frozenset(),
            n_items=spec.n_items,
        )
        write_scale_map(str(tmp_path / "scale_map.json"), blocks)
        settings = deep_merge(DEFAULT_SETTINGS, {
            "seed": 23,
            "output_dir": str(tmp_path / "run"),
            "layers": {regime: {"data": "data.csv", "ground_truth": "ground_truth.json"}},
            "scale_map": "scale_map.json",
            "candidates": {"inter_subscale": False},
        })
        manifest = run_pipeline(PipelineConfig.from_settings(settings, base_dir=str(tmp_path)), jobs=4)
        return manifest["layers"][regime]

    @pytest.mark.parametrize("regime", ["redundant", "synergistic"])
    def test_planted_signs_recovered(self, tmp_path, regime):
        per_regime = self.run_regime(tmp_path, regime)["recovery"]["per_regime"]
        assert per_regime[regime]["planted"] == 9
        assert per_regime[regime]["sign_correct"] >= 8

    def test_near_zero_validates_nothing(self, tmp_path):
        layer = self.run_regime(tmp_path, "near_zero")
        assert layer["validation"]["validated"] == 0

    def test_mixed_signs_match_blocks(self, tmp_path):
        recovery = self.run_regime(tmp_path, "mixed")["recovery"]
        assert recovery["sign_mismatches"] == 0
        assert recovery["per_regime"]["near_zero"]["recovered"] == 0
