import csv
import json
import shutil

import pytest

from aphasia_graphs.cli import (EXIT_CONFIG, EXIT_INPUT, EXIT_MISSING, EXIT_OK, EXIT_VALIDATION, main)
from aphasia_graphs.config import ConfigError, PipelineConfig, config_from_dict, load_config
from aphasia_graphs.features import FEATURE_NAMES
from aphasia_graphs.pipeline import (MissingPrerequisiteError, read_feature_csv, run_stage, sha256)
from aphasia_graphs.scores import TARGETS

SMALL = {
    "synth": {"n_participants": 50, "seed": 3},
    "eval": {"k": 5, "repeats": 2, "gnn": {"hidden": 8, "epochs": 20}},
    "report": {"targets": ["wab_aq"], "models": ["ridge"], "oof_models": ["gnn", "ridge"],
               "ablation_variants": ["GRAPH_ONLY", "GRAPH_POS", "GRAPH_POS_PARA"]},
}
CHAIN = ("synth", "parse", "graph", "features", "analyze", "train", "evaluate", "oof", "ablate")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tmp_path_factory.mktemp("cfg") / "small.json"
    cfg.write_text(json.dumps(SMALL))
    for stage in CHAIN:
        assert main([stage, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return out, cfg


def test_config_defaults_and_unknown_keys(tmp_path):
    assert load_config(None) == PipelineConfig()
    cfg = config_from_dict({"eval": {"gnn": {"hidden": 3}}, "stats": {"aphasia_threshold": 90}})
    assert cfg.eval.gnn.hidden == 3 and cfg.stats.aphasia_threshold == 90
    with pytest.raises(ConfigError):
        config_from_dict({"eval": {"folds": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"report": {"targets": ["nope"]}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_with_seed():
    cfg = PipelineConfig().with_seed(9)
    assert cfg.synth.seed == cfg.graph.louvain_seed == cfg.eval.seed == cfg.eval.gnn.seed == 9


def test_parse_writes_one_transcript_per_file(run_dir):
    out, _ = run_dir
    assert len(list((out / "corpus").glob("*.cha"))) == 50
    assert len(list((out / "transcripts").glob("*.json"))) == 50
    assert len(list((out / "graphs").glob("*.json"))) == 50
    assert len(list((out / "graphs" / "dot").glob("*.dot"))) == 50


def test_feature_table_schema(run_dir):
    out, _ = run_dir
    text = (out / "features" / "features.csv").read_text()
    assert text.startswith("# feature_schema=1\n")
    header, ids, values = read_feature_csv(out / "features" / "features.csv")
    assert header == ["participant_id", *FEATURE_NAMES] and values.shape == (50, 20)
    header, _, _ = read_feature_csv(out / "features" / "joined.csv")
    assert header == ["participant_id", *FEATURE_NAMES, *TARGETS]


def test_dataset_container(run_dir):
    out, _ = run_dir
    ds = json.loads((out / "features" / "dataset.json").read_text())
    assert ds["format"] == "aphasia-graph-dataset" and ds["version"] == 1
    rec = ds["records"][0]
    assert len(rec["x"][0]) == 7 and len(rec["edges"]) == len(rec["weights"])
    assert set(rec["targets"]) == set(TARGETS)


def test_analysis_outputs(run_dir):
    out, _ = run_dir
    rows = list(csv.reader((out / "analysis" / "spearman_targets.csv").open()))
    assert rows[0] == ["feature", "wab_aq"] and len(rows) == 21
    svg = (out / "analysis" / "spearman_targets.svg").read_text()
    assert "manifests/analyze.json" in svg
    assert (out / "analysis" / "lowess" / "gesture_ratio__wab_aq.csv").exists()
    reg = json.loads((out / "analysis" / "regression.json").read_text())
    r2 = [reg["models"]["wab_aq"][v]["r_squared"] for v in ("GRAPH_ONLY", "GRAPH_POS", "GRAPH_POS_PARA")]
    assert r2 == sorted(r2)
    odds = json.loads((out / "analysis" / "odds.json").read_text())
    assert set(odds["odds"]) == {"para_any", "para_sem", "para_phon", "para_neo"}


def test_oof_outputs(run_dir):
    out, _ = run_dir
    rows = list(csv.DictReader((out / "oof" / "oof_gnn_wab_aq.csv").open()))
    assert len(rows) == 50 and "repeat_1" in rows[0]
    for r in rows:
        assert abs(float(r["abs_error"]) - abs(float(r["true"]) - float(r["predicted"]))) <= 1e-12
    cases = json.loads((out / "oof" / "cases_gnn_wab_aq.json").read_text())
    errs = [c["abs_error"] for c in cases["cases"]]
    assert errs == sorted(errs) and len(errs) == 9
    assert (out / "oof" / "scatter_ridge_wab_aq.svg").exists()


def test_every_artifact_references_its_manifest(run_dir):
    out, _ = run_dir
    for stage in CHAIN[4:]:
        manifest = json.loads((out / "manifests" / f"{stage}.json").read_text())
        for rel in manifest["outputs"]:
            if rel.endswith((".json", ".svg")):
                assert f"manifests/{stage}.json" in (out / rel).read_text(), rel


def test_manifest_chain_intact(run_dir):
    out, _ = run_dir
    produced = {}
    for stage in CHAIN:
        m = json.loads((out / "manifests" / f"{stage}.json").read_text())
        assert m["stage"] == stage and m["tool_version"]
        for rel, digest in m["outputs"].items():
            assert sha256(out / rel) == digest
            produced[rel] = digest
        for rel, digest in m["inputs"].items():
            assert produced.get(rel) == digest, f"{stage} read {rel} that no earlier stage wrote"
        for up, digest in m["upstream"].items():
            assert sha256(out / "manifests" / f"{up}.json") == digest


def test_rerun_is_byte_identical(run_dir, tmp_path):
    out, cfg = run_dir
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    for stage in ("features", "train", "oof"):
        assert main([stage, "--config", str(cfg), "--out", str(copy)]) == EXIT_OK
    for rel in ("features/features.csv", "features/dataset.json", "models/gnn_wab_aq.json",
                "oof/oof_gnn_wab_aq.csv", "oof/cases_gnn_wab_aq.json"):
        assert (copy / rel).read_bytes() == (out / rel).read_bytes(), rel


def test_missing_prerequisite(tmp_path):
    with pytest.raises(MissingPrerequisiteError, match="joined.csv"):
        run_stage("analyze", PipelineConfig(), tmp_path)
    assert main(["analyze", "--out", str(tmp_path)]) == EXIT_MISSING
    assert main(["train", "--out", str(tmp_path)]) == EXIT_MISSING


def test_usage_errors(tmp_path):
    assert main(["fly", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "c.json"
    bad.write_text('{"eval": {"bogus": 1}}')
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_input_and_validation_errors(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "a.cha").write_text("@Begin\n*INV:\thello .\n@End\n")
    assert main(["parse", "--out", str(tmp_path)]) == EXIT_INPUT

    out = tmp_path / "v"
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"synth": {"n_participants": 6}}))
    for stage in ("synth", "parse", "graph"):
        assert main([stage, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    scores = out / "corpus" / "wab_scores.csv"
    lines = scores.read_text().splitlines()
    scores.write_text("\n".join([lines[0], lines[1].replace(lines[1].split(",")[1], "150", 1)] + lines[2:]) + "\n")
    assert main(["features", "--config", str(cfg), "--out", str(out)]) == EXIT_VALIDATION
    scores.write_text(lines[0] + "\nnobody,50,5,40,5\n")
    assert main(["features", "--config", str(cfg), "--out", str(out)]) == EXIT_VALIDATION
    scores.write_text("participant_id,wab_aq\nx,50\n")
    assert main(["features", "--config", str(cfg), "--out", str(out)]) == EXIT_INPUT


def test_seed_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synth": {"n_participants": 3}}))
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / "o")]) == EXIT_OK
    m = json.loads((tmp_path / "o" / "manifests" / "synth.json").read_text())
    assert m["seeds"] == {"synth": 7, "louvain": 7, "eval": 7, "gnn": 7}
