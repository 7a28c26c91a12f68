"""Stage runner: every stage reads the previous stage's artifacts under one
output directory, writes its own atomically and finishes with a manifest.

Layout under ``out``::

    corpus/        synth       *.cha, wab_scores.csv
    transcripts/   parse       <id>.json
    graphs/        graph       <id>.json, dot/<id>.dot
    features/      features    features.csv, joined.csv, dataset.json
    analysis/      analyze     correlations, heatmaps, LOWESS panels, regression.json, odds.json
    models/        train       gnn_<target>.json
    evaluate/      evaluate    metrics.csv/json, folds_<model>_<target>.csv
    oof/           oof         oof_<model>_<target>.csv, cases_<model>_<target>.csv/json, scatter SVGs
    ablation/      ablate      ablation.csv/json
    manifests/     all         <stage>.json
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import logging
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, stats
from .chat import ChatParseError, Transcript, parse_transcript
from .config import PipelineConfig
from .evaluation import (VARIANT_COLUMNS, ExperimentData, ModelKind, Variant, ablate, cross_validate,
                         oof_predictions, rank_cases)
from .features import (FEATURE_NAMES, FEATURE_SCHEMA_VERSION, NODE_COLUMNS, graph_feature_vector,
                       node_feature_matrix)
from .gnn import GraphSample, train
from .graph import DiscourseGraph, assign_communities, build_graph, to_dot
from .plots import heatmap_svg, scatter_svg
from .scores import TARGETS, ingest_scores, merge_features_scores
from .synth import generate_corpus

log = logging.getLogger(__name__)

STAGES = ("synth", "parse", "graph", "features", "analyze", "train", "evaluate", "oof", "ablate")
DATASET_FORMAT = "aphasia-graph-dataset"
UPSTREAM = {"parse": ("synth",), "graph": ("parse",), "features": ("parse", "graph"),
            "analyze": ("features",), "train": ("features",), "evaluate": ("features",),
            "oof": ("features",), "ablate": ("features",)}


class MissingPrerequisiteError(FileNotFoundError):
    pass


# ---------------------------------------------------------------- io helpers

def atomic_write(path: Path, data: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _finite_or_none(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _clean(d: dict) -> dict:
    return {k: (_finite_or_none(v) if isinstance(v, (float, np.floating)) else v) for k, v in d.items()}


# ---------------------------------------------------------------- stage context

class Stage:
    """Tracks one stage run's inputs and outputs and writes its manifest."""

    def __init__(self, name: str, out: Path, cfg: PipelineConfig, argv: list[str] | None):
        self.name = name
        self.out = out
        self.cfg = cfg
        self.argv = argv or []
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.notes: dict = {}
        self.started = dt.datetime.now(dt.timezone.utc).isoformat()

    @property
    def manifest_rel(self) -> str:
        return f"manifests/{self.name}.json"

    def require(self, path: Path, what: str) -> Path:
        if not path.exists():
            raise MissingPrerequisiteError(f"stage {self.name!r} needs {what} at {path}")
        return path

    def read(self, path: Path) -> Path:
        self.inputs.append(path)
        return path

    def write(self, rel: str, data: str | bytes) -> Path:
        path = self.out / rel
        atomic_write(path, data)
        self.outputs.append(path)
        return path

    def write_json(self, rel: str, obj: dict) -> Path:
        return self.write(rel, dump_json({**obj, "manifest": self.manifest_rel}))

    def finish(self) -> Path:
        rel = lambda p: p.relative_to(self.out).as_posix() if p.is_relative_to(self.out) else str(p)
        cfg = self.cfg
        manifest = {
            "stage": self.name,
            "command": self.argv,
            "tool_version": __version__,
            "config": cfg.to_dict(),
            "seeds": {"synth": cfg.synth.seed, "louvain": cfg.graph.louvain_seed,
                      "eval": cfg.eval.seed, "gnn": cfg.eval.gnn.seed},
            "inputs": {rel(p): sha256(p) for p in sorted(set(self.inputs))},
            "outputs": {rel(p): sha256(p) for p in sorted(set(self.outputs))},
            "upstream": {s: sha256(self.out / f"manifests/{s}.json") for s in UPSTREAM.get(self.name, ())
                         if (self.out / f"manifests/{s}.json").exists()},
            "notes": self.notes,
            "started": self.started,
            "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        }
        path = self.out / self.manifest_rel
        atomic_write(path, dump_json(manifest))
        log.info("stage done stage=%s outputs=%d manifest=%s", self.name, len(self.outputs), path)
        return path


def corpus_dir(out: Path, cfg: PipelineConfig) -> Path:
    return Path(cfg.parse.corpus_dir) if cfg.parse.corpus_dir else out / "corpus"


def scores_path(out: Path, cfg: PipelineConfig) -> Path:
    return Path(cfg.scores.path) if cfg.scores.path else corpus_dir(out, cfg) / "wab_scores.csv"


# ---------------------------------------------------------------- stages

def stage_synth(st: Stage):
    paths, scores = generate_corpus(st.cfg.synth, st.out / "corpus")
    st.outputs += paths + [scores]
    st.notes["participants"] = len(paths)


def _parse_one(args):
    path, tag = args
    raw = Path(path).read_text(encoding="utf-8")
    try:
        return parse_transcript(raw, tag, Path(path).stem), None
    except ChatParseError as exc:
        return None, str(exc)


def _map(fn, items, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def stage_parse(st: Stage):
    src = st.require(corpus_dir(st.out, st.cfg), "a corpus directory")
    files = sorted(src.glob("*.cha"))
    if not files:
        raise MissingPrerequisiteError(f"no .cha files in {src}")
    results = _map(_parse_one, [(str(f), st.cfg.parse.participant_tag) for f in files], st.cfg.parse.workers)
    skipped, warnings = {}, 0
    for f, (t, err) in zip(files, results):
        st.read(f)
        if t is None:
            skipped[f.name] = err
            log.warning("skipped transcript file=%s error=%s", f.name, err)
            continue
        warnings += len(t.warnings)
        st.write(f"transcripts/{t.participant_id}.json", t.to_json())
    if len(skipped) == len(files):
        raise ChatParseError(f"no file in {src} has a *{st.cfg.parse.participant_tag}: tier")
    st.notes.update(parsed=len(files) - len(skipped), skipped=skipped, tier_warnings=warnings)


def _load_transcripts(st: Stage) -> list[Transcript]:
    d = st.require(st.out / "transcripts", "parsed transcripts (run 'parse')")
    files = sorted(d.glob("*.json"))
    if not files:
        raise MissingPrerequisiteError(f"no transcripts in {d} (run 'parse')")
    return [Transcript.from_json(st.read(f).read_text()) for f in files]


def _graph_one(args):
    t, gcfg = args
    g = build_graph(t, gcfg)
    return assign_communities(g, gcfg.louvain_seed)


def stage_graph(st: Stage):
    transcripts = _load_transcripts(st)
    graphs = _map(_graph_one, [(t, st.cfg.graph) for t in transcripts], st.cfg.parse.workers)
    for g in graphs:
        g.validate()
        st.write(f"graphs/{g.participant_id}.json", g.to_json())
        if st.cfg.report.export_dot:
            st.write(f"graphs/dot/{g.participant_id}.dot", to_dot(g))
    st.notes["graphs"] = len(graphs)


def stage_features(st: Stage):
    transcripts = {t.participant_id: t for t in _load_transcripts(st)}
    gdir = st.require(st.out / "graphs", "graphs (run 'graph')")
    graphs = {}
    for f in sorted(gdir.glob("*.json")):
        g = DiscourseGraph.from_json(st.read(f).read_text())
        graphs[g.participant_id] = g
    ids = sorted(set(graphs) & set(transcripts))
    if not ids:
        raise MissingPrerequisiteError(f"no graphs in {gdir} (run 'graph')")

    vectors = np.array([graph_feature_vector(graphs[p], transcripts[p]).as_array() for p in ids])
    st.write("features/features.csv", f"# feature_schema={FEATURE_SCHEMA_VERSION}\n"
             + csv_text(("participant_id",) + FEATURE_NAMES,
                        ([p] + list(v) for p, v in zip(ids, vectors))))

    sp = st.read(st.require(scores_path(st.out, st.cfg), "a WAB score sheet"))
    ingest = ingest_scores(sp, st.cfg.scores.column_map)
    joined = merge_features_scores(ids, vectors, FEATURE_NAMES, ingest.records)
    st.notes.update(score_rows=ingest.total_rows, score_kept=len(ingest.records),
                    score_dropped=[f"row {r}: {why}" for r, why in ingest.dropped],
                    joined=len(joined), excluded=sorted(set(ids) - set(joined.ids)))
    st.write("features/joined.csv", f"# feature_schema={FEATURE_SCHEMA_VERSION}\n" + csv_text(
        ("participant_id",) + FEATURE_NAMES + TARGETS,
        ([p] + list(joined.features[i]) + [joined.targets[t][i] for t in TARGETS]
         for i, p in enumerate(joined.ids))))

    include = st.cfg.features.include_paraphasia_dim
    records = []
    for i, p in enumerate(joined.ids):
        g = graphs[p]
        labels, x = node_feature_matrix(g, include)
        index = {lab: k for k, lab in enumerate(labels)}
        edges = sorted(g.edges)
        records.append({
            "participant_id": p,
            "node_labels": labels,
            "x": x.tolist(),
            "edges": [[index[s], index[d]] for s, d in edges],
            "weights": [g.edges[e].weight for e in edges],
            "features": joined.features[i].tolist(),
            "targets": {t: float(joined.targets[t][i]) for t in TARGETS},
        })
    columns = list(NODE_COLUMNS if include else NODE_COLUMNS[:-1])
    st.write_json("features/dataset.json", {
        "format": DATASET_FORMAT, "version": 1, "feature_schema": FEATURE_SCHEMA_VERSION,
        "node_columns": columns, "feature_names": list(FEATURE_NAMES), "targets": list(TARGETS),
        "records": records})


def read_feature_csv(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    values = np.array([[float(c) if c != "" else np.nan for c in r[1:]] for r in body], dtype=float)
    return header, [r[0] for r in body], values.reshape(len(body), len(header) - 1)


def load_dataset(path: Path) -> dict:
    data = json.loads(path.read_text())
    if data.get("format") != DATASET_FORMAT or data.get("version") != 1:
        raise ValueError(f"{path} is not a version-1 {DATASET_FORMAT} file")
    return data


def experiment_data(dataset: dict, target: str) -> ExperimentData:
    recs = dataset["records"]
    graphs = [GraphSample(np.array(r["x"], dtype=float), np.array(r["edges"], dtype=int).reshape(-1, 2),
                          np.array(r["weights"], dtype=float), float(r["targets"][target]),
                          r["participant_id"]) for r in recs]
    return ExperimentData([r["participant_id"] for r in recs], np.array([r["features"] for r in recs]),
                          graphs, np.array([r["targets"][target] for r in recs]),
                          tuple(dataset["feature_names"]))


def _load_dataset(st: Stage) -> dict:
    path = st.require(st.out / "features" / "dataset.json", "features/dataset.json (run 'features')")
    return load_dataset(st.read(path))


def stage_analyze(st: Stage):
    path = st.read(st.require(st.out / "features" / "joined.csv", "features/joined.csv (run 'features')"))
    header, ids, values = read_feature_csv(path)
    names = header[1:]
    feats = [n for n in names if n in FEATURE_NAMES]
    cols = {n: values[:, names.index(n)] for n in names}
    targets = {t: cols[t] for t in st.cfg.report.targets}
    note = f"manifest: {st.manifest_rel}"

    corr = stats.correlation_matrix({f: cols[f] for f in feats}, targets)
    st.write("analysis/spearman_targets.csv",
             csv_text(("feature",) + tuple(targets), ([f] + list(corr[i]) for i, f in enumerate(feats))))
    st.write("analysis/spearman_targets.svg",
             heatmap_svg(corr, feats, list(targets), "Spearman correlation with WAB scores", note))
    fcorr = stats.correlation_matrix({f: cols[f] for f in feats}, {f: cols[f] for f in feats})
    st.write("analysis/spearman_features.csv",
             csv_text(("feature",) + tuple(feats), ([f] + list(fcorr[i]) for i, f in enumerate(feats))))
    st.write("analysis/spearman_features.svg",
             heatmap_svg(fcorr, feats, feats, "Spearman correlation among graph features", note))

    frac = st.cfg.stats.lowess_frac
    for f in feats:
        for t in targets:
            x, y = cols[f], targets[t]
            smooth = stats.lowess(x, y, frac)
            order = np.argsort(x, kind="stable")
            st.write(f"analysis/lowess/{f}__{t}.csv",
                     csv_text(("participant_id", f, t, "lowess"),
                              ([ids[i], x[i], y[i], smooth[i]] for i in order)))
            st.write(f"analysis/lowess/{f}__{t}.svg",
                     scatter_svg(x, y, f"{f} vs {t} (LOWESS frac={frac:.2f})", f, t,
                                 curve=(x, smooth), note=note))

    regression = {}
    for t in targets:
        regression[t] = {}
        for variant in ("GRAPH_ONLY", "GRAPH_POS", "GRAPH_POS_PARA", "POS_ONLY", "PARA_ONLY"):
            use = VARIANT_COLUMNS[Variant(variant)]
            fit = stats.ols_hc3(np.column_stack([cols[c] for c in use]), targets[t],
                                allow_rank_deficient=True)
            regression[t][variant] = {**_clean(fit.to_dict()), "columns": list(use),
                                      "rank": fit.extra["rank"],
                                      "standard_errors": [_finite_or_none(s) for s in fit.standard_errors]}
    st.write_json("analysis/regression.json", {"covariance": "HC3", "models": regression})

    odds = {}
    if "wab_aq" in cols:
        label = (cols["wab_aq"] < st.cfg.stats.aphasia_threshold).astype(float)
        for f in ("para_any", "para_sem", "para_phon", "para_neo"):
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", stats.SeparationWarning)
                    ratio = stats.logistic_odds(cols[f], label, st.cfg.stats.odds_unit)
                separated = any(issubclass(w.category, stats.SeparationWarning) for w in caught)
                if separated:
                    log.warning("odds ratio clamped feature=%s reason=perfect separation", f)
                odds[f] = {"odds_ratio": ratio, "separated": separated}
            except (ValueError, stats.ConvergenceError) as exc:
                odds[f] = {"odds_ratio": None, "error": str(exc)}
    st.write_json("analysis/odds.json", {"unit": st.cfg.stats.odds_unit,
                                         "aphasia_threshold": st.cfg.stats.aphasia_threshold,
                                         "positive_class": "wab_aq < aphasia_threshold", "odds": odds})


def stage_train(st: Stage):
    ds = _load_dataset(st)
    for t in st.cfg.report.targets:
        data = experiment_data(ds, t)
        reg = train(data.graphs, st.cfg.eval.gnn)
        st.write(f"models/gnn_{t}.json", dump_json({**reg.to_dict(), "target": t,
                                                    "participants": data.ids,
                                                    "manifest": st.manifest_rel}))
        log.info("trained target=%s final_mse=%.6g", t, reg.history[-1])


def stage_evaluate(st: Stage):
    ds = _load_dataset(st)
    summaries = []
    for t in st.cfg.report.targets:
        data = experiment_data(ds, t)
        for m in st.cfg.report.models:
            res = cross_validate(ModelKind(m), data, st.cfg.eval, target=t)
            summaries.append(_clean(res.report.summary()) | {"failures": res.report.failures})
            st.write(f"evaluate/folds_{m}_{t}.csv", csv_text(
                ("participant_id", "fold", "true", "predicted"),
                ([p, res.plan.assignments[p], data.y[i], res.predictions[i]]
                 for i, p in enumerate(data.ids))))
    cols = ("target", "model", "n_folds", "n_failed", "rmse_mean", "rmse_std", "mae_mean", "mae_std",
            "pearson_mean", "pearson_std", "spearman_mean", "spearman_std")
    st.write("evaluate/metrics.csv", csv_text(cols, ([s[c] if s[c] is not None else float("nan")
                                                      for c in cols] for s in summaries)))
    st.write_json("evaluate/metrics.json", {"k": st.cfg.eval.k, "seed": st.cfg.eval.seed,
                                            "reports": summaries})


def stage_oof(st: Stage):
    ds = _load_dataset(st)
    note = f"manifest: {st.manifest_rel}"
    for t in st.cfg.report.targets:
        data = experiment_data(ds, t)
        for m in st.cfg.report.oof_models:
            res = oof_predictions(ModelKind(m), data, st.cfg.eval, target=t)
            reps = res.per_repeat.shape[0]
            st.write(f"oof/oof_{m}_{t}.csv", csv_text(
                ("participant_id", "true", "predicted", "abs_error") + tuple(f"repeat_{r}" for r in range(reps)),
                ([p, res.true[i], res.mean_prediction[i], abs(res.true[i] - res.mean_prediction[i])]
                 + list(res.per_repeat[:, i]) for i, p in enumerate(res.ids))))
            cases = rank_cases(res.ids, res.mean_prediction, res.true, st.cfg.report.case_rows)
            st.write(f"oof/cases_{m}_{t}.csv", csv_text(
                ("participant_id", "group", "true", "predicted", "abs_error"),
                ([c.participant_id, c.group, c.true, c.predicted, c.abs_error] for c in cases)))
            metrics = res.metrics()
            st.write_json(f"oof/cases_{m}_{t}.json", {
                "model": m, "target": t, "repeats": reps, "k": st.cfg.eval.k,
                "metrics": _clean(dataclasses.asdict(metrics)),
                "cases": [dataclasses.asdict(c) for c in cases]})
            st.write(f"oof/scatter_{m}_{t}.csv", csv_text(
                ("participant_id", "true", "predicted"),
                ([p, res.true[i], res.mean_prediction[i]] for i, p in enumerate(res.ids))))
            st.write(f"oof/scatter_{m}_{t}.svg", scatter_svg(
                res.true, res.mean_prediction, f"Predicted vs true {t} ({m}, OOF)", f"true {t}",
                f"predicted {t}", identity=True, note=note))


def stage_ablate(st: Stage):
    ds = _load_dataset(st)
    rows = []
    for t in st.cfg.report.ablation_targets:
        data = experiment_data(ds, t)
        for v in st.cfg.report.ablation_variants:
            res = ablate(data, Variant(v), st.cfg.eval, target=t)
            rows.append(_clean(res.summary()))
    cols = ("target", "variant", "model", "n_columns", "r_squared", "adjusted_r_squared", "oof_rmse",
            "rmse_mean", "rmse_std", "mae_mean", "mae_std", "pearson_mean", "pearson_std",
            "spearman_mean", "spearman_std")
    st.write("ablation/ablation.csv", csv_text(cols, ([r[c] if r[c] is not None else float("nan")
                                                       for c in cols] for r in rows)))
    st.write_json("ablation/ablation.json", {"rows": rows})


RUNNERS = {
    "synth": stage_synth, "parse": stage_parse, "graph": stage_graph, "features": stage_features,
    "analyze": stage_analyze, "train": stage_train, "evaluate": stage_evaluate, "oof": stage_oof,
    "ablate": stage_ablate,
}


def run_stage(stage: str, cfg: PipelineConfig, out: str | Path, argv: list[str] | None = None) -> Path:
    """Run one stage and return the path of its manifest."""
    if stage not in RUNNERS:
        raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    st = Stage(stage, out, cfg, argv)
    log.info("stage start stage=%s out=%s", stage, out)
    RUNNERS[stage](st)
    return st.finish()


def run_all(cfg: PipelineConfig, out: str | Path, stages=STAGES, argv=None) -> list[Path]:
    return [run_stage(s, cfg, out, argv) for s in stages]
