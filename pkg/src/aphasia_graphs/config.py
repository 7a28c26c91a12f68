"""Pipeline configuration: one JSON document, one section per component.

Every key is optional; omitted keys keep the dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import EvalConfig
from .graph import GraphConfig
from .scores import TARGETS
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass
class ParseConfig:
    participant_tag: str = "PAR"
    # directory of .cha files; defaults to <out>/corpus
    corpus_dir: str | None = None
    workers: int = 1


@dataclass
class FeatureConfig:
    include_paraphasia_dim: bool = True


@dataclass
class ScoresConfig:
    # score sheet; defaults to <corpus_dir>/wab_scores.csv
    path: str | None = None
    column_map: dict = field(default_factory=dict)


@dataclass
class StatsConfig:
    lowess_frac: float = 2 / 3
    # WAB-AQ below this counts as aphasic for the odds-ratio fits
    aphasia_threshold: float = 93.8
    odds_unit: float = 0.01


@dataclass
class ReportConfig:
    targets: tuple[str, ...] = TARGETS
    models: tuple[str, ...] = ("ridge", "gnn")
    oof_models: tuple[str, ...] = ("gnn", "ridge")
    ablation_targets: tuple[str, ...] = ("wab_aq",)
    ablation_variants: tuple[str, ...] = ("GRAPH_ONLY", "GRAPH_POS", "GRAPH_POS_PARA", "POS_ONLY",
                                          "PARA_ONLY", "GNN_NO_GESTURE")
    case_rows: int = 3
    export_dot: bool = True

    def __post_init__(self):
        for name in ("targets", "models", "oof_models", "ablation_targets", "ablation_variants"):
            setattr(self, name, tuple(getattr(self, name)))
        bad = [t for t in self.targets + self.ablation_targets if t not in TARGETS]
        if bad:
            raise ConfigError(f"unknown target(s) {bad}")


@dataclass
class PipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    parse: ParseConfig = field(default_factory=ParseConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    scores: ScoresConfig = field(default_factory=ScoresConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def with_seed(self, seed: int) -> "PipelineConfig":
        self.synth.seed = seed
        self.graph.louvain_seed = seed
        self.eval.seed = seed
        self.eval.gnn.seed = seed
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for key, value in data.items():
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, f"{where}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "config")


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)
