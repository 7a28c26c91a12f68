"""WAB score sheets: ingestion with null filtering, and merging with feature tables."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TARGETS = ("wab_aq", "fluency", "sequential_commands", "repetition")
SCORE_RANGES = {
    "wab_aq": (0.0, 100.0),
    "fluency": (0.0, 10.0),
    "sequential_commands": (0.0, 100.0),
    "repetition": (0.0, 100.0),
}
NULL_TOKENS = {"", "na", "n/a", "nan", "null", "none", "unknown", "?", "."}


class ScoreSheetError(ValueError):
    pass


class ScoreValidationError(ScoreSheetError):
    pass


class JoinError(ValueError):
    pass


@dataclass(frozen=True)
class WabRecord:
    participant_id: str
    wab_aq: float
    fluency: float
    sequential_commands: float
    repetition: float

    def __post_init__(self):
        for name in TARGETS:
            v = getattr(self, name)
            lo, hi = SCORE_RANGES[name]
            if not math.isfinite(v) or not lo <= v <= hi:
                raise ScoreValidationError(f"{self.participant_id}: {name}={v} outside [{lo}, {hi}]")

    def target(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class IngestReport:
    records: list[WabRecord]
    total_rows: int
    dropped: list[tuple[int, str]]  # (row number, reason)


def write_scores(records: list[WabRecord], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("participant_id",) + TARGETS)
        for r in records:
            w.writerow([r.participant_id] + [f"{r.target(t):.2f}" for t in TARGETS])


def ingest_scores(path: str | Path, column_map: dict[str, str] | None = None) -> IngestReport:
    """Read a WAB score sheet, dropping rows with null or non-numeric scores.

    ``column_map`` maps our field names (participant_id and the four targets)
    to the sheet's header names when they differ.
    """
    column_map = column_map or {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = {k: column_map.get(k, k) for k in ("participant_id",) + TARGETS}
        missing = [v for v in wanted.values() if v not in header]
        if missing:
            raise ScoreSheetError(f"{path}: missing column(s) {missing}")
        records, dropped, total = [], [], 0
        for rowno, row in enumerate(reader, start=2):
            total += 1
            pid = (row[wanted["participant_id"]] or "").strip()
            if not pid:
                dropped.append((rowno, "empty participant_id"))
                continue
            values = {}
            reason = None
            for t in TARGETS:
                raw = (row[wanted[t]] or "").strip()
                if raw.lower() in NULL_TOKENS:
                    reason = f"{t} is null"
                    break
                try:
                    values[t] = float(raw)
                except ValueError:
                    reason = f"{t}={raw!r} is not numeric"
                    break
                if not math.isfinite(values[t]):
                    reason = f"{t} is not finite"
                    break
            if reason:
                dropped.append((rowno, reason))
                continue
            for t, v in values.items():
                lo, hi = SCORE_RANGES[t]
                if not lo <= v <= hi:
                    raise ScoreValidationError(f"{path}: row {rowno}, column {wanted[t]}: "
                                               f"{v} outside [{lo}, {hi}]")
            records.append(WabRecord(pid, **values))
    log.info("ingested scores path=%s rows=%d kept=%d dropped=%d", path, total, len(records), len(dropped))
    for rowno, reason in dropped:
        log.info("dropped score row=%d reason=%s", rowno, reason)
    if not records:
        raise ScoreSheetError(f"{path}: no usable rows after filtering")
    return IngestReport(records, total, dropped)


@dataclass
class JoinedTable:
    ids: list[str]
    features: np.ndarray
    feature_names: tuple[str, ...]
    targets: dict[str, np.ndarray]

    def __len__(self):
        return len(self.ids)


def merge_features_scores(ids: list[str], features: np.ndarray, feature_names,
                          records: list[WabRecord]) -> JoinedTable:
    """Inner join of a feature table with score records on participant_id.

    Keeps the feature table's row order.
    """
    if not ids or not records:
        raise JoinError("both the feature table and the score records must be nonempty")
    by_id: dict[str, WabRecord] = {}
    for r in records:
        if r.participant_id in by_id:
            raise JoinError(f"duplicate participant_id {r.participant_id!r} in scores")
        by_id[r.participant_id] = r
    if len(set(ids)) != len(ids):
        raise JoinError("duplicate participant_id in feature table")
    keep = [i for i, pid in enumerate(ids) if pid in by_id]
    no_score = [pid for pid in ids if pid not in by_id]
    no_feat = sorted(set(by_id) - set(ids))
    if no_score:
        log.info("excluded participants without scores n=%d ids=%s", len(no_score), ",".join(no_score))
    if no_feat:
        log.info("excluded participants without features n=%d ids=%s", len(no_feat), ",".join(no_feat))
    if not keep:
        raise JoinError("no participant appears in both inputs")
    kept_ids = [ids[i] for i in keep]
    targets = {t: np.array([by_id[p].target(t) for p in kept_ids]) for t in TARGETS}
    return JoinedTable(kept_ids, np.asarray(features, dtype=float)[keep], tuple(feature_names), targets)
