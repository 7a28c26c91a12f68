"""Graph-derived feature vectors and per-node encodings."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .chat import POS, Paraphasia, Transcript
from .graph import DiscourseGraph, EdgeKind, NodeKind

FEATURE_SCHEMA_VERSION = 1

STRUCTURAL = ("density", "reciprocity", "transitivity", "gesture_ratio", "degree_entropy")
EDGE_STATS = ("ww_avg", "ww_max", "gw_avg", "gw_max", "wg_avg", "wg_max")
POS_FEATURES = ("noun_count", "verb_count", "noun_rate", "verb_rate", "noun_verb_ratio")
PARA_FEATURES = ("para_any", "para_sem", "para_phon", "para_neo")
FEATURE_NAMES = STRUCTURAL + EDGE_STATS + POS_FEATURES + PARA_FEATURES

NODE_COLUMNS = ("log_freq", "is_gesture", "is_word", "is_verb", "is_noun", "is_other_pos",
                "has_paraphasia")


@dataclass(frozen=True)
class GraphFeatureVector:
    density: float
    reciprocity: float
    transitivity: float
    gesture_ratio: float
    degree_entropy: float
    ww_avg: float
    ww_max: float
    gw_avg: float
    gw_max: float
    wg_avg: float
    wg_max: float
    noun_count: int
    verb_count: int
    noun_rate: float
    verb_rate: float
    noun_verb_ratio: float
    para_any: float
    para_sem: float
    para_phon: float
    para_neo: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


assert tuple(f.name for f in fields(GraphFeatureVector)) == FEATURE_NAMES


def density(g: DiscourseGraph) -> float:
    n = g.n
    if n < 2:
        return 0.0
    return g.m / (n * (n - 1))


def reciprocity(g: DiscourseGraph) -> float:
    if g.m == 0:
        return 0.0
    mutual = sum(1 for s, d in g.edges if (d, s) in g.edges)
    return mutual / g.m


def _undirected_neighbors(g: DiscourseGraph) -> dict[str, set[str]]:
    nb: dict[str, set[str]] = {label: set() for label in g.nodes}
    for s, d in g.edges:
        nb[s].add(d)
        nb[d].add(s)
    return nb


def transitivity(g: DiscourseGraph) -> float:
    """Global clustering coefficient of the undirected projection."""
    nb = _undirected_neighbors(g)
    triples = sum(len(v) * (len(v) - 1) // 2 for v in nb.values())
    if triples == 0:
        return 0.0
    # closed triples; each triangle is counted once at each of its three corners
    closed = 0
    for u, vs in nb.items():
        vs = sorted(vs)
        for i, a in enumerate(vs):
            closed += sum(1 for b in vs[i + 1:] if b in nb[a])
    return closed / triples


def gesture_ratio(g: DiscourseGraph) -> float:
    if g.n == 0:
        return 0.0
    return sum(1 for nd in g.nodes.values() if nd.kind is NodeKind.GESTURE) / g.n


def degrees(g: DiscourseGraph) -> dict[str, int]:
    deg = {label: 0 for label in g.nodes}
    for s, d in g.edges:
        deg[s] += 1
        deg[d] += 1
    return deg


def degree_entropy(g: DiscourseGraph) -> float:
    deg = np.array([d for d in degrees(g).values() if d > 0], dtype=float)
    total = deg.sum()
    if total == 0:
        return 0.0
    p = deg / total
    return float(-(p * np.log(p)).sum())


def edge_weight_stats(g: DiscourseGraph) -> tuple[float, float, float, float, float, float]:
    out = []
    for kind in (EdgeKind.WW, EdgeKind.GW, EdgeKind.WG):
        w = [e.weight for e in g.edges.values() if e.kind is kind]
        out += [float(np.mean(w)), float(max(w))] if w else [0.0, 0.0]
    return tuple(out)


def pos_features(t: Transcript) -> tuple[int, int, float, float, float]:
    """Noun/verb counts over word tokens, their rates and the noun:verb ratio.

    The ratio divides by ``max(verb_count, 1)``.
    """
    words = list(t.words())
    nouns = sum(1 for w in words if w.pos is POS.NOUN)
    verbs = sum(1 for w in words if w.pos is POS.VERB)
    n = len(words)
    if n == 0:
        return 0, 0, 0.0, 0.0, 0.0
    return nouns, verbs, nouns / n, verbs / n, nouns / max(verbs, 1)


def paraphasia_rates(t: Transcript) -> tuple[float, float, float, float]:
    words = list(t.words())
    n = len(words)
    if n == 0:
        return 0.0, 0.0, 0.0, 0.0
    count = {p: 0 for p in Paraphasia}
    for w in words:
        count[w.paraphasia] += 1
    tagged = n - count[Paraphasia.NONE]
    return (tagged / n, count[Paraphasia.SEMANTIC] / n, count[Paraphasia.PHONEMIC] / n,
            count[Paraphasia.NEOLOGISTIC] / n)


def graph_feature_vector(g: DiscourseGraph, t: Transcript) -> GraphFeatureVector:
    return GraphFeatureVector(
        density(g), reciprocity(g), transitivity(g), gesture_ratio(g), degree_entropy(g),
        *edge_weight_stats(g), *pos_features(t), *paraphasia_rates(t),
    )


def node_feature_matrix(g: DiscourseGraph, include_paraphasia: bool = True) -> tuple[list[str], np.ndarray]:
    """Per-node encodings in sorted-label order.

    Columns are ``NODE_COLUMNS``; with ``include_paraphasia=False`` the last
    column is left out (6 columns).
    """
    labels = g.sorted_labels()
    width = len(NODE_COLUMNS) if include_paraphasia else len(NODE_COLUMNS) - 1
    x = np.zeros((len(labels), width))
    for i, label in enumerate(labels):
        nd = g.nodes[label]
        x[i, 0] = math.log1p(nd.frequency)
        x[i, 1] = nd.kind is NodeKind.GESTURE
        x[i, 2] = nd.kind is NodeKind.WORD
        pos = nd.pos if nd.kind is NodeKind.WORD else POS.OTHER
        x[i, 3] = pos is POS.VERB
        x[i, 4] = pos is POS.NOUN
        x[i, 5] = pos is POS.OTHER
        if include_paraphasia:
            x[i, 6] = nd.has_paraphasia
    return labels, x
