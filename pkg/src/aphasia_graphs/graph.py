"""Directed multimodal discourse graphs.

One graph per participant. Word nodes are keyed by lowercase surface,
gesture nodes by ``&=`` plus the gesture label so that a gesture called
``point`` never merges with the word ``point``.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .chat import POS, GestureEvent, Item, Transcript, WordToken

GESTURE_PREFIX = "&="


class EmptyTranscriptError(ValueError):
    pass


class NodeKind(str, Enum):
    WORD = "WORD"
    GESTURE = "GESTURE"


class EdgeKind(str, Enum):
    WW = "WW"
    GW = "GW"
    WG = "WG"


@dataclass
class Node:
    label: str
    kind: NodeKind
    pos: POS = POS.OTHER
    frequency: int = 0
    has_paraphasia: bool = False
    community: int = 0


@dataclass
class Edge:
    kind: EdgeKind
    weight: int = 0


@dataclass
class GraphConfig:
    window: int = 5
    # "preceding" or "following": which side wins an equidistant gesture link
    tie_break: str = "preceding"
    louvain_seed: int = 0


@dataclass
class DiscourseGraph:
    participant_id: str
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: dict[tuple[str, str], Edge] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    def sorted_labels(self) -> list[str]:
        return sorted(self.nodes)

    def add_edge(self, src: str, dst: str, kind: EdgeKind, weight: int = 1):
        if src == dst:
            return
        e = self.edges.get((src, dst))
        if e is None:
            self.edges[(src, dst)] = Edge(kind, weight)
        else:
            e.weight += weight

    def undirected_weights(self) -> dict[frozenset, float]:
        out: dict[frozenset, float] = defaultdict(float)
        for (s, d), e in self.edges.items():
            out[frozenset((s, d))] += e.weight
        return dict(out)

    def validate(self):
        for (s, d), e in self.edges.items():
            if s == d:
                raise ValueError(f"self-loop on {s!r}")
            if s not in self.nodes or d not in self.nodes:
                raise ValueError(f"edge {s!r}->{d!r} has a missing endpoint")
            if e.weight < 1 or int(e.weight) != e.weight:
                raise ValueError(f"edge {s!r}->{d!r} has weight {e.weight}")
            if e.kind is not edge_kind(self.nodes[s].kind, self.nodes[d].kind):
                raise ValueError(f"edge {s!r}->{d!r} kind {e.kind} disagrees with endpoints")
        for node in self.nodes.values():
            if node.frequency < 1:
                raise ValueError(f"node {node.label!r} has frequency {node.frequency}")

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "nodes": [
                {"label": nd.label, "kind": nd.kind.value, "pos": nd.pos.value,
                 "frequency": nd.frequency, "has_paraphasia": nd.has_paraphasia,
                 "community": nd.community}
                for nd in (self.nodes[k] for k in self.sorted_labels())
            ],
            "edges": [
                {"src": s, "dst": d, "kind": self.edges[(s, d)].kind.value,
                 "weight": self.edges[(s, d)].weight}
                for s, d in sorted(self.edges)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscourseGraph":
        g = cls(d["participant_id"])
        for nd in d["nodes"]:
            g.nodes[nd["label"]] = Node(nd["label"], NodeKind(nd["kind"]), POS(nd["pos"]),
                                        int(nd["frequency"]), bool(nd["has_paraphasia"]),
                                        int(nd.get("community", 0)))
        for e in d["edges"]:
            g.edges[(e["src"], e["dst"])] = Edge(EdgeKind(e["kind"]), int(e["weight"]))
        return g

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DiscourseGraph":
        return cls.from_dict(json.loads(text))


def edge_kind(src: NodeKind, dst: NodeKind) -> EdgeKind:
    if src is NodeKind.WORD and dst is NodeKind.WORD:
        return EdgeKind.WW
    if src is NodeKind.GESTURE and dst is NodeKind.WORD:
        return EdgeKind.GW
    if src is NodeKind.WORD and dst is NodeKind.GESTURE:
        return EdgeKind.WG
    raise ValueError("gesture-gesture edges are not part of the graph")


def gesture_label(g: GestureEvent) -> str:
    return GESTURE_PREFIX + g.label


def link_gesture(items: Sequence[Item], g: GestureEvent, window: int = 5,
                 tie_break: str = "preceding") -> tuple[str, str, EdgeKind] | None:
    """Link a gesture to the nearest word within ``window`` item positions.

    Returns ``(src, dst, kind)``: word->gesture (WG) when the word precedes the
    gesture, gesture->word (GW) when it follows, or None when no word is close
    enough.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if tie_break not in ("preceding", "following"):
        raise ValueError(f"unknown tie_break {tie_break!r}")
    p = g.position
    for dist in range(1, window + 1):
        before = items[p - dist] if p - dist >= 0 else None
        after = items[p + dist] if p + dist < len(items) else None
        before = before if isinstance(before, WordToken) else None
        after = after if isinstance(after, WordToken) else None
        if before is not None and (after is None or tie_break == "preceding"):
            return before.surface, gesture_label(g), EdgeKind.WG
        if after is not None:
            return gesture_label(g), after.surface, EdgeKind.GW
    return None


def build_graph(t: Transcript, cfg: GraphConfig | None = None) -> DiscourseGraph:
    """Build the discourse graph of one transcript (communities not yet set)."""
    cfg = cfg or GraphConfig()
    if not any(u.items for u in t.utterances):
        raise EmptyTranscriptError(f"transcript {t.participant_id!r} has no items")

    g = DiscourseGraph(t.participant_id)
    pos_votes: dict[str, Counter] = defaultdict(Counter)
    for u in t.utterances:
        for it in u.items:
            if isinstance(it, WordToken):
                node = g.nodes.setdefault(it.surface, Node(it.surface, NodeKind.WORD))
                node.frequency += 1
                node.has_paraphasia |= it.paraphasia.value != "NONE"
                pos_votes[it.surface][it.pos] += 1
            else:
                label = gesture_label(it)
                node = g.nodes.setdefault(label, Node(label, NodeKind.GESTURE))
                node.frequency += 1

        words = u.words
        for a, b in zip(words, words[1:]):
            if a.surface != b.surface:
                g.add_edge(a.surface, b.surface, EdgeKind.WW)
        for ge in u.gestures:
            link = link_gesture(u.items, ge, cfg.window, cfg.tie_break)
            if link is not None:
                g.add_edge(*link)

    for label, votes in pos_votes.items():
        # majority POS; Counter keeps first-seen order on ties
        g.nodes[label].pos = votes.most_common(1)[0][0]
    return g


def drop_gestures(g: DiscourseGraph) -> DiscourseGraph:
    """Copy of ``g`` without gesture nodes and their incident edges."""
    out = DiscourseGraph(g.participant_id)
    out.nodes = {k: replace(v) for k, v in g.nodes.items() if v.kind is NodeKind.WORD}
    out.edges = {k: replace(e) for k, e in g.edges.items()
                 if k[0] in out.nodes and k[1] in out.nodes}
    return out


# ---------------------------------------------------------------- Louvain

def modularity(adj: dict[int, dict[int, float]], membership: Sequence[int]) -> float:
    """Newman modularity of a weighted undirected graph given as adjacency dicts.

    ``adj[i][j]`` holds the weight of edge {i, j} (stored in both directions,
    self-loops once with their full weight counted twice in the degree).
    """
    degree = {i: sum(nb.values()) + nb.get(i, 0.0) for i, nb in adj.items()}
    two_m = sum(degree.values())
    if two_m == 0:
        return 0.0
    internal: dict[int, float] = defaultdict(float)
    total: dict[int, float] = defaultdict(float)
    for i, nb in adj.items():
        c = membership[i]
        total[c] += degree[i]
        for j, w in nb.items():
            if membership[j] == c:
                internal[c] += 2 * w if i == j else w
    return sum(internal[c] / two_m - (total[c] / two_m) ** 2 for c in total)


def _one_level(adj, rng, min_gain):
    n = len(adj)
    degree = [sum(adj[i].values()) + adj[i].get(i, 0.0) for i in range(n)]
    two_m = sum(degree)
    comm = list(range(n))
    tot = list(degree)
    improved = False
    if two_m == 0:
        return comm, improved
    while True:
        moved = 0.0
        for i in rng.permutation(n):
            ci = comm[i]
            links: dict[int, float] = defaultdict(float)
            for j, w in adj[i].items():
                if j != i:
                    links[comm[j]] += w
            tot[ci] -= degree[i]
            # gain of inserting i into c, up to a term constant in c
            best_c = ci
            best_gain = links.get(ci, 0.0) - tot[ci] * degree[i] / two_m
            for c, k_in in sorted(links.items()):
                gain = k_in - tot[c] * degree[i] / two_m
                if gain > best_gain + min_gain * two_m / 2:
                    best_c, best_gain = c, gain
            tot[best_c] += degree[i]
            if best_c != ci:
                comm[i] = best_c
                moved += 1
                improved = True
        if moved == 0:
            break
    return comm, improved


def louvain(adj: dict[int, dict[int, float]], seed: int = 0, min_gain: float = 1e-7) -> list[int]:
    """Two-phase Louvain on integer-indexed weighted undirected adjacency.

    Returns a community id per node, renumbered 0.. in order of first node.
    """
    rng = np.random.default_rng(seed)
    n = len(adj)
    membership = list(range(n))
    level_adj = {i: dict(nb) for i, nb in adj.items()}
    while True:
        comm, improved = _one_level(level_adj, rng, min_gain)
        if not improved:
            break
        relabel = {c: k for k, c in enumerate(dict.fromkeys(comm))}
        comm = [relabel[c] for c in comm]
        membership = [comm[c] for c in membership]
        agg: dict[int, dict[int, float]] = {k: defaultdict(float) for k in range(len(relabel))}
        for i, nb in level_adj.items():
            for j, w in nb.items():
                ci, cj = comm[i], comm[j]
                if i == j:
                    agg[ci][ci] += w
                elif ci == cj:
                    # internal edge seen from both endpoints; keep once
                    if i < j:
                        agg[ci][ci] += w
                else:
                    agg[ci][cj] += w
        level_adj = {k: dict(v) for k, v in agg.items()}
        if len(level_adj) == 1:
            break
    relabel = {c: k for k, c in enumerate(dict.fromkeys(membership))}
    return [relabel[c] for c in membership]


def graph_adjacency(g: DiscourseGraph) -> tuple[list[str], dict[int, dict[int, float]]]:
    labels = g.sorted_labels()
    index = {lab: i for i, lab in enumerate(labels)}
    adj: dict[int, dict[int, float]] = {i: {} for i in range(len(labels))}
    for pair, w in g.undirected_weights().items():
        a, b = (index[x] for x in pair)
        adj[a][b] = adj[a].get(b, 0.0) + w
        adj[b][a] = adj[b].get(a, 0.0) + w
    return labels, adj


def louvain_communities(g: DiscourseGraph, seed: int = 0) -> dict[str, int]:
    """Louvain communities on the weight-summed undirected projection of ``g``.

    Raises if the result scores below the all-singletons partition.
    """
    if g.n == 0:
        raise ValueError("louvain needs at least one node")
    labels, adj = graph_adjacency(g)
    membership = louvain(adj, seed)
    q = modularity(adj, membership)
    q0 = modularity(adj, list(range(len(labels))))
    if q < q0 - 1e-12:
        raise RuntimeError(f"louvain modularity {q} below singleton modularity {q0}")
    return dict(zip(labels, membership))


def assign_communities(g: DiscourseGraph, seed: int = 0) -> DiscourseGraph:
    for label, c in louvain_communities(g, seed).items():
        g.nodes[label].community = c
    return g


_DOT_COLORS = {"GESTURE": "orange", POS.NOUN: "green", POS.VERB: "purple", POS.OTHER: "lightblue"}


def to_dot(g: DiscourseGraph) -> str:
    """Graphviz export; colours follow gesture/noun/verb/other."""
    lines = [f'digraph "{g.participant_id}" {{']
    for label in g.sorted_labels():
        nd = g.nodes[label]
        color = _DOT_COLORS["GESTURE"] if nd.kind is NodeKind.GESTURE else _DOT_COLORS[nd.pos]
        name = json.dumps(label)
        lines.append(f'  {name} [style=filled, fillcolor={color}, '
                     f'label="{label}\\n{nd.frequency}", community={nd.community}];')
    for s, d in sorted(g.edges):
        e = g.edges[(s, d)]
        lines.append(f"  {json.dumps(s)} -> {json.dumps(d)} [weight={e.weight}, label={e.weight}, "
                     f"kind={e.kind.value}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
