from pathlib import Path

import numpy as np
import pytest

from aphasia_graphs.chat import POS
from aphasia_graphs.gnn import GraphSample
from aphasia_graphs.graph import DiscourseGraph, EdgeKind, Node, NodeKind, edge_kind

FIXTURES = Path(__file__).parent / "fixtures"


def word_graph(n: int, edges, gestures=(), weights=None) -> DiscourseGraph:
    """Graph on nodes "0".."n-1"; indices listed in ``gestures`` become gesture nodes."""
    g = DiscourseGraph("g")
    for i in range(n):
        kind = NodeKind.GESTURE if i in gestures else NodeKind.WORD
        g.nodes[str(i)] = Node(str(i), kind, POS.OTHER, 1)
    for k, (s, d) in enumerate(edges):
        w = 1 if weights is None else weights[k]
        kind = edge_kind(g.nodes[str(s)].kind, g.nodes[str(d)].kind)
        g.add_edge(str(s), str(d), kind, w)
    return g


def random_sample(rng: np.random.Generator, n_nodes: int, in_dim: int = 7, p_edge: float = 0.4,
                  target: float = 0.0) -> GraphSample:
    x = rng.normal(size=(n_nodes, in_dim))
    edges = [(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j and rng.random() < p_edge]
    w = rng.integers(1, 4, size=len(edges)).astype(float)
    return GraphSample(x, np.array(edges, dtype=int).reshape(-1, 2), w, target)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["word_graph", "random_sample", "FIXTURES", "EdgeKind"]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
