"""Two-layer GraphSAGE regressor in numpy with hand-written backprop and Adam.

A batch of graphs is packed into one block-diagonal mean-aggregation matrix
so every layer is a couple of dense/sparse matmuls:

    h1 = ReLU(X W1_self + (A X) W1_neigh)        -> dropout
    h2 = ReLU(h1 W2_self + (A h1) W2_neigh)      -> dropout
    y  = mean_nodes(h2) . head_weights + head_bias

``A`` row-normalises each node's neighbour set; isolated nodes get a zero row.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

PARAM_NAMES = ("layer1_self", "layer1_neigh", "layer2_self", "layer2_neigh", "head_weights",
               "head_bias")


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    hidden: int = 64
    learning_rate: float = 1e-3
    epochs: int = 200
    dropout: float = 0.2
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # None: Glorot scale sqrt(6 / (fan_in + fan_out)) per matrix
    weight_init_scale: float | None = None
    # neighbour set used for aggregation: "undirected", "in" or "out"
    aggregation: str = "undirected"
    weighted: bool = False
    standardize_targets: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.aggregation not in ("undirected", "in", "out"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


@dataclass
class GraphSample:
    x: np.ndarray
    edges: np.ndarray  # (m, 2) src, dst node indices
    weights: np.ndarray | None = None
    target: float = float("nan")
    participant_id: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if self.weights is None:
            self.weights = np.ones(len(self.edges))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise ValueError("graph needs a 2-D feature matrix with at least one node")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def aggregation_matrix(self, aggregation: str = "undirected", weighted: bool = False) -> sp.csr_matrix:
        n = self.n
        src, dst = self.edges[:, 0], self.edges[:, 1]
        w = self.weights if weighted else np.ones(len(src))
        if aggregation == "undirected":
            rows, cols, vals = np.r_[src, dst], np.r_[dst, src], np.r_[w, w]
        elif aggregation == "in":
            rows, cols, vals = dst, src, w
        else:
            rows, cols, vals = src, dst, w
        M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        if not weighted:
            M.data[:] = 1.0  # duplicates (mutual edges) collapse to one neighbour
        deg = np.asarray(M.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
        return sp.diags(inv) @ M

    def permuted(self, perm) -> "GraphSample":
        """Same graph with node i moved to position perm[i]."""
        perm = np.asarray(perm)
        x = np.empty_like(self.x)
        x[perm] = self.x
        return GraphSample(x, perm[self.edges], self.weights.copy(), self.target, self.participant_id)

    def without_gestures(self, gesture_column: int = 1) -> "GraphSample":
        keep = self.x[:, gesture_column] == 0
        new_index = np.cumsum(keep) - 1
        mask = keep[self.edges[:, 0]] & keep[self.edges[:, 1]] if len(self.edges) else np.zeros(0, bool)
        return GraphSample(self.x[keep], new_index[self.edges[mask]], self.weights[mask],
                           self.target, self.participant_id)

    def to_dict(self) -> dict:
        return {"participant_id": self.participant_id, "x": self.x.tolist(),
                "edges": self.edges.tolist(), "weights": self.weights.tolist(),
                "target": None if math.isnan(self.target) else self.target}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSample":
        t = d.get("target")
        return cls(np.array(d["x"], dtype=float), np.array(d["edges"], dtype=int).reshape(-1, 2),
                   np.array(d.get("weights") or [1.0] * len(d["edges"]), dtype=float),
                   float("nan") if t is None else float(t), d.get("participant_id", ""))


@dataclass
class SageParameters:
    layer1_self: np.ndarray
    layer1_neigh: np.ndarray
    layer2_self: np.ndarray
    layer2_neigh: np.ndarray
    head_weights: np.ndarray
    head_bias: float

    @property
    def hidden(self) -> int:
        return self.layer1_self.shape[1]

    @property
    def in_dim(self) -> int:
        return self.layer1_self.shape[0]

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator,
             scale: float | None = None) -> "SageParameters":
        def u(fan_in, fan_out):
            s = scale if scale is not None else math.sqrt(6 / (fan_in + fan_out))
            return rng.uniform(-s, s, size=(fan_in, fan_out))
        return cls(u(in_dim, hidden), u(in_dim, hidden), u(hidden, hidden), u(hidden, hidden),
                   u(hidden, 1).ravel(), 0.0)

    @classmethod
    def zeros(cls, in_dim: int, hidden: int) -> "SageParameters":
        return cls(np.zeros((in_dim, hidden)), np.zeros((in_dim, hidden)),
                   np.zeros((hidden, hidden)), np.zeros((hidden, hidden)), np.zeros(hidden), 0.0)

    def arrays(self) -> list[np.ndarray]:
        return [np.atleast_1d(np.asarray(getattr(self, f), dtype=float)) for f in PARAM_NAMES]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, v: np.ndarray) -> "SageParameters":
        out, i = [], 0
        for a in self.arrays():
            out.append(v[i:i + a.size].reshape(a.shape).copy())
            i += a.size
        out[-1] = float(out[-1][0])
        return SageParameters(*out)

    def copy(self) -> "SageParameters":
        return self.with_flat(self.flat())

    def check_finite(self):
        if not np.all(np.isfinite(self.flat())):
            raise DivergenceError("non-finite parameter")

    def to_dict(self) -> dict:
        return {f: (np.asarray(getattr(self, f)).tolist() if f != "head_bias" else float(self.head_bias))
                for f in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "SageParameters":
        return cls(*(np.array(d[f], dtype=float) for f in PARAM_NAMES[:-1]), float(d["head_bias"]))


@dataclass
class Batch:
    """Graphs packed block-diagonally."""
    x: np.ndarray
    a: sp.csr_matrix
    pool: sp.csr_matrix  # (graphs, nodes) mean-readout operator
    ax: np.ndarray
    targets: np.ndarray

    @classmethod
    def from_samples(cls, samples: list[GraphSample], aggregation: str = "undirected",
                     weighted: bool = False) -> "Batch":
        if not samples:
            raise ValueError("empty batch")
        dims = {s.x.shape[1] for s in samples}
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature widths {sorted(dims)}")
        x = np.vstack([s.x for s in samples])
        a = sp.block_diag([s.aggregation_matrix(aggregation, weighted) for s in samples], format="csr")
        sizes = np.array([s.n for s in samples])
        rows = np.repeat(np.arange(len(samples)), sizes)
        pool = sp.csr_matrix((1.0 / sizes[rows], (rows, np.arange(len(rows)))),
                             shape=(len(samples), len(rows)))
        return cls(x, a, pool, a @ x, np.array([s.target for s in samples], dtype=float))

    @property
    def size(self) -> int:
        return self.pool.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]


def _relu(z):
    return np.maximum(z, 0.0)


def dropout_masks(rng: np.random.Generator, n_nodes: int, hidden: int, rate: float):
    if rate == 0:
        return None, None
    keep = 1.0 - rate
    return ((rng.random((n_nodes, hidden)) >= rate) / keep,
            (rng.random((n_nodes, hidden)) >= rate) / keep)


def forward_batch(batch: Batch, params: SageParameters, masks=(None, None)):
    """Predictions for every graph in the batch plus the cache for backprop."""
    if batch.x.shape[1] != params.in_dim:
        raise ValueError(f"feature width {batch.x.shape[1]} != parameter width {params.in_dim}")
    m1, m2 = masks
    pre1 = batch.x @ params.layer1_self + batch.ax @ params.layer1_neigh
    d1 = _relu(pre1)
    if m1 is not None:
        d1 = d1 * m1
    ad1 = batch.a @ d1
    pre2 = d1 @ params.layer2_self + ad1 @ params.layer2_neigh
    d2 = _relu(pre2)
    if m2 is not None:
        d2 = d2 * m2
    readout = batch.pool @ d2
    pred = readout @ params.head_weights + params.head_bias
    return pred, (pre1, d1, ad1, pre2, readout, m1, m2)


def backward_batch(batch: Batch, params: SageParameters, cache, dpred: np.ndarray) -> SageParameters:
    pre1, d1, ad1, pre2, readout, m1, m2 = cache
    g_bias = float(dpred.sum())
    g_head = readout.T @ dpred
    dd2 = batch.pool.T @ np.outer(dpred, params.head_weights)
    dpre2 = dd2 * (pre2 > 0)
    if m2 is not None:
        dpre2 = dpre2 * m2
    g_w2s = d1.T @ dpre2
    g_w2n = ad1.T @ dpre2
    dd1 = dpre2 @ params.layer2_self.T + batch.a.T @ (dpre2 @ params.layer2_neigh.T)
    dpre1 = dd1 * (pre1 > 0)
    if m1 is not None:
        dpre1 = dpre1 * m1
    g_w1s = batch.x.T @ dpre1
    g_w1n = batch.ax.T @ dpre1
    return SageParameters(g_w1s, g_w1n, g_w2s, g_w2n, g_head, g_bias)


def forward(sample: GraphSample, params: SageParameters, mode: str = "eval", seed: int = 0,
            cfg: TrainConfig | None = None) -> float:
    """Prediction for one graph; ``mode="train"`` applies seeded dropout."""
    cfg = cfg or TrainConfig(dropout=0.0)
    batch = Batch.from_samples([sample], cfg.aggregation, cfg.weighted)
    masks = (None, None)
    if mode == "train":
        masks = dropout_masks(np.random.default_rng(seed), batch.n_nodes, params.hidden, cfg.dropout)
    elif mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    return float(forward_batch(batch, params, masks)[0][0])


def predict(sample: GraphSample, params: SageParameters, cfg: TrainConfig | None = None) -> float:
    return forward(sample, params, "eval", cfg=cfg)


def loss_and_gradients(batch: Batch | list[GraphSample], params: SageParameters,
                       cfg: TrainConfig | None = None, masks=(None, None)) -> tuple[float, SageParameters]:
    """Mean squared error over the batch and its exact gradient.

    ``masks`` are the dropout masks to use (None for no dropout) so the
    gradient matches the very same forward pass.
    """
    cfg = cfg or TrainConfig(dropout=0.0)
    if not isinstance(batch, Batch):
        batch = Batch.from_samples(list(batch), cfg.aggregation, cfg.weighted)
    pred, cache = forward_batch(batch, params, masks)
    resid = pred - batch.targets
    mse = float(np.mean(resid ** 2))
    grads = backward_batch(batch, params, cache, 2 * resid / batch.size)
    return mse, grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: SageParameters, grads: SageParameters, state: AdamState,
              cfg: TrainConfig) -> tuple[SageParameters, AdamState]:
    g = grads.flat()
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1 - cfg.adam_beta1) * g
    v = cfg.adam_beta2 * state.v + (1 - cfg.adam_beta2) * g * g
    m_hat = m / (1 - cfg.adam_beta1 ** t)
    v_hat = v / (1 - cfg.adam_beta2 ** t)
    theta = params.flat() - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return params.with_flat(theta), AdamState(m, v, t)


@dataclass
class SageRegressor:
    params: SageParameters
    config: TrainConfig
    target_mean: float = 0.0
    target_scale: float = 1.0
    history: list[float] = field(default_factory=list)

    def predict(self, samples: list[GraphSample] | GraphSample) -> np.ndarray:
        single = isinstance(samples, GraphSample)
        batch = Batch.from_samples([samples] if single else list(samples),
                                   self.config.aggregation, self.config.weighted)
        pred = forward_batch(batch, self.params)[0] * self.target_scale + self.target_mean
        return pred[0] if single else pred

    def to_dict(self) -> dict:
        return {"format": "sage-regressor", "version": 1, "config": asdict(self.config),
                "params": self.params.to_dict(), "target_mean": self.target_mean,
                "target_scale": self.target_scale, "history": list(self.history)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SageRegressor":
        known = {f.name for f in fields(TrainConfig)}
        cfg = TrainConfig(**{k: v for k, v in d["config"].items() if k in known})
        return cls(SageParameters.from_dict(d["params"]), cfg, float(d["target_mean"]),
                   float(d["target_scale"]), list(d.get("history", [])))


def train(dataset: list[GraphSample], cfg: TrainConfig | None = None) -> SageRegressor:
    """Full-batch training; history holds the per-epoch MSE in target units."""
    cfg = cfg or TrainConfig()
    if not dataset:
        raise ValueError("empty dataset")
    targets = np.array([s.target for s in dataset], dtype=float)
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    mean, scale = 0.0, 1.0
    if cfg.standardize_targets:
        mean = float(targets.mean())
        sd = float(targets.std())
        scale = sd if sd > 0 else 1.0
    batch = Batch.from_samples(dataset, cfg.aggregation, cfg.weighted)
    batch.targets = (targets - mean) / scale

    init_rng = np.random.default_rng([cfg.seed, 0])
    drop_rng = np.random.default_rng([cfg.seed, 1])
    params = SageParameters.init(batch.x.shape[1], cfg.hidden, init_rng, cfg.weight_init_scale)
    state = AdamState.zeros(params.flat().size)
    history = []
    for epoch in range(cfg.epochs):
        masks = dropout_masks(drop_rng, batch.n_nodes, cfg.hidden, cfg.dropout)
        mse, grads = loss_and_gradients(batch, params, cfg, masks)
        if not math.isfinite(mse):
            raise DivergenceError(f"loss became {mse} at epoch {epoch + 1}")
        history.append(mse * scale * scale)
        params, state = adam_step(params, grads, state, cfg)
        params.check_finite()
    return SageRegressor(params, cfg, mean, scale, history)
