"""Bidirectional diffusion graph encoder with readout and projection head.

A diffusion layer mixes K powers of the forward transition matrix
``P_f = A / rowsum(A)`` and of the backward one ``P_b = A^T / rowsum(A^T)``::

    H' = relu( sum_k  eps * P_f^k H W_fwd[k]  +  (1 - eps) * P_b^k H W_bwd[k] )

Graphs in a batch are stacked into one block-diagonal sparse operator so a
whole mini-batch runs through each layer with a handful of matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor, ShapeMismatch
from .graph import MolGraph, TransitionPair, normalized_self_loop_adjacency, transitions
from .smiles import N_FEATURES

MODES = ("diffusion", "gcn")


class EmptyGraph(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    in_dim: int = N_FEATURES
    hidden: int = 64
    n_layers: int = 5
    k_steps: int = 2
    epsilon: float = 0.5
    proj_hidden: int = 64
    out_dim: int = 32

    def __post_init__(self):
        if self.n_layers < 1 or self.k_steps < 1:
            raise ValueError("need at least one layer and one diffusion step")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass
class DiffusionLayerParams:
    w_fwd: list[Tensor]
    w_bwd: list[Tensor]
    epsilon: float = 0.5

    def __post_init__(self):
        if len(self.w_fwd) != len(self.w_bwd) or not self.w_fwd:
            raise ShapeMismatch("forward and backward weight lists must match")
        for f, b in zip(self.w_fwd, self.w_bwd):
            if f.shape != b.shape:
                raise ShapeMismatch(f"weight shapes differ: {f.shape} vs {b.shape}")

    @property
    def k_steps(self) -> int:
        return len(self.w_fwd) - 1


@dataclass
class ProjectionParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class EncoderParams:
    layers: list[DiffusionLayerParams]
    projection: ProjectionParams
    config: EncoderConfig = field(default_factory=EncoderConfig)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"layer{i}.w_fwd{k}", w) for k, w in enumerate(layer.w_fwd)]
            out += [(f"layer{i}.w_bwd{k}", w) for k, w in enumerate(layer.w_bwd)]
        p = self.projection
        out += [("proj.w1", p.w1), ("proj.b1", p.b1), ("proj.w2", p.w2), ("proj.b2", p.b2)]
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def copy(self) -> "EncoderParams":
        """Deep copy with fresh parameter tensors."""
        return from_arrays(self.config, {n: t.data for n, t in self.named_parameters()})


def _uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder(config: EncoderConfig = EncoderConfig(), rng=None) -> EncoderParams:
    """He-style uniform initialisation scaled by fan-in; biases start at zero."""
    rng = np.random.default_rng(0) if rng is None else rng
    layers = []
    d_in = config.in_dim
    for _ in range(config.n_layers):
        shape = (d_in, config.hidden)
        # each output sums K + 1 propagated copies of the input
        fan_in = d_in * (config.k_steps + 1)
        w_fwd = [ad.parameter(_uniform(rng, fan_in, shape)) for _ in range(config.k_steps + 1)]
        w_bwd = [ad.parameter(_uniform(rng, fan_in, shape)) for _ in range(config.k_steps + 1)]
        layers.append(DiffusionLayerParams(w_fwd, w_bwd, config.epsilon))
        d_in = config.hidden
    proj = ProjectionParams(
        ad.parameter(_uniform(rng, config.hidden, (config.hidden, config.proj_hidden))),
        ad.parameter(np.zeros((1, config.proj_hidden))),
        ad.parameter(_uniform(rng, config.proj_hidden, (config.proj_hidden, config.out_dim))),
        ad.parameter(np.zeros((1, config.out_dim))),
    )
    return EncoderParams(layers, proj, config)


def from_arrays(config: EncoderConfig, arrays: dict[str, np.ndarray]) -> EncoderParams:
    """Rebuild parameters from the names produced by ``named_parameters``."""
    k = config.k_steps + 1
    layers = [
        DiffusionLayerParams(
            [ad.parameter(arrays[f"layer{i}.w_fwd{j}"]) for j in range(k)],
            [ad.parameter(arrays[f"layer{i}.w_bwd{j}"]) for j in range(k)],
            config.epsilon,
        )
        for i in range(config.n_layers)
    ]
    proj = ProjectionParams(*(ad.parameter(arrays[f"proj.{n}"]) for n in ("w1", "b1", "w2", "b2")))
    return EncoderParams(layers, proj, config)


# --- layers --------------------------------------------------------------------


def diffusion_layer(h: Tensor, trans: TransitionPair, params: DiffusionLayerParams) -> Tensor:
    """One bidirectional diffusion convolution followed by relu.

    Powers of the transition matrices are applied by repeated multiplication,
    never materialised. A zero coefficient drops its direction entirely.
    """
    h = ad.as_tensor(h)
    if h.shape[1] != params.w_fwd[0].shape[0]:
        raise ShapeMismatch(f"layer expects width {params.w_fwd[0].shape[0]}, got {h.shape[1]}")
    eps = params.epsilon
    acc = None
    for direction, weights, coef in ((trans.forward, params.w_fwd, eps), (trans.backward, params.w_bwd, 1.0 - eps)):
        if coef == 0.0:
            continue
        walk = h
        for k, w in enumerate(weights):
            if k > 0:
                walk = ad.matmul(direction, walk)
            term = ad.scale(ad.matmul(walk, w), coef)
            acc = term if acc is None else ad.add(acc, term)
    return ad.relu(acc)


def gcn_layer(h: Tensor, a_norm, w: Tensor) -> Tensor:
    """Plain graph convolution relu(A_norm H W) used by the no-diffusion ablation."""
    h = ad.as_tensor(h)
    if h.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"gcn layer expects width {w.shape[0]}, got {h.shape[1]}")
    return ad.relu(ad.matmul(ad.matmul(a_norm, h), w))


def readout(h_nodes: Tensor) -> Tensor:
    """Mean over nodes, giving a (1, D) graph embedding."""
    if h_nodes.shape[0] == 0:
        raise EmptyGraph("cannot read out a graph without nodes")
    return ad.mean_rows(h_nodes)


def project(h_graph: Tensor, proj: ProjectionParams) -> Tensor:
    """dense -> relu -> dense; the output is left unnormalised."""
    h_graph = ad.as_tensor(h_graph)
    if h_graph.shape[1] != proj.w1.shape[0]:
        raise ShapeMismatch(f"projection expects width {proj.w1.shape[0]}, got {h_graph.shape[1]}")
    hidden = ad.relu(ad.add(ad.matmul(h_graph, proj.w1), proj.b1))
    return ad.add(ad.matmul(hidden, proj.w2), proj.b2)


# --- batching ------------------------------------------------------------------


class GraphBatch:
    """Several graphs stacked into block-diagonal operators.

    ``pool`` is a (B x N_total) sparse matrix averaging each graph's rows.
    """

    def __init__(self, graphs):
        graphs = list(graphs)
        if not graphs:
            raise EmptyGraph("empty batch")
        for g in graphs:
            if g.n_nodes == 0:
                raise EmptyGraph("cannot encode a graph without nodes")
        self.graphs = graphs
        self.x = np.vstack([g.x for g in graphs])
        pairs = [transitions(g) for g in graphs]
        self.trans = TransitionPair(
            sp.block_diag([p.forward for p in pairs], format="csr"),
            sp.block_diag([p.backward for p in pairs], format="csr"),
        )
        self._a_norm = None
        sizes = np.array([g.n_nodes for g in graphs])
        rows = np.repeat(np.arange(len(graphs)), sizes)
        self.pool = sp.csr_matrix(
            (1.0 / sizes[rows], (rows, np.arange(sizes.sum()))), shape=(len(graphs), sizes.sum())
        )

    def __len__(self):
        return len(self.graphs)

    @property
    def a_norm(self):
        if self._a_norm is None:
            self._a_norm = sp.block_diag(
                [normalized_self_loop_adjacency(g) for g in self.graphs], format="csr"
            )
        return self._a_norm


def encode_nodes(batch: GraphBatch, params: EncoderParams, mode: str = "diffusion") -> Tensor:
    """Node embeddings after all layers, for every node of the batch."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    h = Tensor(batch.x)
    for layer in params.layers:
        if mode == "diffusion":
            h = diffusion_layer(h, batch.trans, layer)
        else:
            # the ablation reuses each layer's zeroth forward weight as its GCN weight
            h = gcn_layer(h, batch.a_norm, layer.w_fwd[0])
    return h


def encode_batch(graphs, params: EncoderParams, mode: str = "diffusion") -> tuple[Tensor, Tensor]:
    """Graph embeddings (B x D) and projections (B x D_z) for a batch."""
    batch = graphs if isinstance(graphs, GraphBatch) else GraphBatch(graphs)
    nodes = encode_nodes(batch, params, mode)
    h = ad.matmul(batch.pool, nodes)
    return h, project(h, params.projection)


def encode(graph: MolGraph, params: EncoderParams, mode: str = "diffusion") -> tuple[Tensor, Tensor]:
    """Graph embedding h (1 x D) and projection z (1 x D_z) for one graph."""
    return encode_batch([graph], params, mode)
