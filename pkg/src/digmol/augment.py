"""Stochastic views of a molecular graph: atom masking and one-way bond deletion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import MolGraph, bond_pairs


@dataclass(frozen=True)
class AugmentConfig:
    mask_ratio: float = 0.25
    unidir_delete_ratio: float = 0.25
    seed: int = 0

    def __post_init__(self):
        for name in ("mask_ratio", "unidir_delete_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def n_masked(self, n_nodes: int) -> int:
        return math.floor(self.mask_ratio * n_nodes)

    def n_deleted(self, n_bonds: int) -> int:
        return math.floor(self.unidir_delete_ratio * n_bonds)


def _rng(config: AugmentConfig, rng) -> np.random.Generator:
    return np.random.default_rng(config.seed) if rng is None else rng


def mask_atoms(graph: MolGraph, config: AugmentConfig, rng=None) -> MolGraph:
    """Zero the feature rows of ``floor(mask_ratio * N)`` atoms chosen uniformly."""
    rng = _rng(config, rng)
    k = config.n_masked(graph.n_nodes)
    if k == 0:
        return graph
    idx = rng.choice(graph.n_nodes, size=k, replace=False)
    x = graph.x.copy()
    x[idx] = 0.0
    return graph.replace(x=x)


def delete_unidirectional(graph: MolGraph, config: AugmentConfig, rng=None) -> MolGraph:
    """Turn ``floor(ratio * bonds)`` bonds into one-way links.

    For each chosen bond a fair coin picks which direction disappears; the
    opposite edge is kept, so no bond is severed completely.
    """
    rng = _rng(config, rng)
    pairs = bond_pairs(graph)
    k = config.n_deleted(len(pairs))
    if k == 0:
        return graph
    if not np.array_equal(graph.adj, graph.adj.T):
        raise ValueError("one-way deletion expects a symmetric adjacency")
    chosen = rng.choice(len(pairs), size=k, replace=False)
    flips = rng.integers(0, 2, size=k)
    adj = graph.adj.copy()
    for c, flip in zip(chosen, flips):
        i, j = pairs[c]
        if flip:
            i, j = j, i
        adj[i, j] = 0.0
    return graph.replace(adj=adj)


def augment_view(graph: MolGraph, config: AugmentConfig, rng=None) -> MolGraph:
    rng = _rng(config, rng)
    return delete_unidirectional(mask_atoms(graph, config, rng), config, rng)


def make_pair(graph: MolGraph, config: AugmentConfig, rng=None) -> tuple[MolGraph, MolGraph]:
    """Two independently corrupted views, each drawn from its own child stream."""
    rng = _rng(config, rng)
    r1, r2 = rng.spawn(2)
    return augment_view(graph, config, r1), augment_view(graph, config, r2)


def masked_rows(view: MolGraph) -> np.ndarray:
    """Indices of all-zero feature rows (parsed atoms never have one)."""
    return np.flatnonzero(~view.x.any(axis=1))


def deleted_edges(original: MolGraph, view: MolGraph) -> list[tuple[int, int]]:
    gone = (original.adj == 1) & (view.adj == 0)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(gone))]
