"""Directed molecular graphs and the matrices derived from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .smiles import Atom, Bond, atom_features


class InvalidPermutation(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MolGraph:
    """Node features ``x`` (N x P) and directed 0/1 adjacency ``adj`` (N x N).

    ``adj[i, j] == 1`` means node i sends messages to node j. ``bonds`` keeps
    the undirected bond list of the source molecule, so it survives
    augmentation even when one direction of a bond has been deleted.
    """

    x: np.ndarray
    adj: np.ndarray
    atoms: tuple[Atom, ...] = ()
    bonds: tuple[Bond, ...] = ()
    smiles: str | None = field(default=None, compare=False)

    def __post_init__(self):
        x, adj = _frozen(self.x), _frozen(self.adj)
        if x.ndim != 2 or adj.ndim != 2 or adj.shape != (x.shape[0], x.shape[0]):
            raise ValueError(f"inconsistent shapes x={x.shape} adj={adj.shape}")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency has self-loops")
        if not np.all((adj == 0) | (adj == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "adj", adj)
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def n_directed_edges(self) -> int:
        return int(self.adj.sum())

    def replace(self, x=None, adj=None) -> "MolGraph":
        return MolGraph(
            self.x if x is None else x,
            self.adj if adj is None else adj,
            self.atoms,
            self.bonds,
            self.smiles,
        )

    def __eq__(self, other):
        if not isinstance(other, MolGraph):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.adj, other.adj)

    __hash__ = None


class TransitionPair(NamedTuple):
    forward: np.ndarray
    backward: np.ndarray


def degrees(graph: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Out- and in-degree vectors (row sums of A and of A transposed)."""
    adj = graph.adj
    return adj.sum(axis=1).astype(int), adj.sum(axis=0).astype(int)


def row_normalize(m: np.ndarray) -> np.ndarray:
    """Divide rows by their sums; all-zero rows stay zero."""
    sums = m.sum(axis=1, keepdims=True)
    out = np.zeros_like(m, dtype=np.float64)
    np.divide(m, sums, out=out, where=sums != 0)
    return out


def transitions(graph: MolGraph) -> TransitionPair:
    return TransitionPair(row_normalize(graph.adj), row_normalize(graph.adj.T))


def normalized_self_loop_adjacency(graph: MolGraph) -> np.ndarray:
    """Symmetric GCN normalization D^-1/2 (A + I) D^-1/2 of A as given."""
    a_hat = graph.adj + np.eye(graph.n_nodes)
    d = a_hat.sum(axis=1) ** -0.5
    return d[:, None] * a_hat * d[None, :]


def permute(graph: MolGraph, perm) -> MolGraph:
    """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
    perm = np.asarray(perm)
    n = graph.n_nodes
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvalidPermutation(f"not a permutation of {n} nodes: {perm.tolist()}")
    inv = np.empty(n, dtype=int)
    inv[perm] = np.arange(n)
    atoms = tuple(
        Atom(graph.atoms[p].element, graph.atoms[p].aromatic, graph.atoms[p].formal_charge, i)
        for i, p in enumerate(perm)
    ) if graph.atoms else ()
    bonds = tuple(
        sorted(
            (Bond(min(inv[b.a], inv[b.b]), max(inv[b.a], inv[b.b]), b.order) for b in graph.bonds),
            key=lambda b: (b.a, b.b),
        )
    )
    return MolGraph(graph.x[perm], graph.adj[np.ix_(perm, perm)], atoms, bonds, graph.smiles)


def bond_pairs(graph: MolGraph) -> list[tuple[int, int]]:
    """Undirected pairs (i < j) joined by at least one directed edge."""
    sym = np.triu((graph.adj + graph.adj.T) > 0, k=1)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(sym))]


def from_atoms_bonds(atoms, bonds, smiles=None) -> MolGraph:
    n = len(atoms)
    adj = np.zeros((n, n))
    for b in bonds:
        adj[b.a, b.b] = adj[b.b, b.a] = 1.0
    out_deg, in_deg = adj.sum(axis=1).astype(int), adj.sum(axis=0).astype(int)
    if n:
        x = np.stack([atom_features(a, out_deg[i], in_deg[i]) for i, a in enumerate(atoms)])
    else:
        x = np.zeros((0, 24))
    return MolGraph(x, adj, atoms, bonds, smiles)


def induced_subgraph(graph: MolGraph, nodes) -> MolGraph:
    """Subgraph on ``nodes`` (re-indexed in ascending order, features recomputed)."""
    nodes = sorted(nodes)
    remap = {old: new for new, old in enumerate(nodes)}
    atoms = [
        Atom(graph.atoms[o].element, graph.atoms[o].aromatic, graph.atoms[o].formal_charge, remap[o])
        for o in nodes
    ]
    bonds = [
        Bond(remap[b.a], remap[b.b], b.order)
        for b in graph.bonds
        if b.a in remap and b.b in remap
    ]
    return from_atoms_bonds(atoms, bonds)


def disjoint_union(g1: MolGraph, g2: MolGraph) -> MolGraph:
    """Block-diagonal combination of two graphs (second graph's nodes follow the first's)."""
    n1 = g1.n_nodes
    adj = np.zeros((n1 + g2.n_nodes,) * 2)
    adj[:n1, :n1] = g1.adj
    adj[n1:, n1:] = g2.adj
    atoms = g1.atoms + tuple(
        Atom(a.element, a.aromatic, a.formal_charge, a.index + n1) for a in g2.atoms
    )
    bonds = g1.bonds + tuple(Bond(b.a + n1, b.b + n1, b.order) for b in g2.bonds)
    return MolGraph(np.vstack([g1.x, g2.x]), adj, atoms, bonds)
