"""SMILES tokenizer, parser, atom featurizer and scaffold keys.

Only a practical subset of SMILES is understood: organic-subset atoms,
bracket atoms carrying a charge (and optionally an explicit H count),
bond symbols ``- = # :``, ring closures ``0-9`` and ``%nn``, and branches.
Stereo marks, isotopes, atom classes and disconnected components (``.``)
are rejected.

Hydrogens are never materialized; a parsed molecule is a heavy-atom graph.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_ELEMENTS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
BOND_ORDERS = {"-": "single", "=": "double", "#": "triple", ":": "aromatic"}

N_FEATURES = 24
_ELEMENT_SLOT = {el: i for i, el in enumerate(ELEMENTS)}
_DEGREE_OFFSET = 10
_AROMATIC_SLOT = 16
_CHARGE_OFFSET = 17
_OUT_SLOT = 22
_IN_SLOT = 23


class SmilesError(ValueError):
    """Base class for everything the parser can reject."""


class EmptyInput(SmilesError):
    def __init__(self):
        super().__init__("empty SMILES string")


class UnknownCharacter(SmilesError):
    def __init__(self, position: int, char: str = ""):
        self.position = position
        super().__init__(f"unknown character {char!r} at position {position}")


class UnmatchedBranch(SmilesError):
    pass


class UnclosedRing(SmilesError):
    def __init__(self, digit: str):
        self.digit = digit
        super().__init__(f"ring closure {digit} never closed")


class ValenceUnsupported(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


@dataclass(frozen=True)
class SmilesToken:
    kind: str  # organic-atom | bracket-atom | bond | branch-open | branch-close | ring-closure-digit
    text: str
    position: int


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    index: int = 0

    def __post_init__(self):
        if self.element not in _ELEMENT_SLOT:
            raise ValenceUnsupported(f"element {self.element!r} is not supported")


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: str  # single | double | triple | aromatic

    def __post_init__(self):
        if self.a == self.b:
            raise SmilesSyntaxError(f"self-bond on atom {self.a}")
        if self.order not in BOND_ORDERS.values():
            raise ValueError(f"unknown bond order {self.order!r}")


# two-letter organic symbols must be tried before their one-letter prefixes
_ORGANIC = re.compile(r"Cl|Br|[BCNOPSFI]|[bcnops]")
_BRACKET_BODY = re.compile(
    r"(?P<isotope>\d+)?(?P<symbol>[A-Z][a-z]?|[bcnops]|se|as)(?P<chiral>@+)?"
    r"(?P<h>H\d*)?(?P<charge>[+-]+\d*)?(?P<cls>:\d+)?$"
)


def tokenize(smiles: str) -> list[SmilesToken]:
    """Split a SMILES string into tokens.

    >>> [t.text for t in tokenize("C(=O)O")]
    ['C', '(', '=', 'O', ')', 'O']
    """
    if not smiles:
        raise EmptyInput()
    tokens = []
    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            end = smiles.find("]", i + 1)
            if end < 0:
                raise SmilesSyntaxError(f"unterminated bracket atom at position {i}")
            body = smiles[i + 1 : end]
            for j, c in enumerate(body):
                if not (c.isascii() and (c.isalnum() or c in "+-@:")):
                    raise UnknownCharacter(i + 1 + j, c)
            tokens.append(SmilesToken("bracket-atom", smiles[i : end + 1], i))
            i = end + 1
            continue
        m = _ORGANIC.match(smiles, i)
        if m:
            tokens.append(SmilesToken("organic-atom", m.group(), i))
            i = m.end()
        elif ch in BOND_ORDERS:
            tokens.append(SmilesToken("bond", ch, i))
            i += 1
        elif ch == "(":
            tokens.append(SmilesToken("branch-open", ch, i))
            i += 1
        elif ch == ")":
            tokens.append(SmilesToken("branch-close", ch, i))
            i += 1
        elif ch.isascii() and ch.isdigit():
            tokens.append(SmilesToken("ring-closure-digit", ch, i))
            i += 1
        elif ch == "%":
            digits = smiles[i + 1 : i + 3]
            if len(digits) != 2 or not (digits.isascii() and digits.isdigit()):
                raise UnknownCharacter(i, ch)
            tokens.append(SmilesToken("ring-closure-digit", smiles[i : i + 3], i))
            i += 3
        else:
            raise UnknownCharacter(i, ch)
    return tokens


def _parse_bracket(text: str, index: int) -> Atom:
    m = _BRACKET_BODY.match(text[1:-1])
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom {text}")
    if m.group("isotope") or m.group("chiral") or m.group("cls"):
        raise ValenceUnsupported(f"isotopes, chirality and atom classes are unsupported: {text}")
    symbol = m.group("symbol")
    aromatic = symbol in AROMATIC_ELEMENTS
    element = AROMATIC_ELEMENTS.get(symbol, symbol)
    if element not in _ELEMENT_SLOT:
        raise ValenceUnsupported(f"element {symbol!r} is not supported")
    charge = 0
    spec = m.group("charge")
    if spec:
        sign = 1 if spec[0] == "+" else -1
        signs = spec.rstrip("0123456789")
        digits = spec[len(signs) :]
        if digits:
            if len(signs) != 1:
                raise SmilesSyntaxError(f"malformed charge in {text}")
            charge = sign * int(digits)
        else:
            if signs.strip(signs[0]):
                raise SmilesSyntaxError(f"malformed charge in {text}")
            charge = sign * len(signs)
    return Atom(element, aromatic, charge, index)


@dataclass(frozen=True)
class ParsedMolecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]


def parse_atoms_bonds(smiles: str) -> ParsedMolecule:
    """Parse SMILES into atoms and bonds without building a graph."""
    tokens = tokenize(smiles)
    atoms: list[Atom] = []
    bonds: dict[frozenset, Bond] = {}
    branch_stack: list[int] = []
    rings: dict[str, tuple[int, str | None]] = {}
    prev: int | None = None
    pending: str | None = None

    def add_bond(a: int, b: int, order: str | None):
        if a == b:
            raise SmilesSyntaxError(f"ring closure bonds atom {a} to itself")
        key = frozenset((a, b))
        if key in bonds:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}")
        if order is None:
            order = "aromatic" if atoms[a].aromatic and atoms[b].aromatic else "single"
        bonds[key] = Bond(min(a, b), max(a, b), order)

    for tok in tokens:
        if tok.kind in ("organic-atom", "bracket-atom"):
            idx = len(atoms)
            if tok.kind == "organic-atom":
                aromatic = tok.text in AROMATIC_ELEMENTS
                atoms.append(Atom(AROMATIC_ELEMENTS.get(tok.text, tok.text), aromatic, 0, idx))
            else:
                atoms.append(_parse_bracket(tok.text, idx))
            if prev is not None:
                add_bond(prev, idx, pending)
            elif pending is not None:
                raise SmilesSyntaxError(f"bond symbol without a preceding atom at {tok.position}")
            pending = None
            prev = idx
        elif tok.kind == "bond":
            if prev is None or pending is not None:
                raise SmilesSyntaxError(f"misplaced bond symbol at position {tok.position}")
            pending = BOND_ORDERS[tok.text]
        elif tok.kind == "branch-open":
            if prev is None or pending is not None:
                raise UnmatchedBranch(f"branch opened without an atom at position {tok.position}")
            branch_stack.append(prev)
        elif tok.kind == "branch-close":
            if not branch_stack:
                raise UnmatchedBranch(f"unmatched ')' at position {tok.position}")
            if pending is not None:
                raise SmilesSyntaxError(f"dangling bond before ')' at position {tok.position}")
            prev = branch_stack.pop()
        else:  # ring closure
            if prev is None:
                raise SmilesSyntaxError(f"ring closure without an atom at position {tok.position}")
            digit = tok.text
            if digit in rings:
                other, order = rings.pop(digit)
                if order is not None and pending is not None and order != pending:
                    raise SmilesSyntaxError(f"conflicting bond orders on ring closure {digit}")
                add_bond(other, prev, pending if pending is not None else order)
            else:
                rings[digit] = (prev, pending)
            pending = None

    if branch_stack:
        raise UnmatchedBranch("unclosed '('")
    if pending is not None:
        raise SmilesSyntaxError("SMILES ends with a bond symbol")
    if rings:
        raise UnclosedRing(sorted(rings)[0])
    ordered = sorted(bonds.values(), key=lambda b: (b.a, b.b))
    return ParsedMolecule(tuple(atoms), tuple(ordered))


def atom_features(atom: Atom, out_degree: int, in_degree: int) -> np.ndarray:
    """24-slot feature vector for one atom.

    Layout: element one-hot (10), heavy-atom degree 0-5 one-hot (6),
    aromatic flag (1), formal charge -2..2 one-hot (5), out-degree, in-degree.
    The degree slot uses ``max(out_degree, in_degree)``, which is the bond
    count for any graph that has not been through bond deletion.
    """
    v = np.zeros(N_FEATURES)
    v[_ELEMENT_SLOT[atom.element]] = 1.0
    v[_DEGREE_OFFSET + min(max(out_degree, in_degree), 5)] = 1.0
    v[_AROMATIC_SLOT] = float(atom.aromatic)
    v[_CHARGE_OFFSET + min(max(atom.formal_charge, -2), 2) + 2] = 1.0
    v[_OUT_SLOT] = out_degree
    v[_IN_SLOT] = in_degree
    return v


def parse_smiles(smiles: str):
    """Parse SMILES into a :class:`~digmol.graph.MolGraph`.

    Each bond becomes two opposing directed edges in the adjacency matrix.
    """
    from .graph import from_atoms_bonds

    mol = parse_atoms_bonds(smiles)
    return from_atoms_bonds(mol.atoms, mol.bonds, smiles)


# --- scaffolds ---------------------------------------------------------------

EMPTY_SCAFFOLD = ""


@dataclass(frozen=True)
class ScaffoldKey:
    canonical_string: str

    @property
    def is_empty(self) -> bool:
        return self.canonical_string == EMPTY_SCAFFOLD


def prune_side_chains(atoms, bonds) -> tuple[set[int], list[Bond]]:
    """Repeatedly strip atoms with at most one heavy neighbour.

    What survives is the ring systems plus the linkers between them; ring
    atoms always keep two neighbours so they are never removed.
    """
    alive = {a.index for a in atoms}
    nbrs: dict[int, set[int]] = {i: set() for i in alive}
    for b in bonds:
        nbrs[b.a].add(b.b)
        nbrs[b.b].add(b.a)
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            if len(nbrs[i] & alive) <= 1:
                alive.discard(i)
                changed = True
    kept = [b for b in bonds if b.a in alive and b.b in alive]
    return alive, kept


_ORDER_CODE = {"single": "-", "double": "=", "triple": "#", "aromatic": ":"}


def _canonical_string(atoms, alive: set[int], bonds: list[Bond]) -> str:
    by_index = {a.index: a for a in atoms}
    nbrs: dict[int, list[tuple[int, str]]] = {i: [] for i in alive}
    for b in bonds:
        code = _ORDER_CODE[b.order]
        nbrs[b.a].append((b.b, code))
        nbrs[b.b].append((b.a, code))

    def symbol(i):
        a = by_index[i]
        sym = a.element.lower() if a.aromatic else a.element
        return sym + (f"{a.formal_charge:+d}" if a.formal_charge else "")

    # start from (element, bond-order multiset), refine by neighbour classes
    sigs = {i: symbol(i) + "".join(sorted(o for _, o in nbrs[i])) for i in alive}
    first = {s: r for r, s in enumerate(sorted(set(sigs.values())))}
    classes = {i: first[sigs[i]] for i in alive}
    while True:
        sigs = {
            i: (classes[i], tuple(sorted((o, classes[j]) for j, o in nbrs[i])))
            for i in alive
        }
        ranks = {s: r for r, s in enumerate(sorted(set(sigs.values())))}
        refined = {i: ranks[sigs[i]] for i in alive}
        if len(ranks) == len(set(classes.values())):
            break
        classes = refined
    nodes = sorted(f"{symbol(i)}{classes[i]}" for i in alive)
    edges = []
    for b in bonds:
        lo, hi = sorted((classes[b.a], classes[b.b]))
        edges.append(f"{lo}{_ORDER_CODE[b.order]}{hi}")
    edges.sort()
    return ".".join(nodes) + "/" + ".".join(edges)


def extract_scaffold(graph) -> ScaffoldKey:
    """Ring-and-linker skeleton key; acyclic molecules give the empty key."""
    alive, kept = prune_side_chains(graph.atoms, graph.bonds)
    if not alive:
        return ScaffoldKey(EMPTY_SCAFFOLD)
    return ScaffoldKey(_canonical_string(graph.atoms, alive, kept))


def scaffold_graph(graph):
    """The pruned ring-and-linker subgraph as a new MolGraph (possibly empty)."""
    from .graph import induced_subgraph

    alive, _ = prune_side_chains(graph.atoms, graph.bonds)
    return induced_subgraph(graph, alive)
