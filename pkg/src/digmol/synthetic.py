"""Random drug-like SMILES for smoke tests and toy tasks.

Molecules are assembled from a small fragment vocabulary: up to two ring
systems joined by a short linker, decorated with substituent chains, or a
branched acyclic chain. Every string produced parses with
:func:`digmol.smiles.parse_smiles`.
"""

from __future__ import annotations

import numpy as np

# ring templates; "{}" marks a substitution site that may stay empty
RINGS = (
    "c1cc{}ccc1",
    "c1ccc{}cc1",
    "c1cc{}ncc1",
    "c1cn{}cc1",
    "c1cc{}sc1",
    "c1cc{}oc1",
    "C1CC{}CCC1",
    "C1CC{}NCC1",
    "C1CC{}OC1",
    "C1CC{}CC1",
    "c1ccc2cc{}ccc2c1",
    "C1CC{}C1",
)
CHAIN_ATOMS = ("C", "C", "C", "C", "N", "O", "S")
TERMINALS = ("C", "F", "Cl", "Br", "O", "N", "C(=O)O", "C#N", "C(F)(F)F", "OC")
LINKERS = ("", "C", "CC", "O", "N", "C(=O)N", "OC", "S")


def _chain(rng, max_len=4) -> str:
    n = int(rng.integers(1, max_len + 1))
    atoms = [str(rng.choice(CHAIN_ATOMS)) for _ in range(n - 1)]
    if atoms and atoms[-1] == "C" and rng.random() < 0.3:
        atoms[-1] += "(" + str(rng.choice(TERMINALS)) + ")"
    return "".join(atoms) + str(rng.choice(TERMINALS))


def _ring(rng, digit: int) -> str:
    template = str(rng.choice(RINGS))
    sub = "(" + _chain(rng, 3) + ")" if rng.random() < 0.4 else ""
    # chains carry no digits, so renumbering the ring closures is a plain substitution
    return template.format(sub).replace("2", str(digit + 1)).replace("1", str(digit))


def random_smiles(rng) -> str:
    kind = rng.random()
    if kind < 0.2:
        main = _chain(rng, 6)
        if rng.random() < 0.5:
            main = "C(" + _chain(rng, 3) + ")" + main
        return main
    parts = []
    if rng.random() < 0.6:
        parts.append(_prefix(rng))
    parts.append(_ring(rng, 1))
    if kind > 0.6:
        parts.append(str(rng.choice(LINKERS)))
        parts.append(_ring(rng, 3))
    if rng.random() < 0.6:
        parts.append(_chain(rng, 3))
    return "".join(parts)


def _prefix(rng) -> str:
    n = int(rng.integers(1, 4))
    return str(rng.choice(("C", "N", "O", "F", "Cl", "CC", "OC", "NC"))) + "C" * (n - 1)


def synthetic_smiles(n: int, seed: int = 0) -> list[str]:
    """``n`` distinct SMILES strings from a seeded generator."""
    rng = np.random.default_rng(seed)
    seen: dict[str, None] = {}
    while len(seen) < n:
        seen.setdefault(random_smiles(rng))
    return list(seen)


def synthetic_corpus(n: int, seed: int = 0):
    """Parsed graphs for :func:`synthetic_smiles`."""
    from .smiles import parse_smiles

    return [parse_smiles(s) for s in synthetic_smiles(n, seed)]


def contains_oxygen(graph) -> float:
    return float(any(a.element == "O" for a in graph.atoms))
