"""From a SMILES string to the directed graph the encoder consumes.

Walks through parsing, the transition matrices and one augmented pair,
printing each stage. Run with ``python3 demos/01_molecule_to_graph.py``.
"""

import numpy as np

from digmol.augment import AugmentConfig, deleted_edges, make_pair, masked_rows
from digmol.graph import degrees, transitions
from digmol.smiles import extract_scaffold, parse_smiles

np.set_printoptions(precision=3, suppress=True)

smiles = "COc1ccccc1C"
g = parse_smiles(smiles)
print(f"{smiles}: {g.n_nodes} heavy atoms, {len(g.bonds)} bonds, {g.n_directed_edges} directed edges")
print("elements:", " ".join(a.element for a in g.atoms))
print("scaffold key:", extract_scaffold(g).canonical_string)

# every bond is stored twice, once per direction, so A starts out symmetric
print("\nadjacency\n", g.adj)
pf, pb = transitions(g)
print("\nforward transitions P_f (rows sum to one)\n", pf)

# augmentation hides atom features and removes one direction of some bonds
v1, v2 = make_pair(g, AugmentConfig(mask_ratio=0.25, unidir_delete_ratio=0.25, seed=3))
for name, view in (("view 1", v1), ("view 2", v2)):
    out_deg, in_deg = degrees(view)
    print(f"\n{name}: masked atoms {masked_rows(view).tolist()}, deleted directions {deleted_edges(g, view)}")
    print("  out-degree", out_deg.astype(int).tolist(), " in-degree", in_deg.astype(int).tolist())

# after a one-way deletion P_f and P_b differ, which is what the two diffusion branches see
pf1, pb1 = transitions(v1)
print("\nview 1 has P_f == P_b:", np.allclose(pf1, pb1), "(the two coincide only for symmetric graphs)")
