"""Inspect what a pretrained encoder produces and how scaffold splits group molecules."""

from collections import Counter

import numpy as np

from digmol.data import export_embeddings
from digmol.metrics import random_split, scaffold_split
from digmol.smiles import extract_scaffold
from digmol.synthetic import synthetic_corpus
from digmol.trainer import PretrainConfig, pretrain

graphs = synthetic_corpus(96, seed=4)
keys = [extract_scaffold(g).canonical_string or "(acyclic)" for g in graphs]
print("largest scaffold groups:")
for key, n in Counter(keys).most_common(4):
    print(f"  {n:3d}  {key[:60]}")

# whole groups go to one split, so no scaffold leaks from train into test
train, valid, test = scaffold_split(graphs)
shared = {keys[i] for i in train} & {keys[i] for i in test}
print(f"\nscaffold split {len(train)}/{len(valid)}/{len(test)}; scaffolds shared by train and test: {len(shared)}")
r_train, _, r_test = random_split(graphs, seed=0)
leaked = {keys[i] for i in r_train} & {keys[i] for i in r_test}
print(f"random split for comparison shares {len(leaked)} scaffolds")

checkpoint = pretrain(graphs, PretrainConfig(epochs=10, batch_size=16)).checkpoint
table = export_embeddings(checkpoint, graphs, "demo_embeddings.csv")
h, pcs = table[:, :-2], table[:, -2:]
print(f"\n{h.shape[0]} embeddings of width {h.shape[1]} written to demo_embeddings.csv")
unit = h / np.linalg.norm(h, axis=1, keepdims=True)
print("mean pairwise cosine similarity:", round(float(np.mean(unit @ unit.T)), 3))
print("variance along pc1, pc2:", np.round(pcs.var(axis=0), 6))
