"""Shared fixtures, brute-force oracles and the acceptance summary hook."""

from __future__ import annotations

import math
import re

import numpy as np
import pytest
from hypothesis import settings

from digmol.smiles import parse_smiles
from digmol.synthetic import synthetic_corpus

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FIG2 = "COc1ccccc1C"


# --- oracles written independently of the package --------------------------------


def nt_xent_bruteforce(za, zb, tau):
    """Double loop over anchors and candidates, plain Python floats."""
    rows = [list(map(float, r)) for r in np.vstack([za, zb])]
    n = len(rows)
    b = n // 2

    def sim(u, v):
        dot = sum(p * q for p, q in zip(u, v))
        nu = math.sqrt(sum(p * p for p in u)) + 1e-12
        nv = math.sqrt(sum(q * q for q in v)) + 1e-12
        return dot / (nu * nv)

    total = 0.0
    for i in range(n):
        pos = i + b if i < b else i - b
        denom = 0.0
        for j in range(n):
            if j != i:
                denom += math.exp(sim(rows[i], rows[j]) / tau)
        total += -math.log(math.exp(sim(rows[i], rows[pos]) / tau) / denom)
    return total / n


def roc_bruteforce(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    won = 0.0
    for p in pos:
        for q in neg:
            won += 1.0 if p > q else 0.5 if p == q else 0.0
    return won / (len(pos) * len(neg))


def prc_bruteforce(scores, labels):
    """Step integral of precision over recall, one step per distinct threshold."""
    n_pos = sum(labels)
    area, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        picked = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(picked)
        recall = tp / n_pos
        area += (recall - prev_recall) * (tp / len(picked))
        prev_recall = recall
    return area


# --- fixtures -----------------------------------------------------------------------


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(120, seed=3)


@pytest.fixture(scope="session")
def fig2():
    return parse_smiles(FIG2)


TINY_ENCODER = dict(hidden=16, proj_hidden=16, out_dim=8)


@pytest.fixture(scope="session")
def tiny_corpus():
    return synthetic_corpus(24, seed=5)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_corpus):
    """Two epochs on 24 molecules with a narrow encoder; the golden-value fixture."""
    from digmol.encoder import EncoderConfig
    from digmol.trainer import PretrainConfig, pretrain

    cfg = PretrainConfig(epochs=2, batch_size=8, encoder=EncoderConfig(**TINY_ENCODER), seed=11)
    return pretrain(tiny_corpus, cfg).checkpoint


@pytest.fixture
def benzene():
    return parse_smiles("c1ccccc1")


# --- acceptance summary ----------------------------------------------------------------

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m and rep.when == "call":
                lines.append((int(m.group(1)), m.group(2).replace("_", " "), "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, name, verdict in sorted(lines):
            terminalreporter.write_line(f"criterion {num:2d} {name:<40} {verdict}")
