"""Evaluation metrics and train/valid/test splitting."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .smiles import extract_scaffold


class DegenerateLabels(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class TooFewScaffolds(ValueError):
    pass


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise DegenerateLabels("need at least one positive and one negative label")
    return scores, labels, n_pos


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half).

    Computed from midranks, which is the Mann-Whitney U statistic.
    """
    scores, labels, n_pos = _binary(scores, labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def prc_auc(scores, labels) -> float:
    """Average precision; tied scores enter as one block."""
    scores, labels, n_pos = _binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # last index of every block of equal scores
    block_end = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[block_end]
    seen = block_end + 1
    precision = tp / seen
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(precision * recall_gain))


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape or pred.size == 0:
        raise LengthMismatch(f"lengths {pred.size} and {truth.size}")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


METRICS = {"roc_auc": roc_auc, "prc_auc": prc_auc, "rmse": rmse, "mae": mae}


@dataclass
class EvalReport:
    metric: str
    per_task: dict[str, float | None]
    task_count: int
    sample_count: int

    @property
    def macro_average(self) -> float | None:
        vals = [v for v in self.per_task.values() if v is not None]
        return float(np.mean(vals)) if vals else None

    def format(self) -> str:
        width = max([len(t) for t in self.per_task] + [len("macro")])
        lines = [f"metric: {self.metric}  tasks: {self.task_count}  samples: {self.sample_count}"]
        for task, v in self.per_task.items():
            lines.append(f"{task:<{width}}  {'absent' if v is None else f'{v:.6f}'}")
        avg = self.macro_average
        lines.append(f"{'macro':<{width}}  {'absent' if avg is None else f'{avg:.6f}'}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["task,value"]
        rows += [f"{t},{'' if v is None else repr(v)}" for t, v in self.per_task.items()]
        avg = self.macro_average
        rows.append(f"macro,{'' if avg is None else repr(avg)}")
        return "\n".join(rows) + "\n"


def evaluate(pred, labels, metric: str, task_names=None) -> EvalReport:
    """Per-task metric over an (n, T) prediction/label pair; NaN labels are missing.

    Classification tasks whose labels are all one class come back as ``None``
    and are left out of the macro average.
    """
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.ndim == 1:
        pred, labels = pred[:, None], labels[:, None]
    if pred.shape != labels.shape:
        raise LengthMismatch(f"prediction shape {pred.shape} vs labels {labels.shape}")
    fn = METRICS[metric]
    names = task_names or [f"task{i}" for i in range(pred.shape[1])]
    per_task = {}
    for t, name in enumerate(names):
        ok = ~np.isnan(labels[:, t])
        try:
            per_task[name] = fn(pred[ok, t], labels[ok, t]) if ok.any() else None
        except DegenerateLabels:
            per_task[name] = None
    return EvalReport(metric, per_task, len(names), pred.shape[0])


# --- splitting -----------------------------------------------------------------


def _check_fractions(fractions):
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"fractions must be three nonnegative numbers summing to 1: {fractions}")
    return fractions


def scaffold_split(dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Group molecules by scaffold key and hand whole groups to splits.

    Groups go largest first (ties by key), each to the split that is least
    full relative to its target size; ties prefer the larger shortfall, then
    train < valid < test. A split may end up empty when there are fewer
    groups than splits. The result does not depend on input order; ``seed``
    is accepted for interface symmetry with :func:`random_split`.
    """
    fractions = _check_fractions(fractions)
    keys = [k if isinstance(k, str) else extract_scaffold(k).canonical_string for k in dataset]
    groups: dict[str, list[int]] = defaultdict(list)
    for i, key in enumerate(keys):
        groups[key].append(i)
    active = [s for s in range(3) if fractions[s] > 0]
    # a lone group cannot be divided; with two or more, late splits may stay empty
    if len(groups) < 2 and len(active) > 1:
        raise TooFewScaffolds(f"{len(groups)} scaffold group for {len(active)} splits")
    n = len(keys)
    targets = [fractions[s] * n for s in range(3)]
    sizes = [0, 0, 0]
    out: list[list[int]] = [[], [], []]
    for key in sorted(groups, key=lambda k: (-len(groups[k]), k)):
        s = min(active, key=lambda s: (sizes[s] / targets[s], -(targets[s] - sizes[s]), s))
        out[s].extend(groups[key])
        sizes[s] += len(groups[key])
    return tuple(sorted(part) for part in out)


def random_split(dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded shuffle, then floor-sized valid/test slices with the remainder in train."""
    fractions = _check_fractions(fractions)
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_valid = math.floor(fractions[1] * n)
    n_test = math.floor(fractions[2] * n)
    n_train = n - n_valid - n_test
    return (
        sorted(order[:n_train].tolist()),
        sorted(order[n_train : n_train + n_valid].tolist()),
        sorted(order[n_train + n_valid :].tolist()),
    )
