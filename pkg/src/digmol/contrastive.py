"""NT-Xent and the three pairings of online/target projections."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class BatchTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    tau: float = 0.1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("at least one loss weight must be nonzero")


@dataclass
class ContrastiveBatch:
    """Projections of the two views through the online and target networks.

    Row ``i`` of every matrix comes from molecule ``i`` of the mini-batch.
    """

    z_theta_1: Tensor
    z_theta_2: Tensor
    z_xi_1: Tensor
    z_xi_2: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in (self.z_theta_1, self.z_theta_2, self.z_xi_1, self.z_xi_2)}
        if len(shapes) != 1:
            raise ad.ShapeMismatch(f"projection matrices disagree in shape: {sorted(shapes)}")


class JointLoss(NamedTuple):
    joint: Tensor
    graph_interaction: Tensor
    encoder_interaction: Tensor
    multi_interaction: Tensor

    def values(self) -> tuple[float, float, float, float]:
        return tuple(t.item() for t in self)


def cosine_sim(z1, z2) -> float:
    z1 = np.asarray(z1, dtype=np.float64).ravel()
    z2 = np.asarray(z2, dtype=np.float64).ravel()
    return float(z1 @ z2 / ((np.linalg.norm(z1) + ad.NORM_EPS) * (np.linalg.norm(z2) + ad.NORM_EPS)))


def nt_xent(z_a, z_b, tau: float) -> Tensor:
    """Normalized temperature-scaled cross entropy over 2B anchors.

    Row ``i`` of ``z_a`` and row ``i`` of ``z_b`` are positives. Each anchor's
    denominator runs over the other 2B - 1 stacked rows, positive included.
    """
    z_a, z_b = ad.as_tensor(z_a), ad.as_tensor(z_b)
    if z_a.shape != z_b.shape:
        raise ad.ShapeMismatch(f"nt_xent: {z_a.shape} vs {z_b.shape}")
    b = z_a.shape[0]
    if b < 2:
        raise BatchTooSmall("NT-Xent needs at least two molecules per batch")
    z = ad.l2_normalize_rows(ad.concat_rows([z_a, z_b]))
    logits = ad.scale(ad.matmul(z, ad.transpose(z)), 1.0 / tau)
    n = 2 * b
    not_self = 1.0 - np.eye(n)
    positive = np.zeros((n, n))
    idx = np.arange(b)
    positive[idx, idx + b] = positive[idx + b, idx] = 1.0
    denom = ad.tensor_sum(ad.mul(ad.exp(logits), not_self), axis=1)
    pos_logit = ad.tensor_sum(ad.mul(logits, positive), axis=1)
    per_anchor = ad.sub(ad.log(denom), pos_logit)
    return ad.scale(ad.tensor_sum(per_anchor), 1.0 / n)


def joint_loss(batch: ContrastiveBatch, w: LossWeights = LossWeights()) -> JointLoss:
    """Weighted sum of graph-, encoder- and multi-interaction terms.

    Target projections are treated as constants, so no gradient reaches them.
    """
    t1, t2 = batch.z_theta_1, batch.z_theta_2
    x1, x2 = batch.z_xi_1.detach(), batch.z_xi_2.detach()

    def pair(a1, b1, a2, b2):
        return ad.scale(ad.add(nt_xent(a1, b1, w.tau), nt_xent(a2, b2, w.tau)), 0.5)

    gi = pair(t1, t2, x1, x2)
    ei = pair(t1, x1, t2, x2)
    mi = pair(t1, x2, t2, x1)
    joint = ad.add(ad.add(ad.scale(gi, w.alpha), ad.scale(ei, w.beta)), ad.scale(mi, w.gamma))
    return JointLoss(joint, gi, ei, mi)
