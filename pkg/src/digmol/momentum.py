"""Online/target network pair with momentum tracking of the target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, EncoderParams, init_encoder


class ShapeDrift(RuntimeError):
    pass


@dataclass
class NetworkPair:
    online: EncoderParams
    target: EncoderParams
    m: float = 0.8
    t: int = 0

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {self.m}")


def init_pair(seed: int = 0, config: EncoderConfig = EncoderConfig(), m: float = 0.8) -> NetworkPair:
    """Random online network plus an exact deep copy as the target."""
    online = init_encoder(config, np.random.default_rng(seed))
    return NetworkPair(online, online.copy(), m, 0)


def momentum_update(pair: NetworkPair) -> NetworkPair:
    """In place: target <- m * target + (1 - m) * online, then t += 1."""
    online = pair.online.named_parameters()
    target = pair.target.named_parameters()
    if [n for n, _ in online] != [n for n, _ in target]:
        raise ShapeDrift("online and target parameter lists differ")
    for (name, th), (_, xi) in zip(online, target):
        if th.shape != xi.shape:
            raise ShapeDrift(f"{name}: online {th.shape} vs target {xi.shape}")
        xi.data[...] = pair.m * xi.data + (1.0 - pair.m) * th.data
    pair.t += 1
    return pair
