import numpy as np
import pytest
from hypothesis import given, strategies as st

from digmol import autodiff as ad
from digmol.encoder import EncoderConfig
from digmol.momentum import NetworkPair, ShapeDrift, init_pair, momentum_update

SMALL = EncoderConfig(hidden=6, n_layers=2, k_steps=1, proj_hidden=5, out_dim=4)


def snapshot(params):
    return [p.data.tobytes() for p in params.parameters()]


def test_target_starts_as_exact_copy():
    pair = init_pair(0, SMALL)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(pair.online.parameters(), pair.target.parameters()))
    assert all(a is not b for a, b in zip(pair.online.parameters(), pair.target.parameters()))
    assert pair.t == 0 and pair.m == 0.8


def test_init_seeds():
    assert snapshot(init_pair(3, SMALL).online) == snapshot(init_pair(3, SMALL).online)
    assert snapshot(init_pair(3, SMALL).online) != snapshot(init_pair(4, SMALL).online)


def perturb(pair, seed=0):
    rng = np.random.default_rng(seed)
    for p in pair.online.parameters():
        p.data[...] = rng.standard_normal(p.data.shape)


def test_m_one_freezes_target():
    pair = init_pair(0, SMALL, m=1.0)
    before = snapshot(pair.target)
    perturb(pair)
    momentum_update(pair)
    assert snapshot(pair.target) == before and pair.t == 1


def test_m_zero_copies_online():
    pair = init_pair(0, SMALL, m=0.0)
    perturb(pair)
    momentum_update(pair)
    assert snapshot(pair.target) == snapshot(pair.online)


def test_scalar_case():
    pair = init_pair(0, SMALL, m=0.8)
    for p in pair.target.parameters():
        p.data[...] = 0.0
    for p in pair.online.parameters():
        p.data[...] = 1.0
    momentum_update(pair)
    assert all(np.all(np.abs(p.data - 0.2) < 1e-15) for p in pair.target.parameters())


@given(st.floats(0, 1), st.integers(0, 1000))
def test_update_is_exact_and_contracts(m, seed):
    pair = init_pair(seed, SMALL, m=m)
    perturb(pair, seed)
    theta = [p.data.copy() for p in pair.online.parameters()]
    xi = [p.data.copy() for p in pair.target.parameters()]
    momentum_update(pair)
    for th, x0, x1 in zip(theta, xi, pair.target.parameters()):
        assert np.all(np.abs(x1.data - (m * x0 + (1 - m) * th)) <= 1e-15)
        assert np.max(np.abs(x1.data - th)) <= m * np.max(np.abs(x0 - th)) + 1e-15


def test_shape_drift_detected():
    pair = init_pair(0, SMALL)
    pair.target.projection.b2 = ad.parameter(np.zeros((1, 9)))
    with pytest.raises(ShapeDrift):
        momentum_update(pair)


def test_invalid_momentum():
    with pytest.raises(ValueError):
        NetworkPair(init_pair(0, SMALL).online, init_pair(0, SMALL).target, m=1.5)
