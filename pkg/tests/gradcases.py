"""Small random problems for finite-difference checks of each primitive."""

import numpy as np
import scipy.sparse as sp

from digmol import autodiff as ad


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(-1, 1, shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin * 2, x)


def primitive_cases(seed=0):
    """(name, params, f) triples; ``f()`` is a generic scalar built on one op."""
    rng = np.random.default_rng(seed)
    cases = []

    def weighted(name, params, op):
        out_shape = op().shape
        r = rng.standard_normal(out_shape)
        cases.append((name, params, lambda: ad.tensor_sum(ad.mul(op(), r))))

    a, b = ad.parameter(rng.standard_normal((3, 4))), ad.parameter(rng.standard_normal((4, 2)))
    weighted("matmul", [a, b], lambda: ad.matmul(a, b))

    p = sp.random(5, 5, density=0.4, random_state=1, format="csr")
    h = ad.parameter(rng.standard_normal((5, 3)))
    weighted("matmul_sparse_left", [h], lambda: ad.matmul(p, h))

    x, y = ad.parameter(rng.standard_normal((3, 4))), ad.parameter(rng.standard_normal((3, 4)))
    row = ad.parameter(rng.standard_normal((1, 4)))
    weighted("add", [x, y], lambda: ad.add(x, y))
    weighted("add_row_broadcast", [x, row], lambda: ad.add(x, row))
    weighted("sub", [x, y], lambda: ad.sub(x, y))
    weighted("sub_row_broadcast", [x, row], lambda: ad.sub(row, x))
    weighted("mul", [x, y], lambda: ad.mul(x, y))
    weighted("mul_row_broadcast", [x, row], lambda: ad.mul(x, row))
    weighted("scale", [x], lambda: ad.scale(x, -2.5))

    z = ad.parameter(_away_from_zero(rng, (4, 3)))
    weighted("relu", [z], lambda: ad.relu(z))
    weighted("sigmoid", [x], lambda: ad.sigmoid(x))
    weighted("softplus", [x], lambda: ad.softplus(x))
    weighted("exp", [x], lambda: ad.exp(x))
    pos = ad.parameter(rng.uniform(0.5, 2.0, (3, 4)))
    weighted("log", [pos], lambda: ad.log(pos))

    cases.append(("sum_all", [x], lambda: ad.tensor_sum(ad.exp(x))))
    weighted("sum_axis0", [x], lambda: ad.tensor_sum(x, axis=0))
    weighted("sum_axis1", [x], lambda: ad.tensor_sum(x, axis=1))
    weighted("mean_rows", [x], lambda: ad.mean_rows(x))
    weighted("transpose", [x], lambda: ad.transpose(x))
    weighted("concat_rows", [x, row], lambda: ad.concat_rows([x, row, x]))
    weighted("l2_normalize_rows", [x], lambda: ad.l2_normalize_rows(x))
    return cases
