"""
FM, inner products, CIN and self-attention against naive oracles
"""

import itertools

import numpy as np
import pytest

from app.autodiff import Tensor
from app.core.errors import ContractViolation
from app.models.layers import (
    MLP,
    SelfAttention,
    cin_layer,
    fm_second_order,
    inner_products,
    join,
    pair_positions,
)
from app.schemas.config import Activation


def _batch(*rows):
    return Tensor(np.asarray([rows], dtype=np.float64))


def _naive_fm(e):
    m = e.shape[0]
    return sum(float(e[i] @ e[j]) for i in range(m) for j in range(i + 1, m))


def _naive_cin(prev, base, w):
    h_out = w.shape[0]
    h, k = prev.shape
    m = base.shape[0]
    out = np.zeros((h_out, k))
    for o in range(h_out):
        for i in range(h):
            for j in range(m):
                out[o] += w[o, i * m + j] * prev[i] * base[j]
    return out


def test_fm_examples():
    assert fm_second_order(_batch((1, 0), (0, 1))).data.tolist() == [[0.0]]
    assert fm_second_order(_batch((1, 0), (0, 1), (1, 1))).data.tolist() == [[2.0]]


def test_fm_matches_pairwise_loop(rng):
    for _ in range(100):
        m, k, b = int(rng.integers(2, 7)), int(rng.integers(1, 9)), int(rng.integers(1, 4))
        e = rng.normal(size=(b, m, k))
        out = fm_second_order(Tensor(e)).data
        assert out.shape == (b, 1)
        for row in range(b):
            assert out[row, 0] == pytest.approx(_naive_fm(e[row]), abs=1e-5)


def test_fm_needs_two_fields():
    with pytest.raises(ContractViolation):
        fm_second_order(_batch((1, 2)))


def test_inner_products_count_and_order(rng):
    e = rng.normal(size=(2, 3, 4))
    out = inner_products(Tensor(e)).data
    assert out.shape == (2, 3)
    expected = [[e[b, i] @ e[b, j] for i, j in itertools.combinations(range(3), 2)] for b in range(2)]
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert pair_positions(3).tolist() == [1, 2, 5]


def test_field_permutation_invariance(rng):
    e = rng.normal(size=(1, 5, 3))
    perm = rng.permutation(5)
    shuffled = Tensor(e[:, perm])
    assert fm_second_order(shuffled).item() == pytest.approx(fm_second_order(Tensor(e)).item(), abs=1e-12)
    np.testing.assert_allclose(
        np.sort(inner_products(shuffled).data[0]),
        np.sort(inner_products(Tensor(e)).data[0]),
        atol=1e-12,
    )


def test_cin_examples():
    x0 = _batch((1, 2), (3, 4))
    np.testing.assert_allclose(cin_layer(x0, x0, Tensor(np.ones((1, 4)))).data[0], [[16, 36]])
    np.testing.assert_array_equal(cin_layer(x0, x0, Tensor(np.zeros((2, 4)))).data, np.zeros((1, 2, 2)))
    select = np.zeros((1, 4))
    select[0, 0] = 1.0
    np.testing.assert_allclose(cin_layer(x0, x0, Tensor(select)).data[0, 0], [1, 4])


def test_cin_matches_triple_loop(rng):
    for _ in range(100):
        m, k = int(rng.integers(1, 7)), int(rng.integers(1, 9))
        h, h_out, b = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 3))
        prev = rng.normal(size=(b, h, k))
        base = rng.normal(size=(b, m, k))
        w = rng.normal(size=(h_out, h * m))
        out = cin_layer(Tensor(prev), Tensor(base), Tensor(w)).data
        assert out.shape == (b, h_out, k)
        for row in range(b):
            np.testing.assert_allclose(out[row], _naive_cin(prev[row], base[row], w), atol=1e-5)


def test_cin_dim_mismatch():
    with pytest.raises(ContractViolation):
        cin_layer(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((1, 2, 4))), Tensor(np.ones((1, 4))))
    with pytest.raises(ContractViolation):
        cin_layer(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((1, 2, 3))), Tensor(np.ones((1, 3))))


def _attention(rng, dim=4, head_size=3, heads=2):
    return SelfAttention({}, "attention", dim, head_size, heads, rng, dtype=np.float64)


def test_attention_rows_sum_to_one(rng):
    layer = _attention(rng)
    out, weights = layer(Tensor(rng.normal(size=(3, 5, 4))), return_weights=True)
    assert out.shape == (3, 5, 6)
    assert weights.shape == (3, 2, 5, 5)
    np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-6)


def test_identical_fields_attend_uniformly(rng):
    layer = _attention(rng)
    field = rng.normal(size=4)
    out, weights = layer(Tensor(np.tile(field, (1, 4, 1))), return_weights=True)
    np.testing.assert_allclose(weights.data, 0.25, atol=1e-12)
    np.testing.assert_allclose(out.data[0], np.tile(out.data[0, 0], (4, 1)), atol=1e-12)


def test_single_field_attends_to_itself(rng):
    layer = _attention(rng)
    e = rng.normal(size=(2, 1, 4))
    out, weights = layer(Tensor(e), return_weights=True)
    np.testing.assert_array_equal(weights.data, np.ones((2, 2, 1, 1)))
    np.testing.assert_allclose(out.data, e @ layer.value.kernel.data, atol=1e-12)


def test_mlp_dropout_needs_rng(rng):
    mlp = MLP({}, "mlp", 3, [4], Activation.RELU, 0.5, rng, dtype=np.float64)
    x = Tensor(rng.normal(size=(2, 3)))
    assert mlp(x).shape == (2, 4)
    with pytest.raises(ContractViolation):
        mlp(x, training=True)


def test_join_skips_empty_parts():
    a = Tensor(np.ones((2, 3)))
    assert join([a, None, Tensor(np.ones((2, 0)))]) is a
    assert join([a, Tensor(np.zeros((2, 1)))]).shape == (2, 4)
