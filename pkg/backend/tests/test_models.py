"""
PNN, DeepFM, xDeepFM and DIFM forwards, special cases and gradient checks
"""

import numpy as np
import pytest
from scipy.special import expit

from app.autodiff import GradTape, Tensor, finite_difference_check, grad
from app.autodiff import ops
from app.core.errors import ContractViolation
from app.models import DIFM, PNN, DeepFM, XDeepFM, build_model
from app.models.layers import fm_second_order
from app.schemas.config import Architecture

from conftest import random_inputs, small_model_config

VOCAB_SIZES = [4, 3, 5]
ARCHITECTURES = [a.value for a in Architecture]


def _model(architecture, num_numeric=2, seed=0, dtype=np.float64, **overrides):
    return build_model(small_model_config(architecture, **overrides), VOCAB_SIZES, num_numeric, seed=seed, dtype=dtype)


def _zero(model, prefix):
    for name, tensor in model.params.items():
        if name.startswith(prefix):
            tensor.data[...] = 0.0


@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_outputs_are_probabilities(architecture, rng):
    model = _model(architecture, dtype=np.float32)
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 64, 2)
    logits = model.forward(categorical, numeric)
    assert logits.shape == (64, 1)
    probs = model.predict_proba(categorical, numeric)
    assert probs.shape == (64,)
    assert ((probs > 0.0) & (probs < 1.0)).all()


def test_registry_builds_each_architecture():
    expected = {"pnn": PNN, "deepfm": DeepFM, "xdeepfm": XDeepFM, "difm": DIFM}
    for architecture, cls in expected.items():
        assert type(_model(architecture)) is cls


def test_wrong_config_is_rejected():
    with pytest.raises(ContractViolation):
        PNN(small_model_config("deepfm"), VOCAB_SIZES)


def test_input_shape_contract(rng):
    model = _model("deepfm")
    with pytest.raises(ContractViolation):
        model.forward(np.zeros((2, 2), dtype=np.int64), np.zeros((2, 2)))
    with pytest.raises(ContractViolation):
        model.forward(np.zeros((2, 3), dtype=np.int64), None)


def test_pnn_zero_network_gives_half(rng):
    model = _model("pnn")
    _zero(model, "mlp/")
    _zero(model, "head/bias")
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 8, 2)
    np.testing.assert_allclose(model.predict_proba(categorical, numeric), 0.5)


def test_pnn_product_vector_has_pair_count(rng):
    model = _model("pnn", num_numeric=0)
    assert model.num_pairs == 3
    embeddings = model.embed(random_inputs(rng, VOCAB_SIZES, 5)[0])
    assert model.product_layer(embeddings, None).shape == (5, 3 * 3 + 3)


def test_deepfm_collapses_to_bias(rng):
    model = _model("deepfm")
    _zero(model, "embedding/")
    _zero(model, "mlp/")
    model.head_bias.data[...] = 0.7
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 8, 2)
    np.testing.assert_allclose(model.predict_proba(categorical, numeric), expit(0.7), rtol=1e-12)


def test_deepfm_components_share_embeddings(rng):
    model = _model("deepfm", activation="tanh")
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 6, 2)
    table = model.params["embedding/field_0"]
    gradients = []
    for part in (1, 2):
        with GradTape() as tape:
            tape.watch({"embedding/field_0": table})
            embeddings = model.embed(categorical)
            weights = model.field_weights(categorical)
            parts = model.components(embeddings, weights, Tensor(numeric), False, None)
            out = ops.reduce_sum(parts[part])
        gradients.append(grad(tape, out)["embedding/field_0"].data)
    row = categorical[0, 0]
    assert np.abs(gradients[0][row]).sum() > 0.0
    assert np.abs(gradients[1][row]).sum() > 0.0


def test_deepfm_equals_sum_of_terms(rng):
    model = _model("deepfm", num_numeric=0)
    for table in model.weights:
        table.weight.data[...] = rng.normal(size=table.weight.shape)
    categorical, _, _ = random_inputs(rng, VOCAB_SIZES, 4)
    embeddings = model.embed(categorical)
    linear = model.field_weights(categorical).data.sum(axis=1)
    fm = fm_second_order(embeddings).data[:, 0]
    deep = model.mlp(Tensor(embeddings.data.reshape(4, -1))).data @ model.head_kernel.data[2:, 0]
    expected = linear + fm + deep + model.head_bias.data[0]
    np.testing.assert_allclose(model.forward(categorical).data[:, 0], expected, atol=1e-10)


def test_xdeepfm_pools_cin_rows(rng):
    model = _model("xdeepfm", num_numeric=0, cin_layer_sizes=[2])
    categorical, _, _ = random_inputs(rng, VOCAB_SIZES, 3)
    embeddings = model.embed(categorical)
    pooled = model.cin(embeddings).data
    e = embeddings.data
    w = model.params["cin/layer_0"].data
    m = len(VOCAB_SIZES)
    for b in range(3):
        for h in range(2):
            naive = sum(w[h, i * m + j] * e[b, i] * e[b, j] for i in range(m) for j in range(m))
            assert pooled[b, h] == pytest.approx(naive.sum(), abs=1e-10)


def test_xdeepfm_zero_head_gives_half(rng):
    model = _model("xdeepfm")
    _zero(model, "head/")
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 8, 2)
    np.testing.assert_allclose(model.predict_proba(categorical, numeric), 0.5)


def test_xdeepfm_cin_widths(rng):
    model = _model("xdeepfm", cin_layer_sizes=[3, 2])
    assert model.params["cin/layer_0"].shape == (3, 9)
    assert model.params["cin/layer_1"].shape == (2, 9)
    assert model.head_kernel.shape == (1 + 5 + 4, 1)


def test_difm_unit_factors_give_plain_fm(rng, monkeypatch):
    model = _model("difm", num_numeric=0)
    for table in model.weights:
        table.weight.data[...] = rng.normal(size=table.weight.shape)
    model.head_bias.data[...] = -0.3
    categorical, _, _ = random_inputs(rng, VOCAB_SIZES, 5)
    monkeypatch.setattr(
        model, "input_aware_factors", lambda e, numeric, training=False, rng=None: Tensor(np.ones((5, 3)))
    )
    embeddings = model.embed(categorical)
    plain = model.field_weights(categorical).data.sum(axis=1) + fm_second_order(embeddings).data[:, 0] - 0.3
    np.testing.assert_allclose(model.predict_proba(categorical), expit(plain), rtol=1e-10)


def test_difm_zero_factors_give_bias(rng, monkeypatch):
    model = _model("difm", num_numeric=0)
    for table in model.weights:
        table.weight.data[...] = rng.normal(size=table.weight.shape)
    model.head_bias.data[...] = 0.4
    categorical, _, _ = random_inputs(rng, VOCAB_SIZES, 5)
    monkeypatch.setattr(
        model, "input_aware_factors", lambda e, numeric, training=False, rng=None: Tensor(np.zeros((5, 3)))
    )
    np.testing.assert_allclose(model.predict_proba(categorical), expit(0.4), rtol=1e-12)


def test_difm_factors_are_per_field(rng):
    model = _model("difm")
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 7, 2)
    factors = model.input_aware_factors(model.embed(categorical), Tensor(numeric))
    assert factors.shape == (7, 3)


def test_difm_defaults_to_tanh():
    model = _model("difm")
    assert model.mlp.activation is ops.tanh


def _gradcheck(model, rng, batch=4, training=False):
    categorical, numeric, labels = random_inputs(rng, VOCAB_SIZES, batch, model.num_numeric)
    with GradTape() as tape:
        tape.watch(model.params)
        logits = model.forward(categorical, numeric, training=training, rng=rng)
        loss = ops.binary_cross_entropy_with_logits(logits, labels)
    return finite_difference_check(tape, loss, tolerance=1e-3, max_entries=12)


@pytest.mark.parametrize("architecture", ARCHITECTURES)
def test_full_model_gradients(architecture):
    for seed in range(20):
        model = _model(architecture, seed=seed, activation="tanh", dropout=0.0)
        report = _gradcheck(model, np.random.default_rng(seed))
        assert report.passed, f"{architecture} seed={seed} failures={sorted(report.failures())}"


def test_gradients_through_dropout():
    model = _model("xdeepfm", activation="tanh", dropout=0.5)
    assert _gradcheck(model, np.random.default_rng(3), training=True).passed


@pytest.mark.parametrize("architecture", ["xdeepfm", "difm"])
def test_dropout_only_in_training(architecture, rng):
    model = _model(architecture)
    assert model.config.dropout == 0.5
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 16, 2)
    eval_a = model.forward(categorical, numeric).data
    eval_b = model.forward(categorical, numeric).data
    train = model.forward(categorical, numeric, training=True, rng=np.random.default_rng(0)).data
    np.testing.assert_array_equal(eval_a, eval_b)
    assert not np.allclose(train, eval_a)


def test_same_seed_same_parameters():
    a = _model("difm", seed=5).state_dict()
    b = _model("difm", seed=5).state_dict()
    assert list(a) == list(b)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_state_dict_round_trip(rng):
    source = _model("xdeepfm", seed=1)
    target = _model("xdeepfm", seed=2)
    target.load_state_dict(source.state_dict())
    categorical, numeric, _ = random_inputs(rng, VOCAB_SIZES, 8, 2)
    np.testing.assert_array_equal(source.predict_proba(categorical, numeric), target.predict_proba(categorical, numeric))


def test_state_dict_mismatch(rng):
    state = _model("deepfm").state_dict()
    with pytest.raises(ContractViolation):
        _model("pnn").load_state_dict(state)
    state["head/bias"] = np.zeros(2)
    with pytest.raises(ContractViolation):
        _model("deepfm").load_state_dict(state)


def test_linear_weights_start_at_zero():
    model = _model("deepfm")
    for name, tensor in model.params.items():
        if name.startswith("linear/"):
            assert not tensor.data.any()
    # linear and FM slots enter the logit unscaled
    np.testing.assert_array_equal(model.head_kernel.data[:2, 0], [1.0, 1.0])
