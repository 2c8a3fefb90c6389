import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.models import (
    DenseLayer,
    GeneratorParams,
    ModelParams,
    TaskMode,
    activate,
    ensemble_logits,
    forward_features,
    generate_latent,
    init_generator,
    init_model,
    layers_from_bytes,
    layers_to_bytes,
    predict_logits,
    predict_proba,
    task_loss,
)
from fedsim.numerics import ShapeError, stream

from _gradcheck import ZOO, zoo_gradient_error
from _oracles import mlp_oracle, softmax_oracle


def zero_layers(widths):
    return tuple(DenseLayer(np.zeros((a, b)), np.zeros(b)) for a, b in zip(widths, widths[1:]))


def as_pairs(layers):
    return [(l.weight, l.bias) for l in layers]


# forward_features / predict_logits / generate_latent trio

def test_features_zero_weights():
    x = np.random.default_rng(0).normal(size=(4, 10))
    assert np.array_equal(forward_features(x, zero_layers([10, 8, 3])).data, np.zeros((4, 3)))


def test_features_identity_layer():
    x = np.random.default_rng(0).normal(size=(4, 5))
    layer = DenseLayer(np.eye(5), np.zeros(5))
    assert np.array_equal(forward_features(x, (layer,)).data, x)


def test_features_oracle():
    params = init_model(12, 4, stream(3, "t"), latent_dim=5, hidden=(7, 6))
    x = stream(4, "x").normal(size=(9, 12))
    got = forward_features(x, params.feature_extractor).data
    assert np.allclose(got, mlp_oracle(x, as_pairs(params.feature_extractor)), rtol=0, atol=1e-12)


def test_features_width_mismatch():
    with pytest.raises(ShapeError):
        forward_features(np.ones((2, 3)), zero_layers([4, 2]))


def test_logits_trio():
    z = np.random.default_rng(1).normal(size=(3, 4))
    assert np.array_equal(predict_logits(z, zero_layers([4, 3])).data, np.zeros((3, 3)))
    assert np.array_equal(predict_logits(z, (DenseLayer(np.eye(4), np.zeros(4)),)).data, z)
    params = init_model(8, 3, stream(5, "t"), latent_dim=4)
    want = mlp_oracle(z, as_pairs(params.predictor))
    assert np.allclose(predict_logits(z, params.predictor).data, want, rtol=0, atol=1e-12)
    with pytest.raises(ShapeError):
        predict_logits(np.ones((2, 5)), params.predictor)


def test_predict_proba_examples():
    z = np.ones((2, 3))
    zeros = zero_layers([3, 4])
    assert np.array_equal(predict_proba(z, zeros, TaskMode.MULTICLASS).data, np.full((2, 4), 0.25))
    assert np.array_equal(predict_proba(z, zeros, TaskMode.MULTILABEL).data, np.full((2, 4), 0.5))
    # a layer whose logits are exactly [1, 2, 3]
    fixed = (DenseLayer(np.zeros((3, 3)), np.array([1.0, 2.0, 3.0])),)
    got = predict_proba(z, fixed, TaskMode.MULTICLASS).data
    assert np.allclose(got, softmax_oracle([[1.0, 2.0, 3.0]] * 2), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_multiclass_proba_rows_sum_to_one(seed):
    params = init_model(6, 5, stream(seed, "p"), latent_dim=3, hidden=(4,))
    z = stream(seed, "z").normal(size=(7, 3)) * 10
    rows = predict_proba(z, params.predictor, TaskMode.MULTICLASS).data.sum(axis=1)
    assert np.all(np.abs(rows - 1) <= 1e-12)


def test_generate_latent_trio():
    y = np.eye(3)[[0, 2]]
    noise = np.random.default_rng(2).normal(size=(2, 4))
    zero = GeneratorParams(zero_layers([7, 5, 6]), 3, 4)
    assert np.array_equal(generate_latent(y, noise, zero).data, np.zeros((2, 6)))
    gen = init_generator(3, 6, stream(1, "g"), noise_dim=4, hidden=(5,))
    first = generate_latent(y, noise, gen).data
    assert np.array_equal(first, generate_latent(y, noise, gen).data)
    want = mlp_oracle(np.hstack([y, noise]), as_pairs(gen.layers))
    assert np.allclose(first, want, rtol=0, atol=1e-12)


def test_generate_latent_width_errors():
    gen = init_generator(3, 6, stream(1, "g"), noise_dim=4)
    with pytest.raises(ShapeError):
        generate_latent(np.eye(4)[:2], np.zeros((2, 4)), gen)
    with pytest.raises(ShapeError):
        generate_latent(np.eye(3)[:2], np.zeros((2, 5)), gen)
    with pytest.raises(ShapeError):
        generate_latent(np.eye(3)[:2], np.zeros((3, 4)), gen)


def test_generate_latent_is_pure():
    gen = init_generator(3, 6, stream(1, "g"))
    before = [a.copy() for a in gen.arrays()]
    generate_latent(np.eye(3), np.ones((3, gen.noise_dim)), gen)
    assert all(np.array_equal(a, b) for a, b in zip(before, gen.arrays()))


# ensemble

def test_ensemble_singleton():
    params = init_model(8, 3, stream(0, "m"), latent_dim=4)
    z = stream(0, "z").normal(size=(5, 4))
    assert np.array_equal(ensemble_logits(z, [params.predictor]).data, predict_logits(z, params.predictor).data)


def test_ensemble_symmetric_pair():
    a = (DenseLayer(np.zeros((2, 2)), np.array([2.0, 0.0])),)
    b = (DenseLayer(np.zeros((2, 2)), np.array([0.0, 2.0])),)
    assert np.array_equal(ensemble_logits(np.ones((1, 2)), [a, b]).data, [[1.0, 1.0]])


def test_ensemble_three_oracle():
    z = stream(9, "z").normal(size=(6, 4))
    heads = [init_model(8, 3, stream(s, "m"), latent_dim=4).predictor for s in range(3)]
    want = sum(mlp_oracle(z, as_pairs(h)) for h in heads) / 3
    assert np.allclose(ensemble_logits(z, heads).data, want, rtol=0, atol=1e-12)


def test_ensemble_mapping_order_invariant():
    z = stream(9, "z").normal(size=(6, 4))
    heads = {k: init_model(8, 3, stream(k, "m"), latent_dim=4).predictor for k in range(5)}
    shuffled = {k: heads[k] for k in [3, 0, 4, 1, 2]}
    assert np.array_equal(ensemble_logits(z, heads).data, ensemble_logits(z, shuffled).data)


def test_ensemble_errors():
    with pytest.raises(ValueError):
        ensemble_logits(np.ones((1, 2)), [])
    a = zero_layers([2, 3])
    b = zero_layers([2, 4])
    with pytest.raises(ShapeError):
        ensemble_logits(np.ones((1, 2)), [a, b])


# task loss

def test_task_loss_perfect():
    y = np.eye(4)[[0, 1, 3]]
    assert task_loss(y, y, TaskMode.MULTICLASS).item() < 1e-10
    assert task_loss(y, y, TaskMode.MULTILABEL).item() < 1e-10


def test_task_loss_closed_forms():
    c = 5
    y = np.eye(c)[[0, 4, 2]]
    assert math.isclose(task_loss(np.full((3, c), 1 / c), y, TaskMode.MULTICLASS).item(), math.log(c), rel_tol=1e-14)
    yb = np.array([[1, 0, 1], [0, 0, 1]], dtype=float)
    assert math.isclose(task_loss(np.full((2, 3), 0.5), yb, TaskMode.MULTILABEL).item(), math.log(2), rel_tol=1e-14)


def test_task_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        task_loss(np.full((2, 3), 0.5), np.zeros((2, 4)), TaskMode.MULTILABEL)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(TaskMode)))
def test_task_loss_non_negative(seed, mode):
    rng = stream(seed, "loss")
    proba = activate(rng.normal(size=(4, 3)) * 5, mode)
    y = np.eye(3)[rng.integers(0, 3, 4)] if mode is TaskMode.MULTICLASS else (rng.random((4, 3)) < 0.5) * 1.0
    assert task_loss(proba, y, mode).item() >= 0


# parameter containers

def test_model_params_invariants():
    with pytest.raises(ValueError):
        ModelParams(zero_layers([4, 6]), zero_layers([5, 2]))  # latent widths differ
    with pytest.raises(ValueError):
        ModelParams(zero_layers([4, 4]), zero_layers([4, 2]))  # d must be < D
    with pytest.raises(ValueError):
        ModelParams(zero_layers([8, 5]) + zero_layers([6, 4]), zero_layers([4, 2]))  # broken chain


def test_model_params_counts():
    params = init_model(32, 8, stream(0, "m"), latent_dim=16, hidden=(64, 64))
    assert params.num_params == (32 * 64 + 64) + (64 * 64 + 64) + (64 * 16 + 16) + (16 * 8 + 8)
    assert params.predictor_num_params == 16 * 8 + 8
    gen = init_generator(8, 16, stream(0, "g"), noise_dim=8, hidden=(64,))
    assert gen.num_params == (16 * 64 + 64) + (64 * 16 + 16)


def test_serialization_layout_and_roundtrip():
    params = init_model(6, 3, stream(0, "m"), latent_dim=2, hidden=(4,))
    blob = params.to_bytes()
    # header: count, then (in, out) per layer for each stack
    assert struct.unpack_from("<I", blob, 0) == (2,)
    assert struct.unpack_from("<IIII", blob, 4) == (6, 4, 4, 2)
    extractor_bytes = 4 + 2 * 8 + 4 * (6 * 4 + 4 + 4 * 2 + 2)
    assert struct.unpack_from("<III", blob, extractor_bytes) == (1, 2, 3)
    assert len(blob) == extractor_bytes + 4 + 8 + 4 * (2 * 3 + 3)
    back = ModelParams.from_bytes(blob)
    for a, b in zip(params.arrays(), back.arrays()):
        assert np.array_equal(a.astype(np.float32), b)
    assert back.to_bytes() == blob


def test_generator_roundtrip():
    gen = init_generator(4, 3, stream(0, "g"), noise_dim=2, hidden=(5,))
    back = GeneratorParams.from_bytes(gen.to_bytes(), 4)
    assert back.noise_dim == 2 and back.latent_dim == 3
    assert back.to_bytes() == gen.to_bytes()


def test_truncated_blob_rejected():
    blob = layers_to_bytes(zero_layers([3, 2]))
    with pytest.raises(ValueError):
        layers_from_bytes(blob[:-1])
    with pytest.raises(ValueError):
        layers_from_bytes(blob[:6])


# gradients through every network in the zoo

@pytest.mark.parametrize("kind", ZOO)
@pytest.mark.parametrize("mode", list(TaskMode))
def test_zoo_gradients(kind, mode):
    assert zoo_gradient_error(kind, mode, seed=11) < 1e-4
