import struct

import numpy as np
import pytest

import superacc.optim as optim_mod
from superacc.landscapes import finite_diff_gradient
from superacc.mlp import (
    BadMagicError,
    CountMismatchError,
    LabeledDataset,
    MlpParams,
    MlpSpec,
    TruncatedFileError,
    as_landscape,
    evaluate,
    forward,
    init_params,
    load_mnist_idx,
    loss_and_grad,
    train,
)
from superacc.optim import OptimConfig
from superacc.rng import SplitMix64

from conftest import write_idx_images, write_idx_labels


def random_batch(n, width, seed=7):
    rng = SplitMix64(seed)
    return np.array([[rng.random() for _ in range(width)] for _ in range(n)])


def one_hot(indices, width):
    out = np.zeros((len(indices), width))
    out[np.arange(len(indices)), indices] = 1.0
    return out


# -------------------------------------------------------------- IDX loading


def test_idx_crafted_pair(tmp_path):
    images = np.zeros((2, 28, 28), dtype=np.uint8)
    images[0, 3, 4] = 255
    images[1, 10, 10] = 128
    labels = np.array([7, 0], dtype=np.uint8)
    write_idx_images(tmp_path / "img", images)
    write_idx_labels(tmp_path / "lab", labels)
    ds = load_mnist_idx(tmp_path / "img", tmp_path / "lab")
    assert ds.images.shape == (2, 784)
    assert ds.labels.shape == (2, 10)
    assert ds.images[0, 3 * 28 + 4] == 1.0
    assert ds.images[1, 10 * 28 + 10] == pytest.approx(128 / 255)
    assert ds.labels[0, 7] == 1.0 and ds.labels[0].sum() == 1.0
    assert ds.labels[1, 0] == 1.0


def test_idx_bad_magic(tmp_path):
    (tmp_path / "img").write_bytes(struct.pack(">iiii", 0xBAD, 1, 28, 28) + b"\0" * 784)
    write_idx_labels(tmp_path / "lab", np.array([1], dtype=np.uint8))
    with pytest.raises(BadMagicError):
        load_mnist_idx(tmp_path / "img", tmp_path / "lab")
    # labels with an image magic
    write_idx_images(tmp_path / "img2", np.zeros((1, 28, 28), dtype=np.uint8))
    (tmp_path / "lab2").write_bytes(struct.pack(">ii", 0x00000803, 1) + b"\0")
    with pytest.raises(BadMagicError):
        load_mnist_idx(tmp_path / "img2", tmp_path / "lab2")


def test_idx_truncated(tmp_path):
    data = struct.pack(">iiii", 0x00000803, 2, 28, 28) + b"\0" * 784  # one image short
    (tmp_path / "img").write_bytes(data)
    write_idx_labels(tmp_path / "lab", np.array([1, 2], dtype=np.uint8))
    with pytest.raises(TruncatedFileError):
        load_mnist_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_count_mismatch(tmp_path):
    write_idx_images(tmp_path / "img", np.zeros((2, 28, 28), dtype=np.uint8))
    write_idx_labels(tmp_path / "lab", np.array([1, 2, 3], dtype=np.uint8))
    with pytest.raises(CountMismatchError):
        load_mnist_idx(tmp_path / "img", tmp_path / "lab")


def test_digits_fixture_counts(digits_data):
    train_set, test_set = digits_data
    assert train_set.count == 5000
    assert test_set.count == 1000
    assert np.all(train_set.images >= 0) and np.all(train_set.images <= 1)
    assert np.all(train_set.labels.sum(axis=1) == 1.0)


# -------------------------------------------------------------------- init


def test_init_weight_scale():
    params = init_params(MlpSpec(layer_sizes=(784, 30, 10), seed=1))
    w = params.weights[0]
    assert w.shape == (30, 784)
    assert abs(w.std() * np.sqrt(784) - 1.0) < 0.05


def test_init_bias_scale():
    # enough bias draws for the sample std to be tight
    params = init_params(MlpSpec(layer_sizes=(20, 600, 10), seed=3))
    biases = np.concatenate([b.ravel() for b in params.biases])
    assert biases.shape == (610,)
    assert abs(biases.std() - 1.0) < 0.05


def test_init_deterministic():
    a = init_params(MlpSpec(layer_sizes=(8, 5, 3), seed=77))
    b = init_params(MlpSpec(layer_sizes=(8, 5, 3), seed=77))
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(layer_sizes=(784,), seed=1)
    with pytest.raises(ValueError):
        MlpSpec(layer_sizes=(784, 0, 10), seed=1)


# ------------------------------------------------------------- flatten form


def test_flatten_roundtrip_identity():
    spec = MlpSpec(layer_sizes=(6, 4, 3), seed=5)
    params = init_params(spec)
    flat = params.to_flat()
    assert len(flat) == spec.n_params == 6 * 4 + 4 + 4 * 3 + 3
    back = MlpParams.from_flat(spec.layer_sizes, flat)
    assert all(np.array_equal(x, y) for x, y in zip(back.weights, params.weights))
    assert all(np.array_equal(x, y) for x, y in zip(back.biases, params.biases))
    assert np.array_equal(back.to_flat(), flat)


def test_from_flat_length_check():
    with pytest.raises(ValueError):
        MlpParams.from_flat((4, 3), np.zeros(20))


# ----------------------------------------------------------------- forward


def test_forward_zero_params_gives_half():
    params = MlpParams(
        weights=[np.zeros((3, 4)), np.zeros((2, 3))],
        biases=[np.zeros(3), np.zeros(2)],
    )
    out = forward(params, random_batch(5, 4))
    assert out.shape == (5, 2)
    assert np.all(out == 0.5)


def test_forward_shape_and_range():
    params = init_params(MlpSpec(layer_sizes=(9, 6, 4), seed=2))
    out = forward(params, random_batch(7, 9))
    assert out.shape == (7, 4)
    assert np.all((out > 0) & (out < 1))


def test_forward_bias_monotonicity():
    params = init_params(MlpSpec(layer_sizes=(5, 4, 3), seed=11))
    batch = random_batch(1, 5)
    base = forward(params, batch)[0]
    params.biases[-1][1] += 0.25
    bumped = forward(params, batch)[0]
    assert bumped[1] > base[1]
    assert bumped[0] == base[0] and bumped[2] == base[2]


def test_forward_dimension_mismatch():
    params = init_params(MlpSpec(layer_sizes=(5, 4, 3), seed=11))
    with pytest.raises(ValueError):
        forward(params, random_batch(2, 6))


# ------------------------------------------------------------ loss_and_grad


def test_loss_zero_at_perfect_outputs():
    params = init_params(MlpSpec(layer_sizes=(4, 3, 2), seed=42))
    batch = random_batch(5, 4)
    targets = forward(params, batch)  # contrived: labels equal the outputs
    loss, grad = loss_and_grad(params, batch, targets)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_backprop_matches_finite_differences_432():
    spec = MlpSpec(layer_sizes=(4, 3, 2), seed=42)
    land = as_landscape(spec.layer_sizes, random_batch(5, 4), one_hot([0, 1, 0, 1, 1], 2))
    flat = init_params(spec).to_flat()
    analytic = land.gradient(flat)
    fd = finite_diff_gradient(land, flat, h=1e-5)
    assert np.max(np.abs(analytic - fd)) / np.max(np.abs(fd)) < 1e-6


def test_backprop_matches_finite_differences_deep():
    spec = MlpSpec(layer_sizes=(20, 10, 10, 5), seed=17)
    labels = one_hot([0, 1, 2, 3, 4, 0, 1, 2], 5)
    land = as_landscape(spec.layer_sizes, random_batch(8, 20, seed=3), labels)
    flat = init_params(spec).to_flat()
    analytic = land.gradient(flat)
    fd = finite_diff_gradient(land, flat, h=1e-5)
    assert np.max(np.abs(analytic - fd)) / np.max(np.abs(fd)) < 1e-6


def test_batch_loss_is_mean_of_singles():
    spec = MlpSpec(layer_sizes=(6, 4, 3), seed=9)
    params = init_params(spec)
    batch = random_batch(10, 6)
    labels = one_hot([0, 1, 2, 0, 1, 2, 0, 1, 2, 0], 3)
    total, _ = loss_and_grad(params, batch, labels)
    singles = [
        loss_and_grad(params, batch[i : i + 1], labels[i : i + 1])[0]
        for i in range(10)
    ]
    assert total == pytest.approx(np.mean(singles), abs=1e-12)


def test_loss_bounds():
    spec = MlpSpec(layer_sizes=(4, 3, 10), seed=1)
    params = init_params(spec)
    batch = random_batch(6, 4)
    labels = one_hot([0, 1, 2, 3, 4, 5], 10)
    loss, _ = loss_and_grad(params, batch, labels)
    assert 0.0 <= loss <= 5.0  # 0.5 * 10 with outputs and targets in [0,1]


def test_loss_and_grad_validation():
    params = init_params(MlpSpec(layer_sizes=(4, 3, 2), seed=1))
    with pytest.raises(ValueError):
        loss_and_grad(params, np.zeros((0, 4)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        loss_and_grad(params, random_batch(3, 4), one_hot([0, 1], 2))


# ------------------------------------------------------------- as_landscape


def test_landscape_delegates_exactly():
    spec = MlpSpec(layer_sizes=(4, 3, 2), seed=8)
    batch = random_batch(6, 4)
    labels = one_hot([0, 1, 0, 1, 0, 1], 2)
    land = as_landscape(spec.layer_sizes, batch, labels)
    flat = init_params(spec).to_flat()
    loss, grad = loss_and_grad(MlpParams.from_flat(spec.layer_sizes, flat), batch, labels)
    assert land.value(flat) == loss
    assert np.array_equal(land.gradient(flat), grad)
    assert land.dim == spec.n_params


def test_minibatch_gradients_average_to_full():
    spec = MlpSpec(layer_sizes=(4, 3, 2), seed=8)
    batch = random_batch(8, 4)
    labels = one_hot([0, 1] * 4, 2)
    flat = init_params(spec).to_flat()
    full = as_landscape(spec.layer_sizes, batch, labels).gradient(flat)
    parts = [
        as_landscape(spec.layer_sizes, batch[i : i + 2], labels[i : i + 2]).gradient(flat)
        for i in range(0, 8, 2)
    ]
    np.testing.assert_allclose(np.mean(parts, axis=0), full, atol=1e-12)


# ------------------------------------------------------------------- train


def test_train_full_batch_descends(digits_data):
    train_set, test_set = digits_data
    config = OptimConfig(eta=0.5, g=0.9, sigma=4.0)
    history = train(
        MlpSpec(layer_sizes=(784, 30, 10), seed=9),
        train_set,
        test_set,
        config,
        batch_size=None,
        epochs=1,
        shuffle_seed=9,
    )
    assert history.terminated == "completed"
    assert list(history.epochs) == [0, 1]
    assert history.test_loss[1] < history.test_loss[0]
    assert np.all((history.test_accuracy >= 0) & (history.test_accuracy <= 1))


def test_train_deterministic(digits_data):
    train_set, test_set = digits_data
    config = OptimConfig(eta=0.5, g=0.9, sigma=2.0)
    runs = [
        train(
            MlpSpec(layer_sizes=(784, 30, 10), seed=4),
            train_set.subset(500),
            test_set.subset(100),
            config,
            batch_size=100,
            epochs=3,
            shuffle_seed=4,
        )
        for _ in range(2)
    ]
    assert np.array_equal(runs[0].test_loss, runs[1].test_loss)
    assert np.array_equal(runs[0].test_accuracy, runs[1].test_accuracy)
    assert np.array_equal(runs[0].train_loss, runs[1].train_loss)


def test_train_minibatch_runs_and_records(digits_data):
    train_set, test_set = digits_data
    config = OptimConfig(eta=0.5, g=0.9, sigma=2.0)
    history = train(
        MlpSpec(layer_sizes=(784, 15, 15, 10), seed=5),
        train_set.subset(600),
        test_set.subset(100),
        config,
        batch_size=200,
        epochs=2,
        shuffle_seed=5,
    )
    assert history.terminated == "completed"
    assert list(history.epochs) == [0, 1, 2]


def test_train_validation(digits_data):
    train_set, test_set = digits_data
    config = OptimConfig(eta=0.5)
    spec = MlpSpec(layer_sizes=(100, 10, 10), seed=1)
    with pytest.raises(ValueError):
        train(spec, train_set, test_set, config)
    with pytest.raises(ValueError):
        train(
            MlpSpec(layer_sizes=(784, 10, 10), seed=1),
            train_set,
            test_set,
            config,
            epochs=0,
        )


def test_train_aborts_on_nonfinite(digits_data, monkeypatch):
    train_set, test_set = digits_data
    calls = {"n": 0}
    real_step = optim_mod.step

    def explode(state, landscape, config):
        calls["n"] += 1
        if calls["n"] >= 3:
            raise optim_mod.NonFiniteError("boom")
        return real_step(state, landscape, config)

    import superacc.mlp as mlp_mod

    monkeypatch.setattr(mlp_mod, "step", explode)
    config = OptimConfig(eta=0.5, g=0.9, sigma=2.0)
    history = train(
        MlpSpec(layer_sizes=(784, 10, 10), seed=2),
        train_set.subset(300),
        test_set.subset(100),
        config,
        batch_size=None,
        epochs=10,
        shuffle_seed=2,
    )
    assert history.terminated == "diverged"
    assert list(history.epochs) == [0, 1, 2]  # aborted during epoch 3


def test_evaluate_accuracy_by_argmax():
    params = MlpParams(
        weights=[np.zeros((2, 3))], biases=[np.array([1.0, -1.0])]
    )
    # outputs are always (sigmoid(1), sigmoid(-1)) -> argmax 0
    data = LabeledDataset(
        images=random_batch(4, 3), labels=one_hot([0, 0, 1, 1], 2)
    )
    loss, acc = evaluate(params, data)
    assert acc == 0.5
    assert loss > 0
