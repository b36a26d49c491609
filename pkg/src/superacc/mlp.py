"""Small sigmoid MLP with backpropagation and IDX data ingestion.

The network is exposed to the optimizer steppers as a Landscape over a
flattened parameter vector, so the exact same update rules drive the
toy landscapes and the digit-classification training runs.  Loss is the
mean over the batch of half the squared distance between the sigmoid
output and the one-hot label.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .landscapes import Landscape
from .optim import NonFiniteError, OptimConfig, OptimState, step
from .rng import SplitMix64
from .serialize import fmt_float

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10

FULL_BATCH = None


class IdxFormatError(ValueError):
    """Base class for IDX container problems."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Architecture (layer sizes, input first) plus the init seed."""

    layer_sizes: tuple
    seed: int

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def n_params(self) -> int:
        return sum(
            o * i + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )


@dataclass
class MlpParams:
    """Per-layer weights (n_out, n_in) and biases (n_out,).

    The flat form is layer-major: weights row-major, then biases, for
    each layer in order.
    """

    weights: list
    biases: list

    @property
    def layer_sizes(self) -> tuple:
        return tuple([self.weights[0].shape[1]] + [w.shape[0] for w in self.weights])

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, layer_sizes, flat: np.ndarray) -> "MlpParams":
        sizes = tuple(layer_sizes)
        flat = np.asarray(flat, dtype=float)
        weights = []
        biases = []
        offset = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = flat[offset : offset + n_out * n_in].reshape(n_out, n_in).copy()
            offset += n_out * n_in
            b = flat[offset : offset + n_out].copy()
            offset += n_out
            weights.append(w)
            biases.append(b)
        if offset != len(flat):
            raise ValueError(
                f"flat vector has {len(flat)} entries, architecture needs {offset}"
            )
        return cls(weights=weights, biases=biases)


@dataclass(frozen=True)
class LabeledDataset:
    """Images scaled to [0,1] (N x 784) with one-hot labels (N x 10)."""

    images: np.ndarray
    labels: np.ndarray

    @property
    def count(self) -> int:
        return self.images.shape[0]

    def subset(self, n: int) -> "LabeledDataset":
        return LabeledDataset(images=self.images[:n], labels=self.labels[:n])


def _read_be32(data: bytes, offset: int, path) -> int:
    if offset + 4 > len(data):
        raise TruncatedFileError(f"{path}: file ends inside the header")
    return struct.unpack(">i", data[offset : offset + 4])[0]


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Parse a big-endian IDX image/label pair into a LabeledDataset.

    Image files start with magic 0x00000803 then count/rows/cols;
    label files with 0x00000801 then count.  The two counts must agree.
    """
    with open(images_path, "rb") as fh:
        img_data = fh.read()
    with open(labels_path, "rb") as fh:
        lab_data = fh.read()

    magic = _read_be32(img_data, 0, images_path)
    if magic != IMAGE_MAGIC:
        raise BadMagicError(
            f"{images_path}: image magic is {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )
    n_images = _read_be32(img_data, 4, images_path)
    rows = _read_be32(img_data, 8, images_path)
    cols = _read_be32(img_data, 12, images_path)
    pixel_bytes = n_images * rows * cols
    if len(img_data) < 16 + pixel_bytes:
        raise TruncatedFileError(
            f"{images_path}: expected {pixel_bytes} pixel bytes, found {len(img_data) - 16}"
        )

    magic = _read_be32(lab_data, 0, labels_path)
    if magic != LABEL_MAGIC:
        raise BadMagicError(
            f"{labels_path}: label magic is {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )
    n_labels = _read_be32(lab_data, 4, labels_path)
    if len(lab_data) < 8 + n_labels:
        raise TruncatedFileError(
            f"{labels_path}: expected {n_labels} label bytes, found {len(lab_data) - 8}"
        )
    if n_images != n_labels:
        raise CountMismatchError(
            f"image count {n_images} does not match label count {n_labels}"
        )

    raw = np.frombuffer(img_data, dtype=np.uint8, count=pixel_bytes, offset=16)
    images = raw.reshape(n_images, rows * cols).astype(float) / 255.0
    digits = np.frombuffer(lab_data, dtype=np.uint8, count=n_labels, offset=8)
    labels = np.zeros((n_labels, N_CLASSES))
    labels[np.arange(n_labels), digits] = 1.0
    return LabeledDataset(images=images, labels=labels)


def init_params(spec: MlpSpec) -> MlpParams:
    """Gaussian initialization, deterministic given the seed.

    Biases have standard deviation 1; weights 1/sqrt(fan-in of their
    layer).  Draws come from one continuous polar-Gaussian stream in
    flat (layer-major, weights-then-biases) order.
    """
    rng = SplitMix64(spec.seed)
    weights = []
    biases = []
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        scale = 1.0 / np.sqrt(n_in)
        w = np.empty((n_out, n_in))
        for i in range(n_out):
            for j in range(n_in):
                w[i, j] = rng.normal() * scale
        b = np.array([rng.normal() for _ in range(n_out)])
        weights.append(w)
        biases.append(b)
    return MlpParams(weights=weights, biases=biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid exp overflow for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    return out


def forward(params: MlpParams, batch: np.ndarray) -> np.ndarray:
    """Activations of the final layer, one row per input image."""
    a = np.asarray(batch, dtype=float)
    if a.ndim != 2 or a.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"batch shape {a.shape} does not match input width {params.weights[0].shape[1]}"
        )
    for w, b in zip(params.weights, params.biases):
        a = _sigmoid(a @ w.T + b)
    return a


def loss_and_grad(params: MlpParams, images: np.ndarray, labels: np.ndarray):
    """Batch loss and flattened gradient via backpropagation.

    loss = mean over the batch of 0.5 * ||a_out - y||^2.
    """
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if images.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if images.shape[0] != labels.shape[0]:
        raise ValueError("images and labels disagree on batch size")
    n = images.shape[0]

    activations = [images]
    a = images
    for w, b in zip(params.weights, params.biases):
        a = _sigmoid(a @ w.T + b)
        activations.append(a)
    out = activations[-1]
    diff = out - labels
    loss = float(0.5 * np.sum(diff * diff) / n)

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    delta = diff * out * (1.0 - out)
    for l in range(len(params.weights) - 1, -1, -1):
        grad_w[l] = (delta.T @ activations[l]) / n
        grad_b[l] = delta.sum(axis=0) / n
        if l > 0:
            a_prev = activations[l]
            delta = (delta @ params.weights[l]) * a_prev * (1.0 - a_prev)

    parts = []
    for gw, gb in zip(grad_w, grad_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return loss, np.concatenate(parts)


def as_landscape(layer_sizes, images: np.ndarray, labels: np.ndarray) -> Landscape:
    """Expose the network loss over the given data as a Landscape."""
    sizes = tuple(layer_sizes)
    dim = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))

    def value(flat: np.ndarray) -> float:
        params = MlpParams.from_flat(sizes, flat)
        loss, _ = loss_and_grad(params, images, labels)
        return loss

    def gradient(flat: np.ndarray) -> np.ndarray:
        params = MlpParams.from_flat(sizes, flat)
        _, grad = loss_and_grad(params, images, labels)
        return grad

    arch = "-".join(str(s) for s in sizes)
    return Landscape(dim=dim, value=value, gradient=gradient, name=f"mlp({arch})")


@dataclass
class TrainHistory:
    """Per-epoch test metrics of one training run."""

    epochs: np.ndarray
    test_loss: np.ndarray
    test_accuracy: np.ndarray
    train_loss: np.ndarray
    config: OptimConfig
    spec: MlpSpec
    batch_size: Optional[int]
    shuffle_seed: int
    terminated: str = "completed"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,test_loss,test_accuracy,train_loss\n")
            for i in range(len(self.epochs)):
                fh.write(
                    ",".join(
                        [
                            str(int(self.epochs[i])),
                            fmt_float(self.test_loss[i]),
                            fmt_float(self.test_accuracy[i]),
                            fmt_float(self.train_loss[i]),
                        ]
                    )
                    + "\n"
                )


def evaluate(params: MlpParams, dataset: LabeledDataset):
    """(loss, accuracy) on a dataset; accuracy compares argmax outputs."""
    out = forward(params, dataset.images)
    diff = out - dataset.labels
    loss = float(0.5 * np.sum(diff * diff) / dataset.count)
    correct = np.argmax(out, axis=1) == np.argmax(dataset.labels, axis=1)
    return loss, float(np.mean(correct))


def train(
    spec: MlpSpec,
    train_set: LabeledDataset,
    test_set: LabeledDataset,
    config: OptimConfig,
    batch_size: Optional[int] = FULL_BATCH,
    epochs: int = 1,
    shuffle_seed: int = 0,
) -> TrainHistory:
    """Train the network, evaluating test metrics once per epoch.

    batch_size=None (FULL_BATCH) takes one optimizer step per epoch on
    the whole training set; otherwise each epoch shuffles the data
    (Fisher-Yates with the seeded generator) and takes one step per
    minibatch.  Momentum state persists across minibatches and epochs.
    Epoch 0 records the metrics of the untrained network.  A non-finite
    update aborts training and returns the history up to that point.
    """
    if spec.layer_sizes[0] != train_set.images.shape[1]:
        raise ValueError("input layer width does not match the training images")
    if spec.layer_sizes[-1] != train_set.labels.shape[1]:
        raise ValueError("output layer width does not match the label width")
    if epochs < 1:
        raise ValueError("epochs must be a positive integer")
    if batch_size is not None and batch_size < 1:
        raise ValueError("batch_size must be positive (or None for full batch)")

    sizes = spec.layer_sizes
    params = init_params(spec)
    state = OptimState.initial(params.to_flat())
    rng = SplitMix64(shuffle_seed)
    n_train = train_set.count

    epochs_out = [0]
    test_losses = []
    test_accs = []
    train_losses = []

    def record() -> None:
        p = MlpParams.from_flat(sizes, state.theta)
        tl, ta = evaluate(p, test_set)
        test_losses.append(tl)
        test_accs.append(ta)
        train_losses.append(evaluate(p, train_set)[0])

    record()
    terminated = "completed"
    for epoch in range(1, epochs + 1):
        try:
            if batch_size is None:
                landscape = as_landscape(sizes, train_set.images, train_set.labels)
                state = step(state, landscape, config)
            else:
                order = list(range(n_train))
                rng.shuffle(order)
                order = np.array(order)
                for start in range(0, n_train, batch_size):
                    idx = order[start : start + batch_size]
                    landscape = as_landscape(
                        sizes, train_set.images[idx], train_set.labels[idx]
                    )
                    state = step(state, landscape, config)
        except NonFiniteError:
            terminated = "diverged"
            break
        epochs_out.append(epoch)
        record()

    return TrainHistory(
        epochs=np.array(epochs_out),
        test_loss=np.array(test_losses),
        test_accuracy=np.array(test_accs),
        train_loss=np.array(train_losses),
        config=config,
        spec=spec,
        batch_size=batch_size,
        shuffle_seed=shuffle_seed,
        terminated=terminated,
    )
