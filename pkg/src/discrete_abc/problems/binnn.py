"""Binary neural networks with polar weights, sampled as bit vectors.

Weights are stored as bits, bit ``b`` standing for the weight ``2b - 1``.
The layout for a net with ``input_dim`` inputs and ``hidden`` hidden units
is layer one row-major (bit ``j * input_dim + d`` connects input ``d`` to
hidden unit ``j``) followed by the ``hidden`` output weights.  Hidden units
use a hard sign with ``sign(0) = +1``; the output label is 1 when the output
logit is non-negative.  There are no biases.
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ..bitstate import BitVector, DimensionError, RngStream, bernoulli_vector

__all__ = [
    "BinNetSpec",
    "BinNNProblem",
    "LabeledDataset",
    "binnn_error",
    "binnn_predict",
    "boltzmann_bit_prob",
    "boltzmann_log_prior",
    "ensemble_vote",
    "load_idx",
    "load_mnist_binary",
    "polarize_images",
    "synthetic_polar_dataset",
    "teacher_weights",
    "write_idx",
]


@dataclass(frozen=True)
class BinNetSpec:
    """Shape of a single-output binary net."""

    input_dim: int
    hidden: int
    outputs: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden < 1:
            raise ValueError("input_dim and hidden must be positive")
        if self.outputs != 1:
            raise ValueError("only single-output nets are supported")

    @property
    def dim(self) -> int:
        return self.input_dim * self.hidden + self.hidden

    def unpack(self, weights: BitVector) -> tuple[np.ndarray, np.ndarray]:
        """Polar weight matrices ``(W1 of shape (hidden, input_dim), w2 of shape (hidden,))``."""
        if weights.dim != self.dim:
            raise DimensionError(f"weights have dim {weights.dim}, net needs {self.dim}")
        polar = 2.0 * weights.to_array() - 1.0
        split = self.input_dim * self.hidden
        return polar[:split].reshape(self.hidden, self.input_dim), polar[split:]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Polar inputs in {-1, +1} with binary labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ValueError(f"inputs must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{x.shape[0]} inputs but labels of shape {y.shape}")
        if not np.isin(x, (-1.0, 1.0)).all():
            raise ValueError("inputs must be polar (-1/+1)")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.uint8))

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.inputs[idx], self.labels[idx])


def _forward(spec: BinNetSpec, weights: BitVector, inputs: np.ndarray) -> np.ndarray:
    w1, w2 = spec.unpack(weights)
    if inputs.shape[-1] != spec.input_dim:
        raise DimensionError(f"inputs have {inputs.shape[-1]} features, net expects {spec.input_dim}")
    h = inputs @ w1.T
    a = np.where(h >= 0.0, 1.0, -1.0)
    return a @ w2


def binnn_predict(spec: BinNetSpec, weights: BitVector, inputs) -> Union[int, np.ndarray]:
    """Predicted label(s) for one polar input vector or a batch of rows."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        return int(_forward(spec, weights, x[None, :])[0] >= 0.0)
    return (_forward(spec, weights, x) >= 0.0).astype(np.uint8)


def binnn_error(spec: BinNetSpec, weights: BitVector, dataset: LabeledDataset) -> float:
    """Fraction of misclassified examples."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pred = binnn_predict(spec, weights, dataset.inputs)
    return float(np.count_nonzero(pred != dataset.labels)) / len(dataset)


def boltzmann_log_prior(x: BitVector) -> float:
    """Unnormalized log prior ``-popcount(x) / dim``; favours few +1 weights."""
    return -x.popcount() / x.dim


def boltzmann_bit_prob(dim: int) -> float:
    """Per-bit probability of a 1 when the Boltzmann prior is normalized."""
    return 1.0 / (1.0 + math.exp(1.0 / dim))


def ensemble_vote(spec: BinNetSpec, models: Iterable[BitVector], dataset: LabeledDataset) -> float:
    """Misclassification fraction of the per-example majority label; ties go to 1."""
    models = list(models)
    if not models:
        raise ValueError("empty ensemble")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    votes = np.zeros(len(dataset), dtype=np.int64)
    for w in models:
        votes += binnn_predict(spec, w, dataset.inputs)
    majority = (2 * votes >= len(models)).astype(np.uint8)
    return float(np.count_nonzero(majority != dataset.labels)) / len(dataset)


# --- data -------------------------------------------------------------------


def synthetic_polar_dataset(
    input_dim: int, n: int, rng: RngStream, *, teacher: Optional[np.ndarray] = None
) -> tuple[LabeledDataset, np.ndarray]:
    """Uniform polar inputs labelled by a polar linear teacher (``w . x >= 0`` is 1).

    Such labels are exactly representable by any net with at least one hidden
    unit: copy the teacher into every hidden row and set all output weights
    to +1.  Returns the dataset and the teacher.
    """
    if teacher is None:
        teacher = 2.0 * (rng.uniforms(input_dim) < 0.5) - 1.0
    teacher = np.asarray(teacher, dtype=float)
    if teacher.shape != (input_dim,):
        raise DimensionError(f"teacher must have shape ({input_dim},)")
    inputs = 2.0 * (rng.uniforms(n * input_dim) < 0.5).reshape(n, input_dim) - 1.0
    labels = (inputs @ teacher >= 0.0).astype(np.uint8)
    return LabeledDataset(inputs, labels), teacher


def teacher_weights(spec: BinNetSpec, teacher: np.ndarray) -> BitVector:
    """Net weights reproducing a polar linear teacher exactly."""
    bits = np.concatenate([np.tile(np.asarray(teacher) > 0, spec.hidden), np.ones(spec.hidden, bool)])
    return BitVector.from_array(bits.astype(np.uint8))


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _open(path, mode):
    path = Path(path)
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def load_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzipped) into an array."""
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: bad IDX magic")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise ValueError(f"{path}: unknown IDX element type {code:#x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = np.dtype(_IDX_TYPES[code])
    count = int(np.prod(shape)) if shape else 1
    if len(raw) - header != count * dtype.itemsize:
        raise ValueError(f"{path}: payload size does not match shape {shape}")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(shape).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    a = np.asarray(array)
    codes = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}
    code = codes.get(a.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"dtype {a.dtype} has no IDX code")
    header = bytes([0, 0, code, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    with _open(path, "wb") as f:
        f.write(header + a.astype(_IDX_TYPES[code]).tobytes())


def polarize_images(images, size: int = 14, threshold: float = 127.5) -> np.ndarray:
    """Bilinear resize of square greyscale images, then ``> threshold`` maps to +1."""
    from scipy.ndimage import zoom

    imgs = np.asarray(images, dtype=float)
    if imgs.ndim != 3 or imgs.shape[1] != imgs.shape[2]:
        raise ValueError(f"expected (n, side, side) images, got {imgs.shape}")
    factor = size / imgs.shape[1]
    small = zoom(imgs, (1.0, factor, factor), order=1, mode="nearest", grid_mode=True)
    return np.where(small > threshold, 1.0, -1.0).reshape(len(imgs), size * size)


def load_mnist_binary(
    image_path, label_path, digits: Sequence[int] = (0, 1), size: int = 14, threshold: float = 127.5
) -> LabeledDataset:
    """Two-digit subset of an IDX image/label pair; label 1 marks ``digits[1]``."""
    images, labels = load_idx(image_path), load_idx(label_path)
    if len(images) != len(labels):
        raise ValueError("image and label counts differ")
    lo, hi = digits
    keep = (labels == lo) | (labels == hi)
    return LabeledDataset(polarize_images(images[keep], size, threshold), (labels[keep] == hi).astype(np.uint8))


# --- problem ----------------------------------------------------------------


class BinNNProblem:
    """Likelihood-free training of a binary net.

    The simulator is the deterministic forward pass over the training inputs
    and the distance is the classification error against the training labels.
    """

    def __init__(self, spec: BinNetSpec, train: LabeledDataset, test: Optional[LabeledDataset] = None):
        if train.input_dim != spec.input_dim:
            raise DimensionError("training inputs do not match the net's input_dim")
        if test is not None and test.input_dim != spec.input_dim:
            raise DimensionError("test inputs do not match the net's input_dim")
        self.spec = spec
        self.train = train
        self.test = test
        self.observed = train.labels
        self._p1 = boltzmann_bit_prob(spec.dim)

    @classmethod
    def synthetic(cls, input_dim: int, hidden: int, n_train: int, rng: RngStream, n_test: int = 0):
        spec = BinNetSpec(input_dim, hidden)
        data, teacher = synthetic_polar_dataset(input_dim, n_train + n_test, rng)
        train = data.subset(slice(0, n_train))
        test = data.subset(slice(n_train, None)) if n_test else None
        return cls(spec, train, test)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def sample_prior(self, rng: RngStream) -> BitVector:
        return bernoulli_vector(self.spec.dim, self._p1, rng)

    def log_prior(self, x: BitVector) -> float:
        return boltzmann_log_prior(x)

    def simulate(self, x: BitVector, rng: RngStream) -> np.ndarray:
        return binnn_predict(self.spec, x, self.train.inputs)

    def distance(self, y: np.ndarray, y_data: np.ndarray) -> float:
        return float(np.count_nonzero(y != y_data)) / y_data.shape[0]

    def error(self, x: BitVector) -> float:
        return binnn_error(self.spec, x, self.train)

    def test_error(self, x: BitVector) -> float:
        if self.test is None:
            raise ValueError("problem has no test set")
        return binnn_error(self.spec, x, self.test)
