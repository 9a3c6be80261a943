"""One-hidden-layer multi-label MLP decoder for wave fingerprints, written in numpy."""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._seeding import derive_seed
from ._validation import ParameterError, check_count, check_positive
from .localize import (
    BruteForceLocalizer,
    Grid,
    ObjectModel,
    Scene,
    calibrate,
    measure,
    sample_scenes,
    scenes_to_multihot,
    success_rate,
    synthesize_measurements,
)

__all__ = [
    "MlpModel",
    "TrainSpec",
    "TrainingDivergedError",
    "features",
    "forward",
    "loss_and_grads",
    "train",
    "decode_topk",
    "MLPLocalizer",
    "SweepCell",
    "sweep_localization",
    "write_heatmap_csv",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "riscatter.mlp"
MODEL_VERSION = 1
PARAM_BLOCKS = ("W1", "b1", "W2", "b2")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss!r}")
        self.epoch = epoch
        self.loss = loss


@dataclass(eq=False)
class MlpModel:
    """Weights of ``sigmoid(W2 relu(W1 z + b1) + b2)`` with ``z = (x - x_mean) / x_scale``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape[1] != h or self.b2.shape != (self.W2.shape[0],):
            raise ParameterError("inconsistent MLP parameter shapes")
        self.x_mean = np.zeros(d) if self.x_mean is None else np.asarray(self.x_mean, dtype=float)
        self.x_scale = np.ones(d) if self.x_scale is None else np.asarray(self.x_scale, dtype=float)
        for name in PARAM_BLOCKS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterError(f"{name} has non-finite entries")

    @classmethod
    def initialize(cls, n_inputs, n_outputs, n_hidden=256, seed=0):
        """He-normal hidden layer, Glorot-normal output layer, zero biases."""
        rng = np.random.default_rng(seed)
        W1 = rng.standard_normal((n_hidden, n_inputs)) * math.sqrt(2.0 / n_inputs)
        W2 = rng.standard_normal((n_outputs, n_hidden)) * math.sqrt(2.0 / (n_hidden + n_outputs))
        return cls(W1, np.zeros(n_hidden), W2, np.zeros(n_outputs))

    @property
    def n_inputs(self):
        return self.W1.shape[1]

    @property
    def n_hidden(self):
        return self.W1.shape[0]

    @property
    def n_outputs(self):
        return self.W2.shape[0]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_BLOCKS}

    def with_params(self, params):
        return MlpModel(params["W1"], params["b1"], params["W2"], params["b2"], self.x_mean, self.x_scale)


def features(measurements):
    """Stack real and imaginary parts: ``(n, M)`` complex -> ``(n, 2M)`` real."""
    z = np.asarray(measurements)
    if np.iscomplexobj(z) or z.dtype == complex:
        return np.concatenate([z.real, z.imag], axis=-1)
    return np.asarray(z, dtype=float)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _standardize(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_inputs:
        raise ParameterError(f"input has {x.shape[-1]} features, model expects {model.n_inputs}")
    return (x - model.x_mean) / model.x_scale


def forward(model: MlpModel, x):
    """Sigmoid outputs for one input vector or a batch (rows)."""
    z = _standardize(model, x)
    hidden = np.maximum(z @ model.W1.T + model.b1, 0.0)
    return _sigmoid(hidden @ model.W2.T + model.b2)


def loss_and_grads(model: MlpModel, X, Y):
    """Mean binary cross-entropy over samples and outputs, and its parameter gradients.

    ``X`` is raw (unstandardized) input; gradients are w.r.t. ``W1, b1, W2, b2``.
    """
    Z = _standardize(model, np.atleast_2d(X))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    pre = Z @ model.W1.T + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.W2.T + model.b2
    # log(1 + e^l) - y l, computed without overflow
    loss = float(np.mean(np.logaddexp(0.0, logits) - Y * logits))
    d_logits = (_sigmoid(logits) - Y) / Y.size
    grads = {
        "W2": d_logits.T @ hidden,
        "b2": d_logits.sum(axis=0),
    }
    d_pre = (d_logits @ model.W2) * (pre > 0)
    grads["W1"] = d_pre.T @ Z
    grads["b1"] = d_pre.sum(axis=0)
    return loss, grads


@dataclass(frozen=True)
class TrainSpec:
    n_train_scenes: int = 10000
    n_val_scenes: int = 1000
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-2
    momentum: float = 0.9
    optimizer_seed: int = 0
    noise_snr_db: float = 30.0
    k: int = 3
    n_hidden: int = 256

    def validate(self):
        check_count("n_train_scenes", self.n_train_scenes, minimum=1)
        check_count("n_val_scenes", self.n_val_scenes, minimum=0)
        check_count("epochs", self.epochs, minimum=1)
        check_count("batch_size", self.batch_size, minimum=1)
        check_positive("learning_rate", self.learning_rate)
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")
        check_count("k", self.k, minimum=1)
        check_count("n_hidden", self.n_hidden, minimum=1)
        return self

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _unchecked(model, params):
    out = copy.copy(model)
    out.W1, out.b1, out.W2, out.b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    return out


def _sgd(model, inputs_for_epoch, Y, epochs, batch_size, learning_rate, momentum, rng, X_val=None, Y_val=None):
    """Mini-batch gradient descent with heavy-ball momentum; returns per-epoch losses."""
    params = {k: v.copy() for k, v in model.params().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    history = {"train_loss": [], "val_loss": []}
    n = Y.shape[0]
    for epoch in range(epochs):
        X = inputs_for_epoch(epoch)
        order = rng.permutation(n)
        loss = math.nan
        # overflow surfaces as a non-finite loss below
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                _, grads = loss_and_grads(_unchecked(model, params), X[idx], Y[idx])
                for k in params:
                    velocity[k] = momentum * velocity[k] - learning_rate * grads[k]
                    params[k] = params[k] + velocity[k]
            if all(np.all(np.isfinite(v)) for v in params.values()):
                current = model.with_params(params)
                loss = loss_and_grads(current, X, Y)[0]
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history["train_loss"].append(loss)
        if X_val is not None and len(X_val):
            history["val_loss"].append(loss_and_grads(current, X_val, Y_val)[0])
    return model.with_params(params), history


def _normalization(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def train(dictionary, spec: TrainSpec = TrainSpec()):
    """Train on scenes synthesized by superposing the dictionary's fingerprints.

    Training scenes are uniform over ``k``-subsets; noise at ``noise_snr_db`` is
    redrawn every epoch. Returns ``(model, history)`` with per-epoch
    ``train_loss`` and ``val_loss``.
    """
    spec.validate()
    seed = spec.optimizer_seed
    n_pos = dictionary.n_positions
    scenes = sample_scenes(n_pos, spec.k, spec.n_train_scenes, derive_seed(seed, "train-scenes"))
    Y = scenes_to_multihot(scenes, n_pos)
    noise_rng = np.random.default_rng(derive_seed(seed, "train-noise"))

    first = features(synthesize_measurements(dictionary, scenes, spec.noise_snr_db, noise_rng))

    def inputs_for_epoch(epoch):
        if epoch == 0:
            return first
        return features(synthesize_measurements(dictionary, scenes, spec.noise_snr_db, noise_rng))

    mean, scale = _normalization(first)
    model = MlpModel.initialize(2 * dictionary.m_configs, n_pos, spec.n_hidden, derive_seed(seed, "init"))
    model.x_mean, model.x_scale = mean, scale

    val_scenes = sample_scenes(n_pos, spec.k, spec.n_val_scenes, derive_seed(seed, "val-scenes"))
    X_val = features(synthesize_measurements(dictionary, val_scenes, spec.noise_snr_db,
                                             np.random.default_rng(derive_seed(seed, "val-noise"))))
    Y_val = scenes_to_multihot(val_scenes, n_pos)
    return _sgd(model, inputs_for_epoch, Y, spec.epochs,
                spec.batch_size, spec.learning_rate, spec.momentum,
                np.random.default_rng(derive_seed(seed, "shuffle")), X_val, Y_val)


def _topk(outputs, k):
    # stable sort on negated scores: equal scores keep index order
    return np.sort(np.argsort(-np.asarray(outputs), kind="stable")[..., :k], axis=-1)


def decode_topk(model: MlpModel, measurement, k):
    """Scene made of the ``k`` most active outputs; ties resolved by lower index."""
    out = forward(model, features(np.asarray(measurement)[None, ...] if np.ndim(measurement) == 1 else measurement))
    return Scene(_topk(out[0], k))


class MLPLocalizer(ClassifierMixin, BaseEstimator):
    """Multi-label fingerprint decoder with the ``input -> n_hidden ReLU -> sigmoid`` layout.

    ``X`` may be complex measurements ``(n, M)`` or their stacked real features
    ``(n, 2M)``; ``y`` is a multi-hot ``(n, n_positions)`` matrix. ``predict``
    returns the top-``k`` multi-hot indicator.
    """

    def __init__(self, k=3, n_hidden=256, epochs=40, batch_size=64, learning_rate=1e-2, momentum=0.9,
                 random_state=0):
        self.k = k
        self.n_hidden = n_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state

    def fit(self, X, y):
        X = features(X)
        Y = np.asarray(y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise ParameterError("y must be a multi-hot matrix with one row per sample")
        seed = 0 if self.random_state is None else int(self.random_state)
        model = MlpModel.initialize(X.shape[1], Y.shape[1], self.n_hidden, derive_seed(seed, "init"))
        model.x_mean, model.x_scale = _normalization(X)
        self.model_, self.loss_history_ = _sgd(model, lambda e: X, Y, self.epochs, self.batch_size,
                                               self.learning_rate, self.momentum,
                                               np.random.default_rng(derive_seed(seed, "shuffle")))
        self.classes_ = np.arange(Y.shape[1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, features(X))

    def predict_scenes(self, X):
        return [Scene(row) for row in _topk(self.predict_proba(X), self.k)]

    def predict(self, X):
        return scenes_to_multihot(self.predict_scenes(X), self.model_.n_outputs)

    def score(self, X, y):
        truth = [np.flatnonzero(row) for row in np.asarray(y)]
        return float(np.mean([success_rate(d, t) for d, t in zip(self.predict_scenes(X), truth)]))


@dataclass(frozen=True)
class SweepCell:
    m_configs: int
    snr_db: float
    decoder: str
    mean_success_rate: float
    half_width: float
    n_scenes: int
    scene_rates: tuple = ()


def _evaluate_cell(ensemble, grid, object_model, m, snr, scenes, seed, decoders, train_spec, f0):
    dictionary = calibrate(ensemble, grid, object_model, m, f0, derive_seed(seed, "configs"))
    X = np.array([measure(ensemble, dictionary, s, snr, derive_seed(seed, "eval-noise", i))
                  for i, s in enumerate(scenes)])
    k = len(scenes[0])
    cells = []
    for name in decoders:
        if name == "brute":
            decoded = BruteForceLocalizer(k).fit(dictionary).predict_scenes(X)
        elif name == "mlp":
            spec = TrainSpec(**{**asdict(train_spec), "noise_snr_db": snr, "k": k})
            model, _ = train(dictionary, spec)
            decoded = [Scene(r) for r in _topk(forward(model, features(X)), k)]
        else:
            raise ParameterError(f"unknown decoder {name!r}")
        rates = np.array([success_rate(d, t) for d, t in zip(decoded, scenes)])
        half = 1.96 * rates.std(ddof=1) / math.sqrt(rates.size) if rates.size > 1 else math.inf
        cells.append(SweepCell(m, float(snr), name, float(rates.mean()), float(half), rates.size,
                               tuple(float(r) for r in rates)))
    return cells


def sweep_localization(ensemble, grid: Grid, m_values, snr_values, n_eval_scenes=100, seed=0, decoders=("mlp",),
               train_spec: TrainSpec = TrainSpec(), object_model: ObjectModel = ObjectModel(), k=3, f0=None,
               executor=None) -> List[SweepCell]:
    """Mean success rate over a grid of (number of configurations, SNR) cells.

    Every cell calibrates its own dictionary (the configuration sequence is
    shared, so smaller ``M`` uses a prefix), trains when the MLP decoder is
    requested, and evaluates the same seeded scenes with per-scene noise seeds.
    Cells are independent and may run on ``executor``; output order is fixed.
    """
    m_values = [check_count("m_configs", m, minimum=1) for m in m_values]
    scenes = sample_scenes(grid.n_positions, k, check_count("n_eval_scenes", n_eval_scenes, minimum=1),
                           derive_seed(seed, "eval-scenes"))
    jobs = [(m, float(s)) for m in m_values for s in snr_values]

    def run(job):
        return _evaluate_cell(ensemble, grid, object_model, job[0], job[1], scenes, seed, decoders, train_spec, f0)

    results = list(executor.map(run, jobs)) if executor is not None else [run(j) for j in jobs]
    return [cell for cells in results for cell in cells]


def write_heatmap_csv(cells, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m_configs", "snr_db", "mean_success_rate", "ci95_half_width", "decoder_label"])
        for c in cells:
            writer.writerow([c.m_configs, repr(c.snr_db), repr(c.mean_success_rate), repr(c.half_width), c.decoder])


def save_model(model: MlpModel, path):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_inputs": model.n_inputs,
        "n_hidden": model.n_hidden,
        "n_outputs": model.n_outputs,
        "x_mean": model.x_mean.tolist(),
        "x_scale": model.x_scale.tolist(),
    }
    for name in PARAM_BLOCKS:
        doc[name] = getattr(model, name).ravel(order="C").tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ParameterError(f"{path}: not a version-{MODEL_VERSION} MLP model")
    d, h, o = doc["n_inputs"], doc["n_hidden"], doc["n_outputs"]
    return MlpModel(np.reshape(doc["W1"], (h, d)), np.asarray(doc["b1"]), np.reshape(doc["W2"], (o, h)),
                    np.asarray(doc["b2"]), np.asarray(doc["x_mean"]), np.asarray(doc["x_scale"]))
