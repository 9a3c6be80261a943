"""Wave-fingerprint localization of objects on a grid with random RIS configurations.

Objects block the paths tagged with their grid position. A fingerprint is the
single-frequency transmission over a fixed random sequence of RIS
configurations; calibration records only the empty scene and the single-object
scenes, and multi-object scenes are explained as superpositions of the
single-object differences.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ParameterError, check_complex_vector, check_count
from .core import PathEnsemble, transmissions

__all__ = [
    "Grid",
    "Scene",
    "ObjectModel",
    "FingerprintDictionary",
    "CalibrationWarning",
    "calibrate",
    "scene_transmissions",
    "measure",
    "add_noise",
    "synthesize_measurements",
    "subset_table",
    "brute_force_decode",
    "brute_force_decode_many",
    "success_rate",
    "sample_scenes",
    "scenes_to_multihot",
    "BruteForceLocalizer",
    "save_dictionary",
    "load_dictionary",
]

DICTIONARY_FORMAT = "riscatter.fingerprints"
DICTIONARY_VERSION = 1


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    n_positions: int = 23
    labels: Optional[tuple] = None

    def __post_init__(self):
        check_count("n_positions", self.n_positions, minimum=1)
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(f"P{i}" for i in range(self.n_positions)))
        elif len(self.labels) != self.n_positions:
            raise ParameterError("need one label per grid position")


@dataclass(frozen=True)
class Scene:
    """Set of occupied grid positions (objects are identical)."""

    occupied: tuple

    def __init__(self, occupied=(), n_positions=None):
        occ = [int(i) for i in occupied]
        if len(set(occ)) != len(occ):
            raise ParameterError(f"scene has duplicate positions: {occ}")
        if n_positions is not None and any(not 0 <= i < n_positions for i in occ):
            raise ParameterError(f"scene positions {occ} outside [0, {n_positions})")
        object.__setattr__(self, "occupied", tuple(sorted(occ)))

    def __len__(self):
        return len(self.occupied)

    def __iter__(self):
        return iter(self.occupied)

    def __contains__(self, item):
        return item in self.occupied


@dataclass(frozen=True)
class ObjectModel:
    """``blocking_factor`` multiplies a path once per occupied position it is tagged with.

    How many paths carry two tags (the deviation from exact superposition) is a
    property of the ensemble, ``EnsembleParams.nonlinearity_knob``.
    """

    blocking_factor: complex = 0.0


@dataclass(frozen=True, eq=False)
class FingerprintDictionary:
    config_sequence: np.ndarray
    f0: float
    baseline: np.ndarray
    deltas: np.ndarray
    config_seed: Optional[int] = None
    blocking_factor: complex = 0.0
    warnings: tuple = field(default=())

    @property
    def m_configs(self):
        return self.baseline.size

    @property
    def n_positions(self):
        return self.deltas.shape[0]

    def truncated(self, m):
        """First ``m`` configurations of the sequence."""
        m = check_count("m_configs", m, minimum=1)
        if m > self.m_configs:
            raise ParameterError(f"dictionary has only {self.m_configs} configurations")
        return FingerprintDictionary(self.config_sequence[:m], self.f0, self.baseline[:m], self.deltas[:, :m],
                                     self.config_seed, self.blocking_factor, self.warnings)


def _path_weights(ensemble, occupied, blocking_factor):
    occ = np.asarray(sorted(set(int(i) for i in occupied)), dtype=np.int64)
    hits = (ensemble.tags >= 0) & np.isin(ensemble.tags, occ)
    return np.power(complex(blocking_factor), hits.sum(axis=1))


def scene_transmissions(ensemble: PathEnsemble, configs, f0, occupied=(), blocking_factor=0.0):
    """Noiseless s12 at ``f0`` for each configuration with ``occupied`` positions blocked."""
    weights = _path_weights(ensemble, occupied, blocking_factor)
    return transmissions(ensemble, configs, [f0], path_weights=weights)[:, 0]


def calibrate(ensemble: PathEnsemble, grid: Grid, object_model: ObjectModel = ObjectModel(), m_configs=100,
              f0=None, seed=0) -> FingerprintDictionary:
    """Empty-scene and single-object sweeps over a seeded random configuration sequence.

    Costs ``n_positions + 1`` sweeps. Positions without any tagged path get an
    all-zero delta and are listed in ``warnings``.
    """
    m_configs = check_count("m_configs", m_configs, minimum=1)
    f0 = ensemble.f_center if f0 is None else float(f0)
    rng = np.random.default_rng(seed)
    configs = rng.integers(0, 2, (m_configs, ensemble.n_elements)).astype(bool)
    configs.flags.writeable = False
    b = complex(object_model.blocking_factor)
    baseline = scene_transmissions(ensemble, configs, f0, (), b)
    deltas = np.empty((grid.n_positions, m_configs), dtype=complex)
    tagged = set(int(t) for t in ensemble.tags[ensemble.tags >= 0].ravel())
    notes = []
    for g in range(grid.n_positions):
        deltas[g] = scene_transmissions(ensemble, configs, f0, (g,), b) - baseline
        if g not in tagged:
            notes.append(f"position {g} has no tagged paths; its fingerprint is zero")
    for note in notes:
        warnings.warn(note, CalibrationWarning, stacklevel=2)
    baseline.flags.writeable = False
    deltas.flags.writeable = False
    return FingerprintDictionary(configs, f0, baseline, deltas, int(seed), b, tuple(notes))


def add_noise(x, snr_db, rng):
    """Circular complex Gaussian noise at ``snr_db`` relative to the mean power of ``x``.

    Works row-wise on 2-D input. ``snr_db = inf`` returns ``x`` unchanged.
    """
    x = np.asarray(x, dtype=complex)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    power = np.mean(np.abs(x) ** 2, axis=-1, keepdims=True)
    var = power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + np.sqrt(var / 2.0) * noise


def measure(ensemble: PathEnsemble, dictionary: FingerprintDictionary, scene: Scene, snr_db=math.inf,
            noise_seed=0):
    """Full-model measurement of ``scene`` over the dictionary's configurations, plus noise."""
    scene = Scene(scene, dictionary.n_positions)
    clean = scene_transmissions(ensemble, dictionary.config_sequence, dictionary.f0, scene.occupied,
                                dictionary.blocking_factor)
    return add_noise(clean, snr_db, np.random.default_rng(noise_seed))


def scenes_to_multihot(scenes, n_positions):
    out = np.zeros((len(scenes), n_positions))
    for i, s in enumerate(scenes):
        out[i, list(s)] = 1.0
    return out


def synthesize_measurements(dictionary: FingerprintDictionary, scenes, snr_db, rng):
    """Measurements predicted by superposing calibrated fingerprints, plus noise."""
    labels = scenes_to_multihot(scenes, dictionary.n_positions)
    clean = dictionary.baseline[None, :] + labels @ dictionary.deltas
    return add_noise(clean, snr_db, rng)


def sample_scenes(n_positions, k, n, seed):
    """``n`` scenes drawn uniformly over all ``k``-subsets."""
    rng = np.random.default_rng(seed)
    return [Scene(rng.choice(n_positions, size=k, replace=False)) for _ in range(n)]


def subset_table(n_positions, k):
    """All ``k``-subsets in lexicographic order, shape ``(C(n, k), k)``."""
    if not 0 <= k <= n_positions:
        raise ParameterError(f"k={k} must lie in [0, {n_positions}]")
    return np.array(list(itertools.combinations(range(n_positions), k)), dtype=np.int64).reshape(-1, k)


def _subset_sums(dictionary, subsets):
    if subsets.shape[1] == 0:
        return np.zeros((1, dictionary.m_configs), dtype=complex)
    return dictionary.deltas[subsets].sum(axis=1)


def brute_force_decode_many(measurements, dictionary: FingerprintDictionary, k, subsets=None, sums=None):
    """Vectorized :func:`brute_force_decode`; returns ``(subset rows, residuals)``."""
    if subsets is None:
        subsets = subset_table(dictionary.n_positions, k)
    if sums is None:
        sums = _subset_sums(dictionary, subsets)
    y = np.atleast_2d(np.asarray(measurements, dtype=complex))
    if y.shape[1] != dictionary.m_configs:
        raise ParameterError(f"measurements must have {dictionary.m_configs} entries")
    best = np.empty(y.shape[0], dtype=np.int64)
    resid = np.empty(y.shape[0])
    for i, row in enumerate(y):
        r = np.linalg.norm((row - dictionary.baseline)[None, :] - sums, axis=1)
        best[i] = int(np.argmin(r))  # first minimum = lexicographic tie-break
        resid[i] = r[best[i]]
    return subsets[best], resid


def brute_force_decode(measurement, dictionary: FingerprintDictionary, k):
    """Best ``k``-subset explanation of ``measurement`` over all ``C(n, k)`` candidates."""
    y = check_complex_vector("measurement", measurement, dictionary.m_configs)
    rows, resid = brute_force_decode_many(y[None, :], dictionary, k)
    return Scene(rows[0]), float(resid[0])


def success_rate(decoded, truth):
    decoded, truth = set(decoded), set(truth)
    if len(decoded) != len(truth):
        raise ParameterError("decoded and true scenes must have the same size")
    if not truth:
        return 1.0
    return len(decoded & truth) / len(truth)


class BruteForceLocalizer(ClassifierMixin, BaseEstimator):
    """Nearest-superposition decoder as an estimator.

    ``fit`` takes a :class:`FingerprintDictionary`; ``predict`` maps complex
    measurements ``(n_samples, M)`` to multi-hot position indicators.
    """

    def __init__(self, k=3):
        self.k = k

    def fit(self, dictionary, y=None):
        if not isinstance(dictionary, FingerprintDictionary):
            raise ParameterError("BruteForceLocalizer.fit expects a FingerprintDictionary")
        self.dictionary_ = dictionary
        self.subsets_ = subset_table(dictionary.n_positions, self.k)
        self.sums_ = _subset_sums(dictionary, self.subsets_)
        self.classes_ = np.arange(dictionary.n_positions)
        return self

    def decode(self, X):
        check_is_fitted(self, "dictionary_")
        return brute_force_decode_many(X, self.dictionary_, self.k, self.subsets_, self.sums_)

    def predict_scenes(self, X):
        rows, _ = self.decode(X)
        return [Scene(r) for r in rows]

    def predict(self, X):
        return scenes_to_multihot(self.predict_scenes(X), self.dictionary_.n_positions)

    def score(self, X, y):
        """Mean per-position success rate against multi-hot ``y``."""
        truth = [np.flatnonzero(row) for row in np.asarray(y)]
        return float(np.mean([success_rate(d, t) for d, t in zip(self.predict_scenes(X), truth)]))


def _pairs(z):
    return [[float(v.real), float(v.imag)] for v in np.asarray(z).ravel()]


def _unpairs(rows):
    arr = np.asarray(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def save_dictionary(dictionary: FingerprintDictionary, path):
    doc = {
        "format": DICTIONARY_FORMAT,
        "version": DICTIONARY_VERSION,
        "config_seed": dictionary.config_seed,
        "m_configs": dictionary.m_configs,
        "n_positions": dictionary.n_positions,
        "f0": dictionary.f0,
        "blocking_factor": [dictionary.blocking_factor.real, dictionary.blocking_factor.imag],
        "configs": ["".join("1" if b else "0" for b in row) for row in dictionary.config_sequence],
        "baseline": _pairs(dictionary.baseline),
        "deltas": [_pairs(d) for d in dictionary.deltas],
        "warnings": list(dictionary.warnings),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_dictionary(path) -> FingerprintDictionary:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != DICTIONARY_FORMAT or doc.get("version") != DICTIONARY_VERSION:
        raise ParameterError(f"{path}: not a version-{DICTIONARY_VERSION} fingerprint dictionary")
    configs = np.array([[c == "1" for c in row] for row in doc["configs"]], dtype=bool)
    baseline = _unpairs(doc["baseline"])
    deltas = np.array([_unpairs(d) for d in doc["deltas"]]).reshape(doc["n_positions"], doc["m_configs"])
    if configs.shape[0] != doc["m_configs"] or baseline.size != doc["m_configs"]:
        raise ParameterError(f"{path}: inconsistent vector lengths")
    b = complex(*doc["blocking_factor"])
    return FingerprintDictionary(configs, float(doc["f0"]), baseline, deltas, doc["config_seed"], b,
                                 tuple(doc["warnings"]))
