"""Ray-path simulation of reconfigurable meta-atom surfaces in reverberant enclosures.

Submodules
----------
core
    Path ensembles, meta-atom responses, transfer functions and characterization.
shaping
    Greedy flip-and-keep optimization of the disorder-averaged impulse response.
capacity
    Waterfilling capacity of the resulting ISI channels.
localize
    Wave-fingerprint dictionaries and the brute-force decoder.
mlp
    From-scratch MLP decoder and the localization sweep.
experiment
    Seeded pipelines behind the ``riscatter`` command.
"""

__version__ = "0.1.0"

from ._validation import ParameterError  # noqa: E402
from .capacity import CapacityCurve, WaterfillResult, capacity_from_cir, waterfill  # noqa: E402
from .core import (  # noqa: E402
    ChannelResponse,
    DisorderRealization,
    EnsembleParams,
    MetaAtomResponse,
    Path,
    PathEnsemble,
    RisConfig,
    freq_response,
    in_situ_std,
    s12,
    synthesize_ensemble,
    transmissions,
)
from .localize import (  # noqa: E402
    BruteForceLocalizer,
    FingerprintDictionary,
    Grid,
    ObjectModel,
    Scene,
    brute_force_decode,
    calibrate,
    measure,
)
from .mlp import MLPLocalizer, MlpModel, TrainSpec, sweep_localization, train  # noqa: E402
from .shaping import OptimizationTrace, RisShaper, ShapingObjective, averaged_envelope, greedy_optimize  # noqa: E402

__all__ = [
    "__version__", "ParameterError",
    "RisConfig", "MetaAtomResponse", "Path", "EnsembleParams", "PathEnsemble", "ChannelResponse",
    "DisorderRealization", "synthesize_ensemble", "freq_response", "s12", "transmissions", "in_situ_std",
    "ShapingObjective", "OptimizationTrace", "averaged_envelope", "greedy_optimize", "RisShaper",
    "WaterfillResult", "CapacityCurve", "waterfill", "capacity_from_cir",
    "Grid", "Scene", "ObjectModel", "FingerprintDictionary", "calibrate", "measure", "brute_force_decode",
    "BruteForceLocalizer", "MlpModel", "TrainSpec", "train", "MLPLocalizer", "sweep_localization",
]
