"""Seeded end-to-end experiment pipelines writing CSV/JSON artifacts plus a manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._seeding import derive_seed
from ._validation import ParameterError, check_count
from .capacity import capacity_from_cir, write_capacity_csv
from .core import EnsembleParams, in_situ_std, save_ensemble, synthesize_ensemble
from .localize import BruteForceLocalizer, Grid, ObjectModel, calibrate, measure, sample_scenes, save_dictionary, success_rate
from .mlp import TrainSpec, decode_topk, save_model, sweep_localization, train, write_heatmap_csv
from .shaping import ShapingObjective, averaged_envelope, greedy_optimize, write_trace_csv

log = logging.getLogger(__name__)

KINDS = ("characterize", "shape", "capacity", "localize", "sweep")

_PRESETS = {
    "characterize": EnsembleParams.for_characterization,
    "shape": EnsembleParams.for_shaping,
    "capacity": EnsembleParams.for_shaping,
    "localize": EnsembleParams.for_localization,
    "sweep": EnsembleParams.for_localization,
}

DEFAULT_OBJECTIVES = (
    {"kind": "envelope_at_time", "t_focus": 30e-9},
    {"kind": "envelope_at_time", "t_focus": 50e-9},
    {"kind": "envelope_at_time", "t_focus": 100e-9},
    {"kind": "envelope_at_time", "t_focus": 200e-9},
    {"kind": "bimodal", "t_focus": 50e-9, "t_second": 200e-9},
)

_DEFAULT_PARAMS = {
    "characterize": {"n_configs": 500, "freq_stride": 2},
    "shape": {"objectives": list(DEFAULT_OBJECTIVES), "n_realizations": 60, "max_passes": 5},
    "capacity": {"envelopes": None, "snr_db": list(range(0, 31)), "normalize": True,
                 "objectives": list(DEFAULT_OBJECTIVES), "n_realizations": 60, "max_passes": 5},
    "localize": {"m_configs": 100, "snr_db": 30.0, "n_eval_scenes": 200, "k": 3, "f0": None,
                 "decoders": ["brute", "mlp"], "train": {}, "blocking_factor": 0.0},
    "sweep": {"m_values": [1, 10, 50, 100], "snr_values": [30.0, 20.0, 10.0, 0.0, -10.0], "n_eval_scenes": 100,
              "k": 3, "f0": None, "decoders": ["brute", "mlp"], "train": {}, "blocking_factor": 0.0},
}


class SpecError(ParameterError):
    """Experiment specification rejected during validation."""


@dataclass
class ExperimentSpec:
    kind: str
    seed: int
    ensemble: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    base_dir: Optional[Path] = None

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        unknown = set(doc) - {"kind", "seed", "ensemble", "params"}
        if unknown:
            raise SpecError(f"unknown top-level field(s): {sorted(unknown)}")
        if "kind" not in doc:
            raise SpecError("field 'kind' is required")
        if "seed" not in doc or doc["seed"] is None:
            raise SpecError("field 'seed' is required (master seed)")
        return cls(doc["kind"], doc["seed"], dict(doc.get("ensemble") or {}), dict(doc.get("params") or {}),
                   Path(base_dir) if base_dir else None)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise SpecError(f"{path}: spec must be a JSON object")
        return cls.from_dict(doc, path.parent)

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "ensemble": self.ensemble, "params": self.params}

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def resolved_params(self):
        defaults = _DEFAULT_PARAMS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise SpecError(f"params: unknown field(s) for kind {self.kind!r}: {sorted(unknown)}")
        return {**defaults, **self.params}

    def ensemble_params(self):
        try:
            return _PRESETS[self.kind](**self.ensemble).validate()
        except TypeError as exc:
            raise SpecError(f"ensemble: {exc}") from None
        except ParameterError as exc:
            raise SpecError(f"ensemble: {exc}") from None

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise SpecError(f"seed must be a nonnegative integer, got {self.seed!r}")
        ens = self.ensemble_params()
        p = self.resolved_params()
        try:
            if self.kind == "characterize":
                check_count("params.n_configs", p["n_configs"], minimum=2)
                check_count("params.freq_stride", p["freq_stride"], minimum=1)
            if self.kind in ("shape", "capacity"):
                check_count("params.max_passes", p["max_passes"], minimum=1)
                duration = ens.n_bins / ens.bandwidth
                for i, o in enumerate(self._objectives(p)):
                    for t in o.focal_times:
                        if not 0 <= t <= duration:
                            raise SpecError(f"params.objectives[{i}]: focal time {t:g} s outside [0, {duration:g}] s")
                if self.kind == "capacity" and p["envelopes"] is not None and not self._resolve(p["envelopes"]).exists():
                    raise SpecError(f"params.envelopes: file {p['envelopes']!r} not found")
            if self.kind in ("localize", "sweep"):
                ms = [p["m_configs"]] if self.kind == "localize" else p["m_values"]
                for m in ms:
                    check_count("params.m_configs", m, minimum=1)
                k = check_count("params.k", p["k"], minimum=1)
                if k > ens.n_positions:
                    raise SpecError(f"params.k={k} exceeds ensemble.n_positions={ens.n_positions}")
                f0 = ens.f_center if p["f0"] is None else float(p["f0"])
                if abs(f0 - ens.f_center) > ens.bandwidth / 2:
                    raise SpecError(f"params.f0={f0:g} Hz outside the modeled band")
                for d in p["decoders"]:
                    if d not in ("brute", "mlp"):
                        raise SpecError(f"params.decoders: unknown decoder {d!r}")
                self._train_spec(p).validate()
        except SpecError:
            raise
        except (ParameterError, TypeError, KeyError) as exc:
            raise SpecError(str(exc)) from None
        return self

    def _objectives(self, p):
        out = []
        for i, o in enumerate(p["objectives"]):
            try:
                out.append(ShapingObjective(o["kind"], float(o["t_focus"]),
                                            None if o.get("t_second") is None else float(o["t_second"]),
                                            int(p["n_realizations"])))
            except (KeyError, TypeError, ParameterError) as exc:
                raise SpecError(f"params.objectives[{i}]: {exc}") from None
        return out

    def _train_spec(self, p):
        try:
            return TrainSpec(**{"k": p["k"], **p["train"]})
        except TypeError as exc:
            raise SpecError(f"params.train: {exc}") from None

    def _resolve(self, path):
        path = Path(path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path


@dataclass
class RunManifest:
    kind: str
    spec_digest: str
    tool_version: str
    started_at: str
    finished_at: str
    artifacts: list

    def result_digest(self):
        """Digest over artifact digests only (timestamps excluded)."""
        return hashlib.sha256(json.dumps(self.artifacts, sort_keys=True).encode()).hexdigest()

    def to_dict(self):
        return {
            "kind": self.kind,
            "spec_digest": self.spec_digest,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": self.artifacts,
            "result_digest": self.result_digest(),
        }


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class _Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files = []

    def path(self, name):
        p = self.dir / name
        self.files.append(p)
        return p

    def cleanup(self):
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _characterize(spec, p, ens_params, out, executor):
    seed = spec.seed
    ensemble = synthesize_ensemble(ens_params, derive_seed(seed, "ensemble"))
    save_ensemble(ensemble, out.path("ensemble.json"))
    freqs = ensemble.freqs[:: p["freq_stride"]]
    std = in_situ_std(ensemble, p["n_configs"], freqs, derive_seed(seed, "configs"), executor=executor)
    _write_csv(out.path("characterization.csv"), ["freq_hz", "s12_std_linear"],
               [[_fmt(f), _fmt(s)] for f, s in zip(freqs, std)])


def _shape(spec, p, ens_params, out, executor):
    seed = spec.seed
    ensemble = synthesize_ensemble(ens_params, derive_seed(seed, "ensemble"))
    save_ensemble(ensemble, out.path("ensemble.json"))
    objectives = spec._objectives(p)
    opt_seed = derive_seed(seed, "shaping")
    shaped, configs = [], {}

    def run(item):
        i, obj = item
        return greedy_optimize(ensemble, obj, p["max_passes"], opt_seed)

    results = list(executor.map(run, enumerate(objectives))) if executor else [run(x) for x in enumerate(objectives)]
    initial = results[0][1].configs[0] if results else None
    original = averaged_envelope(ensemble, initial, p["n_realizations"], opt_seed)
    for i, (obj, (config, trace)) in enumerate(zip(objectives, results), start=1):
        shaped.append(averaged_envelope(ensemble, config, p["n_realizations"], opt_seed))
        write_trace_csv(trace, out.path(f"trace_{i}.csv"))
        configs[f"shaped_{i}"] = {"objective": {"kind": obj.kind, "t_focus": obj.t_focus, "t_second": obj.t_second},
                                  "config": config.to_bits(), "objective_value": trace.objective_values[-1],
                                  "passes": trace.passes, "converged": trace.converged}
    configs["original"] = {"config": initial.to_bits()}
    with open(out.path("configs.json"), "w") as fh:
        json.dump(configs, fh, indent=2, sort_keys=True)
        fh.write("\n")
    header = ["tap", "time_s", "original"] + [f"shaped_{i}" for i in range(1, len(shaped) + 1)]
    rows = [[n, _fmt(t), _fmt(original[n])] + [_fmt(s[n]) for s in shaped] for n, t in enumerate(ensemble.times)]
    _write_csv(out.path("envelopes.csv"), header, rows)
    return original, shaped


def read_envelopes(path):
    """Columns of an ``envelopes.csv`` file as ``{label: vector}`` (``tap``/``time_s`` dropped)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, j] for j, name in enumerate(header) if name not in ("tap", "time_s")}


def _capacity(spec, p, ens_params, out, executor):
    if p["envelopes"] is None:
        original, shaped = _shape(spec, p, ens_params, out, executor)
        envelopes = {"original": original, **{f"shaped_{i}": s for i, s in enumerate(shaped, start=1)}}
    else:
        envelopes = read_envelopes(spec._resolve(p["envelopes"]))
    curves = [capacity_from_cir(env, p["snr_db"], normalize=bool(p["normalize"]), label=label)
              for label, env in envelopes.items()]
    write_capacity_csv(curves, out.path("capacity.csv"))


def _localize(spec, p, ens_params, out, executor):
    seed = spec.seed
    ensemble = synthesize_ensemble(ens_params, derive_seed(seed, "ensemble"))
    save_ensemble(ensemble, out.path("ensemble.json"))
    grid = Grid(ens_params.n_positions)
    obj = ObjectModel(complex(p["blocking_factor"]))
    dictionary = calibrate(ensemble, grid, obj, p["m_configs"], p["f0"], derive_seed(seed, "configs"))
    save_dictionary(dictionary, out.path("dictionary.json"))
    scenes = sample_scenes(grid.n_positions, p["k"], p["n_eval_scenes"], derive_seed(seed, "eval-scenes"))
    X = np.array([measure(ensemble, dictionary, s, float(p["snr_db"]), derive_seed(seed, "eval-noise", i))
                  for i, s in enumerate(scenes)])
    decoded = {}
    if "brute" in p["decoders"]:
        decoded["brute"] = BruteForceLocalizer(p["k"]).fit(dictionary).predict_scenes(X)
    if "mlp" in p["decoders"]:
        tspec = spec._train_spec(p)
        tspec = TrainSpec(**{**asdict(tspec), "noise_snr_db": float(p["snr_db"]),
                             "optimizer_seed": derive_seed(seed, "mlp")})
        model, history = train(dictionary, tspec)
        save_model(model, out.path("model.json"))
        _write_csv(out.path("loss_history.csv"), ["epoch", "train_bce", "val_bce"],
                   [[e, _fmt(a), _fmt(b) if b is not None else ""] for e, (a, b) in
                    enumerate(zip(history["train_loss"], history["val_loss"] or [None] * len(history["train_loss"])))])
        decoded["mlp"] = [decode_topk(model, x, p["k"]) for x in X]
    rows = []
    for name, scenes_hat in decoded.items():
        for i, (truth, est) in enumerate(zip(scenes, scenes_hat)):
            rows.append([i, name, " ".join(map(str, truth)), " ".join(map(str, est)), _fmt(success_rate(est, truth))])
    _write_csv(out.path("localization.csv"), ["scene_index", "decoder_label", "true_positions",
                                              "decoded_positions", "success_rate"], rows)


def _sweep(spec, p, ens_params, out, executor):
    seed = spec.seed
    ensemble = synthesize_ensemble(ens_params, derive_seed(seed, "ensemble"))
    save_ensemble(ensemble, out.path("ensemble.json"))
    tspec = spec._train_spec(p)
    tspec = TrainSpec(**{**asdict(tspec), "optimizer_seed": derive_seed(seed, "mlp")})
    # cells parallelize; the calibration inside them does not nest another pool
    cells = sweep_localization(ensemble, Grid(ens_params.n_positions), p["m_values"], p["snr_values"], p["n_eval_scenes"],
                       derive_seed(seed, "sweep"), tuple(p["decoders"]), tspec,
                       ObjectModel(complex(p["blocking_factor"])), p["k"], p["f0"], executor)
    write_heatmap_csv(cells, out.path("heatmap.csv"))


_RUNNERS = {"characterize": _characterize, "shape": _shape, "capacity": _capacity,
            "localize": _localize, "sweep": _sweep}


def run(spec: ExperimentSpec, out_dir, threads=1) -> RunManifest:
    """Validate ``spec``, run its pipeline into ``out_dir`` and write ``manifest.json``.

    Artifacts written before a failure are removed. BLAS is pinned to one
    thread; ``threads`` only sizes the pool for independent work items, so
    results are identical for any thread count.
    """
    spec.validate()
    threads = check_count("threads", threads, minimum=1)
    p = spec.resolved_params()
    ens_params = spec.ensemble_params()
    out = _Outputs(out_dir)
    out.dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    log.info("running %s (seed %d) into %s", spec.kind, spec.seed, out.dir)
    try:
        with ExitStack() as stack:
            stack.enter_context(threadpool_limits(1))
            executor = stack.enter_context(ThreadPoolExecutor(threads)) if threads > 1 else None
            _RUNNERS[spec.kind](spec, p, ens_params, out, executor)
        artifacts = [{"path": f.name, "sha256": _sha256(f), "bytes": f.stat().st_size}
                     for f in sorted(set(out.files))]
        manifest = RunManifest(spec.kind, spec.digest(), __version__, started, _now(), artifacts)
        manifest_path = out.path("manifest.json")
        with open(manifest_path, "w") as fh:
            json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except BaseException:
        out.cleanup()
        raise
    log.info("wrote %d artifacts", len(artifacts))
    return manifest
