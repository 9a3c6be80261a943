"""Iterative flip-and-keep RIS optimization of the disorder-averaged CIR envelope."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._seeding import derive_seed
from ._validation import ParameterError, check_config, check_count
from .core import DisorderRealization, PathEnsemble, RisConfig, freq_response, raised_cosine_spectrum

__all__ = [
    "ShapingObjective",
    "FlipRecord",
    "OptimizationTrace",
    "disorder_realizations",
    "averaged_envelope",
    "greedy_optimize",
    "write_trace_csv",
    "RisShaper",
]

OBJECTIVE_KINDS = ("envelope_at_time", "bimodal", "suppress_at_time")


@dataclass(frozen=True)
class ShapingObjective:
    """What the optimizer maximizes on the averaged envelope.

    ``bimodal`` maximizes the smaller of the envelope values at ``t_focus`` and
    ``t_second``; ``suppress_at_time`` maximizes the negated envelope at ``t_focus``.
    """

    kind: str = "envelope_at_time"
    t_focus: float = 50e-9
    t_second: Optional[float] = None
    n_realizations: int = 60

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ParameterError(f"objective kind must be one of {OBJECTIVE_KINDS}, got {self.kind!r}")
        if self.kind == "bimodal" and self.t_second is None:
            raise ParameterError("bimodal objective needs t_second")
        check_count("n_realizations", self.n_realizations, minimum=1)

    @property
    def focal_times(self):
        return (self.t_focus, self.t_second) if self.kind == "bimodal" else (self.t_focus,)

    def taps(self, ensemble):
        duration = ensemble.cir_duration
        out = []
        for t in self.focal_times:
            if not 0.0 <= t <= duration:
                raise ParameterError(f"focal time {t:g} s outside CIR duration [0, {duration:g}] s")
            out.append(min(int(round(t * ensemble.bandwidth)), ensemble.n_bins - 1))
        return np.array(out, dtype=np.int64)

    def combine(self, values):
        """Objective from the averaged envelope sampled at :meth:`taps`."""
        if self.kind == "envelope_at_time":
            return float(values[0])
        if self.kind == "bimodal":
            return float(min(values[0], values[1]))
        return -float(values[0])

    def value(self, envelope, ensemble):
        return self.combine(np.asarray(envelope)[self.taps(ensemble)])


@dataclass(frozen=True)
class FlipRecord:
    pass_index: int
    flip_index: int
    element: int
    accepted: bool
    objective: float


@dataclass
class OptimizationTrace:
    configs: List[RisConfig] = field(default_factory=list)
    objective_values: List[float] = field(default_factory=list)
    flips_attempted: int = 0
    passes: int = 0
    converged: bool = False
    records: List[FlipRecord] = field(default_factory=list)


def disorder_realizations(ensemble, n_realizations, seed):
    """Realizations whose seeds are derived from ``seed``, one per index."""
    n_realizations = check_count("n_realizations", n_realizations, minimum=1)
    return [DisorderRealization.draw(ensemble, derive_seed(seed, "disorder", r)) for r in range(n_realizations)]


def averaged_envelope(ensemble: PathEnsemble, config, n_realizations, seed):
    """Mean over disorder realizations of ``|h_t|`` per tap."""
    total = np.zeros(ensemble.n_bins)
    realizations = disorder_realizations(ensemble, n_realizations, seed)
    for realization in realizations:
        total = total + np.abs(freq_response(ensemble, config, realization).h_t)
    return total / len(realizations)


class _TapEvaluator:
    """Averaged envelope at a few taps with O(paths touching e) flip updates.

    For every path and every possible count ``m`` of ON interactions, the path's
    unit-coefficient contribution to each tap is tabulated once; a configuration
    then only selects table entries.
    """

    def __init__(self, ensemble, taps, realizations):
        self.ensemble = ensemble
        n = ensemble.n_bins
        freqs = ensemble.freqs
        pulse = raised_cosine_spectrum(freqs, ensemble.f_center, ensemble.pulse_bandwidth, ensemble.rolloff)
        k = np.arange(n)
        twiddle = np.exp(2j * np.pi * np.outer(k, taps) / n) * (pulse / n)[:, None]  # (N, J)
        n_int = ensemble.n_interactions
        m_max = int(n_int.max()) if ensemble.n_paths else 0
        table = np.zeros((ensemble.n_paths, m_max + 1, len(taps)), dtype=complex)
        atom = ensemble.atom_response
        base_angle = -2.0 * np.pi * np.outer(ensemble.delays, freqs)  # (P, N)
        if not atom.is_ideal:
            phi_on, phi_off = atom.phases(freqs, ensemble.f_center)
        for m in range(m_max + 1):
            rows = np.flatnonzero(n_int >= m)
            if atom.is_ideal:
                contrib = np.exp(1j * base_angle[rows]) * (-1.0) ** m
            else:
                angle = base_angle[rows] + m * phi_on[None, :] + (n_int[rows] - m)[:, None] * phi_off[None, :]
                contrib = np.exp(1j * angle)
            table[rows, m, :] = contrib @ twiddle
        self.table = table
        coef = []
        for r in realizations:
            amps, phases = r.apply(ensemble)
            coef.append(amps * np.exp(1j * phases))
        self.coef = np.array(coef).reshape(len(realizations), ensemble.n_paths)
        self.by_element = ensemble.counts.tocsc()
        self._rows = np.arange(ensemble.n_paths)

    def state(self, states):
        n_on = self.ensemble.n_on(states)
        sums = self.coef @ self.table[self._rows, n_on, :]
        return n_on, sums

    @staticmethod
    def envelope(sums):
        return np.abs(sums).mean(axis=0)

    def flipped_sums(self, states, n_on, sums, element):
        lo, hi = self.by_element.indptr[element], self.by_element.indptr[element + 1]
        rows = self.by_element.indices[lo:hi]
        if rows.size == 0:
            return sums
        step = self.by_element.data[lo:hi]
        new_on = n_on[rows] - step if states[element] else n_on[rows] + step
        delta = self.table[rows, new_on, :] - self.table[rows, n_on[rows], :]
        return sums + self.coef[:, rows] @ delta


def greedy_optimize(ensemble: PathEnsemble, objective: ShapingObjective, max_passes=5, seed=0):
    """Flip one meta-atom at a time, keep strict improvements.

    Starts from a seeded random configuration; each pass visits the elements in
    a fresh seeded permutation. Stops after ``max_passes`` or after a pass that
    accepts no flip, in which case the result is a 1-flip local optimum.
    Disorder realizations are those of ``averaged_envelope(..., seed=seed)``.
    """
    max_passes = check_count("max_passes", max_passes, minimum=1)
    rng = np.random.default_rng(derive_seed(seed, "greedy"))
    states = rng.integers(0, 2, ensemble.n_elements).astype(bool)
    taps = objective.taps(ensemble)
    evaluator = _TapEvaluator(ensemble, taps, disorder_realizations(ensemble, objective.n_realizations, seed))

    n_on, sums = evaluator.state(states)
    current = objective.combine(evaluator.envelope(sums))
    trace = OptimizationTrace(configs=[RisConfig(states)], objective_values=[current])
    flip_index = 0
    for p in range(max_passes):
        accepted_this_pass = 0
        for element in rng.permutation(ensemble.n_elements):
            value = objective.combine(evaluator.envelope(evaluator.flipped_sums(states, n_on, sums, element)))
            accepted = False
            if value > current:
                # the incremental value only screens; accept on the recomputed one
                trial = states.copy()
                trial[element] = ~trial[element]
                trial_on, trial_sums = evaluator.state(trial)
                value = objective.combine(evaluator.envelope(trial_sums))
                if value > current:
                    accepted = True
                    states, n_on, sums, current = trial, trial_on, trial_sums, value
                    trace.configs.append(RisConfig(states))
                    trace.objective_values.append(current)
                    accepted_this_pass += 1
            trace.records.append(FlipRecord(p, flip_index, int(element), accepted, value))
            flip_index += 1
        trace.passes = p + 1
        if accepted_this_pass == 0:
            trace.converged = True
            break
    trace.flips_attempted = flip_index
    return trace.configs[-1], trace


def write_trace_csv(trace: OptimizationTrace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pass", "flip_index", "element", "accepted", "objective_value_linear"])
        for r in trace.records:
            writer.writerow([r.pass_index, r.flip_index, r.element, int(r.accepted), repr(r.objective)])


class RisShaper(BaseEstimator):
    """Estimator wrapper around :func:`greedy_optimize`.

    ``fit`` takes a :class:`~riscatter.core.PathEnsemble` in place of ``X``.

    Attributes
    ----------
    config_ : RisConfig
        Optimized configuration.
    trace_ : OptimizationTrace
    envelope_ : ndarray
        Disorder-averaged envelope of ``config_``.
    """

    def __init__(self, objective="envelope_at_time", t_focus=50e-9, t_second=None, n_realizations=60,
                 max_passes=5, random_state=0):
        self.objective = objective
        self.t_focus = t_focus
        self.t_second = t_second
        self.n_realizations = n_realizations
        self.max_passes = max_passes
        self.random_state = random_state

    def _objective(self):
        return ShapingObjective(self.objective, self.t_focus, self.t_second, self.n_realizations)

    def _seed(self):
        return 0 if self.random_state is None else int(self.random_state)

    def fit(self, ensemble, y=None):
        if not isinstance(ensemble, PathEnsemble):
            raise ParameterError("RisShaper.fit expects a PathEnsemble")
        self.config_, self.trace_ = greedy_optimize(ensemble, self._objective(), self.max_passes, self._seed())
        self.envelope_ = averaged_envelope(ensemble, self.config_, self.n_realizations, self._seed())
        self.n_elements_in_ = ensemble.n_elements
        return self

    def score(self, ensemble, y=None):
        """Objective value of the fitted configuration on ``ensemble``."""
        check_config(self.config_, ensemble.n_elements)
        env = averaged_envelope(ensemble, self.config_, self.n_realizations, self._seed())
        return self._objective().value(env, ensemble)
