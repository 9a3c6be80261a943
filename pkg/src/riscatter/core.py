"""Ray-path model of a reverberant cavity with a one-bit RIS.

A cavity realization family is a :class:`PathEnsemble`: a seeded set of rays,
each with a delay, amplitude, base phase and a multiset of RIS elements it
bounces off. The transfer function for a configuration is

    H(f) = sum_p a_p exp(i phi_p) exp(-i 2 pi f tau_p) prod_{e in p} r_{s(e)}(f)

where ``r_on``/``r_off`` are all-pass Lorentzian reflection factors of the
meta-atom in its two states.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from ._validation import (
    ParameterError,
    check_config,
    check_configs,
    check_count,
    check_fraction,
    check_nonnegative,
    check_positive,
)

__all__ = [
    "RisConfig",
    "MetaAtomResponse",
    "Path",
    "EnsembleParams",
    "PathEnsemble",
    "ChannelResponse",
    "DisorderRealization",
    "synthesize_ensemble",
    "freq_response",
    "s12",
    "transmissions",
    "in_situ_std",
    "raised_cosine_spectrum",
    "save_ensemble",
    "load_ensemble",
]

ENSEMBLE_FORMAT = "riscatter.ensemble"
ENSEMBLE_VERSION = 1


def _frozen(arr, dtype=None):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RisConfig:
    """Bit vector of meta-atom states; ``True`` is ON."""

    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim != 1:
            raise ParameterError("RisConfig states must be one-dimensional")
        object.__setattr__(self, "states", _frozen(states.astype(bool)))

    @classmethod
    def random(cls, n_elements, rng):
        return cls(np.asarray(rng.integers(0, 2, n_elements), dtype=bool))

    @classmethod
    def zeros(cls, n_elements):
        return cls(np.zeros(n_elements, dtype=bool))

    def __len__(self):
        return self.states.size

    def __eq__(self, other):
        if not isinstance(other, RisConfig):
            return NotImplemented
        return np.array_equal(self.states, other.states)

    def __hash__(self):
        return hash(self.states.tobytes())

    def flip(self, index):
        if not 0 <= index < self.states.size:
            raise ParameterError(f"element index {index} outside [0, {self.states.size})")
        states = self.states.copy()
        states[index] = ~states[index]
        return RisConfig(states)

    def to_bits(self):
        return "".join("1" if s else "0" for s in self.states)

    @classmethod
    def from_bits(cls, bits):
        return cls(np.array([c == "1" for c in bits], dtype=bool))


@dataclass(frozen=True)
class MetaAtomResponse:
    """Resonant one-bit meta-atom.

    Each state is an all-pass Lorentzian, ``phi_s(f) = 2 atan((f - f_s) / (gamma/2))``.
    ``gamma = inf`` is the ideal narrowband atom whose reflection factors are
    exactly ``+1`` (OFF) and ``-1`` (ON) at every frequency.
    """

    f_on: float
    f_off: float
    gamma: float

    def __post_init__(self):
        check_positive("gamma", self.gamma, allow_inf=True)

    @classmethod
    def resonant(cls, f_center, gamma, contrast=math.pi):
        """ON/OFF resonances detuned symmetrically about ``f_center``.

        The detuning is chosen so the phase contrast at ``f_center`` equals
        ``contrast``; ``contrast = pi`` gives resonances at ``f_center -/+ gamma/2``.
        """
        if not 0 < contrast <= 1.5 * math.pi:
            raise ParameterError(f"contrast must lie in (0, 1.5 pi], got {contrast!r}")
        if math.isinf(gamma):
            return cls.ideal(f_center)
        delta = 0.5 * gamma * math.tan(contrast / 4.0)
        return cls(f_on=f_center - delta, f_off=f_center + delta, gamma=gamma)

    @classmethod
    def ideal(cls, f_center=0.0):
        return cls(f_on=f_center, f_off=f_center, gamma=math.inf)

    @property
    def is_ideal(self):
        return math.isinf(self.gamma)

    def _raw_phase(self, f, f_state):
        return 2.0 * np.arctan((np.asarray(f, dtype=float) - f_state) / (self.gamma / 2.0))

    def phases(self, freqs, f_center):
        """ON/OFF reflection phases, offset so that the OFF phase is 0 at ``f_center``."""
        if self.is_ideal:
            freqs = np.asarray(freqs, dtype=float)
            return np.full(freqs.shape, math.pi), np.zeros(freqs.shape)
        offset = float(self._raw_phase(f_center, self.f_off))
        return self._raw_phase(freqs, self.f_on) - offset, self._raw_phase(freqs, self.f_off) - offset

    def contrast(self, f):
        """Magnitude of the wrapped ON/OFF phase difference at ``f``, in [0, pi]."""
        if self.is_ideal:
            return math.pi
        d = float(self._raw_phase(f, self.f_on) - self._raw_phase(f, self.f_off))
        return abs(math.remainder(d, 2 * math.pi))

    def validate(self, f_center):
        c = self.contrast(f_center)
        if not 0.9 * math.pi <= c <= 1.1 * math.pi:
            raise ParameterError(
                f"meta-atom ON/OFF phase contrast at {f_center:g} Hz is {c / math.pi:.3f} pi, "
                "expected within [0.9 pi, 1.1 pi]"
            )
        return self


@dataclass(frozen=True)
class Path:
    delay: float
    amplitude: float
    base_phase: float
    interactions: tuple = ()
    region_tags: tuple = ()

    @property
    def region_tag(self):
        return self.region_tags[0] if self.region_tags else None


@dataclass(frozen=True)
class EnsembleParams:
    """Parameters of :func:`synthesize_ensemble`.

    Frequencies in Hz, times in seconds. ``t_max`` defaults to ``5 * tau_rc`` and
    ``pulse_bandwidth`` to the full ``bandwidth``. ``phase_jitter`` is the full
    width of the uniform per-path phase perturbation of one disorder realization;
    ``amplitude_jitter`` the sigma of its log-normal amplitude factor.
    """

    n_paths: int = 2000
    n_elements: int = 102
    tau_rc: float = 100e-9
    t_max: Optional[float] = None
    interaction_rate: float = 0.3
    f_center: float = 2.5e9
    bandwidth: float = 66e6
    n_bins: int = 256
    pulse_bandwidth: Optional[float] = None
    rolloff: float = 0.25
    gamma: float = 400e6
    phase_contrast: float = 0.92 * math.pi
    tagged_fraction: float = 0.0
    n_positions: int = 23
    nonlinearity_knob: float = 0.0
    phase_jitter: float = math.pi
    amplitude_jitter: float = 0.2

    @classmethod
    def for_shaping(cls, **overrides):
        kw = dict(interaction_rate=0.5)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def for_characterization(cls, **overrides):
        kw = dict(n_elements=47, bandwidth=1.2e9, n_bins=1024)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def for_localization(cls, **overrides):
        kw = dict(n_elements=47, tagged_fraction=0.3)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown ensemble parameter(s): {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    @property
    def resolved_t_max(self):
        return 5.0 * self.tau_rc if self.t_max is None else float(self.t_max)

    @property
    def resolved_pulse_bandwidth(self):
        return self.bandwidth if self.pulse_bandwidth is None else float(self.pulse_bandwidth)

    def validate(self):
        check_count("n_paths", self.n_paths, minimum=1)
        check_count("n_elements", self.n_elements, minimum=0)
        check_positive("tau_rc", self.tau_rc)
        check_positive("t_max", self.resolved_t_max)
        check_nonnegative("interaction_rate", self.interaction_rate)
        check_positive("f_center", self.f_center)
        check_positive("bandwidth", self.bandwidth)
        check_count("n_bins", self.n_bins, minimum=2)
        pb = check_positive("pulse_bandwidth", self.resolved_pulse_bandwidth)
        if pb > self.bandwidth * (1 + 1e-12):
            raise ParameterError("pulse_bandwidth must not exceed bandwidth")
        check_fraction("rolloff", self.rolloff)
        check_positive("gamma", self.gamma, allow_inf=True)
        if not 0.9 * math.pi <= self.phase_contrast <= 1.1 * math.pi:
            raise ParameterError("phase_contrast must lie in [0.9 pi, 1.1 pi]")
        check_fraction("tagged_fraction", self.tagged_fraction)
        check_count("n_positions", self.n_positions, minimum=1)
        check_fraction("nonlinearity_knob", self.nonlinearity_knob)
        if self.nonlinearity_knob > 0 and self.n_positions < 2:
            raise ParameterError("nonlinearity_knob > 0 needs at least two grid positions")
        check_nonnegative("phase_jitter", self.phase_jitter)
        check_nonnegative("amplitude_jitter", self.amplitude_jitter)
        if self.resolved_t_max >= self.n_bins / self.bandwidth:
            raise ParameterError(
                f"t_max={self.resolved_t_max:g} s must be shorter than the CIR window "
                f"n_bins/bandwidth={self.n_bins / self.bandwidth:g} s"
            )
        return self


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Immutable array-backed set of propagation paths.

    ``counts`` is a sparse ``(n_paths, n_elements)`` matrix of interaction
    multiplicities; ``tags`` an ``(n_paths, 2)`` int array of grid positions,
    ``-1`` marking an empty slot.
    """

    delays: np.ndarray
    amplitudes: np.ndarray
    base_phases: np.ndarray
    counts: sparse.csr_matrix
    tags: np.ndarray
    n_elements: int
    atom_response: MetaAtomResponse
    tau_rc: float
    f_center: float
    bandwidth: float
    n_bins: int = 256
    pulse_bandwidth: Optional[float] = None
    rolloff: float = 0.25
    phase_jitter: float = 0.0
    amplitude_jitter: float = 0.0
    seed: Optional[int] = None
    params: Optional[EnsembleParams] = None
    n_interactions: np.ndarray = field(init=False, repr=False)
    _grid_propagation: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        for name in ("delays", "amplitudes", "base_phases"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        tags = np.asarray(self.tags, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "tags", _frozen(tags))
        counts = sparse.csr_matrix(self.counts, dtype=np.int64, shape=(self.delays.size, self.n_elements))
        counts.sort_indices()
        object.__setattr__(self, "counts", counts)
        n_int = np.asarray(counts.sum(axis=1)).ravel().astype(np.int64)
        object.__setattr__(self, "n_interactions", _frozen(n_int))
        if self.pulse_bandwidth is None:
            object.__setattr__(self, "pulse_bandwidth", float(self.bandwidth))
        if np.any(self.amplitudes < 0):
            raise ParameterError("path amplitudes must be nonnegative")

    @classmethod
    def from_paths(cls, paths: Sequence[Path], n_elements, atom_response=None, *, tau_rc=100e-9,
                   f_center=2.5e9, bandwidth=66e6, n_bins=256, pulse_bandwidth=None, rolloff=0.25,
                   phase_jitter=0.0, amplitude_jitter=0.0):
        """Build an ensemble from explicit :class:`Path` objects (zero paths allowed)."""
        if atom_response is None:
            atom_response = MetaAtomResponse.ideal(f_center)
        rows, cols = [], []
        tags = np.full((len(paths), 2), -1, dtype=np.int64)
        for i, p in enumerate(paths):
            for e in p.interactions:
                if not 0 <= e < n_elements:
                    raise ParameterError(f"path {i} interacts with element {e} outside [0, {n_elements})")
                rows.append(i)
                cols.append(e)
            if len(p.region_tags) > 2:
                raise ParameterError("a path carries at most two region tags")
            tags[i, : len(p.region_tags)] = p.region_tags
        counts = sparse.coo_matrix(
            (np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(len(paths), n_elements)
        ).tocsr()
        return cls(
            delays=[p.delay for p in paths],
            amplitudes=[p.amplitude for p in paths],
            base_phases=[p.base_phase for p in paths],
            counts=counts,
            tags=tags,
            n_elements=n_elements,
            atom_response=atom_response,
            tau_rc=tau_rc,
            f_center=f_center,
            bandwidth=bandwidth,
            n_bins=n_bins,
            pulse_bandwidth=pulse_bandwidth,
            rolloff=rolloff,
            phase_jitter=phase_jitter,
            amplitude_jitter=amplitude_jitter,
        )

    @property
    def n_paths(self):
        return self.delays.size

    @property
    def paths(self):
        out = []
        for i in range(self.n_paths):
            lo, hi = self.counts.indptr[i], self.counts.indptr[i + 1]
            inter = tuple(
                int(e) for e, c in zip(self.counts.indices[lo:hi], self.counts.data[lo:hi]) for _ in range(c)
            )
            out.append(Path(float(self.delays[i]), float(self.amplitudes[i]), float(self.base_phases[i]),
                            inter, tuple(int(t) for t in self.tags[i] if t >= 0)))
        return out

    @property
    def freqs(self):
        """DFT-consistent band grid ``f_center - B/2 + k B / n_bins``."""
        k = np.arange(self.n_bins)
        return self.f_center - self.bandwidth / 2 + k * (self.bandwidth / self.n_bins)

    @property
    def times(self):
        return np.arange(self.n_bins) / self.bandwidth

    @property
    def cir_duration(self):
        return self.n_bins / self.bandwidth

    def with_amplitudes(self, amplitudes):
        return replace(self, amplitudes=amplitudes)

    def propagation(self, freqs):
        """``exp(-2j pi f tau)`` per ``(frequency, path)``; cached for the band grid."""
        freqs = np.asarray(freqs, dtype=float)
        grid = freqs.shape == (self.n_bins,) and np.array_equal(freqs, self.freqs)
        if grid and self._grid_propagation:
            return self._grid_propagation[0]
        prop = np.exp(-2j * math.pi * freqs[:, None] * self.delays[None, :])
        if grid:
            prop.flags.writeable = False
            self._grid_propagation.append(prop)
        return prop

    def n_on(self, states):
        """Per-path count of interactions with ON elements."""
        return self.counts @ states.astype(np.int64)

    def digest(self):
        h = hashlib.sha256()
        for arr in (self.delays, self.amplitudes, self.base_phases, self.tags,
                    self.counts.indptr, self.counts.indices, self.counts.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.n_elements, self.atom_response, self.tau_rc, self.f_center,
                       self.bandwidth, self.n_bins, self.pulse_bandwidth, self.rolloff,
                       self.phase_jitter, self.amplitude_jitter)).encode())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class ChannelResponse:
    freqs: np.ndarray
    h_f: np.ndarray
    h_t: np.ndarray
    pulse_bandwidth: float
    pulse: np.ndarray

    @property
    def envelope(self):
        return np.abs(self.h_t)


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """One stirrer position: per-path phase offsets and amplitude factors."""

    realization_seed: Optional[int]
    phase_jitter: np.ndarray
    amplitude_jitter: np.ndarray

    @classmethod
    def draw(cls, ensemble, seed):
        rng = np.random.default_rng(seed)
        n = ensemble.n_paths
        phase = (rng.random(n) - 0.5) * ensemble.phase_jitter
        amp = np.exp(ensemble.amplitude_jitter * rng.standard_normal(n))
        return cls(seed, _frozen(phase), _frozen(amp))

    @classmethod
    def identity(cls, ensemble):
        return cls(None, _frozen(np.zeros(ensemble.n_paths)), _frozen(np.ones(ensemble.n_paths)))

    def apply(self, ensemble):
        """Jittered ``(amplitudes, phases)`` of the ensemble's paths."""
        if self.phase_jitter.size != ensemble.n_paths:
            raise ParameterError("realization does not match ensemble path count")
        return ensemble.amplitudes * self.amplitude_jitter, ensemble.base_phases + self.phase_jitter


def synthesize_ensemble(params: EnsembleParams, seed) -> PathEnsemble:
    """Draw a seeded ray-path ensemble.

    Delays are uniform on ``[0, t_max]``, amplitudes Rayleigh with scale
    proportional to ``exp(-tau / (2 tau_rc))`` (normalized to unit expected total
    power), phases uniform, and the RIS interaction count of a path is Poisson
    with mean ``interaction_rate * (1 + tau / tau_rc)``.
    """
    params.validate()
    rng = np.random.default_rng(seed)
    n = params.n_paths
    t_max = params.resolved_t_max
    delays = rng.uniform(0.0, t_max, n)
    envelope = np.exp(-delays / (2.0 * params.tau_rc))
    scale0 = 1.0 / math.sqrt(2.0 * float(np.sum(envelope**2)))
    amplitudes = rng.rayleigh(scale0 * envelope)
    phases = rng.uniform(0.0, 2 * math.pi, n)
    n_int = rng.poisson(params.interaction_rate * (1.0 + delays / params.tau_rc))
    if params.n_elements == 0:
        n_int = np.zeros(n, dtype=np.int64)
    total = int(n_int.sum())
    elements = rng.integers(0, max(params.n_elements, 1), total)
    rows = np.repeat(np.arange(n), n_int)
    counts = sparse.coo_matrix(
        (np.ones(total, dtype=np.int64), (rows, elements)), shape=(n, params.n_elements)
    ).tocsr()

    tags = np.full((n, 2), -1, dtype=np.int64)
    tagged = rng.random(n) < params.tagged_fraction
    tags[tagged, 0] = rng.integers(0, params.n_positions, int(tagged.sum()))
    if params.nonlinearity_knob > 0:
        second = tagged & (rng.random(n) < params.nonlinearity_knob)
        # shift by 1..n_positions-1 so the second tag is distinct
        shift = rng.integers(1, params.n_positions, int(second.sum()))
        tags[second, 1] = (tags[second, 0] + shift) % params.n_positions

    atom = MetaAtomResponse.resonant(params.f_center, params.gamma, params.phase_contrast)
    atom.validate(params.f_center)
    return PathEnsemble(
        delays=delays,
        amplitudes=amplitudes,
        base_phases=phases,
        counts=counts,
        tags=tags,
        n_elements=params.n_elements,
        atom_response=atom,
        tau_rc=params.tau_rc,
        f_center=params.f_center,
        bandwidth=params.bandwidth,
        n_bins=params.n_bins,
        pulse_bandwidth=params.resolved_pulse_bandwidth,
        rolloff=params.rolloff,
        phase_jitter=params.phase_jitter,
        amplitude_jitter=params.amplitude_jitter,
        seed=int(seed),
        params=params,
    )


def raised_cosine_spectrum(freqs, f_center, width, rolloff):
    """Raised-cosine magnitude spectrum whose full support is ``width`` Hz."""
    df = np.abs(np.asarray(freqs, dtype=float) - f_center)
    half = width / 2.0
    flat = half * (1.0 - rolloff) / (1.0 + rolloff)
    out = np.zeros_like(df)
    out[df <= flat] = 1.0
    taper = (df > flat) & (df < half)
    if np.any(taper):
        out[taper] = 0.5 * (1.0 + np.cos(math.pi * (df[taper] - flat) / (half - flat)))
    return out


def _path_terms(ensemble, n_on, freqs, amplitudes, phases):
    """Per-(frequency, path) contributions, shape ``(n_freqs, n_paths)``, C-contiguous.

    Each entry is computed elementwise and callers reduce along the last axis,
    so any subset of frequencies reproduces the same sums bitwise.
    """
    freqs = np.asarray(freqs, dtype=float)
    coef = amplitudes * np.exp(1j * phases)
    atom = ensemble.atom_response
    if atom.is_ideal:
        coef = coef * np.where(n_on % 2 == 1, -1.0, 1.0)
        return np.ascontiguousarray(coef[None, :] * ensemble.propagation(freqs))
    phi_on, phi_off = atom.phases(freqs, ensemble.f_center)
    m = np.arange(int(ensemble.n_interactions.max()) + 1)
    # table[f, i, j] = exp(j (i phi_on(f) + j phi_off(f)))
    table = np.exp(1j * (m[None, :, None] * phi_on[:, None, None] + m[None, None, :] * phi_off[:, None, None]))
    factor = table[:, n_on, ensemble.n_interactions - n_on]
    return np.ascontiguousarray(coef[None, :] * ensemble.propagation(freqs) * factor)


def _transfer(ensemble, states, freqs, realization=None):
    if realization is None:
        amps, phases = ensemble.amplitudes, ensemble.base_phases
    else:
        amps, phases = realization.apply(ensemble)
    freqs = np.asarray(freqs, dtype=float)
    if ensemble.n_paths == 0:
        return np.zeros(freqs.shape, dtype=complex)
    n_on = ensemble.n_on(states)
    return _path_terms(ensemble, n_on, freqs, amps, phases).sum(axis=-1)


def freq_response(ensemble: PathEnsemble, config, realization: Optional[DisorderRealization] = None):
    """Band-limited frequency response and CIR for one configuration.

    ``h_t = ifft(H * P)`` with ``P`` the raised-cosine pulse spectrum, so taps are
    spaced ``1 / bandwidth`` apart.
    """
    states = check_config(config, ensemble.n_elements)
    freqs = ensemble.freqs
    h_f = _transfer(ensemble, states, freqs, realization)
    pulse = raised_cosine_spectrum(freqs, ensemble.f_center, ensemble.pulse_bandwidth, ensemble.rolloff)
    h_t = np.fft.ifft(h_f * pulse)
    return ChannelResponse(_frozen(freqs), _frozen(h_f), _frozen(h_t), float(ensemble.pulse_bandwidth),
                           _frozen(pulse))


def _check_in_band(ensemble, f):
    f = np.asarray(f, dtype=float)
    lo = ensemble.f_center - ensemble.bandwidth / 2
    hi = ensemble.f_center + ensemble.bandwidth / 2
    if np.any((f < lo) | (f > hi)):
        raise ParameterError(f"frequency outside the modeled band [{lo:g}, {hi:g}] Hz")
    return f


def s12(ensemble: PathEnsemble, config, f0) -> complex:
    """Single-frequency transmission, no pulse shaping."""
    states = check_config(config, ensemble.n_elements)
    f0 = _check_in_band(ensemble, float(f0))
    return complex(_transfer(ensemble, states, np.array([f0]))[0])


def transmissions(ensemble: PathEnsemble, configs, freqs, path_weights=None):
    """s12 for many configurations and frequencies, shape ``(n_configs, n_freqs)``.

    ``path_weights`` optionally multiplies each path's amplitude (used for object
    blocking). Rows are computed independently, so chunking over configs or
    frequencies yields bitwise identical values.
    """
    states = check_configs(configs, ensemble.n_elements)
    freqs = _check_in_band(ensemble, np.atleast_1d(freqs))
    out = np.zeros((states.shape[0], freqs.size), dtype=complex)
    if ensemble.n_paths == 0 or states.shape[0] == 0:
        return out
    amps = ensemble.amplitudes if path_weights is None else ensemble.amplitudes * path_weights
    n_on = np.asarray((ensemble.counts @ states.T.astype(np.int64)).T)  # (n_configs, n_paths)
    n_off = ensemble.n_interactions[None, :] - n_on
    atom = ensemble.atom_response
    m_max = int(ensemble.n_interactions.max()) if ensemble.n_paths else 0
    powers = np.arange(m_max + 1)
    for j, f in enumerate(freqs):
        base = amps * np.exp(1j * (ensemble.base_phases - 2.0 * math.pi * f * ensemble.delays))
        if atom.is_ideal:
            terms = base[None, :] * np.where(n_on % 2 == 1, -1.0, 1.0)
        else:
            phi_on, phi_off = atom.phases(f, ensemble.f_center)
            table = np.exp(1j * (powers[:, None] * phi_on + powers[None, :] * phi_off))
            terms = base[None, :] * table[n_on, n_off]
        out[:, j] = terms.sum(axis=-1)
    return out


def _complex_std(values, axis=0):
    """sqrt(var(Re) + var(Im)), population convention, shifted by the first sample."""
    shifted = values - np.take(values, [0], axis=axis)
    var = np.mean(np.abs(shifted) ** 2, axis=axis) - np.abs(np.mean(shifted, axis=axis)) ** 2
    return np.sqrt(np.maximum(var, 0.0))


def in_situ_std(ensemble: PathEnsemble, n_configs, freqs=None, seed=0, executor=None, chunk=32):
    """Std of complex S12 over ``n_configs`` uniformly random configurations, per frequency.

    ``executor`` (a ``concurrent.futures`` executor) parallelizes over fixed-size
    frequency chunks; results do not depend on it.
    """
    n_configs = check_count("n_configs", n_configs, minimum=2)
    freqs = ensemble.freqs if freqs is None else np.atleast_1d(np.asarray(freqs, dtype=float))
    _check_in_band(ensemble, freqs)
    rng = np.random.default_rng(seed)
    configs = rng.integers(0, 2, (n_configs, ensemble.n_elements)).astype(bool)
    chunks = [freqs[i:i + chunk] for i in range(0, freqs.size, chunk)]

    def work(fs):
        return _complex_std(transmissions(ensemble, configs, fs), axis=0)

    parts = list(executor.map(work, chunks)) if executor is not None else [work(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0)


def save_ensemble(ensemble: PathEnsemble, path):
    if ensemble.params is None or ensemble.seed is None:
        raise ParameterError("only synthesized ensembles (with params and seed) can be persisted")
    doc = {
        "format": ENSEMBLE_FORMAT,
        "version": ENSEMBLE_VERSION,
        "seed": int(ensemble.seed),
        "params": ensemble.params.to_dict(),
        "digest": ensemble.digest(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ensemble(path) -> PathEnsemble:
    """Re-synthesize a persisted ensemble and verify its content digest."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != ENSEMBLE_FORMAT:
        raise ParameterError(f"{path}: not an ensemble file")
    if doc.get("version") != ENSEMBLE_VERSION:
        raise ParameterError(f"{path}: unsupported ensemble version {doc.get('version')!r}")
    ensemble = synthesize_ensemble(EnsembleParams.from_dict(doc["params"]), doc["seed"])
    if ensemble.digest() != doc["digest"]:
        raise ParameterError(f"{path}: digest mismatch after re-synthesis")
    return ensemble
