import math

import numpy as np
import pytest

from riscatter.core import EnsembleParams, MetaAtomResponse, Path, PathEnsemble, synthesize_ensemble


@pytest.fixture(scope="session")
def shaping_ensemble():
    return synthesize_ensemble(EnsembleParams.for_shaping(), 7)


@pytest.fixture(scope="session")
def small_ensemble():
    return synthesize_ensemble(EnsembleParams(n_paths=300, n_elements=12, n_bins=64, bandwidth=66e6,
                                              tau_rc=100e-9, t_max=500e-9, interaction_rate=0.5), 3)


@pytest.fixture(scope="session")
def localization_ensemble():
    return synthesize_ensemble(EnsembleParams.for_localization(), 11)


def single_path_ensemble(n_elements=1, interactions=(0,), amplitude=1.0, delay=0.0, phase=0.0, **kw):
    return PathEnsemble.from_paths([Path(delay, amplitude, phase, tuple(interactions))], n_elements,
                                   MetaAtomResponse.ideal(2.5e9), **kw)


def direct_response(ensemble, states, freqs=None, amps=None, phases=None):
    """Independent per-path loop: H(f) = sum a exp(j(phi - 2 pi f tau + sum of per-hit phases))."""
    freqs = ensemble.freqs if freqs is None else np.asarray(freqs, dtype=float)
    amps = ensemble.amplitudes if amps is None else amps
    phases = ensemble.base_phases if phases is None else phases
    atom = ensemble.atom_response
    H = np.zeros(freqs.size, dtype=complex)
    for i, p in enumerate(ensemble.paths):
        for j, f in enumerate(freqs):
            if atom.is_ideal:
                factor = 1.0
                for e in p.interactions:
                    factor *= -1.0 if states[e] else 1.0
                extra = 0.0
            else:
                factor = 1.0
                on, off = atom.phases(np.array([f]), ensemble.f_center)
                extra = sum(on[0] if states[e] else off[0] for e in p.interactions)
            H[j] += amps[i] * factor * np.exp(1j * (phases[i] - 2 * math.pi * f * p.delay + extra))
    return H


def direct_idft(x):
    n = x.size
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(2j * math.pi * k * t / n)) / n for t in range(n)])
