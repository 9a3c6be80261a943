"""Independent evaluation of the disorder-averaged envelope for exhaustive search."""

import itertools
import math

import numpy as np

from riscatter.core import EnsembleParams, raised_cosine_spectrum, synthesize_ensemble
from riscatter.shaping import disorder_realizations


def ten_element_ensemble(seed):
    return synthesize_ensemble(EnsembleParams(n_paths=200, n_elements=10, n_bins=64, t_max=500e-9,
                                              interaction_rate=0.8), seed)


def all_configs(n):
    return np.array(list(itertools.product([0, 1], repeat=n)), dtype=bool)


def exhaustive_envelopes(ensemble, configs, n_realizations, seed, chunk=128):
    """Averaged |h_t| for every row of ``configs`` by explicit per-hit phase accumulation."""
    freqs = ensemble.freqs
    pulse = raised_cosine_spectrum(freqs, ensemble.f_center, ensemble.pulse_bandwidth, ensemble.rolloff)
    phi_on, phi_off = ensemble.atom_response.phases(freqs, ensemble.f_center)
    dense = ensemble.counts.toarray()
    out = np.zeros((configs.shape[0], ensemble.n_bins))
    reals = disorder_realizations(ensemble, n_realizations, seed)
    for start in range(0, configs.shape[0], chunk):
        block = configs[start:start + chunk]
        n_on = block.astype(int) @ dense.T
        n_off = dense.sum(axis=1)[None, :] - n_on
        atom = np.exp(1j * (n_on[..., None] * phi_on + n_off[..., None] * phi_off))  # (C, P, F)
        acc = np.zeros((block.shape[0], ensemble.n_bins))
        for r in reals:
            amps, phases = r.apply(ensemble)
            base = amps[:, None] * np.exp(1j * (phases[:, None] - 2 * math.pi * np.outer(ensemble.delays, freqs)))
            H = np.einsum("cpf,pf->cf", atom, base)
            acc += np.abs(np.fft.ifft(H * pulse, axis=-1))
        out[start:start + chunk] = acc / len(reals)
    return out


def tap_values(ensemble, configs, tap, n_realizations, seed):
    """Averaged envelope at one tap for every row of ``configs``.

    The tap is a direct DFT sum over bins; each path's factor is tabulated per
    ON count, so the cost is linear in the number of configurations.
    """
    freqs = ensemble.freqs
    n = ensemble.n_bins
    pulse = raised_cosine_spectrum(freqs, ensemble.f_center, ensemble.pulse_bandwidth, ensemble.rolloff)
    kernel = pulse * np.exp(2j * math.pi * np.arange(n) * tap / n) / n
    phi_on, phi_off = ensemble.atom_response.phases(freqs, ensemble.f_center)
    dense = ensemble.counts.toarray()
    total = dense.sum(axis=1)
    m_max = int(total.max())
    prop = np.exp(-2j * math.pi * np.outer(ensemble.delays, freqs))
    g = np.zeros((ensemble.n_paths, m_max + 1), dtype=complex)
    for m in range(m_max + 1):
        off = np.clip(total - m, 0, None)
        g[:, m] = (prop * np.exp(1j * (m * phi_on[None, :] + off[:, None] * phi_off[None, :]))) @ kernel
    n_on = np.asarray(configs, dtype=int) @ dense.T
    picked = np.take_along_axis(np.broadcast_to(g, (n_on.shape[0],) + g.shape), n_on[..., None], axis=2)[..., 0]
    acc = np.zeros(n_on.shape[0])
    for r in disorder_realizations(ensemble, n_realizations, seed):
        amps, phases = r.apply(ensemble)
        acc += np.abs(picked @ (amps * np.exp(1j * phases)))
    return acc / n_realizations
