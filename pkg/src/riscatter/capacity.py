"""Waterfilling capacity of ISI channels given by CIR envelopes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import ParameterError

__all__ = ["WaterfillResult", "CapacityCurve", "waterfill", "capacity_from_cir", "write_capacity_csv"]


class WaterfillResult(NamedTuple):
    capacity: float
    allocation: np.ndarray
    water_level: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class CapacityCurve:
    snr_db: np.ndarray
    bits_per_channel_use: np.ndarray
    channel_label: str = ""


def waterfill(gains, snr_db) -> WaterfillResult:
    """Optimal power split over parallel Gaussian bins.

    Parameters
    ----------
    gains : array_like
        Power gains ``|H(f_k)|^2`` of the ``N`` bins.
    snr_db : float
        ``10 log10(1 / sigma^2)``; the transmit power averages 1 per bin, i.e.
        ``sum(P) = N``.

    Returns
    -------
    WaterfillResult
        ``capacity`` in bits per channel use, ``(1/N) sum log2(1 + P g / sigma^2)``;
        ``allocation`` ``P_k = max(0, mu - sigma^2 / g_k)``; ``degenerate`` is set
        (with zero capacity and allocation) when every gain is zero.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ParameterError("gains must be a non-empty vector")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ParameterError("gains must be finite and nonnegative")
    n = g.size
    if not np.any(g > 0):
        return WaterfillResult(0.0, np.zeros(n), 0.0, True)
    noise = 10.0 ** (-float(snr_db) / 10.0)

    order = np.argsort(-g, kind="stable")
    positive = order[g[order] > 0]
    inv = noise / g[positive]  # increasing
    budget = float(n)
    cum = np.cumsum(inv)
    # largest active set whose water level clears the weakest active floor
    active = positive.size
    while active > 1:
        mu = (budget + cum[active - 1]) / active
        if mu > inv[active - 1]:
            break
        active -= 1
    mu = (budget + cum[active - 1]) / active
    allocation = np.zeros(n)
    allocation[positive[:active]] = mu - inv[:active]
    capacity = float(np.sum(np.log2(1.0 + allocation * g / noise)) / n)
    return WaterfillResult(capacity, allocation, float(mu), False)


def capacity_from_cir(envelope, snr_grid, normalize=True, label=""):
    """Capacity versus SNR of the ISI channel whose taps are ``envelope``.

    Gains are ``|DFT(envelope)|^2`` over the ``len(envelope)`` band bins. With
    ``normalize`` the taps are scaled to unit energy first, so the mean gain is 1
    and channels compare at equal received energy. The averaged envelope makes
    the result an upper bound on the ergodic capacity of the underlying fading
    channel.
    """
    env = np.asarray(envelope, dtype=float)
    if env.ndim != 1 or env.size == 0:
        raise ParameterError("envelope must be a non-empty vector")
    if np.any(env < 0):
        raise ParameterError("envelope must be nonnegative")
    energy = float(np.sum(env**2))
    if energy == 0:
        raise ParameterError("envelope is identically zero")
    if normalize:
        env = env / np.sqrt(energy)
    gains = np.abs(np.fft.fft(env)) ** 2
    snr = np.asarray(snr_grid, dtype=float)
    caps = np.array([waterfill(gains, s).capacity for s in snr])
    return CapacityCurve(snr, caps, label)


def write_capacity_csv(curves, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "capacity_bits_per_channel_use", "label"])
        for curve in curves:
            for s, c in zip(curve.snr_db, curve.bits_per_channel_use):
                writer.writerow([repr(float(s)), repr(float(c)), curve.channel_label])
