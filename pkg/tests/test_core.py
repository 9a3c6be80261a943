import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riscatter import ParameterError
from riscatter.core import (
    DisorderRealization,
    EnsembleParams,
    MetaAtomResponse,
    Path,
    PathEnsemble,
    RisConfig,
    freq_response,
    in_situ_std,
    load_ensemble,
    raised_cosine_spectrum,
    s12,
    save_ensemble,
    synthesize_ensemble,
    transmissions,
)

from conftest import direct_idft, direct_response, single_path_ensemble


# ---- types -------------------------------------------------------------------------------------

def test_config_flip_involution_and_bits():
    c = RisConfig.random(17, np.random.default_rng(0))
    assert c.flip(4).flip(4) == c
    assert c.flip(4) != c
    assert RisConfig.from_bits(c.to_bits()) == c
    assert len(c) == 17
    with pytest.raises(ParameterError):
        c.flip(17)


def test_meta_atom_contrast_and_validation():
    atom = MetaAtomResponse.resonant(2.5e9, 400e6)
    assert atom.contrast(2.5e9) == pytest.approx(math.pi)
    assert atom.f_on == pytest.approx(2.5e9 - 200e6)
    atom.validate(2.5e9)
    weak = MetaAtomResponse.resonant(2.5e9, 400e6, 0.5 * math.pi)
    with pytest.raises(ParameterError, match="phase contrast"):
        weak.validate(2.5e9)
    with pytest.raises(ParameterError):
        MetaAtomResponse(2.4e9, 2.6e9, 0.0)
    on, off = atom.phases(np.array([2.5e9]), 2.5e9)
    assert off[0] == 0.0


def test_meta_atom_contrast_decays_off_resonance():
    atom = MetaAtomResponse.resonant(2.5e9, 400e6)
    far = [atom.contrast(2.5e9 + d) for d in (600e6, 1e9)]
    assert all(c < 0.5 * math.pi for c in far)


def test_ideal_atom_is_pm_one():
    atom = MetaAtomResponse.resonant(2.5e9, math.inf)
    assert atom.is_ideal
    on, off = atom.phases(np.linspace(2.4e9, 2.6e9, 5), 2.5e9)
    assert np.all(on == math.pi) and np.all(off == 0)


def test_params_validation_names_field():
    with pytest.raises(ParameterError, match="n_paths"):
        EnsembleParams(n_paths=0).validate()
    with pytest.raises(ParameterError, match="t_max"):
        EnsembleParams(bandwidth=66e6, n_bins=16).validate()
    with pytest.raises(ParameterError, match="phase_contrast"):
        EnsembleParams(phase_contrast=0.5 * math.pi).validate()
    with pytest.raises(ParameterError, match="unknown"):
        EnsembleParams.from_dict({"n_path": 3})


def test_empty_ensemble_is_rejected_by_synthesis():
    with pytest.raises(ParameterError):
        synthesize_ensemble(EnsembleParams(n_paths=0), 0)


# ---- synthesis ---------------------------------------------------------------------------------

def test_synthesis_is_deterministic():
    p = EnsembleParams(n_paths=500)
    a, b = synthesize_ensemble(p, 42), synthesize_ensemble(p, 42)
    assert a.paths == b.paths
    assert a.digest() == b.digest()
    assert synthesize_ensemble(p, 43).digest() != a.digest()


def test_synthesis_path_invariants():
    p = EnsembleParams(n_paths=3000, tagged_fraction=0.4)
    ens = synthesize_ensemble(p, 1)
    assert np.all((ens.delays >= 0) & (ens.delays <= p.resolved_t_max))
    assert np.all(ens.amplitudes >= 0)
    assert np.all(ens.tags[:, 1] == -1)  # single tag when knob = 0
    assert 0.35 < np.mean(ens.tags[:, 0] >= 0) < 0.45
    # interaction counts grow with delay
    late = ens.delays > p.resolved_t_max / 2
    assert ens.n_interactions[late].mean() > ens.n_interactions[~late].mean()


def test_second_tags_are_distinct():
    ens = synthesize_ensemble(EnsembleParams(n_paths=3000, tagged_fraction=0.5, nonlinearity_knob=0.5), 2)
    two = ens.tags[:, 1] >= 0
    assert two.any()
    assert np.all(ens.tags[two, 0] != ens.tags[two, 1])


def test_power_decay_slope_from_amplitudes():
    ens = synthesize_ensemble(EnsembleParams(n_paths=10_000), 5)
    edges = np.linspace(0, ens.params.resolved_t_max, 21)
    idx = np.digitize(ens.delays, edges) - 1
    mean_power = np.array([np.mean(ens.amplitudes[idx == b] ** 2) for b in range(20)])
    slope = np.polyfit(0.5 * (edges[:-1] + edges[1:]), np.log(mean_power), 1)[0]
    assert -1 / slope == pytest.approx(ens.tau_rc, rel=0.10)


def test_cir_envelope_decay_time_constant():
    p = EnsembleParams(n_paths=10_000)
    power = 0.0
    for s in range(30):
        ens = synthesize_ensemble(p, s)
        power = power + np.abs(freq_response(ens, RisConfig.zeros(ens.n_elements)).h_t) ** 2
    t = ens.times
    sel = (t > 30e-9) & (t < 450e-9)
    slope = np.polyfit(t[sel], np.log(power[sel]), 1)[0]
    assert -1 / slope == pytest.approx(p.tau_rc, rel=0.10)


def test_unit_expected_power():
    totals = [np.sum(synthesize_ensemble(EnsembleParams(n_paths=2000), s).amplitudes ** 2) for s in range(40)]
    assert np.mean(totals) == pytest.approx(1.0, rel=0.05)


def test_ensemble_round_trip(tmp_path, small_ensemble):
    path = tmp_path / "e.json"
    save_ensemble(small_ensemble, path)
    loaded = load_ensemble(path)
    assert loaded.digest() == small_ensemble.digest()
    doc = json.loads(path.read_text())
    doc["seed"] += 1
    path.write_text(json.dumps(doc))
    with pytest.raises(ParameterError, match="digest"):
        load_ensemble(path)


# ---- responses ---------------------------------------------------------------------------------

def test_empty_ensemble_zero_field():
    ens = PathEnsemble.from_paths([], 4)
    r = freq_response(ens, RisConfig.zeros(4))
    assert np.all(r.h_f == 0) and np.all(r.h_t == 0)
    assert s12(ens, RisConfig.zeros(4), 2.5e9) == 0


def test_single_path_direct_transmission():
    ens = PathEnsemble.from_paths([Path(0.0, 1.0, 0.0)], 0)
    for f0 in (2.48e9, 2.5e9, 2.53e9):
        assert s12(ens, RisConfig.zeros(0), f0) == 1 + 0j


def test_single_path_flip_negates_exactly():
    ens = single_path_ensemble(delay=37e-9, phase=0.4)
    on = freq_response(ens, [1])
    off = freq_response(ens, [0])
    assert np.array_equal(on.h_f, -off.h_f)


def test_response_matches_direct_summation_oracle():
    ens = synthesize_ensemble(EnsembleParams(n_paths=150, n_elements=8, n_bins=64, t_max=500e-9,
                                             interaction_rate=0.8), 7)
    rng = np.random.default_rng(7)
    states = rng.integers(0, 2, 8).astype(bool)
    r = freq_response(ens, states)
    H = direct_response(ens, states)
    assert np.max(np.abs(r.h_f - H)) <= 1e-10 * np.max(np.abs(H))
    h_t = direct_idft(H * raised_cosine_spectrum(ens.freqs, ens.f_center, ens.pulse_bandwidth, ens.rolloff))
    assert np.max(np.abs(r.h_t - h_t)) <= 1e-10 * np.max(np.abs(h_t))


def test_h_t_is_exact_inverse_dft_and_parseval(shaping_ensemble):
    r = freq_response(shaping_ensemble, RisConfig.random(102, np.random.default_rng(1)))
    assert np.array_equal(r.h_t, np.fft.ifft(r.h_f * r.pulse))
    e_t = np.sum(np.abs(r.h_t) ** 2)
    e_f = np.sum(np.abs(r.h_f * r.pulse) ** 2) / r.h_f.size
    assert abs(e_t - e_f) <= 1e-9 * e_f


def test_raised_cosine_support():
    f = np.linspace(-60e6, 60e6, 1201)
    p = raised_cosine_spectrum(f, 0.0, 66e6, 0.25)
    assert np.all(p[np.abs(f) >= 33e6] == 0)
    assert np.all(p[np.abs(f) <= 33e6 * 0.75 / 1.25] == 1)
    assert np.all((p >= 0) & (p <= 1))


def test_flip_twice_bit_identical(small_ensemble):
    c = RisConfig.random(small_ensemble.n_elements, np.random.default_rng(4))
    a = freq_response(small_ensemble, c)
    b = freq_response(small_ensemble, c.flip(3).flip(3))
    assert np.array_equal(a.h_f, b.h_f) and np.array_equal(a.h_t, b.h_t)


def test_linearity_in_amplitudes(small_ensemble):
    c = RisConfig.random(small_ensemble.n_elements, np.random.default_rng(5))
    a = freq_response(small_ensemble, c)
    b = freq_response(small_ensemble.with_amplitudes(small_ensemble.amplitudes * 4.0), c)
    assert np.array_equal(b.h_f, 4.0 * a.h_f)
    assert np.array_equal(b.h_t, 4.0 * a.h_t)


def test_repeated_calls_bitwise(small_ensemble):
    c = RisConfig.random(small_ensemble.n_elements, np.random.default_rng(6))
    assert np.array_equal(freq_response(small_ensemble, c).h_t, freq_response(small_ensemble, c).h_t)


def test_s12_matches_grid_bin_exactly(small_ensemble):
    c = RisConfig.random(small_ensemble.n_elements, np.random.default_rng(8))
    r = freq_response(small_ensemble, c)
    for k in (0, 5, 33, 63):
        assert s12(small_ensemble, c, small_ensemble.freqs[k]) == r.h_f[k]


def test_transmissions_match_s12(small_ensemble):
    rng = np.random.default_rng(9)
    configs = rng.integers(0, 2, (5, small_ensemble.n_elements))
    freqs = small_ensemble.freqs[[3, 10]]
    T = transmissions(small_ensemble, configs, freqs)
    for i in range(5):
        for j, f in enumerate(freqs):
            assert T[i, j] == pytest.approx(s12(small_ensemble, configs[i], f), rel=1e-12, abs=1e-15)


def test_out_of_band_rejected(small_ensemble):
    with pytest.raises(ParameterError, match="band"):
        s12(small_ensemble, RisConfig.zeros(small_ensemble.n_elements), 3e9)


def test_wrong_config_length_rejected(small_ensemble):
    with pytest.raises(ParameterError):
        freq_response(small_ensemble, RisConfig.zeros(3))


def test_narrowband_sign_flip_rule():
    rng = np.random.default_rng(10)
    paths = [Path(float(rng.uniform(0, 400e-9)), float(rng.rayleigh()), float(rng.uniform(0, 2 * math.pi)),
                  tuple(int(e) for e in rng.integers(0, 5, rng.poisson(1.5))))
             for _ in range(60)]
    ens = PathEnsemble.from_paths(paths, 5, MetaAtomResponse.ideal(2.5e9))
    states = rng.integers(0, 2, 5).astype(bool)
    f0 = 2.51e9
    for e in range(5):
        flipped = states.copy()
        flipped[e] = ~flipped[e]
        lhs = s12(ens, states, f0) - s12(ens, flipped, f0)
        contrib = 0j
        for p in paths:
            if p.interactions.count(e) % 2 == 1:
                sign = (-1.0) ** sum(states[i] for i in p.interactions)
                contrib += p.amplitude * sign * np.exp(1j * (p.base_phase - 2 * math.pi * f0 * p.delay))
        # phases reach ~1e4 rad, so both sides carry ~1e-12 angle rounding
        assert lhs == pytest.approx(2 * contrib, rel=1e-10, abs=1e-11)


def test_disorder_identity_is_noop(small_ensemble):
    c = RisConfig.zeros(small_ensemble.n_elements)
    a = freq_response(small_ensemble, c)
    b = freq_response(small_ensemble, c, DisorderRealization.identity(small_ensemble))
    assert np.array_equal(a.h_t, b.h_t)


def test_disorder_draw_reproducible(small_ensemble):
    a = DisorderRealization.draw(small_ensemble, 5)
    b = DisorderRealization.draw(small_ensemble, 5)
    assert np.array_equal(a.phase_jitter, b.phase_jitter)
    assert np.all(np.abs(a.phase_jitter) <= small_ensemble.phase_jitter / 2)


# ---- characterization --------------------------------------------------------------------------

def test_std_zero_without_interactions():
    ens = synthesize_ensemble(EnsembleParams(n_paths=200, interaction_rate=0.0), 1)
    std = in_situ_std(ens, 50, ens.freqs[::16])
    assert np.all(std == 0)


def test_std_single_path_bernoulli():
    ens = single_path_ensemble()
    std = in_situ_std(ens, 4000, [2.5e9], seed=3)
    assert std[0] == pytest.approx(1.0, abs=1e-3)


def test_std_independent_of_threads(small_ensemble):
    a = in_situ_std(small_ensemble, 60, seed=1, chunk=8)
    with ThreadPoolExecutor(4) as ex:
        b = in_situ_std(small_ensemble, 60, seed=1, executor=ex, chunk=8)
    assert np.array_equal(a, b)


def test_std_peaks_near_resonance():
    ens = synthesize_ensemble(EnsembleParams.for_characterization(n_paths=800), 0)
    freqs = ens.freqs[::8]
    std = in_situ_std(ens, 200, freqs, seed=0)
    assert abs(freqs[np.argmax(std)] - 2.5e9) <= 200e6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(0.1, 10.0))
def test_property_flip_and_scale(seed, n_el, scale):
    ens = synthesize_ensemble(EnsembleParams(n_paths=40, n_elements=n_el, n_bins=32, t_max=400e-9,
                                             interaction_rate=1.0), seed)
    rng = np.random.default_rng(seed)
    c = RisConfig.random(n_el, rng)
    e = int(rng.integers(n_el))
    base = freq_response(ens, c)
    assert np.array_equal(freq_response(ens, c.flip(e).flip(e)).h_f, base.h_f)
    scaled = freq_response(ens.with_amplitudes(ens.amplitudes * scale), c)
    np.testing.assert_allclose(scaled.h_f, scale * base.h_f, rtol=1e-12, atol=1e-15)
    e_t = np.sum(np.abs(base.h_t) ** 2)
    e_f = np.sum(np.abs(base.h_f * base.pulse) ** 2) / base.h_f.size
    assert abs(e_t - e_f) <= 1e-9 * max(e_f, 1e-300)
