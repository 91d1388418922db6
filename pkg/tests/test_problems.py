import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linbreg.linop import OperatorKind
from linbreg.problems import (DYNRANGE_MAX_EXP, add_noise, add_noise_for_snr, fold_frequencies,
                              gen_instance, gen_sinusoid_instance, gen_sparse_signal,
                              instance_from_json, postselect_top_spikes, preset_name,
                              sigma_for_snr, sinusoid, snr_db, table_presets)


@given(st.integers(1, 300), st.data(), st.sampled_from(["uniform", "dynrange"]),
       st.integers(0, 2**32 - 1))
def test_sparse_signal_support(n, data, mode, seed):
    kappa = data.draw(st.integers(1, n))
    u = gen_sparse_signal(n, kappa, mode, seed)
    assert np.count_nonzero(u) == kappa
    if mode == "uniform":
        assert np.all(np.abs(u) < 1)
    else:
        assert np.all(np.abs(u) < 10.0 ** DYNRANGE_MAX_EXP)
    np.testing.assert_array_equal(u, gen_sparse_signal(n, kappa, mode, seed))


def test_dynrange_spans_decades():
    u = gen_sparse_signal(4000, 80, "dynrange", 0)
    mags = np.abs(u[u != 0])
    assert mags.max() / mags.min() > 1e8
    assert np.all(gen_sparse_signal(100, 10, "dynrange", 1, signed=False) >= 0)


def test_sparse_signal_errors():
    with pytest.raises(ValueError):
        gen_sparse_signal(5, 6)
    with pytest.raises(ValueError):
        gen_sparse_signal(5, 0)
    with pytest.raises(ValueError):
        gen_sparse_signal(5, 2, "other")


def test_snr_values():
    assert snr_db(np.ones(4), np.zeros(4)) == math.inf
    assert snr_db(np.full(4, 10.0), np.ones(4)) == pytest.approx(20.0)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_snr_scaling(a, c):
    u = np.array([1.0, -2.0, 3.0])
    n = np.array([0.1, 0.2, -0.3])
    base = snr_db(u, n)
    assert snr_db(a * u, n) == pytest.approx(base + 20 * math.log10(a), abs=1e-9)
    assert snr_db(u, c * n) == pytest.approx(base - 20 * math.log10(c), abs=1e-9)


def test_sigma_for_snr_inverts_expected_noise_norm():
    u = np.ones(100)
    sigma = sigma_for_snr(u, 400, 20.0)
    assert sigma * math.sqrt(400) == pytest.approx(np.linalg.norm(u) / 10)


def test_gen_instance_consistent_and_seeded():
    inst = gen_instance("dct", 128, 40, 6, "uniform", 9)
    assert inst.op.kind is OperatorKind.PARTIAL_DCT and inst.op.shape == (40, 128)
    np.testing.assert_allclose(inst.f_clean, inst.op.apply(inst.u_bar))
    np.testing.assert_array_equal(inst.f_obs, inst.f_clean)
    assert inst.sigma == 0 and inst.snr_db == math.inf
    again = gen_instance("dct", 128, 40, 6, "uniform", 9)
    np.testing.assert_array_equal(again.u_bar, inst.u_bar)
    np.testing.assert_array_equal(again.op.rows, inst.op.rows)
    other = gen_instance("dct", 128, 40, 6, "uniform", 10)
    assert not np.array_equal(other.u_bar, inst.u_bar)
    g = gen_instance("gaussian", 30, 10, 3, "uniform", 1)
    assert g.op.kind is OperatorKind.DENSE
    with pytest.raises(ValueError):
        gen_instance("dct", 10, 11, 2)


def test_add_noise():
    inst = gen_instance("dct", 128, 40, 6, "uniform", 2)
    noisy = add_noise(inst, 0.1, 3)
    assert noisy.noise.std() == pytest.approx(0.1, rel=0.4)
    assert noisy.snr_db == pytest.approx(snr_db(inst.u_bar, noisy.noise))
    np.testing.assert_array_equal(add_noise(inst, 0.1, 3).f_obs, noisy.f_obs)
    assert add_noise(inst, 0.0, 3).snr_db == math.inf
    with pytest.raises(ValueError):
        add_noise(inst, -1.0, 0)


def test_add_noise_for_snr_lands_near_target():
    inst = gen_instance("dct", 4000, 1327, 80, "uniform", 0)
    noisy = add_noise_for_snr(inst, 24.0, 1)
    assert noisy.snr_db == pytest.approx(24.0, abs=0.5)


def test_instance_json_round_trip(tmp_path):
    inst = add_noise(gen_instance("gaussian", 40, 12, 3, "dynrange", 4), 0.01, 8)
    back = instance_from_json(inst.to_json())
    np.testing.assert_array_equal(back.f_obs, inst.f_obs)
    np.testing.assert_array_equal(back.op.matrix, inst.op.matrix)
    assert json.loads(inst.to_json())["noise_seed"] == 8
    path = tmp_path / "inst.csv"
    inst.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,u_bar,f_clean,f_obs" and len(lines) == 41


def test_sinusoid_formula():
    x = sinusoid(8, 2.0, 0.5, 1, 2)
    t = np.arange(8)
    np.testing.assert_allclose(x, 2 * np.sin(np.pi * t / 4) + 0.5 * np.cos(np.pi * t / 2))


def test_sinusoid_spectrum_has_four_spikes():
    inst = gen_sinusoid_instance(64, 0.5, 0.0, 0, a=0.7, b=-0.3, k1=5, k2=12)
    spec = inst.spectrum
    assert set(np.flatnonzero(np.abs(spec) > 1e-9)) == {5, 59, 12, 52}
    # a sin term carries a*sqrt(n)/2 at each of its two bins
    assert abs(spec[5]) == pytest.approx(0.7 * math.sqrt(64) / 2)
    assert inst.true_frequencies() == frozenset({5, 12})
    assert len(inst.sample_indices) == 32
    np.testing.assert_allclose(inst.op.apply(spec), inst.f_obs, atol=1e-12)


def test_sinusoid_noise_and_seeding():
    a = gen_sinusoid_instance(200, 0.4, 1.0, 3)
    b = gen_sinusoid_instance(200, 0.4, 1.0, 3)
    np.testing.assert_array_equal(a.f_obs, b.f_obs)
    clean = gen_sinusoid_instance(200, 0.4, 0.0, 3)
    assert (clean.k1, clean.k2, clean.a) == (a.k1, a.k2, a.a)
    np.testing.assert_array_equal(clean.sample_indices, a.sample_indices)
    assert a.snr_db < clean.snr_db == math.inf
    with pytest.raises(ValueError):
        gen_sinusoid_instance(10, 0.0, 0.0, 0)
    with pytest.raises(ValueError):
        gen_sinusoid_instance(10, 0.5, -1.0, 0)


def test_fold_frequencies():
    assert fold_frequencies([3, 97, 50], 100) == frozenset({3, 50})


def test_postselect_top_spikes():
    x = np.array([0.1, -3.0, 2.0, 0.5j, 2.0])
    out = postselect_top_spikes(x, 2)
    np.testing.assert_array_equal(out, [0, -3.0, 2.0, 0, 0])
    assert not np.any(postselect_top_spikes(x, 0))
    np.testing.assert_array_equal(postselect_top_spikes(x, 5), x)
    with pytest.raises(ValueError):
        postselect_top_spikes(x, 6)


def test_presets():
    presets = table_presets()
    assert len(presets) == 12
    assert preset_name(presets[0]) == "gaussian-1000-300"
    assert ("dct", 4000, 1327, 80) in presets
    presets.clear()
    assert len(table_presets()) == 12
