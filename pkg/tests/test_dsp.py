import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2ndenoise import dsp
from n2ndenoise.errors import (AlignmentError, DegenerateSignalError, MissingEstimateError,
                               SizeError)


def test_hann_closed_forms():
    np.testing.assert_allclose(dsp.hann_window(4), [0, 0.5, 1.0, 0.5], atol=1e-15)
    np.testing.assert_array_equal(dsp.hann_window(2), [0.0, 1.0])
    with pytest.raises(SizeError):
        dsp.hann_window(1)


@given(st.integers(1, 2000))
def test_hann_cola_exact(half):
    w = dsp.hann_window(2 * half)
    assert np.all(w[:half] + w[half:] == 1.0)


def test_hann_matches_formula():
    n = 960
    k = np.arange(n)
    np.testing.assert_allclose(dsp.hann_window(n), 0.5 * (1 - np.cos(2 * np.pi * k / n)),
                               atol=1e-15)
    sym = dsp.hann_window(9, periodic=False)
    assert sym[0] == 0 and sym[-1] == 0 and sym[4] == 1


def test_frame_examples():
    fs = dsp.frame_signal(np.ones(12), 4)
    for f in fs.frames:
        np.testing.assert_allclose(f, [0, 0.5, 1, 0.5], atol=1e-15)
    assert dsp.frame_signal(np.arange(10.0), 4).n_frames == 4
    with pytest.raises(SizeError):
        dsp.frame_signal(np.ones(3), 4)


def test_unwindowed_frames_are_strided_slices(rng):
    x = rng.standard_normal(1000)
    fs = dsp.frame_signal(x, 100, apply_window=False)
    for i, f in enumerate(fs.frames):
        np.testing.assert_array_equal(f, x[i * 50:i * 50 + 100])
    glued = np.concatenate([fs.frames[0][:50]] + [f[:50] for f in fs.frames[1:]]
                           + [fs.frames[-1][50:]])
    np.testing.assert_array_equal(glued, x[:len(glued)])


@pytest.mark.parametrize("seed", range(5))
def test_ola_reconstruction(seed):
    x = np.random.default_rng(seed).standard_normal(4800)
    y = dsp.overlap_add(dsp.frame_signal(x, 960))
    inner = slice(480, 4800 - 480)
    assert np.max(np.abs(y[inner] - x[inner]) / np.abs(x[inner]).clip(1e-300)) < 1e-10
    assert len(y) == 4800


def test_ola_constant_and_empty():
    y = dsp.overlap_add(dsp.frame_signal(np.ones(4800), 960))
    np.testing.assert_allclose(y[480:-480], 1.0, rtol=0, atol=1e-15)
    assert y[0] == 0.0
    fs = dsp.frame_signal(np.ones(8), 4)
    fs.frames = fs.frames[:0]
    with pytest.raises(SizeError):
        dsp.overlap_add(fs)


def test_pad_for_synthesis_full_reconstruction(rng):
    for n in (960, 1000, 4801):
        x = rng.standard_normal(n)
        padded, off = dsp.pad_for_synthesis(x, 960)
        y = dsp.overlap_add(dsp.frame_signal(padded, 960))[off:off + n]
        np.testing.assert_allclose(y, x, rtol=1e-12, atol=1e-12)


def test_mid_side_examples():
    assert dsp.mid_side_compose(np.array([0.5]), np.array([0.25])) == ([0.75], [0.25])
    m = np.array([0.3, -0.2])
    l, r = dsp.mid_side_compose(m, np.zeros(2))
    np.testing.assert_array_equal(l, m) and np.testing.assert_array_equal(r, m)
    s = np.array([0.1, 0.4])
    l, r = dsp.mid_side_compose(np.zeros(2), s)
    np.testing.assert_array_equal(l, s)
    np.testing.assert_array_equal(r, -s)
    m, s = dsp.mid_side_decompose(np.array([0.75]), np.array([0.25]))
    assert m.tolist() == [0.5] and s.tolist() == [0.25]
    with pytest.raises(SizeError):
        dsp.mid_side_compose(np.zeros(2), np.zeros(3))
    with pytest.raises(SizeError):
        dsp.mid_side_decompose(np.zeros(2), np.zeros(3))


def test_mid_side_roundtrip(rng):
    l, r = rng.uniform(-1, 1, (2, 10000))
    l2, r2 = dsp.mid_side_compose(*dsp.mid_side_decompose(l, r))
    assert np.max(np.abs(l2 - l)) < 1e-15 and np.max(np.abs(r2 - r)) < 1e-15
    _, s = dsp.mid_side_decompose(l, l)
    assert not np.any(s)


def test_decorrelation_construction(rng):
    n = 48000 * 10
    nm, ns = rng.standard_normal((2, n))
    left, right = dsp.mid_side_compose(nm, ns)
    assert abs(np.corrcoef(left, right)[0, 1]) < 0.05


def test_mix_at_snr_examples(rng):
    clean = rng.standard_normal(1000)
    clean *= 0.1 / dsp.rms(clean)
    noise = rng.standard_normal(1500)
    noise *= 0.1 / dsp.rms(noise[:1000])
    _, scaled = dsp.mix_at_snr(clean, noise, 0.0)
    np.testing.assert_allclose(scaled, noise[:1000], rtol=1e-12)
    _, scaled = dsp.mix_at_snr(clean, noise, 20.0)
    np.testing.assert_allclose(scaled, 0.1 * noise[:1000], rtol=1e-12)
    noisy, scaled = dsp.mix_at_snr(clean, noise, -5.0)
    assert abs(10 * np.log10(np.mean(clean ** 2) / np.mean(scaled ** 2)) + 5.0) < 1e-9
    np.testing.assert_allclose(noisy, clean + scaled)
    _, scaled2 = dsp.mix_at_snr(2 * clean, noise, -5.0)
    np.testing.assert_allclose(scaled2, 2 * scaled, rtol=1e-12)


def test_mix_at_snr_errors(rng):
    with pytest.raises(DegenerateSignalError):
        dsp.mix_at_snr(np.zeros(10), rng.standard_normal(10), 0.0)
    with pytest.raises(DegenerateSignalError):
        dsp.mix_at_snr(rng.standard_normal(10), np.zeros(10), 0.0)
    with pytest.raises(AlignmentError):
        dsp.mix_at_snr(rng.standard_normal(10), rng.standard_normal(5), 0.0)


def test_rfft_examples():
    np.testing.assert_allclose(dsp.rfft(np.array([1.0, 0, 0, 0]), 4), np.ones(3))
    np.testing.assert_allclose(dsp.rfft(np.ones(4), 4), [4, 0, 0], atol=1e-15)
    with pytest.raises(SizeError):
        dsp.rfft(np.ones(4), 6)


def test_rfft_against_naive_dft(rng):
    x = rng.standard_normal(64)
    t = np.arange(64)
    naive = np.array([np.sum(x * np.exp(-2j * np.pi * k * t / 64)) for k in range(33)])
    np.testing.assert_allclose(dsp.rfft(x, 64), naive, rtol=1e-10, atol=1e-10)
    back = dsp.irfft(dsp.rfft(x[:40], 64), 64)
    np.testing.assert_allclose(back[:40], x[:40], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(back[40:], 0, atol=1e-12)


def test_wiener_limits(rng):
    x = np.sin(2 * np.pi * 440 * np.arange(9600) / 48000)
    silent = dsp.frame_signal(np.zeros(1920), 960)
    y = dsp.wiener_denoise(x, silent)
    assert len(y) == len(x)
    np.testing.assert_allclose(y[480:-480], x[480:-480], atol=1e-6)

    noise = rng.standard_normal(48000) * 0.1
    est = dsp.frame_signal(rng.standard_normal(48000) * 0.1, 960)
    out = dsp.wiener_denoise(noise, est)
    assert np.sum(out ** 2) < np.sum(noise ** 2)

    with pytest.raises(MissingEstimateError):
        dsp.wiener_denoise(x, None)


@settings(max_examples=20, deadline=None)
@given(st.integers(960, 5000))
def test_wiener_length_contract(n):
    x = np.random.default_rng(n).standard_normal(n)
    assert len(dsp.wiener_denoise(x, dsp.estimate_noise_frames(x))) == n


def test_estimate_noise_frames_picks_quiet(rng):
    x = rng.standard_normal(48000)
    x[:9600] *= 0.01
    fs = dsp.estimate_noise_frames(x, fraction=0.1)
    assert fs.n_frames == 10
    assert np.max(np.abs(fs.frames)) < 0.1
