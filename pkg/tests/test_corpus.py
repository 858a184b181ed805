from dataclasses import replace

import numpy as np
import pytest

from n2ndenoise.audio_io import read_wav
from n2ndenoise.corpus import (NOISE_KINDS, SPEAKER_SETS, CorpusConfig, DatasetManifest,
                               SpeechGenParams, build_dataset, gen_noise, gen_speech,
                               generate_corpus, split)
from n2ndenoise.dsp import mid_side_decompose, rms
from n2ndenoise.errors import ConfigError

RATE = 48000


def test_speech_deterministic_and_peaked():
    p = SpeechGenParams(duration_s=0.5, seed=9)
    a, b = gen_speech(p), gen_speech(p)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.max(np.abs(a.samples)) == 1.0
    assert a.sample_rate == RATE and a.n_samples == RATE // 2
    c = gen_speech(replace(p, seed=10))
    assert not np.array_equal(a.samples, c.samples)


def test_speech_harmonic_peak():
    f0 = 150.0
    p = SpeechGenParams(f0_range=(f0, f0), p_voiced=1.0, p_unvoiced=0.0, p_silence=0.0,
                        glide=0.0, duration_s=2.0, seed=4)
    x = gen_speech(p).channel(0)
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    freqs = np.fft.rfftfreq(len(x), 1 / RATE)
    peak = freqs[np.argmax(spec)]
    h = round(peak / f0)
    assert h >= 1 and abs(peak - h * f0) <= 10.0


def test_speech_params_validation():
    with pytest.raises(ConfigError):
        gen_speech(SpeechGenParams(f0_range=(50.0, 120.0)))
    with pytest.raises(ConfigError):
        gen_speech(SpeechGenParams(duration_s=0.0))


def test_speakers_differ():
    a, b = SPEAKER_SETS["A"], SPEAKER_SETS["B"]
    assert a.f0_range[1] < b.f0_range[0]
    assert all(fa < fb for (fa, _), (fb, _) in zip(a.formants, b.formants))


@pytest.fixture(scope="module")
def ten_seconds():
    return {k: (gen_noise(k, 10 * RATE, 1).channel(0), gen_noise(k, 10 * RATE, 2).channel(0))
            for k in NOISE_KINDS}


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_noise_zero_mean_and_decorrelated(ten_seconds, kind):
    a, b = ten_seconds[kind]
    assert abs(np.mean(a)) < 1e-3 * rms(a)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
    np.testing.assert_array_equal(a, gen_noise(kind, 10 * RATE, 1).channel(0))


def test_wind_is_low_frequency(ten_seconds):
    a, _ = ten_seconds["wind"]
    power = np.abs(np.fft.rfft(a)) ** 2
    f = np.fft.rfftfreq(len(a), 1 / RATE)
    assert power[f < 500].sum() / power.sum() > 0.8


def test_engine_has_low_fundamental(ten_seconds):
    a, _ = ten_seconds["engine"]
    power = np.abs(np.fft.rfft(a)) ** 2
    f = np.fft.rfftfreq(len(a), 1 / RATE)
    peak = f[np.argmax(power[1:]) + 1]
    assert 25.0 <= peak <= 2000.0


def test_noise_errors():
    with pytest.raises(ConfigError):
        gen_noise("rain", 100, 0)
    with pytest.raises(ConfigError):
        gen_noise("white", 0, 0)


SMALL = CorpusConfig(utterances_per_speaker=10, utterance_s=0.1)


def test_independent_corpus_counts_and_snr():
    recs = list(generate_corpus(SMALL))
    roles = [e.role for e, _ in recs]
    assert roles.count("clean") == 10
    assert roles.count("noisy_a") == roles.count("noisy_b") == 30
    clean = {e.id: x for e, x in recs if e.role == "clean"}
    for e, x in recs:
        if e.role in ("noisy_a", "noisy_b"):
            c = clean[e.clean_id]
            measured = 10 * np.log10(np.mean(c ** 2) / np.mean((x - c) ** 2))
            assert abs(measured - e.snr_db) < 1e-6
    assert max(np.max(np.abs(x)) for _, x in recs) <= 1.0


def test_noisy_pairs_share_clean_and_differ_in_seed():
    recs = list(generate_corpus(SMALL))
    m = DatasetManifest([e for e, _ in recs])
    for a in m.by_role("noisy_a"):
        b = m.partner(a)
        assert b.clean_id == a.clean_id and b.snr_db == a.snr_db
        assert b.noise_type == a.noise_type
    arrays = {e.id: x for e, x in recs}
    a = m.by_role("noisy_a")[0]
    assert not np.array_equal(arrays[a.id], arrays[m.partner(a).id])


def test_midside_corpus():
    recs = list(generate_corpus(replace(SMALL, utterances_per_speaker=2), "midside"))
    arrays = {e.id: x for e, x in recs}
    m = DatasetManifest([e for e, _ in recs])
    for l_entry in m.by_role("stereo_l"):
        left, right = arrays[l_entry.id], arrays[m.partner(l_entry).id]
        mid, side = mid_side_decompose(left, right)
        c = arrays[l_entry.clean_id]
        nm = mid - c
        # side noise has the mid noise's power, and both are independent
        assert rms(side) == pytest.approx(rms(nm), rel=1e-9)
        lp, rp = left - c, right - c
        assert abs(np.max(np.abs((lp + rp) / 2 - nm))) <= 1e-12
        assert abs(np.max(np.abs((lp - rp) / 2 - side))) <= 1e-12
        measured = 10 * np.log10(np.mean(c ** 2) / np.mean(lp ** 2))
        assert abs(measured - l_entry.snr_db) < 1e-6


def test_corpus_determinism():
    a = list(generate_corpus(replace(SMALL, utterances_per_speaker=2)))
    b = list(generate_corpus(replace(SMALL, utterances_per_speaker=2)))
    assert [e for e, _ in a] == [e for e, _ in b]
    for (_, x), (_, y) in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_build_dataset_writes_files(tmp_path):
    cfg = replace(SMALL, utterances_per_speaker=2, speakers=("A", "B"))
    m = build_dataset(cfg, tmp_path)
    back = DatasetManifest.read(tmp_path / "manifest.jsonl")
    assert back.entries == m.entries
    for e in back:
        buf = read_wav(back.resolve(e))
        assert buf.sample_rate == RATE and buf.n_samples == int(0.1 * RATE)
    recs = dict((e.id, x) for e, x in generate_corpus(cfg))
    e = back.by_role("noisy_a")[0]
    np.testing.assert_array_equal(back.load(e).channel(0), recs[e.id].astype(np.float32))
    assert {e.speaker for e in back} == {"A", "B"}


def test_manifest_validation(tmp_path):
    (tmp_path / "m.jsonl").write_text(
        '{"id": "x", "role": "noisy_a", "path": "x.wav", "clean_id": "nope"}\n')
    with pytest.raises(ConfigError):
        DatasetManifest.read(tmp_path / "m.jsonl")


def test_split():
    m = DatasetManifest([e for e, _ in generate_corpus(SMALL)])
    s1, s2 = split(m, 0.2, 7), split(m, 0.2, 7)
    test_ids = {e.clean_id for e in s1 if e.split == "test"}
    assert len(test_ids) == 2
    assert [e.split for e in s1] == [e.split for e in s2]
    train_ids = {e.clean_id for e in s1 if e.split == "train"}
    assert not test_ids & train_ids
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            split(m, bad, 0)


def test_corpus_config_validation():
    with pytest.raises(ConfigError):
        list(generate_corpus(CorpusConfig(speakers=("Z",))))
    with pytest.raises(ConfigError):
        list(generate_corpus(CorpusConfig(noise_kinds=("rain",))))
    with pytest.raises(ConfigError):
        list(generate_corpus(SMALL, mode="surround"))
