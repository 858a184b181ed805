import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2ndenoise.audio_io import AudioBuffer
from n2ndenoise.corpus import SPEAKER_SETS, gen_noise, gen_speech
from n2ndenoise.dsp import frame_signal, mid_side_compose, rms
from n2ndenoise.errors import ConfigError, ShapeError
from n2ndenoise.nn import ArchConfig, init_model
from n2ndenoise.pipeline import (NoiseClusterBank, PipelineConfig, PipelineState, VadState,
                                 classifier_step, frame_energy_db, noise_features,
                                 process_stream, run_field_sim, stereo_frames, vad_classify,
                                 write_trace_csv)

RATE = 48000
TINY = ArchConfig(3, 4, 5)


def frames_of(x, L=960):
    return frame_signal(x, L).frames


# ------------------------------------------------------------------ VAD


def test_vad_zero_frames_are_noise():
    st_ = VadState()
    for f in frames_of(np.zeros(RATE)):
        d, st_ = vad_classify(f, st_)
        assert d == "noise"
    assert st_.hangover_remaining == 0


def test_vad_tone_burst_and_hangover(rng):
    low = 1e-3 * rng.standard_normal(RATE)
    t = np.arange(RATE // 5) / RATE
    burst = 10 ** (30 / 20) * 1e-3 * np.sqrt(2) * np.sin(2 * np.pi * 500 * t)
    x = np.concatenate([low, burst + 1e-3 * rng.standard_normal(len(t)),
                        1e-3 * rng.standard_normal(RATE // 2)])
    fs = frames_of(x)
    st_ = VadState()
    decisions = []
    for f in fs:
        d, st_ = vad_classify(f, st_)
        decisions.append(d)
    first_full_burst = RATE // 480  # frame starting at 1 s
    assert decisions[first_full_burst + 2] == "speech"
    last_burst_frame = max(i for i, f in enumerate(fs) if i * 480 < RATE + len(t) - 960)
    # after the burst the next five frames stay speech through the hangover
    tail = decisions[last_burst_frame + 2:]
    first_noise = tail.index("noise")
    assert 5 <= first_noise <= 7
    assert st_.hangover_remaining >= 0


def test_vad_floor_tracks_stationary_noise(rng):
    for level in (1e-4, 1e-2, 0.3):
        x = level * rng.standard_normal(3 * RATE)
        fs = frames_of(x)
        st_ = VadState(noise_floor_db=20.0)  # start far above
        for f in fs:
            _, st_ = vad_classify(f, st_)
        true_db = 10 * np.log10(np.mean(fs ** 2))
        assert abs(st_.noise_floor_db - true_db) < 3.0


def test_vad_energy_floor():
    assert frame_energy_db(np.zeros(960)) == pytest.approx(-120.0)


# -------------------------------------------------------------- features


def test_features_white_flat():
    x = gen_noise("white", RATE, 3).channel(0)
    f = np.mean([noise_features(fr) for fr in frames_of(x)], axis=0)
    assert f.shape == (8,)
    assert f.max() - f.min() < 1.5


def test_features_lowpass_descending():
    x = gen_noise("wind", RATE, 3).channel(0)
    f = np.mean([noise_features(fr) for fr in frames_of(x)], axis=0)
    assert np.all(np.diff(f) < 0)


def test_features_scale_by_ten(rng):
    fr = rng.standard_normal(960)
    np.testing.assert_allclose(noise_features(10 * fr) - noise_features(fr), 1.0, atol=1e-12)
    assert np.all(noise_features(np.zeros(960)) == -6.0)
    with pytest.raises(ShapeError):
        noise_features(np.ones(32))
    assert noise_features(rng.standard_normal(64)).shape == (8,)


# ------------------------------------------------------------ classifier


def test_classifier_spawn_and_exact_match(rng):
    bank = NoiseClusterBank()
    f = rng.standard_normal(8)
    j, bank = classifier_step(bank, f)
    assert j == 0 and len(bank.centroids) == 1
    before = bank.centroids[0].copy()
    j, bank = classifier_step(bank, f)
    assert j == 0
    np.testing.assert_array_equal(bank.centroids[0], before)
    assert bank.counts == [2]


def test_classifier_ema_and_far_spawn():
    bank = NoiseClusterBank(tau=1.0, k_max=2, ema_alpha=0.05)
    classifier_step(bank, np.zeros(8))
    classifier_step(bank, np.full(8, 0.1))
    np.testing.assert_allclose(bank.centroids[0], 0.005)
    j, _ = classifier_step(bank, np.full(8, 5.0))
    assert j == 1
    # at the cap a far point joins the nearest cluster without moving it
    c1 = bank.centroids[1].copy()
    j, _ = classifier_step(bank, np.full(8, 50.0))
    assert j == 1 and len(bank.centroids) == 2
    np.testing.assert_array_equal(bank.centroids[1], c1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_classifier_cap(k_max, seed):
    rng = np.random.default_rng(seed)
    bank = NoiseClusterBank(tau=0.5, k_max=k_max)
    for _ in range(200):
        j, bank = classifier_step(bank, rng.standard_normal(8) * 10)
        assert 0 <= j < len(bank.centroids) <= k_max
        assert all(c > 0 for c in bank.counts)


def _two_type_run(n_frames=1000, seg=125):
    """Alternate ``seg``-frame chunks of two continuous noise recordings."""
    n_chunks = n_frames // seg
    streams = {k: frames_of(0.1 * gen_noise(k, (n_frames // 2 + 2) * 480, 50).channel(0))
               for k in ("white", "wind")}
    bank = NoiseClusterBank()
    labels, ids = [], []
    for c in range(n_chunks):
        kind = ("white", "wind")[c % 2]
        start = (c // 2) * seg
        for fr in streams[kind][start:start + seg]:
            j, bank = classifier_step(bank, noise_features(fr))
            ids.append(j)
            labels.append(kind)
    return np.array(labels), np.array(ids), bank


def assignment_consistency(labels, ids):
    """Fraction of frames whose cluster is the majority cluster of their true type."""
    good = 0
    for kind in np.unique(labels):
        good += np.bincount(ids[labels == kind]).max()
    return good / len(labels)


def test_classifier_separates_two_types():
    labels, ids, bank = _two_type_run()
    assert len(labels) == 1000
    assert assignment_consistency(labels, ids) >= 0.95
    assert len(bank.centroids) <= bank.k_max
    maj = {k: np.bincount(ids[labels == k]).argmax() for k in ("white", "wind")}
    assert maj["white"] != maj["wind"]


# ------------------------------------------------------------- pipeline


def _stereo_stream(seconds_speech=3.0, snr_db=10.0, lead_s=0.5, seed=0):
    p = replace(SPEAKER_SETS["A"], duration_s=seconds_speech, seed=seed, p_silence=0.05)
    sp = gen_speech(p).channel(0)
    lead = int(lead_s * RATE)
    clean = np.concatenate([np.zeros(lead), sp])
    nm = gen_noise("white", len(clean), seed + 1).channel(0)
    ns = gen_noise("white", len(clean), seed + 2).channel(0)
    a = rms(sp) / (rms(nm + ns) * 10 ** (snr_db / 20))
    left, right = mid_side_compose(clean + a * nm, a * ns)
    return AudioBuffer.stereo(left, right, RATE)


def test_off_mode_is_pure():
    model = init_model(0, TINY)
    before = [p.copy() for p in model.state_arrays()]
    buf = _stereo_stream(1.0)
    outs = []
    for _ in range(2):
        st_ = PipelineState.create(model, PipelineConfig(), "off")
        y, trace = run_field_sim(st_, buf, None)
        outs.append(y.samples)
        assert st_.steps_taken == 0 and not st_.models.entries and not st_.pair_buffers
        assert {r.switch for r in trace} == {"off"}
    np.testing.assert_array_equal(outs[0], outs[1])
    for p, q in zip(before, model.state_arrays()):
        np.testing.assert_array_equal(p, q)


def test_on_mode_noise_only_takes_no_steps():
    model = init_model(0, TINY)
    x = 0.05 * gen_noise("white", 2 * RATE, 8).channel(0)
    buf = AudioBuffer.stereo(x, 0.05 * gen_noise("white", 2 * RATE, 9).channel(0), RATE)
    st_ = PipelineState.create(model, PipelineConfig(), "on")
    run_field_sim(st_, buf, None)
    assert st_.steps_taken == 0
    assert not st_.models.entries


def test_on_mode_trains_exactly_one_entry():
    model = init_model(0, TINY)
    pre = [p.copy() for p in model.state_arrays()]
    buf = _stereo_stream(4.0)
    st_ = PipelineState.create(model, PipelineConfig(), "on")
    y, trace = run_field_sim(st_, buf, None)
    n_speech = sum(r.vad == "speech" for r in trace)
    assert n_speech >= 128
    assert st_.steps_taken >= 1
    trained = [k for k, e in st_.models.entries.items() if e.steps > 0]
    assert len(trained) == 1
    entry = st_.models.entries[trained[0]]
    assert entry.adam.t == entry.steps == st_.steps_taken
    assert any(not np.array_equal(p, q) for p, q in zip(pre, entry.model.state_arrays()))
    for p, q in zip(pre, model.state_arrays()):  # the pretrained model is never touched
        np.testing.assert_array_equal(p, q)
    assert y.n_samples == buf.n_samples and np.all(np.isfinite(y.samples))


def test_switch_schedule_and_trace(tmp_path):
    model = init_model(0, TINY)
    buf = _stereo_stream(4.0)
    st_ = PipelineState.create(model, PipelineConfig(minibatch=32), "off")
    y, trace = run_field_sim(st_, buf, 200)
    assert [r.switch for r in trace] == ["on"] * 200 + ["off"] * (len(trace) - 200)
    steps = [r.steps_taken for r in trace]
    assert steps == sorted(steps) and steps[-1] == steps[199] >= 1
    assert not st_.pair_buffers
    write_trace_csv(tmp_path / "t.csv", trace)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["frame", "vad", "noise_type", "switch", "steps_taken"]
    assert len(rows) == len(trace) + 1 and rows[1][0] == "0"


def test_on_mode_rejects_mono():
    model = init_model(0, TINY)
    st_ = PipelineState.create(model, PipelineConfig(), "on")
    with pytest.raises(ConfigError):
        run_field_sim(st_, AudioBuffer.mono(np.zeros(RATE), RATE), None)
    st_ = PipelineState.create(model, PipelineConfig(), "off")
    y, _ = run_field_sim(st_, AudioBuffer.mono(0.01 * np.ones(RATE), RATE), None)
    assert y.n_samples == RATE


def test_process_stream_shape_checks():
    st_ = PipelineState.create(init_model(0, TINY))
    with pytest.raises(ShapeError):
        process_stream(st_, np.zeros((3, 2, 100)))
    with pytest.raises(ConfigError):
        st_.set_switch("auto")
    with pytest.raises(ConfigError):
        PipelineState.create(init_model(0, TINY), PipelineConfig(channel="right"))


def test_mid_channel_output_differs():
    model = init_model(0, TINY)
    buf = _stereo_stream(1.0)
    frames, _, _ = stereo_frames(buf, 960)
    left, _ = process_stream(PipelineState.create(model, PipelineConfig()), frames)
    mid, _ = process_stream(PipelineState.create(model, PipelineConfig(channel="mid")), frames)
    assert left.shape == mid.shape and not np.array_equal(left, mid)
