"""Field deployment loop: mid averaging, energy VAD, online noise classifier,
a per-noise-type model bank and the training switch.

Frames flow through :func:`process_stream` one at a time. Noise frames feed
the classifier and the VAD floor; speech frames, when the switch is on, are
buffered as (left, right) pairs and every full minibatch triggers one Adam
step on the model of the active noise type.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .dsp import (ANALYSIS_NFFT, DEFAULT_FRAME_LEN, FrameSequence, frame_signal,
                  overlap_add, pad_for_synthesis, rfft)
from .errors import ConfigError, ShapeError
from .nn import AdamState, FcnnModel, adam_step, fcnn_forward, loss_and_grads

ENERGY_FLOOR = 1e-12
FEATURE_FLOOR = 1e-12
N_BANDS = 8
BAND_LO_HZ = 50.0
BAND_HI_HZ = 24000.0


@dataclass
class PipelineConfig:
    frame_len: int = DEFAULT_FRAME_LEN
    sample_rate: int = 48000
    vad_offset_db: float = 6.0
    hangover: int = 5
    floor_rise: float = 0.02  # fraction of the gap closed per noise frame when energy rises
    tau: float = 1.0
    k_max: int = 4
    ema_alpha: float = 0.05
    type_hold: int = 3  # consecutive noise frames before a new noise type becomes active
    minibatch: int = 128
    learning_rate: float = 0.0004
    channel: str = "left"  # or "mid"
    swap: bool = True
    seed: int = 0

    def validate(self):
        if self.frame_len < 64 or self.frame_len % 2:
            raise ConfigError("frame_len must be even and >= 64")
        if self.k_max < 1 or self.minibatch < 1 or self.type_hold < 1 or self.hangover < 0:
            raise ConfigError("k_max, minibatch and type_hold must be >= 1, hangover >= 0")
        if self.channel not in ("left", "mid"):
            raise ConfigError(f"channel must be 'left' or 'mid', got {self.channel!r}")
        if not 0 < self.ema_alpha <= 1 or not 0 < self.floor_rise <= 1:
            raise ConfigError("ema_alpha and floor_rise must lie in (0, 1]")


# ------------------------------------------------------------------------ VAD


@dataclass
class VadState:
    noise_floor_db: float | None = None
    hangover_remaining: int = 0
    threshold_offset_db: float = 6.0


def frame_energy_db(frame) -> float:
    f = np.asarray(frame, dtype=np.float64)
    return float(10.0 * np.log10(np.mean(f * f) + ENERGY_FLOOR))


def vad_classify(frame, state: VadState, hangover: int = 5, floor_rise: float = 0.02):
    """Return ``("speech" | "noise", new_state)``.

    Speech iff the frame energy exceeds the floor by the offset; a speech
    decision is held for ``hangover`` more frames. The floor follows noise
    frames as a minimum that drops instantly and creeps up slowly.
    """
    e = frame_energy_db(frame)
    floor = e if state.noise_floor_db is None else state.noise_floor_db
    hang = state.hangover_remaining
    if e > floor + state.threshold_offset_db:
        return "speech", VadState(floor, hangover, state.threshold_offset_db)
    if hang > 0:
        return "speech", VadState(floor, hang - 1, state.threshold_offset_db)
    floor = e if e < floor else floor + floor_rise * (e - floor)
    return "noise", VadState(floor, 0, state.threshold_offset_db)


# ----------------------------------------------------------------- features


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _inv_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def band_edges(rate: int = 48000, n_bands: int = N_BANDS):
    hi = min(BAND_HI_HZ, rate / 2.0)
    return _inv_mel(np.linspace(_mel(BAND_LO_HZ), _mel(hi), n_bands + 1))


def noise_features(frame, rate: int = 48000) -> np.ndarray:
    """8 mel-spaced log band levels: ``0.5*log10(mean band power)``, i.e. log10
    of the band RMS, so scaling the frame by 10 adds 1 to every entry."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 1 or len(f) < 64:
        raise ShapeError("noise_features needs a 1-D frame of >= 64 samples")
    n_fft = max(ANALYSIS_NFFT, 1 << (len(f) - 1).bit_length())
    power = np.abs(rfft(f, n_fft)) ** 2
    freqs = np.arange(len(power)) * rate / n_fft
    edges = band_edges(rate)
    feats = np.empty(N_BANDS)
    for b in range(N_BANDS):
        sel = (freqs >= edges[b]) & (freqs < edges[b + 1])
        if b == N_BANDS - 1:
            sel |= freqs == edges[-1]
        if not sel.any():  # band narrower than a bin: take the nearest one
            sel = np.zeros(len(freqs), dtype=bool)
            sel[np.argmin(np.abs(freqs - 0.5 * (edges[b] + edges[b + 1])))] = True
        feats[b] = 0.5 * np.log10(max(float(power[sel].mean()), FEATURE_FLOOR))
    return feats


# --------------------------------------------------------------- classifier


@dataclass
class NoiseClusterBank:
    tau: float = 1.0
    k_max: int = 4
    ema_alpha: float = 0.05
    centroids: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def copy(self):
        return NoiseClusterBank(self.tau, self.k_max, self.ema_alpha,
                                [c.copy() for c in self.centroids], list(self.counts))


def classifier_step(bank: NoiseClusterBank, feat):
    """Online capped nearest-centroid clustering. Returns ``(id, bank)``;
    ``bank`` is updated in place."""
    feat = np.asarray(feat, dtype=np.float64)
    if not bank.centroids:
        bank.centroids.append(feat.copy())
        bank.counts.append(1)
        return 0, bank
    d = np.array([np.linalg.norm(feat - c) for c in bank.centroids])
    j = int(np.argmin(d))
    if d[j] <= bank.tau:
        bank.centroids[j] += bank.ema_alpha * (feat - bank.centroids[j])
        bank.counts[j] += 1
        return j, bank
    if len(bank.centroids) < bank.k_max:
        bank.centroids.append(feat.copy())
        bank.counts.append(1)
        return len(bank.centroids) - 1, bank
    # at the cap: nearest wins, but a far-off frame does not drag the centroid
    bank.counts[j] += 1
    return j, bank


# ---------------------------------------------------------------- model bank


@dataclass
class BankEntry:
    model: FcnnModel
    adam: AdamState
    steps: int = 0
    created_frame: int = 0


@dataclass
class ModelBank:
    entries: dict = field(default_factory=dict)

    def get(self, noise_type):
        return self.entries.get(noise_type)

    def ensure(self, noise_type: int, pretrained: FcnnModel, lr: float, frame_idx: int):
        if noise_type not in self.entries:
            model = pretrained.copy()
            self.entries[noise_type] = BankEntry(model, AdamState.for_model(model, lr),
                                                 created_frame=frame_idx)
        return self.entries[noise_type]

    def snapshot(self):
        return {k: [p.copy() for p in e.model.state_arrays()] for k, e in self.entries.items()}


@dataclass
class PipelineState:
    pretrained: FcnnModel
    cfg: PipelineConfig = field(default_factory=PipelineConfig)
    training_switch: str = "off"
    vad: VadState = field(default_factory=VadState)
    bank: NoiseClusterBank = field(default_factory=NoiseClusterBank)
    models: ModelBank = field(default_factory=ModelBank)
    pair_buffers: dict = field(default_factory=dict)
    active_noise_type: int | None = None
    candidate_type: int | None = None
    candidate_run: int = 0
    steps_taken: int = 0
    frames_seen: int = 0
    rng: np.random.Generator | None = None

    @classmethod
    def create(cls, pretrained: FcnnModel, cfg: PipelineConfig | None = None,
               training_switch: str = "off"):
        cfg = cfg or PipelineConfig()
        cfg.validate()
        return cls(pretrained, cfg, training_switch,
                   VadState(threshold_offset_db=cfg.vad_offset_db),
                   NoiseClusterBank(cfg.tau, cfg.k_max, cfg.ema_alpha),
                   rng=np.random.default_rng([cfg.seed, 0xF1E1D]))

    def set_switch(self, mode: str):
        if mode not in ("on", "off"):
            raise ConfigError(f"training switch must be 'on' or 'off', got {mode!r}")
        self.training_switch = mode
        if mode == "off":
            self.pair_buffers.clear()


@dataclass
class TraceRow:
    frame: int
    vad: str
    noise_type: int  # -1 before any noise frame was seen
    switch: str
    steps_taken: int


# -------------------------------------------------------------- processing


def _model_for(state: PipelineState, noise_type):
    entry = state.models.get(noise_type)
    return state.pretrained if entry is None else entry.model


def _flush(state, pending, noise_type, out):
    """Denoise queued frames with the model currently serving ``noise_type``."""
    items = pending.pop(noise_type, None)
    if not items:
        return
    model = _model_for(state, noise_type)
    idx = [i for i, _ in items]
    x = np.stack([f for _, f in items])[:, :, None].astype(model.dtype)
    out[idx] = fcnn_forward(model, x, "infer")[..., 0]


def _adam_update(state: PipelineState, entry: BankEntry, pairs):
    a = np.stack([p[0] for p in pairs])
    b = np.stack([p[1] for p in pairs])
    if state.cfg.swap:
        flip = state.rng.random(len(pairs)) < 0.5
        a, b = np.where(flip[:, None], b, a), np.where(flip[:, None], a, b)
    dt = entry.model.dtype
    _, grads = loss_and_grads(entry.model, a[:, :, None].astype(dt), b[:, :, None].astype(dt))
    entry.adam.lr = state.cfg.learning_rate
    adam_step(entry.model, grads, entry.adam)
    entry.steps += 1
    state.steps_taken += 1


def _update_active(state: PipelineState, label: int):
    """Switch the active noise type only after ``type_hold`` consecutive
    noise frames agree, so a lone transition frame cannot redirect training."""
    if label == state.active_noise_type or state.active_noise_type is None:
        state.active_noise_type = label
        state.candidate_type, state.candidate_run = None, 0
        return
    if label == state.candidate_type:
        state.candidate_run += 1
    else:
        state.candidate_type, state.candidate_run = label, 1
    if state.candidate_run >= state.cfg.type_hold:
        state.active_noise_type = label
        state.candidate_type, state.candidate_run = None, 0


def process_stream(state: PipelineState, frames, trace: list | None = None):
    """Run windowed frames through the pipeline.

    ``frames`` has shape ``(n_frames, n_channels, frame_len)`` with one or two
    channels (left, right). Returns the denoised windowed frames
    ``(n_frames, frame_len)``; ``state`` is advanced in place and also
    returned. Per-frame :class:`TraceRow` records go to ``trace`` if given.
    """
    cfg = state.cfg
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[:, None, :]
    if frames.ndim != 3 or frames.shape[2] != cfg.frame_len or frames.shape[1] not in (1, 2):
        raise ShapeError(f"expected (n, 1|2, {cfg.frame_len}) frames, got {frames.shape}")
    stereo = frames.shape[1] == 2
    if state.training_switch == "on" and not stereo:
        raise ConfigError("training switch is on but the input is mono")

    out = np.zeros((len(frames), cfg.frame_len))
    pending: dict = {}
    for i, fr in enumerate(frames):
        mid = 0.5 * (fr[0] + fr[1]) if stereo else fr[0]
        decision, state.vad = vad_classify(mid, state.vad, cfg.hangover, cfg.floor_rise)
        if decision == "noise":
            label, state.bank = classifier_step(state.bank, noise_features(mid, cfg.sample_rate))
            _update_active(state, label)
        nt = state.active_noise_type

        if decision == "speech" and state.training_switch == "on" and nt is not None:
            had_entry = nt in state.models.entries
            entry = state.models.ensure(nt, state.pretrained, cfg.learning_rate,
                                        state.frames_seen)
            if not had_entry:
                _flush(state, pending, nt, out)  # frames so far went through the pretrained model
            buf = state.pair_buffers.setdefault(nt, [])
            buf.append((fr[0].copy(), fr[1].copy()))
            if len(buf) >= cfg.minibatch:
                _flush(state, pending, nt, out)
                _adam_update(state, entry, buf)
                buf.clear()

        src = fr[0] if cfg.channel == "left" else mid
        pending.setdefault(nt, []).append((i, src))
        if trace is not None:
            trace.append(TraceRow(state.frames_seen, decision, -1 if nt is None else nt,
                                  state.training_switch, state.steps_taken))
        state.frames_seen += 1

    for nt in list(pending):
        _flush(state, pending, nt, out)
    if state.training_switch == "off":
        state.pair_buffers.clear()
    return out, state


def stereo_frames(buf: AudioBuffer, frame_len: int):
    """Pad for synthesis and frame every channel; returns ``(frames, offset, FrameSequence)``
    where the sequence is a template for overlap-add at the sink."""
    chans = []
    fs = None
    for c in range(buf.n_channels):
        padded, off = pad_for_synthesis(buf.channel(c), frame_len)
        fs = frame_signal(padded, frame_len)
        chans.append(fs.frames)
    return np.stack(chans, axis=1), off, fs


def run_field_sim(state: PipelineState, buf: AudioBuffer, train_frames: int | None):
    """Switch on for the first ``train_frames`` frames, then off; ``None``
    keeps the current switch position. Returns ``(denoised buffer, trace)``."""
    if buf.sample_rate != state.cfg.sample_rate:
        raise ConfigError(f"input rate {buf.sample_rate} != configured {state.cfg.sample_rate}")
    frames, off, fs = stereo_frames(buf, state.cfg.frame_len)
    trace: list = []
    if train_frames is None:
        out, _ = process_stream(state, frames, trace)
    else:
        n_on = max(0, min(int(train_frames), len(frames)))
        state.set_switch("on")
        out_a, _ = process_stream(state, frames[:n_on], trace) if n_on else (np.zeros((0, fs.frame_len)), state)
        state.set_switch("off")
        out_b, _ = process_stream(state, frames[n_on:], trace)
        out = np.concatenate([out_a, out_b])
    sink = FrameSequence(out, fs.frame_len, fs.hop, True, fs.source_len)
    y = overlap_add(sink)[off:off + buf.n_samples]
    return AudioBuffer.mono(y, buf.sample_rate), trace


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "vad", "noise_type", "switch", "steps_taken"])
        for r in trace:
            w.writerow([r.frame, r.vad, r.noise_type, r.switch, r.steps_taken])
