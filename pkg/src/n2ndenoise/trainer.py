"""Supervised, noisy-to-noisy and hybrid training, plus whole-signal denoising."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio_io import AudioBuffer
from .dsp import DEFAULT_FRAME_LEN, frame_signal, overlap_add, pad_for_synthesis
from .errors import AlignmentError, ConfigError, SizeError
from .nn import AdamState, FcnnModel, adam_step, fcnn_forward, loss_and_grads

log = logging.getLogger(__name__)

DEFAULT_RATE = 48000


@dataclass
class TrainingPair:
    input_frame: np.ndarray
    target_frame: np.ndarray
    tag: str  # "supervised" or "n2n"


@dataclass
class TrainConfig:
    minibatch: int = 128
    learning_rate: float = 0.0004
    epochs: int = 25
    frame_len: int = DEFAULT_FRAME_LEN
    seed: int = 0
    shuffle: bool = True
    swap: bool = True
    sample_rate: int = DEFAULT_RATE

    def validate(self):
        if self.minibatch < 1 or self.epochs < 1:
            raise ConfigError("minibatch and epochs must be >= 1")
        if self.frame_len < 2 or self.frame_len % 2:
            raise ConfigError("frame_len must be even")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")


def _mono(buf) -> np.ndarray:
    if isinstance(buf, AudioBuffer):
        if buf.n_channels != 1:
            raise ConfigError("expected a single-channel buffer")
        return buf.channel(0)
    return np.asarray(buf, dtype=np.float64)


def _check_pair(a, b, cfg):
    for buf in (a, b):
        if isinstance(buf, AudioBuffer) and buf.sample_rate != cfg.sample_rate:
            raise ConfigError(f"sample rate {buf.sample_rate} != configured {cfg.sample_rate}")
    x, y = _mono(a), _mono(b)
    if len(x) != len(y):
        raise AlignmentError(f"signal lengths differ: {len(x)} vs {len(y)}")
    return x, y


def make_pairs_supervised(noisy, clean, cfg: TrainConfig) -> list[TrainingPair]:
    y, x = _check_pair(noisy, clean, cfg)
    fy = frame_signal(y, cfg.frame_len).frames
    fx = frame_signal(x, cfg.frame_len).frames
    return [TrainingPair(a, b, "supervised") for a, b in zip(fy, fx)]


def make_pairs_n2n(y, y_prime, cfg: TrainConfig, swap: bool | None = None,
                   seed: int | None = None) -> list[TrainingPair]:
    """Pairs of two noisy realizations. With ``swap`` each pair's roles are
    exchanged with probability 1/2 (seeded)."""
    a, b = _check_pair(y, y_prime, cfg)
    fa = frame_signal(a, cfg.frame_len).frames
    fb = frame_signal(b, cfg.frame_len).frames
    swap = cfg.swap if swap is None else swap
    flips = np.zeros(len(fa), dtype=bool)
    if swap:
        flips = np.random.default_rng(cfg.seed if seed is None else seed).random(len(fa)) < 0.5
    return [TrainingPair(q, p, "n2n") if f else TrainingPair(p, q, "n2n")
            for p, q, f in zip(fa, fb, flips)]


def stack_pairs(pairs: Sequence[TrainingPair], dtype=np.float32):
    x = np.stack([p.input_frame for p in pairs]).astype(dtype)[..., None]
    y = np.stack([p.target_frame for p in pairs]).astype(dtype)[..., None]
    return x, y


def train_step(model: FcnnModel, x, y, state: AdamState, update_stats: bool = True) -> float:
    """One forward/backward/Adam step on a minibatch; returns the batch loss."""
    loss, grads = loss_and_grads(model, x, y, update_stats=update_stats)
    adam_step(model, grads, state)
    return loss


def train(model: FcnnModel, pairs, cfg: TrainConfig, adam_state: AdamState | None = None):
    """Train in place; returns ``(model, adam_state, per_epoch_mean_loss)``.

    ``pairs`` is a list of :class:`TrainingPair` or an ``(inputs, targets)``
    tuple of arrays. With a learning rate of zero the model is left entirely
    untouched, BN running statistics included.
    """
    cfg.validate()
    if isinstance(pairs, tuple):
        x_all, y_all = pairs
        x_all = np.asarray(x_all, dtype=model.dtype).reshape(len(x_all), -1, 1)
        y_all = np.asarray(y_all, dtype=model.dtype).reshape(len(y_all), -1, 1)
    else:
        if not pairs:
            raise SizeError("no training pairs")
        x_all, y_all = stack_pairs(pairs, model.dtype)
    n = len(x_all)
    if n == 0:
        raise SizeError("no training pairs")
    if x_all.shape[1] != cfg.frame_len:
        raise SizeError(f"frames of length {x_all.shape[1]} but frame_len={cfg.frame_len}")

    state = adam_state or AdamState.for_model(model, cfg.learning_rate)
    state.lr = cfg.learning_rate
    frozen = cfg.learning_rate == 0
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            loss = train_step(model, x_all[idx], y_all[idx], state, update_stats=not frozen)
            total += loss * len(idx)
        trace.append(total / n)
        log.info("epoch %d/%d loss %.6g", epoch + 1, cfg.epochs, trace[-1])
    return model, state, trace


def train_hybrid(model0: FcnnModel, n2n_pairs, cfg: TrainConfig):
    """Continue from a supervised model on noisy-to-noisy pairs with a fresh
    optimizer. ``model0`` itself is not modified."""
    model = model0.copy()
    if len(n2n_pairs) == 0:
        return model
    model, _, _ = train(model, n2n_pairs, cfg)
    return model


def denoise_signal(model: FcnnModel, noisy, cfg: TrainConfig, batch: int = 128) -> AudioBuffer:
    """Window, frame, run the network in inference mode and overlap-add.

    The output has exactly as many samples as the input.
    """
    if isinstance(noisy, AudioBuffer):
        if noisy.sample_rate != cfg.sample_rate:
            raise ConfigError(f"input rate {noisy.sample_rate} != model rate {cfg.sample_rate}")
        rate = noisy.sample_rate
    else:
        rate = cfg.sample_rate
    y = _mono(noisy)
    if len(y) < cfg.frame_len:
        raise SizeError(f"input ({len(y)} samples) shorter than one frame")
    padded, off = pad_for_synthesis(y, cfg.frame_len)
    fs = frame_signal(padded, cfg.frame_len)
    out = np.empty_like(fs.frames)
    for start in range(0, fs.n_frames, batch):
        chunk = fs.frames[start:start + batch, :, None]
        out[start:start + batch] = fcnn_forward(model, chunk, "infer")[..., 0]
    fs.frames = out
    return AudioBuffer.mono(overlap_add(fs)[off:off + len(y)], rate)


def write_loss_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(trace, 1):
            w.writerow([i, repr(float(v))])


def pairs_from_files(entries, kind: str, cfg: TrainConfig):
    """Build pairs from manifest-style ``(input_path, target_path)`` tuples."""
    from .audio_io import read_wav

    out = []
    for i, (a, b) in enumerate(entries):
        ya, yb = read_wav(a), read_wav(b)
        if kind == "supervised":
            out += make_pairs_supervised(ya, yb, cfg)
        else:
            out += make_pairs_n2n(ya, yb, cfg, seed=cfg.seed + i)
    return out
