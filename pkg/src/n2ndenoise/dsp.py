"""Framing, overlap-add, FFT wrappers, mid/side conversion, SNR mixing and a
decision-directed Wiener filter used as the classical baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateSignalError,
    MissingEstimateError,
    SizeError,
)

DEFAULT_FRAME_LEN = 960  # 20 ms at 48 kHz
ANALYSIS_NFFT = 1024
ENVELOPE_FLOOR = 1e-8

WIENER_ALPHA = 0.98
WIENER_GAIN_FLOOR = 0.1
NOISE_PSD_FLOOR = 1e-20


@dataclass
class FrameSequence:
    frames: np.ndarray  # (n_frames, frame_len)
    frame_len: int
    hop: int
    windowed: bool
    source_len: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hann_window(n: int, periodic: bool = True) -> np.ndarray:
    if n < 2:
        raise SizeError(f"window length must be >= 2, got {n}")
    if not periodic:
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / (n - 1)))
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    if n % 2 == 0:
        # second half written as the complement so w[k] + w[k+n/2] == 1 exactly
        w[n // 2:] = 1.0 - w[: n // 2]
    return w


def n_frames_for(length: int, frame_len: int) -> int:
    hop = frame_len // 2
    return (length - frame_len) // hop + 1


def frame_signal(x, frame_len: int = DEFAULT_FRAME_LEN,
                 apply_window: bool = True) -> FrameSequence:
    x = np.asarray(x)
    if frame_len < 2 or frame_len % 2:
        raise SizeError(f"frame_len must be even and >= 2, got {frame_len}")
    if x.ndim != 1 or len(x) < frame_len:
        raise SizeError(f"signal of length {len(x)} is shorter than one frame ({frame_len})")
    hop = frame_len // 2
    n = n_frames_for(len(x), frame_len)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    frames = x[idx]
    if apply_window:
        frames = frames * hann_window(frame_len)
    return FrameSequence(frames, frame_len, hop, apply_window, len(x))


def overlap_add(fs: FrameSequence) -> np.ndarray:
    """Overlap-add windowed frames and divide by the summed window envelope.

    The result has ``fs.source_len`` samples; samples whose envelope is below
    1e-8 (the very first sample, and any tail past the last frame) are 0.
    """
    if fs.n_frames == 0:
        raise SizeError("empty frame sequence")
    hop, L = fs.hop, fs.frame_len
    length = max(fs.source_len, (fs.n_frames - 1) * hop + L)
    out = np.zeros(length, dtype=np.result_type(fs.frames.dtype, np.float64))
    env = np.zeros(length)
    w = hann_window(L) if fs.windowed else np.ones(L)
    for i, frame in enumerate(fs.frames):
        out[i * hop: i * hop + L] += frame
        env[i * hop: i * hop + L] += w
    ok = env >= ENVELOPE_FLOOR
    out[ok] /= env[ok]
    out[~ok] = 0.0
    return out[: fs.source_len]


def pad_for_synthesis(x: np.ndarray, frame_len: int) -> tuple[np.ndarray, int]:
    """Zero-pad so that every original sample sits where the window envelope
    sums to one. Returns the padded signal and the offset of sample 0."""
    hop = frame_len // 2
    n = -(-len(x) // hop) + 1
    total = (n + 1) * hop
    return np.concatenate([np.zeros(hop), x, np.zeros(total - hop - len(x))]), hop


def mid_side_compose(m, s) -> tuple[np.ndarray, np.ndarray]:
    m, s = np.asarray(m, dtype=np.float64), np.asarray(s, dtype=np.float64)
    if m.shape != s.shape:
        raise SizeError(f"mid/side length mismatch: {m.shape} vs {s.shape}")
    return m + s, m - s


def mid_side_decompose(left, right) -> tuple[np.ndarray, np.ndarray]:
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise SizeError(f"left/right length mismatch: {left.shape} vs {right.shape}")
    return (left + right) / 2.0, (left - right) / 2.0


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def snr_db(clean, noise) -> float:
    return 10.0 * np.log10(np.mean(np.square(clean)) / np.mean(np.square(noise)))


def mix_at_snr(clean, noise, snr_db: float) -> tuple[np.ndarray, np.ndarray]:
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) < len(clean):
        raise AlignmentError(f"noise ({len(noise)}) shorter than clean ({len(clean)})")
    noise = noise[: len(clean)]
    rc, rn = rms(clean), rms(noise)
    if rc == 0.0 or rn == 0.0:
        raise DegenerateSignalError("clean and noise must both be non-silent")
    a = rc / (rn * 10.0 ** (snr_db / 20.0))
    scaled = a * noise
    return clean + scaled, scaled


def _check_nfft(n_fft: int):
    if n_fft < 1 or n_fft & (n_fft - 1):
        raise SizeError(f"n_fft must be a power of two, got {n_fft}")


def rfft(x, n_fft: int) -> np.ndarray:
    """One-sided DFT of the last axis, zero-padded to ``n_fft``."""
    _check_nfft(n_fft)
    x = np.asarray(x)
    if x.shape[-1] > n_fft:
        raise SizeError(f"input length {x.shape[-1]} exceeds n_fft={n_fft}")
    return np.fft.rfft(x, n=n_fft, axis=-1)


def irfft(spec, n_fft: int) -> np.ndarray:
    _check_nfft(n_fft)
    return np.fft.irfft(spec, n=n_fft, axis=-1)


def estimate_noise_frames(x, frame_len: int = DEFAULT_FRAME_LEN,
                          fraction: float = 0.1) -> FrameSequence:
    """Pick the lowest-energy fraction of windowed frames as noise-only."""
    fs = frame_signal(np.asarray(x, dtype=np.float64), frame_len, apply_window=True)
    energy = np.sum(fs.frames ** 2, axis=1)
    k = max(1, int(np.ceil(fraction * fs.n_frames)))
    keep = np.sort(np.argsort(energy, kind="stable")[:k])
    return FrameSequence(fs.frames[keep], frame_len, fs.hop, True, fs.source_len)


def wiener_denoise(noisy, noise_frames: FrameSequence | None,
                   frame_len: int = DEFAULT_FRAME_LEN, n_fft: int = ANALYSIS_NFFT,
                   alpha: float = WIENER_ALPHA,
                   gain_floor: float = WIENER_GAIN_FLOOR) -> np.ndarray:
    """Decision-directed Wiener filter; the output has the input's length."""
    if noise_frames is None or noise_frames.n_frames == 0:
        raise MissingEstimateError("no noise frames for the noise PSD estimate")
    noisy = np.asarray(noisy, dtype=np.float64)
    nf = noise_frames.frames
    if not noise_frames.windowed:
        nf = nf * hann_window(nf.shape[1])
    noise_psd = np.maximum(np.mean(np.abs(rfft(nf, n_fft)) ** 2, axis=0), NOISE_PSD_FLOOR)

    padded, off = pad_for_synthesis(noisy, frame_len)
    fs = frame_signal(padded, frame_len, apply_window=True)
    spec = rfft(fs.frames, n_fft)
    out = np.empty_like(fs.frames)
    prev_clean_pow = None
    for i in range(fs.n_frames):
        y_pow = np.abs(spec[i]) ** 2
        post = y_pow / noise_psd
        ml = np.maximum(post - 1.0, 0.0)
        if prev_clean_pow is None:
            prio = ml
        else:
            prio = alpha * prev_clean_pow / noise_psd + (1.0 - alpha) * ml
        gain = np.maximum(prio / (1.0 + prio), gain_floor)
        est = gain * spec[i]
        prev_clean_pow = np.abs(est) ** 2
        out[i] = irfft(est, n_fft)[:frame_len]
    fs.frames = out
    return overlap_add(fs)[off: off + len(noisy)]
