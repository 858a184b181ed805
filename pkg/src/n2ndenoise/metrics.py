"""Objective speech metrics (segmental SNR, log-spectral distance, STOI) and
per-condition aggregation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .dsp import ANALYSIS_NFFT, frame_signal, hann_window, rfft
from .errors import AlignmentError, DegenerateSignalError, SizeError

SSNR_MIN_DB = -10.0
SSNR_MAX_DB = 35.0
LSD_MAG_FLOOR = 1e-8

# STOI constants (Taal et al. reference algorithm)
STOI_RATE = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames, 384 ms
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0

CSV_HEADER = ["file", "noise_type", "system", "snr_db", "ssnr", "lsd", "stoi"]


def _pair(clean, processed):
    x = np.asarray(clean, dtype=np.float64)
    y = np.asarray(processed, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise AlignmentError(f"signal shapes differ: {x.shape} vs {y.shape}")
    return x, y


def _frame_len(rate: int) -> int:
    n = int(round(0.02 * rate))
    return n + (n % 2)


def ssnr(clean, processed, rate: int = 48000) -> float:
    """Mean over 20 ms / 50 % overlap frames of the per-frame SNR, each term
    clamped to [-10, 35] dB."""
    x, y = _pair(clean, processed)
    if not np.any(x):
        raise DegenerateSignalError("clean signal is silent")
    L = min(_frame_len(rate), len(x) - len(x) % 2)
    fx = frame_signal(x, L, apply_window=False).frames
    fe = frame_signal(x - y, L, apply_window=False).frames
    sig = np.sum(fx ** 2, axis=1)
    err = np.sum(fe ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        seg = 10.0 * np.log10(sig / err)
    seg = np.where(err == 0, SSNR_MAX_DB, seg)
    seg = np.where((sig == 0) & (err > 0), SSNR_MIN_DB, seg)
    return float(np.mean(np.clip(seg, SSNR_MIN_DB, SSNR_MAX_DB)))


def lsd(clean, processed, rate: int = 48000) -> float:
    """Frame-averaged RMS of 20*log10 magnitude ratios (Hann 20 ms, FFT 1024)."""
    x, y = _pair(clean, processed)
    L = _frame_len(rate)
    n_fft = max(ANALYSIS_NFFT, 1 << (L - 1).bit_length())
    X = np.abs(rfft(frame_signal(x, L).frames, n_fft))
    Y = np.abs(rfft(frame_signal(y, L).frames, n_fft))
    d = 20.0 * np.log10(np.maximum(X, LSD_MAG_FLOOR) / np.maximum(Y, LSD_MAG_FLOOR))
    return float(np.mean(np.sqrt(np.mean(d * d, axis=1))))


# ---------------------------------------------------------------------- STOI


def _stoi_window():
    # Hann without the zero end points
    return hann_window(STOI_FRAME + 2, periodic=False)[1:-1]


def _frames(x, win):
    n = (len(x) - STOI_FRAME) // (STOI_FRAME // 2) + 1
    if n < 1:
        return np.zeros((0, STOI_FRAME))
    idx = np.arange(STOI_FRAME)[None, :] + (STOI_FRAME // 2) * np.arange(n)[:, None]
    return x[idx] * win


def _drop_silent_frames(x, y):
    win = _stoi_window()
    fx, fy = _frames(x, win), _frames(y, win)
    if len(fx) == 0:
        return x[:0], y[:0]
    energy = 20.0 * np.log10(np.linalg.norm(fx, axis=1) + np.finfo(float).eps)
    keep = energy > energy.max() - STOI_DYN_RANGE_DB
    fx, fy = fx[keep], fy[keep]
    hop = STOI_FRAME // 2
    n = len(fx)
    xo = np.zeros((n - 1) * hop + STOI_FRAME)
    yo = np.zeros_like(xo)
    for i in range(n):
        xo[i * hop:i * hop + STOI_FRAME] += fx[i]
        yo[i * hop:i * hop + STOI_FRAME] += fy[i]
    return xo, yo


def third_octave_matrix(rate=STOI_RATE, n_fft=STOI_NFFT, n_bands=STOI_BANDS,
                        min_freq=STOI_MIN_FREQ):
    """Binary band-assignment matrix ``(n_bands, n_fft//2 + 1)`` and centres."""
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    centres = min_freq * 2.0 ** (np.arange(n_bands) / 3.0)
    lo = centres * 2.0 ** (-1.0 / 6.0)
    hi = centres * 2.0 ** (1.0 / 6.0)
    obm = np.zeros((n_bands, len(freqs)))
    for j in range(n_bands):
        a = int(np.argmin((freqs - lo[j]) ** 2))
        b = int(np.argmin((freqs - hi[j]) ** 2))
        obm[j, a:b] = 1.0
    return obm, centres


def _resample(x, rate):
    if rate == STOI_RATE:
        return x
    f = Fraction(STOI_RATE, rate)
    return resample_poly(x, f.numerator, f.denominator)


def stoi(clean, processed, rate: int) -> float:
    x, y = _pair(clean, processed)
    x, y = _resample(x, rate), _resample(y, rate)
    x, y = _drop_silent_frames(x, y)
    win = _stoi_window()
    fx, fy = _frames(x, win), _frames(y, win)
    if len(fx) < STOI_SEGMENT:
        raise SizeError(f"need >= {STOI_SEGMENT} non-silent frames (384 ms), got {len(fx)}")
    obm, _ = third_octave_matrix()
    X = np.sqrt(obm @ (np.abs(np.fft.rfft(fx, STOI_NFFT, axis=1)) ** 2).T)
    Y = np.sqrt(obm @ (np.abs(np.fft.rfft(fy, STOI_NFFT, axis=1)) ** 2).T)

    eps = np.finfo(float).eps
    clip = 10.0 ** (-STOI_BETA_DB / 20.0)
    M = X.shape[1]
    # all 30-frame windows at once: (segments, bands, frames)
    idx = np.arange(STOI_SEGMENT)[None, :] + np.arange(M - STOI_SEGMENT + 1)[:, None]
    xs = X[:, idx].transpose(1, 0, 2)
    ys = Y[:, idx].transpose(1, 0, 2)
    alpha = np.linalg.norm(xs, axis=2, keepdims=True) / (
        np.linalg.norm(ys, axis=2, keepdims=True) + eps)
    yp = np.minimum(alpha * ys, xs * (1.0 + clip))
    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = yp - yp.mean(axis=2, keepdims=True)
    corr = np.sum(xc * yc, axis=2) / (
        np.linalg.norm(xc, axis=2) * np.linalg.norm(yc, axis=2) + eps)
    return float(np.mean(corr))


# ------------------------------------------------------------------ reports


@dataclass
class MetricsRow:
    file: str
    noise_type: str
    system: str
    snr_db: float | None
    ssnr: float
    lsd: float
    stoi: float

    def as_list(self):
        snr = "" if self.snr_db is None else repr(float(self.snr_db))
        return [self.file, self.noise_type, self.system, snr,
                repr(self.ssnr), repr(self.lsd), repr(self.stoi)]


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    means: list = field(default_factory=list)
    stds: list = field(default_factory=list)

    def cell(self, noise_type, system):
        for m, s in zip(self.means, self.stds):
            if m.noise_type == noise_type and m.system == system:
                return m, s
        raise KeyError((noise_type, system))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow(r.as_list())
            for m, s in zip(self.means, self.stds):
                w.writerow(m.as_list())
                w.writerow(s.as_list())


def aggregate(rows) -> MetricsReport:
    """Mean and population std per (noise type, system), first-seen order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.noise_type, r.system), []).append(r)
    rep = MetricsReport(list(rows))
    for (noise, system), rs in groups.items():
        snrs = {r.snr_db for r in rs}
        snr = snrs.pop() if len(snrs) == 1 else None
        vals = np.array([[r.ssnr, r.lsd, r.stoi] for r in rs])
        mean, std = vals.mean(axis=0), vals.std(axis=0)
        rep.means.append(MetricsRow("__mean__", noise, system, snr, *map(float, mean)))
        rep.stds.append(MetricsRow("__std__", noise, system, snr, *map(float, std)))
    return rep


def evaluate(outputs, refs, labels, rate: int = 48000) -> MetricsReport:
    """Score system outputs against clean references.

    ``outputs``: sequence of ``(file_id, system, processed)``;
    ``refs``: ``file_id -> clean``; ``labels``: ``file_id -> (noise_type, snr_db)``.
    """
    rows = []
    for file_id, system, processed in outputs:
        if file_id not in refs:
            raise AlignmentError(f"no clean reference for {file_id!r}")
        clean = refs[file_id]
        noise, snr = labels.get(file_id, ("", None))
        rows.append(MetricsRow(file_id, noise, system, snr,
                               ssnr(clean, processed, rate), lsd(clean, processed, rate),
                               stoi(clean, processed, rate)))
    return aggregate(rows)
