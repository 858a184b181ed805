"""WAV file I/O and peak normalization.

Only little-endian RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples,
mono or stereo, is supported. Samples are held as float64 arrays of shape
``(n_channels, n_samples)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSignalError,
    EmptyBufferError,
    FormatError,
    UnsupportedFormatError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    """Sampled waveform with its rate.

    ``samples`` has shape ``(n_channels, n_samples)``.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.n_samples

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, i: int) -> np.ndarray:
        return self.samples[i]

    @classmethod
    def mono(cls, x, sample_rate: int) -> "AudioBuffer":
        return cls(np.asarray(x, dtype=np.float64)[None, :], sample_rate)

    @classmethod
    def stereo(cls, left, right, sample_rate: int) -> "AudioBuffer":
        left = np.asarray(left, dtype=np.float64)
        right = np.asarray(right, dtype=np.float64)
        if left.shape != right.shape:
            raise ValueError("channel lengths differ")
        return cls(np.stack([left, right]), sample_rate)


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8: pos + 8 + size]
        yield cid, size, body
        pos += 8 + size + (size & 1)


def read_wav(path) -> AudioBuffer:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for cid, size, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise FormatError(f"{path}: extensible fmt chunk too short")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise FormatError(f"{path}: data chunk truncated "
                                  f"({len(body)} of {size} bytes)")
            pcm = body
    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if pcm is None:
        raise FormatError(f"{path}: missing data chunk")

    tag, n_channels, rate, _, block_align, bits = fmt
    if n_channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {n_channels} channels")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / PCM16_SCALE
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormatError(
            f"{path}: format tag {tag:#06x} with {bits} bits per sample")
    if block_align != n_channels * dtype.itemsize:
        raise FormatError(f"{path}: inconsistent block alignment")
    if len(pcm) % block_align:
        raise FormatError(f"{path}: partial sample frame in data chunk")

    frames = np.frombuffer(pcm, dtype=dtype).reshape(-1, n_channels)
    samples = frames.T.astype(np.float64) * scale
    if not np.all(np.isfinite(samples)):
        raise FormatError(f"{path}: non-finite samples")
    return AudioBuffer(samples, rate)


def write_wav(path, buf: AudioBuffer, encoding: str = "float32") -> None:
    """Write ``buf`` as PCM16 or IEEE float32.

    PCM16 rounds to the nearest step of 1/32768 and saturates at
    32767/32768.
    """
    if buf.n_samples == 0:
        raise EmptyBufferError("cannot write a zero-length buffer")
    if encoding == "pcm16":
        q = np.clip(np.round(buf.samples * PCM16_SCALE), -32768, 32767)
        payload = q.T.astype("<i2").tobytes()
        tag, width = WAVE_FORMAT_PCM, 2
    elif encoding == "float32":
        payload = buf.samples.T.astype("<f4").tobytes()
        tag, width = WAVE_FORMAT_IEEE_FLOAT, 4
    else:
        raise UnsupportedFormatError(f"unknown encoding {encoding!r}")

    ch = buf.n_channels
    fmt = struct.pack("<HHIIHH", tag, ch, buf.sample_rate,
                      buf.sample_rate * ch * width, ch * width, 8 * width)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        # non-PCM formats carry a fact chunk with the frame count
        chunks += b"fact" + struct.pack("<II", 4, buf.n_samples)
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks))
                           + b"WAVE" + chunks)


def peak_normalize(buf: AudioBuffer) -> AudioBuffer:
    peak = float(np.max(np.abs(buf.samples))) if buf.n_samples else 0.0
    if peak == 0.0:
        raise DegenerateSignalError("cannot peak-normalize a silent buffer")
    # dividing (rather than multiplying by 1/peak) makes the peak exactly 1.0
    return AudioBuffer(buf.samples / peak, buf.sample_rate)
