"""Deterministic synthetic speech/noise corpora and their JSON-lines manifests.

Clean "speech" is a band-limited glottal pulse train with vibrato shaped by a
cascade of formant resonators, interleaved with band-passed fricative bursts
and silence. Distinct :class:`SpeechGenParams` sets stand in for distinct
speakers. Noise surrogates cover white, wind, engine, driving and babble.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .audio_io import AudioBuffer, read_wav, write_wav
from .dsp import hann_window, mid_side_compose, mix_at_snr, rms
from .errors import ConfigError

RATE = 48000
NOISE_KINDS = ("white", "wind", "engine", "driving", "babble")
BABBLE_TALKERS = 6
ROLES = ("clean", "noisy_a", "noisy_b", "stereo_l", "stereo_r")


@dataclass(frozen=True)
class SpeechGenParams:
    f0_range: tuple = (100.0, 160.0)
    formants: tuple = ((700.0, 130.0), (1220.0, 70.0), (2600.0, 160.0))
    p_voiced: float = 0.6
    p_unvoiced: float = 0.2
    p_silence: float = 0.2
    duration_s: float = 1.0
    seed: int = 0
    sample_rate: int = RATE
    vibrato_depth: float = 0.01
    vibrato_hz: float = 5.0
    glide: float = 0.05  # max relative f0 drift across a voiced segment
    segment_s: tuple = (0.06, 0.2)
    floor_db: float | None = -60.0  # recording noise floor re. peak; None disables

    def validate(self):
        lo, hi = self.f0_range
        if not (80.0 <= lo <= hi <= 300.0):
            raise ConfigError(f"f0 range {self.f0_range} outside [80, 300] Hz")
        if self.duration_s <= 0 or self.segment_s[0] <= 0:
            raise ConfigError("lengths must be positive")
        probs = (self.p_voiced, self.p_unvoiced, self.p_silence)
        if min(probs) < 0 or sum(probs) <= 0 or self.p_voiced <= 0:
            raise ConfigError("segment probabilities must be non-negative with p_voiced > 0")


# Two disjoint "speakers": low-pitched with low formants vs high-pitched
# with raised formants.
SPEAKER_SETS = {
    "A": SpeechGenParams(f0_range=(95.0, 140.0),
                         formants=((650.0, 120.0), (1100.0, 90.0), (2450.0, 150.0))),
    "B": SpeechGenParams(f0_range=(190.0, 270.0),
                         formants=((900.0, 140.0), (1750.0, 110.0), (3100.0, 200.0))),
}


def _resonator(x, fc, bw, rate):
    r = np.exp(-np.pi * bw / rate)
    theta = 2.0 * np.pi * fc / rate
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    z = np.exp(-1j * theta)
    g = abs(a[0] + a[1] * z + a[2] * z * z)  # unity gain at the centre frequency
    return signal.lfilter([g], a, x)


def _smooth_gate(gate, rate, smooth_s=0.02):
    m = max(1, int(smooth_s * rate))
    kern = hann_window(m + 2, periodic=False)[1:-1]
    return np.convolve(gate, kern / kern.sum(), mode="same")


def gen_speech(params: SpeechGenParams) -> AudioBuffer:
    params.validate()
    rate = params.sample_rate
    rng = np.random.default_rng(params.seed)
    n = int(round(params.duration_s * rate))
    voiced = np.zeros(n)
    unvoiced = np.zeros(n)
    gate_v = np.zeros(n)
    gate_u = np.zeros(n)
    probs = np.array([params.p_voiced, params.p_unvoiced, params.p_silence], dtype=float)
    probs /= probs.sum()
    pos = 0
    first = True
    while pos < n:
        kind = 0 if first else int(rng.choice(3, p=probs))
        first = False
        seg = max(1, min(n - pos, int(rng.uniform(*params.segment_s) * rate)))
        amp = rng.uniform(0.5, 1.0)
        t = np.arange(seg) / rate
        if kind == 0:
            f0 = rng.uniform(*params.f0_range)
            glide = rng.uniform(-params.glide, params.glide)
            inst = f0 * (1.0 + glide * t / max(t[-1], 1e-9)
                         + params.vibrato_depth
                         * np.sin(2 * np.pi * params.vibrato_hz * t + rng.uniform(0, 2 * np.pi)))
            phase = 2 * np.pi * np.cumsum(inst) / rate
            src = np.zeros(seg)
            for h in range(1, int(5000.0 // (f0 * 1.1)) + 1):
                src += np.cos(h * phase) / h
            voiced[pos:pos + seg] = src
            gate_v[pos:pos + seg] = amp
        elif kind == 1:
            unvoiced[pos:pos + seg] = rng.standard_normal(seg)
            gate_u[pos:pos + seg] = amp
        pos += seg

    # utterance-level formant jitter keeps utterances of one speaker distinct
    jitter = rng.uniform(0.92, 1.08, size=len(params.formants))
    out = voiced * _smooth_gate(gate_v, rate)
    for (fc, bw), j in zip(params.formants, jitter):
        out = _resonator(out, fc * j, bw, rate)
    sos = signal.butter(4, [2000.0, 6000.0], btype="bandpass", fs=rate, output="sos")
    fric = signal.sosfilt(sos, unvoiced * _smooth_gate(gate_u, rate))
    v_rms = np.sqrt(np.mean(out ** 2)) or 1.0
    f_rms = np.sqrt(np.mean(fric ** 2)) or 1.0
    out = out / v_rms + 0.3 * fric / f_rms
    out /= np.max(np.abs(out))
    if params.floor_db is not None:
        out += 10.0 ** (params.floor_db / 20.0) * rng.standard_normal(n)
    return AudioBuffer.mono(out / np.max(np.abs(out)), rate)


def _smooth_noise(rng, n, cutoff, rate):
    sos = signal.butter(2, cutoff, btype="lowpass", fs=rate, output="sos")
    g = signal.sosfilt(sos, rng.standard_normal(n + rate)).astype(float)[rate:]
    return g / (np.std(g) or 1.0)


def _pink(rng, n, rate, corner=20.0):
    """1/f power spectrum above ``corner`` Hz, flat below it."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    return np.fft.irfft(spec / np.sqrt(np.maximum(f, corner)), n)


def _wind(rng, n, rate):
    sos = signal.butter(4, 250.0, btype="lowpass", fs=rate, output="sos")
    x = signal.sosfilt(sos, _pink(rng, n + rate, rate))[rate:]
    gust = np.exp(0.5 * _smooth_noise(rng, n, 0.5, rate))
    return x * gust


def _engine(rng, n, rate):
    f0 = rng.uniform(30.0, 80.0)
    wander = 1.0 + 0.01 * _smooth_noise(rng, n, 0.3, rate)
    phase = 2 * np.pi * np.cumsum(f0 * wander) / rate
    x = np.zeros(n)
    for h in range(1, 41):
        if h * f0 * 1.05 >= rate / 2:
            break
        x += np.cos(h * phase + rng.uniform(0, 2 * np.pi)) / h ** 0.7
    sos = signal.butter(2, 1500.0, btype="lowpass", fs=rate, output="sos")
    bed = signal.sosfilt(sos, rng.standard_normal(n))
    bed *= 0.3 * np.std(x) / (np.std(bed) or 1.0)
    return x + bed


def _babble(rng, n, rate):
    out = np.zeros(n)
    for _ in range(BABBLE_TALKERS):
        lo = rng.uniform(90.0, 220.0)
        params = SpeechGenParams(
            f0_range=(lo, min(300.0, lo * 1.4)),
            formants=tuple((fc * rng.uniform(0.85, 1.2), bw)
                           for fc, bw in SpeechGenParams().formants),
            duration_s=n / rate, seed=int(rng.integers(2 ** 63)), sample_rate=rate,
            p_silence=0.1)
        s = gen_speech(params).channel(0)
        out += s / (np.sqrt(np.mean(s ** 2)) or 1.0)
    return out


def gen_noise(kind: str, length: int, seed: int, sample_rate: int = RATE) -> AudioBuffer:
    """Zero-mean noise surrogate of ``length`` samples, peak near 1."""
    if kind not in NOISE_KINDS:
        raise ConfigError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    if length <= 0:
        raise ConfigError("noise length must be positive")
    ss = np.random.SeedSequence([seed, NOISE_KINDS.index(kind)])
    rng = np.random.default_rng(ss)
    if kind == "white":
        x = rng.standard_normal(length)
    elif kind == "wind":
        x = _wind(rng, length, sample_rate)
    elif kind == "engine":
        x = _engine(rng, length, sample_rate)
    elif kind == "driving":
        e = _engine(rng, length, sample_rate)
        w = _wind(rng, length, sample_rate)
        x = e / np.std(e) + w / np.std(w)
    else:
        x = _babble(rng, length, sample_rate)
    x = x / np.max(np.abs(x))
    return AudioBuffer.mono(x - np.mean(x), sample_rate)


# ----------------------------------------------------------------- manifests


@dataclass
class ManifestEntry:
    id: str
    role: str
    path: str
    clean_id: str
    speaker: str = ""
    noise_type: str | None = None
    snr_db: float | None = None
    split: str = "train"
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    root: Path | None = None

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def by_role(self, role: str, split: str | None = None):
        return [e for e in self.entries
                if e.role == role and (split is None or e.split == split)]

    def clean_for(self, entry: ManifestEntry) -> ManifestEntry:
        for e in self.entries:
            if e.role == "clean" and e.id == entry.clean_id:
                return e
        raise KeyError(f"no clean entry {entry.clean_id!r}")

    def clean_ids(self) -> list[str]:
        return [e.id for e in self.entries if e.role == "clean"]

    def partner(self, entry: ManifestEntry) -> ManifestEntry:
        """The other noisy realization (noisy_b for noisy_a, stereo_r for stereo_l)."""
        other = {"noisy_a": "noisy_b", "noisy_b": "noisy_a",
                 "stereo_l": "stereo_r", "stereo_r": "stereo_l"}[entry.role]
        for e in self.entries:
            if (e.role == other and e.clean_id == entry.clean_id
                    and e.noise_type == entry.noise_type and e.snr_db == entry.snr_db):
                return e
        raise KeyError(f"no {other} partner for {entry.id!r}")

    def validate(self):
        clean = set(self.clean_ids())
        for e in self.entries:
            if e.role not in ROLES:
                raise ConfigError(f"unknown role {e.role!r}")
            if e.role != "clean" and e.clean_id not in clean:
                raise ConfigError(f"{e.id} references missing clean entry {e.clean_id}")

    def write(self, path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self.entries))

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        entries = [ManifestEntry(**json.loads(line))
                   for line in path.read_text().splitlines() if line.strip()]
        m = cls(entries, path.parent)
        m.validate()
        return m

    def load(self, entry: ManifestEntry) -> AudioBuffer:
        return read_wav(self.resolve(entry))


@dataclass(frozen=True)
class CorpusConfig:
    speakers: tuple = ("A",)
    utterances_per_speaker: int = 10
    noise_kinds: tuple = ("white",)
    snrs: tuple = (-5.0, 0.0, 5.0)
    utterance_s: float = 1.0
    seed: int = 0
    sample_rate: int = RATE
    encoding: str = "float32"

    def validate(self):
        for s in self.speakers:
            if s not in SPEAKER_SETS:
                raise ConfigError(f"unknown speaker set {s!r}; have {sorted(SPEAKER_SETS)}")
        for k in self.noise_kinds:
            if k not in NOISE_KINDS:
                raise ConfigError(f"unknown noise kind {k!r}")
        if self.utterances_per_speaker < 1 or self.utterance_s <= 0:
            raise ConfigError("need at least one utterance of positive length")


def _seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0] >> 1)


def generate_corpus(cfg: CorpusConfig, mode: str = "independent"):
    """Yield ``(entry, samples)`` for every file in deterministic order.

    Each utterance's files share one gain so that the loudest of them peaks at
    1.0 (clean included), which keeps clean and noisy versions consistent.
    """
    cfg.validate()
    if mode not in ("independent", "midside"):
        raise ConfigError(f"unknown mode {mode!r}")
    roles = ("noisy_a", "noisy_b") if mode == "independent" else ("stereo_l", "stereo_r")
    for si, spk in enumerate(cfg.speakers):
        base = SPEAKER_SETS[spk]
        for u in range(cfg.utterances_per_speaker):
            cid = f"{spk}{u:03d}"
            useed = _seed(cfg.seed, si, u)
            clean = gen_speech(replace(base, duration_s=cfg.utterance_s, seed=useed,
                                       sample_rate=cfg.sample_rate)).channel(0)
            n = len(clean)
            files = []
            for ki, kind in enumerate(cfg.noise_kinds):
                for snr in cfg.snrs:
                    nseed = _seed(useed, ki, int(round(snr * 1000)) & 0xFFFFFFFF)
                    if mode == "independent":
                        na = gen_noise(kind, n, _seed(nseed, 1), cfg.sample_rate).channel(0)
                        nb = gen_noise(kind, n, _seed(nseed, 2), cfg.sample_rate).channel(0)
                        ya, _ = mix_at_snr(clean, na, snr)
                        yb, _ = mix_at_snr(clean, nb, snr)
                    else:
                        nm = gen_noise(kind, n, _seed(nseed, 1), cfg.sample_rate).channel(0)
                        ns = gen_noise(kind, n, _seed(nseed, 2), cfg.sample_rate).channel(0)
                        ns = ns * (np.sqrt(np.mean(nm ** 2)) / np.sqrt(np.mean(ns ** 2)))
                        # one gain on both so the left channel's noise (mid + side)
                        # sits at the requested SNR
                        a = rms(clean) / (rms(nm + ns) * 10.0 ** (snr / 20.0))
                        ya, yb = mid_side_compose(clean + a * nm, a * ns)
                    stem = f"{cid}_{kind}_{snr:+g}dB"
                    files.append((stem, kind, snr, nseed, ya, yb))
            peak = max([1.0] + [max(np.max(np.abs(f[4])), np.max(np.abs(f[5]))) for f in files])
            g = 1.0 / peak
            yield ManifestEntry(cid, "clean", f"wav/{cid}.wav", cid, spk, seed=useed), clean * g
            for stem, kind, snr, nseed, ya, yb in files:
                for role, y in zip(roles, (ya, yb)):
                    eid = f"{stem}_{role}"
                    yield (ManifestEntry(eid, role, f"wav/{eid}.wav", cid, spk, kind, float(snr),
                                         seed=nseed), y * g)


def build_dataset(cfg: CorpusConfig, out_dir, mode: str = "independent") -> DatasetManifest:
    """Generate WAVs under ``out_dir/wav`` and write ``out_dir/manifest.jsonl``."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    entries = []
    for entry, samples in generate_corpus(cfg, mode):
        write_wav(out_dir / entry.path, AudioBuffer.mono(samples, cfg.sample_rate), cfg.encoding)
        entries.append(entry)
    manifest = DatasetManifest(entries, out_dir)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest


def split(manifest: DatasetManifest, test_fraction: float, seed: int) -> DatasetManifest:
    """Utterance-level train/test split; every file follows its clean id."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    ids = manifest.clean_ids()
    n_test = int(round(test_fraction * len(ids)))
    order = np.random.default_rng(seed).permutation(len(ids))
    test = {ids[i] for i in order[:n_test]}
    entries = [replace(e, split="test" if e.clean_id in test else "train")
               for e in manifest.entries]
    return DatasetManifest(entries, manifest.root)
