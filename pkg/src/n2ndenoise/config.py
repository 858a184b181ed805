"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .corpus import CorpusConfig
from .errors import ConfigError
from .nn import ArchConfig
from .pipeline import PipelineConfig
from .trainer import TrainConfig

CONFIG_NAME = "run_config.txt"


@dataclass
class RunConfig:
    seed: int = 0
    sample_rate: int = 48000
    # framing and training
    frame_len: int = 960
    minibatch: int = 128
    lr: float = 0.0004
    epochs: int = 25
    shuffle: bool = True
    swap: bool = True
    # network
    n_conv: int = 6
    channels: int = 55
    kernel: int = 30
    # corpus
    speakers: tuple = ("A",)
    utterances_per_speaker: int = 10
    noise_kinds: tuple = ("white",)
    snrs: tuple = (-5.0, 0.0, 5.0)
    utterance_s: float = 1.0
    test_fraction: float = 0.2
    corpus_mode: str = "independent"
    encoding: str = "float32"
    # hybrid training: speaker sets used by each phase (empty = all)
    ssd_speakers: tuple = ()
    n2n_speakers: tuple = ()
    # pipeline
    k_max: int = 4
    tau: float = 1.0
    ema_alpha: float = 0.05
    vad_offset_db: float = 6.0
    hangover: int = 5
    channel: str = "left"
    train_frames: int = -1  # field-sim: switch on for this many frames; -1 = unset
    # eval
    baseline: str = "none"
    # paths (command-line positionals take precedence)
    manifest: str = ""
    init_model: str = ""
    pretrained: str = ""
    input: str = ""

    # -- conversions

    def corpus(self) -> CorpusConfig:
        return CorpusConfig(tuple(self.speakers), self.utterances_per_speaker,
                            tuple(self.noise_kinds), tuple(self.snrs), self.utterance_s,
                            self.seed, self.sample_rate, self.encoding)

    def train(self) -> TrainConfig:
        cfg = TrainConfig(self.minibatch, self.lr, self.epochs, self.frame_len, self.seed,
                          self.shuffle, self.swap, self.sample_rate)
        cfg.validate()
        return cfg

    def arch(self) -> ArchConfig:
        arch = ArchConfig(self.n_conv, self.channels, self.kernel)
        arch.validate()
        return arch

    def pipeline(self) -> PipelineConfig:
        cfg = PipelineConfig(self.frame_len, self.sample_rate, self.vad_offset_db, self.hangover,
                             tau=self.tau, k_max=self.k_max, ema_alpha=self.ema_alpha,
                             minibatch=self.minibatch, learning_rate=self.lr,
                             channel=self.channel, swap=self.swap, seed=self.seed)
        cfg.validate()
        return cfg

    # -- text form

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / CONFIG_NAME
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _convert(name: str, default, text: str):
    try:
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if name == "snrs":
                return tuple(float(t) for t in items)
            return tuple(items)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(base)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        updates[key] = _convert(key, defaults[key], value)
    return dataclasses.replace(base, **updates)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
