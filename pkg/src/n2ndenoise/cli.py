"""Command-line entry point: corpus generation, training, denoising,
evaluation and the field simulation."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .audio_io import AudioBuffer, read_wav, write_wav
from .config import RunConfig, load_config
from .dsp import estimate_noise_frames, mid_side_decompose, wiener_denoise
from .errors import ConfigError, N2NError
from .metrics import evaluate
from .nn import init_model, load_model, save_model
from .pipeline import PipelineState, run_field_sim, write_trace_csv
from .trainer import (denoise_signal, make_pairs_n2n, make_pairs_supervised, train,
                      write_loss_csv)

log = logging.getLogger("n2ndenoise")

PROG = "n2ndenoise"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick(arg, cfg_value, what):
    value = arg or cfg_value
    if not value:
        raise ConfigError(f"no {what} given (argument or config key)")
    if not Path(value).exists():
        raise ConfigError(f"{what} not found: {value}")
    return value


# ------------------------------------------------------------------ commands


def cmd_gen_corpus(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    manifest = corpus_mod.build_dataset(cfg.corpus(), out, cfg.corpus_mode)
    manifest = corpus_mod.split(manifest, cfg.test_fraction, cfg.seed)
    manifest.write(out / "manifest.jsonl")
    cfg.write(out)
    print(f"wrote {len(manifest)} files to {out}")
    return 0


def _noisy_pairs(manifest, speakers):
    """Training-split (first, second) noisy realizations, optionally filtered by speaker."""
    firsts = manifest.by_role("noisy_a", "train") + manifest.by_role("stereo_l", "train")
    return [(e, manifest.partner(e)) for e in firsts if not speakers or e.speaker in speakers]


def _supervised_pairs(manifest, cfg: RunConfig, speakers):
    tc = cfg.train()
    pairs = []
    for a, _ in _noisy_pairs(manifest, speakers):
        pairs += make_pairs_supervised(manifest.load(a), manifest.load(manifest.clean_for(a)), tc)
    return pairs


def _n2n_pairs(manifest, cfg: RunConfig, speakers):
    tc = cfg.train()
    pairs = []
    for i, (a, b) in enumerate(_noisy_pairs(manifest, speakers)):
        pairs += make_pairs_n2n(manifest.load(a), manifest.load(b), tc, seed=cfg.seed + i)
    return pairs


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    manifest = corpus_mod.DatasetManifest.read(_pick(args.manifest, cfg.manifest, "manifest"))
    tc = cfg.train()
    init_path = args.init or cfg.init_model
    if init_path:
        model, _ = load_model(_pick(init_path, "", "init model"))
    else:
        model = init_model(cfg.seed, cfg.arch())
    save_model(model, out / "init_model.n2nf")

    if args.mode in ("ssd", "n2n"):
        make = _supervised_pairs if args.mode == "ssd" else _n2n_pairs
        speakers = cfg.ssd_speakers if args.mode == "ssd" else cfg.n2n_speakers
        pairs = make(manifest, cfg, speakers)
        if not pairs:
            raise ConfigError("no training pairs in the manifest's train split")
        model, state, trace = train(model, pairs, tc)
    else:
        if not init_path:
            pairs = _supervised_pairs(manifest, cfg, cfg.ssd_speakers)
            if not pairs:
                raise ConfigError("no supervised pairs for the hybrid warm start")
            model, _, ssd_trace = train(model, pairs, tc)
            save_model(model, out / "ssd_model.n2nf")
            write_loss_csv(out / "ssd_loss.csv", ssd_trace)
        pairs = _n2n_pairs(manifest, cfg, cfg.n2n_speakers)
        if not pairs:
            raise ConfigError("no noisy pairs for the hybrid adaptation")
        model, state, trace = train(model.copy(), pairs, tc)
    save_model(model, out / "model.n2nf")
    save_model(model, out / "checkpoint.n2nf", state)
    write_loss_csv(out / "loss.csv", trace)
    cfg.write(out)
    print(f"{args.mode}: final loss {trace[-1]:.6g}, model at {out / 'model.n2nf'}")
    return 0


def _select_channel(buf: AudioBuffer, channel: str) -> AudioBuffer:
    if buf.n_channels == 1:
        return buf
    if channel == "left":
        x = buf.channel(0)
    elif channel == "right":
        x = buf.channel(1)
    elif channel == "mid":
        x, _ = mid_side_decompose(buf.channel(0), buf.channel(1))
    else:
        raise ConfigError(f"unknown channel {channel!r}")
    return AudioBuffer.mono(x, buf.sample_rate)


def cmd_denoise(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    model, _ = load_model(_pick(args.model, cfg.pretrained, "model"))
    src = _pick(args.input, cfg.input, "input WAV")
    buf = _select_channel(read_wav(src), args.channel or cfg.channel)
    tc = cfg.train()
    tc.sample_rate = buf.sample_rate
    y = denoise_signal(model, buf, tc)
    dest = out / f"{Path(src).stem}_denoised.wav"
    write_wav(dest, y, "float32")
    cfg.write(out)
    print(f"wrote {dest}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    manifest = corpus_mod.DatasetManifest.read(_pick(args.manifest, cfg.manifest, "manifest"))
    models = []
    for spec in args.model or []:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        models.append((name, load_model(_pick(path, "", "model"))[0]))
    baseline = args.baseline or cfg.baseline
    if baseline not in ("none", "wiener"):
        raise ConfigError(f"unknown baseline {baseline!r}")

    tc = cfg.train()
    tests = manifest.by_role("noisy_a", "test") + manifest.by_role("stereo_l", "test")
    if not tests:
        raise ConfigError("manifest has no test-split noisy files")
    outputs, refs, labels = [], {}, {}
    for e in tests:
        noisy = manifest.load(e)
        tc.sample_rate = noisy.sample_rate
        refs[e.id] = manifest.load(manifest.clean_for(e)).channel(0)
        labels[e.id] = (e.noise_type or "", e.snr_db)
        y = noisy.channel(0)
        outputs.append((e.id, "noisy", y))
        for name, model in models:
            outputs.append((e.id, name, denoise_signal(model, noisy, tc).channel(0)))
        if baseline == "wiener":
            est = estimate_noise_frames(y, cfg.frame_len)
            outputs.append((e.id, "wiener", wiener_denoise(y, est, cfg.frame_len)))
    report = evaluate(outputs, refs, labels, cfg.sample_rate)
    report.to_csv(out / "metrics.csv")
    cfg.write(out)
    for m in report.means:
        print(f"{m.noise_type:>8} {m.system:>10}  ssnr {m.ssnr:7.3f}  lsd {m.lsd:7.3f}  stoi {m.stoi:.4f}")
    return 0


def _field_input(path: str) -> AudioBuffer:
    if path.endswith(".jsonl"):
        manifest = corpus_mod.DatasetManifest.read(path)
        firsts = manifest.by_role("stereo_l") + manifest.by_role("noisy_a")
        if not firsts:
            raise ConfigError("manifest has no stereo or noisy pairs")
        left = [manifest.load(e).channel(0) for e in firsts]
        right = [manifest.load(manifest.partner(e)).channel(0) for e in firsts]
        rate = manifest.load(firsts[0]).sample_rate
        return AudioBuffer.stereo(np.concatenate(left), np.concatenate(right), rate)
    return read_wav(path)


def cmd_field_sim(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    model, _ = load_model(_pick(args.pretrained, cfg.pretrained, "pretrained model"))
    buf = _field_input(_pick(args.input, cfg.input, "input"))
    n_on = cfg.train_frames if args.train_frames is None else args.train_frames
    if n_on < 0:
        raise ConfigError("train_frames must be set (switch on for the first N frames)")
    pcfg = cfg.pipeline()
    pcfg.sample_rate = buf.sample_rate
    state = PipelineState.create(model, pcfg)
    y, trace = run_field_sim(state, buf, n_on)
    write_wav(out / "denoised.wav", y, "float32")
    write_trace_csv(out / "trace.csv", trace)
    bank_dir = out / "bank"
    bank_dir.mkdir(exist_ok=True)
    for nt, entry in sorted(state.models.entries.items()):
        save_model(entry.model, bank_dir / f"noise_type_{nt}.n2nf", entry.adam)
    cfg.write(out)
    print(f"{len(trace)} frames, {state.steps_taken} Adam steps, "
          f"{len(state.bank.centroids)} noise types, {len(state.models.entries)} models")
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog=PROG, description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", parents=[common], help="synthesize a corpus and manifest")
    g.set_defaults(func=cmd_gen_corpus)

    t = sub.add_parser("train", parents=[common], help="train a denoiser")
    t.add_argument("mode", choices=("ssd", "n2n", "hsd"))
    t.add_argument("manifest", nargs="?")
    t.add_argument("--init", help="start from this model file")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("denoise", parents=[common], help="denoise one WAV file")
    d.add_argument("model", nargs="?")
    d.add_argument("input", nargs="?")
    d.add_argument("--channel", choices=("left", "right", "mid"))
    d.set_defaults(func=cmd_denoise)

    e = sub.add_parser("eval", parents=[common], help="score models on the test split")
    e.add_argument("manifest", nargs="?")
    e.add_argument("--model", action="append", metavar="NAME=PATH")
    e.add_argument("--baseline", choices=("none", "wiener"))
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("field-sim", parents=[common], help="run the field pipeline on a stereo stream")
    f.add_argument("input", nargs="?", help="stereo WAV or manifest.jsonl")
    f.add_argument("--pretrained")
    f.add_argument("--train-frames", type=int)
    f.set_defaults(func=cmd_field_sim)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        return args.func(cfg, args)
    except (N2NError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
