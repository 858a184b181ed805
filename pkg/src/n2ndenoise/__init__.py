"""Time-domain speech denoising with supervised, noisy-to-noisy and hybrid
training of a fully convolutional network."""

from .audio_io import AudioBuffer, peak_normalize, read_wav, write_wav
from .errors import N2NError
from .nn import ArchConfig, FcnnModel, init_model, load_model, save_model
from .trainer import TrainConfig, denoise_signal, train, train_hybrid

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "read_wav", "write_wav", "peak_normalize", "N2NError",
    "ArchConfig", "FcnnModel", "init_model", "load_model", "save_model",
    "TrainConfig", "train", "train_hybrid", "denoise_signal",
]
