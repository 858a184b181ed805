"""Backend selection for the convolution kernels.

The compiled extension is used when it imports; ``N2N_PURE_PYTHON=1`` forces
the numpy fallback.
"""
import os

from . import _conv_py

try:
    if os.environ.get("N2N_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _conv_ext
except ImportError:
    _conv_ext = None

BACKENDS = {"python": _conv_py}
if _conv_ext is not None:
    BACKENDS["compiled"] = _conv_ext

_active = "compiled" if _conv_ext is not None else "python"


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _active = name


def conv1d_forward(x, kernel, bias):
    return BACKENDS[_active].conv1d_forward(x, kernel, bias)


def conv1d_backward(x, kernel, grad_out):
    return BACKENDS[_active].conv1d_backward(x, kernel, grad_out)
