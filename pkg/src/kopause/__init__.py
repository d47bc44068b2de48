"""Pause-aware Korean TTS: jamo front-end, constituency pipes, TP-GST prosody, SMA decoding."""
from kopause.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
