"""flowvc: desk-scale zero-shot voice conversion.

Hybrid content encoding (oracle phonetic posteriors + a frozen self-supervised
stand-in, fused adaptively after residual vector quantization), memory-augmented
and context-aware timbre modeling, and an optimal-transport conditional
flow-matching decoder over mel-spectrograms, all on a from-scratch float64
autodiff substrate.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
