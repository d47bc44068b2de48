"""Kernel dispatch: compiled Cython kernels when built, pure Python otherwise.

``BACKEND`` reports which implementation was selected at import time.
"""
try:
    from kopause._kernels import compose_from_jamo, decompose_to_jamo, silent_runs

    BACKEND = "cython"
except ImportError:
    from kopause._kernels_py import compose_from_jamo, decompose_to_jamo, silent_runs

    BACKEND = "python"

__all__ = ["BACKEND", "compose_from_jamo", "decompose_to_jamo", "silent_runs"]
