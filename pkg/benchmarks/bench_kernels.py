"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from kopause import _kernels_py

try:
    from kopause import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def workloads():
    syllables = "".join(chr(c) for c in range(0xAC00, 0xD7A4))
    text = (syllables + " 가나다, abc. ") * 4
    jamo = _kernels_py.decompose_to_jamo(text)
    energy = np.random.default_rng(0).normal(-5, 3, 200_000).cumsum() * 0.01
    return {
        "decompose_to_jamo": lambda k: k.decompose_to_jamo(text),
        "compose_from_jamo": lambda k: k.compose_from_jamo(jamo),
        "silent_runs": lambda k: k.silent_runs(energy, float(np.median(energy))),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled extension not available; timing the Python fallback only")
    print(f"{'kernel':20s}" + "".join(f"{name:>12s}" for name in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in workloads().items():
        results = [fn(k) for k in backends.values()]
        assert all(r == results[0] for r in results), f"{name}: backends disagree"
        times = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for b, k in backends.items()}
        row = f"{name:20s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
