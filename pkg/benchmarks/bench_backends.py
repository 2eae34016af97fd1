"""Compare the compiled kernels with the pure-Python fallback.

Times peak picking, the tree split search and the three inference engines
on both backends, and the compiled engines with and without the AVX2 path.

    python benchmarks/bench_backends.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import timeit

import numpy as np

from rachml import _fallback
from rachml._backend import kernels
from rachml.classifiers import fit_preprocessor, log_features
from rachml.neuralnet import LAYER_DIMS, MlpModel, init_params
from rachml.quantizer import quantize_dynamic_range, quantize_full_integer, real_engine


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def toy_model(rng):
    X = rng.lognormal(-3, 1, size=(2000, 24))
    ws, bs = init_params(LAYER_DIMS, rng)
    m = MlpModel(LAYER_DIMS, [w.astype(np.float32) for w in ws], [b.astype(np.float32) for b in bs],
                 fit_preprocessor(X))
    return m, X


def cases(rng):
    power = rng.exponential(size=1536)
    power[rng.integers(0, 1536, 40)] += 30.0
    Z = fit_preprocessor(rng.lognormal(size=(4000, 24)))
    Xs = Z.transform(log_features(rng.lognormal(size=(4000, 24))))
    y = (rng.random(4000) < 0.5).astype(np.int_)
    idx = np.arange(4000, dtype=np.int_)
    feats = np.arange(24, dtype=np.int_)
    m, X = toy_model(rng)
    rows = X[:64]
    qd = quantize_dynamic_range(m)
    qf = quantize_full_integer(m, X[:1000])
    yield "greedy_peaks (1536)", lambda k: (lambda: k.greedy_peaks(power, 3.0, 3)), 200
    yield "best_split (4000x24)", lambda k: (lambda: k.best_split(Xs, y, idx, feats, 20)), 5
    yield "real engine (64 rows)", lambda k: (lambda e=real_engine(m, k): e.forward_batch(rows)), 20
    yield "drq engine (64 rows)", lambda k: (lambda e=qd.engine(k): e.forward_batch(rows)), 20
    yield "fiq engine (64 rows)", lambda k: (lambda e=qf.engine(k): e.forward_batch(rows)), 20


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats; the best is kept")
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args()

    if kernels is _fallback:
        raise SystemExit("compiled core not available; build it with `pip install -e . --no-build-isolation`")
    simd = kernels.SIMD
    results = []
    print(f"{'kernel':24s} {'python':>12s} {'compiled':>12s} {'no-simd':>12s} {'speedup':>8s}")
    for name, make, number in cases(np.random.default_rng(0)):
        slow = best_of(make(_fallback), args.repeat, max(1, number // 10))
        kernels.set_simd(True)
        fast = best_of(make(kernels), args.repeat, number)
        kernels.set_simd(False)
        portable = best_of(make(kernels), args.repeat, number)
        kernels.set_simd(simd)
        results.append({"kernel": name, "python_s": slow, "compiled_s": fast, "portable_s": portable})
        print(f"{name:24s} {slow * 1e6:10.1f}us {fast * 1e6:10.1f}us {portable * 1e6:10.1f}us "
              f"{slow / fast:7.1f}x")
    print(f"AVX2 path available: {simd}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"simd": simd, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
