"""Post-training int8 quantisation of the MLP and the inference latency harness.

Dynamic-range mode stores int8 weights and keeps activations real between
layers; each layer quantises its real input on the fly from that input's own
range, multiplies in integers and rescales to real. Full-integer mode calibrates
every activation range up front and runs int8 activations with int32
accumulators and fixed-point requantisation, dequantising only the final logit.
"""

import csv
import json
import math
import sys
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .classifiers import Standardizer, preprocess
from .neuralnet import MlpModel

FORMAT_VERSION = 1
DYNAMIC_RANGE = "dynamic_range"
FULL_INTEGER = "full_integer"
MODES = {"drq": DYNAMIC_RANGE, "fiq": FULL_INTEGER, DYNAMIC_RANGE: DYNAMIC_RANGE, FULL_INTEGER: FULL_INTEGER}
CONSTANT_RANGE_EPS = 1e-6
MULT_BITS = 31


class ModeMismatch(ValueError):
    pass


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_weights(w):
    """Symmetric per-tensor int8: returns ``(q, scale, was_all_zero)``."""
    w = np.asarray(w, dtype=float)
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    if amax == 0.0:
        return np.zeros(w.shape, dtype=np.int8), 1.0, True
    scale = amax / 127.0
    q = np.clip(round_half_away(w / scale), -127, 127).astype(np.int8)
    return q, scale, False


def dequantize(q, scale, zero_point=0):
    return (np.asarray(q, dtype=float) - zero_point) * scale


def activation_qparams(lo, hi):
    """Asymmetric int8 ``(scale, zero_point, widened)`` for the range ``[lo, hi]``.

    The range is extended to contain 0 so that 0 is exactly representable.
    """
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    widened = False
    if not (hi - lo) / 255.0 >= sys.float_info.min:
        # constant (or subnormal-width) range: the scale would not be a normal float
        lo, hi = lo - CONSTANT_RANGE_EPS, hi + CONSTANT_RANGE_EPS
        widened = True
    scale = (hi - lo) / 255.0
    zp = int(np.clip(round_half_away(-128.0 - lo / scale), -128, 127))
    return scale, zp, widened


def quantize_multiplier(m):
    """Express a positive real ``m`` as ``m0 * 2**-shift`` with ``m0`` in ``[2**30, 2**31)``."""
    if m <= 0:
        raise ValueError("multiplier must be positive")
    mant, exp = math.frexp(m)
    m0 = int(round_half_away(mant * (1 << MULT_BITS)))
    if m0 == 1 << MULT_BITS:
        m0 //= 2
        exp += 1
    return m0, MULT_BITS - exp


@dataclass
class QuantizedModel:
    mode: str
    layer_dims: tuple
    qweights: list
    w_scales: list
    pre: Standardizer
    biases: list = field(default_factory=list)          # real, dynamic-range mode
    bias_q: list = field(default_factory=list)          # int32 in product scale, full-integer
    act_ranges: list = field(default_factory=list)      # measured (min, max) per activation
    act_scales: list = field(default_factory=list)
    act_zero_points: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in (DYNAMIC_RANGE, FULL_INTEGER):
            raise ModeMismatch(f"unknown quantisation mode {self.mode!r}")
        if any(s <= 0 for s in self.w_scales) or any(s <= 0 for s in self.act_scales):
            raise ValueError("scales must be positive")
        if any(not -128 <= z <= 127 for z in self.act_zero_points):
            raise ValueError("zero points must lie in the int8 range")
        if self.mode == FULL_INTEGER and (not self.bias_q or len(self.act_scales) != len(self.qweights)):
            raise ModeMismatch("full-integer model needs int32 biases and per-layer activation params")
        if self.mode == DYNAMIC_RANGE and (self.bias_q or len(self.biases) != len(self.qweights)):
            raise ModeMismatch("dynamic-range model stores real biases only")

    # fixed-point requantisation and bias folding, derived from the stored tensors
    def _integer_plan(self):
        n = len(self.qweights)
        folded, mults, shifts = [], [], []
        for l in range(n):
            q = self.qweights[l].astype(np.int64)
            folded.append((self.bias_q[l] - self.act_zero_points[l] * q.sum(axis=1)).astype(np.int32))
            if l < n - 1:
                m0, s = quantize_multiplier(self.w_scales[l] * self.act_scales[l] / self.act_scales[l + 1])
                mults.append(m0)
                shifts.append(s)
        out_scale = self.w_scales[-1] * self.act_scales[-1]
        return folded, mults, shifts, out_scale

    def engine(self, backend=None):
        k = backend or kernels
        if self.mode == DYNAMIC_RANGE:
            return k.DrqEngine(self.qweights, self.w_scales, self.biases, self.pre.mean, self.pre.std)
        folded, mults, shifts, out_scale = self._integer_plan()
        return k.FiqEngine(self.qweights, folded, mults, shifts, self.act_zero_points,
                           self.act_scales[0], out_scale, self.pre.mean, self.pre.std)


def quantize_dynamic_range(model: MlpModel) -> QuantizedModel:
    qs, scales, flags = [], [], []
    for l, w in enumerate(model.weights):
        q, s, zero = quantize_weights(w)
        qs.append(q)
        scales.append(s)
        if zero:
            flags.append(f"layer {l}: all-zero weights, scale set to 1")
    ws, bs = model.params64
    return QuantizedModel(DYNAMIC_RANGE, model.layer_dims, qs, scales, model.pre,
                          biases=[b.copy() for b in bs], flags=flags)


def layer_activations(model: MlpModel, X):
    """Real activations feeding each layer: preprocessed inputs, then rectifier outputs."""
    ws, bs = model.params64
    h = preprocess(np.atleast_2d(np.asarray(X, dtype=float)), model.pre)
    acts = [h]
    for w, b in zip(ws[:-1], bs[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
        acts.append(h)
    return acts


def quantize_full_integer(model: MlpModel, calibration) -> QuantizedModel:
    calibration = np.asarray(calibration, dtype=float)
    if calibration.size == 0:
        raise ValueError("calibration set is empty")
    drq = quantize_dynamic_range(model)
    flags = list(drq.flags)
    ranges, scales, zps = [], [], []
    for l, a in enumerate(layer_activations(model, calibration)):
        lo, hi = float(a.min()), float(a.max())
        s, z, widened = activation_qparams(lo, hi)
        if widened:
            flags.append(f"activation {l}: constant range widened by {CONSTANT_RANGE_EPS}")
        ranges.append((lo, hi))
        scales.append(s)
        zps.append(z)
    bias_q = []
    for l, b in enumerate(drq.biases):
        bias_q.append(np.clip(round_half_away(b / (drq.w_scales[l] * scales[l])),
                              -2**31, 2**31 - 1).astype(np.int32))
    return QuantizedModel(FULL_INTEGER, model.layer_dims, drq.qweights, drq.w_scales, model.pre,
                          bias_q=bias_q, act_ranges=ranges, act_scales=scales,
                          act_zero_points=zps, flags=flags)


def quantized_forward(qm: QuantizedModel, features):
    """Collision probability for one row or a batch, through the integer engine."""
    eng = qm.engine()
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        return float(eng.infer(np.ascontiguousarray(X)))
    return eng.forward_batch(X)


def real_engine(model: MlpModel, backend=None):
    ws, bs = model.params64
    return (backend or kernels).RealEngine(ws, bs, model.pre.mean, model.pre.std)


# ------------------------------------------------------------------ persistence

def to_dict(qm: QuantizedModel):
    d = {
        "format_version": FORMAT_VERSION,
        "kind": "quantized_mlp",
        "mode": qm.mode,
        "layer_dims": list(qm.layer_dims),
        "qweights": [q.astype(int).tolist() for q in qm.qweights],
        "w_scales": [float(s) for s in qm.w_scales],
        "w_zero_points": [0] * len(qm.qweights),
        "preprocess": {"mean": qm.pre.mean.tolist(), "std": qm.pre.std.tolist()},
        "flags": qm.flags,
    }
    if qm.mode == DYNAMIC_RANGE:
        d["biases"] = [b.tolist() for b in qm.biases]
    else:
        d["bias_q"] = [b.astype(int).tolist() for b in qm.bias_q]
        d["act_ranges"] = [list(r) for r in qm.act_ranges]
        d["act_scales"] = [float(s) for s in qm.act_scales]
        d["act_zero_points"] = [int(z) for z in qm.act_zero_points]
    return d


def from_dict(d) -> QuantizedModel:
    if d.get("kind") != "quantized_mlp" or d.get("format_version") != FORMAT_VERSION:
        raise ValueError("not a supported quantized model file")
    pre = Standardizer(np.asarray(d["preprocess"]["mean"]), np.asarray(d["preprocess"]["std"]))
    common = dict(
        mode=d["mode"], layer_dims=tuple(d["layer_dims"]),
        qweights=[np.asarray(q, dtype=np.int8) for q in d["qweights"]],
        w_scales=[float(s) for s in d["w_scales"]], pre=pre, flags=list(d.get("flags", [])),
    )
    if d["mode"] == DYNAMIC_RANGE:
        return QuantizedModel(biases=[np.asarray(b, dtype=float) for b in d["biases"]], **common)
    return QuantizedModel(
        bias_q=[np.asarray(b, dtype=np.int32) for b in d["bias_q"]],
        act_ranges=[tuple(r) for r in d["act_ranges"]],
        act_scales=[float(s) for s in d["act_scales"]],
        act_zero_points=[int(z) for z in d["act_zero_points"]], **common)


def save_quantized(qm: QuantizedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(qm), fh, sort_keys=True)


def load_quantized(path) -> QuantizedModel:
    with open(path) as fh:
        return from_dict(json.load(fh))


# ------------------------------------------------------------------ latency

@dataclass(frozen=True)
class BenchResult:
    mode: str
    threads: int
    n_samples: int
    warmup: int
    mean_latency: float   # seconds
    std_latency: float    # seconds
    backend: str = ""

    @property
    def std_error(self):
        return self.std_latency / math.sqrt(self.n_samples)


def benchmark_latency(engine, samples, threads=1, warmup=100) -> BenchResult:
    """Time each inference on a monotonic clock after ``warmup`` untimed runs.

    With ``threads > 1`` the rows are split across workers that start together;
    per-inference times from all workers are pooled.
    """
    samples = np.ascontiguousarray(samples, dtype=float)
    if len(samples) == 0:
        raise ValueError("no samples to benchmark")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1:
        times = engine.bench(samples, warmup)
    else:
        parts = [p for p in np.array_split(np.arange(len(samples)), threads) if len(p)]
        results = [None] * len(parts)
        barrier = threading.Barrier(len(parts))

        def worker(i, idx):
            rows = np.ascontiguousarray(samples[idx])
            barrier.wait()
            results[i] = engine.bench(rows, warmup)

        pool = [threading.Thread(target=worker, args=(i, p)) for i, p in enumerate(parts)]
        for t in pool:
            t.start()
        for t in pool:
            t.join()
        times = np.concatenate(results)
    backend = getattr(sys.modules.get(type(engine).__module__), "BACKEND", "")
    return BenchResult(engine.mode, threads, len(times), warmup, float(np.mean(times)),
                       float(np.std(times, ddof=1)) if len(times) > 1 else 0.0, backend)


BENCH_HEADER = ["mode", "threads", "n", "warmup", "mean_us", "std_us"]


def write_bench_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in results:
            w.writerow([r.mode, r.threads, r.n_samples, r.warmup,
                        f"{r.mean_latency * 1e6:.4f}", f"{r.std_latency * 1e6:.4f}"])
