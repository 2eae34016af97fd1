"""Pure-Python/numpy versions of the kernels in ``_core``.

Semantics match the compiled module exactly; only speed differs.
"""

import time

import numpy as np

BACKEND = "python"
SIMD = False


def set_simd(allow):
    """Vector kernels exist only in the compiled core."""
    return False


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def greedy_peaks(power, threshold, min_distance):
    power = np.asarray(power, dtype=float)
    cand = np.flatnonzero(power > threshold)
    order = cand[np.lexsort((cand, -power[cand]))]
    blocked = np.zeros(len(power), dtype=bool)
    out = []
    for j in order:
        if blocked[j]:
            continue
        out.append(j)
        blocked[max(j - min_distance + 1, 0):j + min_distance] = True
    return np.sort(np.asarray(out, dtype=np.intp))


def best_split(X, y, idx, features, min_leaf):
    n = len(idx)
    y_node = y[idx]
    pos_total = int(y_node.sum())
    best, best_f, best_thr = 1e300, -1, 0.0
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    for f in features:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        cum = np.cumsum(y_node[order])[:-1].astype(float)
        valid = ok & (vs[:-1] != vs[1:])
        if not valid.any():
            continue
        pl = cum
        pr = pos_total - cum
        score = 2.0 * pl * (nl - pl) / nl + 2.0 * pr * (nr - pr) / nr
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if score[i] < best:
            best, best_f, best_thr = float(score[i]), int(f), (vs[i] + vs[i + 1]) / 2.0
    return best_f, best_thr, best


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))


class _EngineBase:
    mode = ""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)

    def _preprocess(self, row):
        return (np.log10(np.asarray(row, dtype=float) + 1e-12) - self.mean) / self.std

    def infer(self, row):
        row = np.asarray(row, dtype=float)
        if row.shape != self.mean.shape:
            raise ValueError(f"expected {self.mean.shape[0]} features")
        return self._infer(row)

    def forward_batch(self, X):
        return np.array([self.infer(r) for r in np.asarray(X, dtype=float)])

    def bench(self, X, warmup):
        X = np.ascontiguousarray(X, dtype=float)
        n = len(X)
        times = np.empty(n)
        if n == 0:
            return times
        for i in range(warmup):
            self._infer(X[i % n])
        clock = time.perf_counter_ns
        for i in range(n):
            t0 = clock()
            self._infer(X[i])
            times[i] = (clock() - t0) * 1e-9
        return times


class RealEngine(_EngineBase):
    def __init__(self, weights, biases, mean, std):
        super().__init__(mean, std)
        self.mode = "real"
        self.W = [np.asarray(w, dtype=float) for w in weights]
        self.B = [np.asarray(b, dtype=float) for b in biases]

    def _infer(self, row):
        x = self._preprocess(row)
        last = len(self.W) - 1
        for l, (w, b) in enumerate(zip(self.W, self.B)):
            x = w @ x + b
            if l < last:
                x = np.maximum(x, 0.0)
        return _sigmoid(float(x[0]))


class DrqEngine(_EngineBase):
    def __init__(self, qweights, w_scales, biases, mean, std):
        super().__init__(mean, std)
        self.mode = "dynamic_range"
        self.Q = [np.asarray(q, dtype=np.int32) for q in qweights]
        self.w_scale = [float(s) for s in w_scales]
        self.B = [np.asarray(b, dtype=float) for b in biases]

    def _infer(self, row):
        x = self._preprocess(row)
        last = len(self.Q) - 1
        for l, (q, b) in enumerate(zip(self.Q, self.B)):
            amax = float(np.max(np.abs(x)))
            s_in = amax / 127.0 if amax > 0 else 1.0
            xq = np.clip(round_half_away(x * (1.0 / s_in)), -128, 127).astype(np.int32)
            x = (q @ xq) * (self.w_scale[l] * s_in) + b
            if l < last:
                x = np.maximum(x, 0.0)
        return _sigmoid(float(x[0]))


def rshift_round(v, s):
    """Integer ``v / 2**s`` rounded half away from zero (python ints, exact)."""
    if s <= 0:
        return v
    half = 1 << (s - 1)
    return (v + half) >> s if v >= 0 else -((-v + half) >> s)


class FiqEngine(_EngineBase):
    def __init__(self, qweights, folded_bias, multipliers, shifts, zero_points,
                 in_scale, out_real_scale, mean, std):
        super().__init__(mean, std)
        self.mode = "full_integer"
        self.Q = [np.asarray(q, dtype=np.int64) for q in qweights]
        self.Bq = [np.asarray(b, dtype=np.int64) for b in folded_bias]
        self.mult = [int(m) for m in multipliers]
        self.shift = [int(s) for s in shifts]
        self.zp = [int(z) for z in zero_points]
        self.in_scale = float(in_scale)
        self.out_real_scale = float(out_real_scale)

    def _infer(self, row):
        x = self._preprocess(row)
        a = np.clip(round_half_away(x * (1.0 / self.in_scale)) + self.zp[0], -128, 127)
        a = a.astype(np.int64)
        last = len(self.Q) - 1
        for l, (q, bq) in enumerate(zip(self.Q, self.Bq)):
            acc = q @ a + bq
            if l == last:
                return _sigmoid(float(acc[0]) * self.out_real_scale)
            zp_out = self.zp[l + 1]
            m, s = self.mult[l], self.shift[l]
            r = np.array([rshift_round(int(v) * m, s) for v in acc], dtype=np.int64) + zp_out
            a = np.clip(r, zp_out, 127)
        return 0.5
