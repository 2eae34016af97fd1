# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: peak picking, Gini split search and MLP inference engines."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log10, exp, fabs
from libc.stdint cimport int8_t, int16_t, int32_t, int64_t
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

cdef extern from "_kernels.h" nogil:
    int rachml_select(int allow)
    void rachml_dense_f64(const double* wt, const double* b, const double* x, double* y,
                          long n_in, long n_out, int relu)
    void rachml_dense_i8(const int16_t* w, const int32_t* b, const int8_t* a, int32_t* acc,
                         long n_in, long n_out)
    double rachml_absmax(const double* x, long n)
    void rachml_quantize(const double* x, double inv, int32_t zp, int8_t* q, long n)
    void rachml_dequantize(const int32_t* acc, double scale, const double* b, double* y,
                           long n, int relu)
    void rachml_requantize(const int32_t* acc, int32_t mult, int shift, int32_t zp,
                           int8_t* q, long n)

cnp.import_array()

BACKEND = "compiled"
SIMD = bool(rachml_select(1))


def set_simd(bint allow):
    """Enable or disable the AVX2 kernels; returns whether they are active."""
    global SIMD
    SIMD = bool(rachml_select(allow))
    return SIMD


cdef inline double _now() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return ts.tv_sec + ts.tv_nsec * 1e-9


# ---------------------------------------------------------------- peaks

def greedy_peaks(const double[::1] power, double threshold, long min_distance):
    """Indices accepted by greedy non-maximum suppression, ascending."""
    cdef Py_ssize_t n = power.shape[0]
    cand = np.flatnonzero(np.asarray(power) > threshold)
    # descending power, ties -> lower index
    order = cand[np.lexsort((cand, -np.asarray(power)[cand]))].astype(np.intp)
    cdef const cnp.intp_t[::1] o = order
    cdef cnp.uint8_t[::1] blocked = np.zeros(n, dtype=np.uint8)
    cdef cnp.intp_t[::1] out = np.empty(o.shape[0], dtype=np.intp)
    cdef Py_ssize_t i, j, lo, hi, m = 0
    with nogil:
        for i in range(o.shape[0]):
            j = o[i]
            if blocked[j]:
                continue
            out[m] = j
            m += 1
            lo = j - min_distance + 1
            hi = j + min_distance - 1
            if lo < 0:
                lo = 0
            if hi > n - 1:
                hi = n - 1
            while lo <= hi:
                blocked[lo] = 1
                lo += 1
    return np.sort(np.asarray(out)[:m])


# ---------------------------------------------------------------- gini split

def best_split(const double[:, ::1] X, const long[::1] y, const long[::1] idx,
               const long[::1] features, long min_leaf):
    """Return (feature, threshold, weighted_gini) of the best midpoint split.

    Weighted Gini is ``2*pl*(nl-pl)/nl + 2*pr*(nr-pr)/nr``. Returns feature -1
    when no admissible split exists.
    """
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t n_feat = features.shape[0]
    if n == 0 or n_feat == 0:
        return -1, 0.0, 1e300
    rows = np.asarray(idx)
    # one vectorised sort per feature column; the scan below ignores tie order
    cols = np.ascontiguousarray(np.asarray(X)[rows][:, np.asarray(features)].T)
    order = np.argsort(cols, axis=1)
    cdef const double[:, ::1] vs = np.ascontiguousarray(np.take_along_axis(cols, order, axis=1))
    cdef const long[:, ::1] ys = np.ascontiguousarray(np.asarray(y)[rows][order])
    cdef Py_ssize_t fi, i
    cdef long pos_total = 0, cum, best_f = -1
    cdef double best = 1e300, score, nl, nr, pl, pr, best_thr = 0.0
    with nogil:
        for i in range(n):
            pos_total += ys[0, i]
        for fi in range(n_feat):
            cum = 0
            for i in range(n - 1):
                cum += ys[fi, i]
                if vs[fi, i] == vs[fi, i + 1]:
                    continue
                if i + 1 < min_leaf or n - i - 1 < min_leaf:
                    continue
                nl = i + 1
                nr = n - i - 1
                pl = cum
                pr = pos_total - cum
                score = 2.0 * pl * (nl - pl) / nl + 2.0 * pr * (nr - pr) / nr
                if score < best:
                    best = score
                    best_f = features[fi]
                    best_thr = (vs[fi, i] + vs[fi, i + 1]) / 2.0
    return best_f, best_thr, best


# ---------------------------------------------------------------- MLP engines

cdef inline double _sigmoid(double z) noexcept nogil:
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


cdef enum:
    MAX_WIDTH = 256   # widest layer; scratch lives on the stack so engines are reentrant


cdef class _EngineBase:
    cdef readonly str mode
    cdef int n_layers
    cdef long[::1] dims
    cdef long[::1] w_off
    cdef long[::1] b_off
    cdef double[::1] mean
    cdef double[::1] std
    cdef long max_dim

    cdef void _setup(self, list weights, mean, std):
        self.n_layers = len(weights)
        dims = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        self.dims = np.asarray(dims, dtype=np.int64).astype(np.int_)
        self.w_off = np.cumsum([0] + [w.size for w in weights]).astype(np.int_)
        self.b_off = np.cumsum([0] + [w.shape[0] for w in weights]).astype(np.int_)
        self.mean = np.ascontiguousarray(mean, dtype=np.float64)
        self.std = np.ascontiguousarray(std, dtype=np.float64)
        self.max_dim = max(dims)
        if self.max_dim > MAX_WIDTH:
            raise ValueError(f"layer width {self.max_dim} exceeds {MAX_WIDTH}")

    cdef inline void _preprocess(self, const double* row, double* x) noexcept nogil:
        cdef long j
        for j in range(self.dims[0]):
            x[j] = (log10(row[j] + 1e-12) - self.mean[j]) / self.std[j]

    cdef double _infer(self, const double* row) noexcept nogil:
        return 0.0

    def infer(self, const double[::1] row):
        if row.shape[0] != self.dims[0]:
            raise ValueError(f"expected {self.dims[0]} features")
        return self._infer(&row[0])

    def forward_batch(self, X):
        cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
        if Xv.shape[1] != self.dims[0]:
            raise ValueError(f"expected {self.dims[0]} features")
        cdef double[::1] out = np.empty(Xv.shape[0])
        cdef Py_ssize_t i
        with nogil:
            for i in range(Xv.shape[0]):
                out[i] = self._infer(&Xv[i, 0])
        return np.asarray(out)

    def bench(self, X, long warmup):
        """Run ``warmup`` untimed inferences, then time each row with CLOCK_MONOTONIC."""
        cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
        cdef Py_ssize_t n = Xv.shape[0], i
        cdef double[::1] times = np.empty(n)
        cdef double t0, sink = 0.0
        if n == 0:
            return np.asarray(times)
        with nogil:
            for i in range(warmup):
                sink += self._infer(&Xv[i % n, 0])
            for i in range(n):
                t0 = _now()
                sink += self._infer(&Xv[i, 0])
                times[i] = _now() - t0
        return np.asarray(times)


cdef inline cnp.ndarray _pack_t(list mats, dtype):
    # concatenate layer matrices stored input-major
    return np.concatenate([np.ascontiguousarray(np.asarray(m).T, dtype=dtype).ravel()
                           for m in mats])


def pack_pairs(q):
    """int8 ``(out, in)`` matrix as int16 input pairs: ``[p, i, k] = q[i, 2p + k]``."""
    q = np.asarray(q, dtype=np.int16)
    n_out, n_in = q.shape
    padded = np.zeros((n_out, n_in + n_in % 2), dtype=np.int16)
    padded[:, :n_in] = q
    return np.ascontiguousarray(padded.reshape(n_out, -1, 2).transpose(1, 0, 2)).ravel()


cdef class _IntEngine(_EngineBase):
    cdef int16_t[::1] Q
    cdef long[::1] q_off

    cdef void _pack(self, list qweights):
        packed = [pack_pairs(q) for q in qweights]
        self.Q = np.concatenate(packed)
        self.q_off = np.cumsum([0] + [p.size for p in packed]).astype(np.int_)


cdef class RealEngine(_EngineBase):
    """Float64 forward pass of a rectifier MLP with sigmoid output."""
    cdef double[::1] W
    cdef double[::1] B

    def __init__(self, weights, biases, mean, std):
        self.mode = "real"
        self._setup(list(weights), mean, std)
        self.W = _pack_t(list(weights), np.float64)
        self.B = np.concatenate([np.asarray(b, dtype=np.float64).ravel() for b in biases])

    cdef double _infer(self, const double* row) noexcept nogil:
        cdef double xs[MAX_WIDTH]
        cdef double hs[MAX_WIDTH]
        cdef double* x = xs
        cdef double* h = hs
        cdef double* tmp
        cdef long l, last = self.n_layers - 1
        self._preprocess(row, x)
        for l in range(self.n_layers):
            rachml_dense_f64(&self.W[self.w_off[l]], &self.B[self.b_off[l]], x, h,
                             self.dims[l], self.dims[l + 1], l < last)
            tmp = x
            x = h
            h = tmp
        return _sigmoid(x[0])


cdef class DrqEngine(_IntEngine):
    """int8 weights; each layer input is quantised on the fly from its own range."""
    cdef double[::1] w_scale
    cdef double[::1] B
    cdef int32_t[::1] zeros

    def __init__(self, qweights, w_scales, biases, mean, std):
        self.mode = "dynamic_range"
        self._setup(list(qweights), mean, std)
        self._pack(list(qweights))
        self.w_scale = np.asarray(w_scales, dtype=np.float64)
        self.B = np.concatenate([np.asarray(b, dtype=np.float64).ravel() for b in biases])
        self.zeros = np.zeros(self.max_dim, dtype=np.int32)

    cdef double _infer(self, const double* row) noexcept nogil:
        cdef double xs[MAX_WIDTH]
        cdef double hs[MAX_WIDTH]
        cdef int8_t xq[MAX_WIDTH]
        cdef int32_t acc[MAX_WIDTH]
        cdef double* x = xs
        cdef double* h = hs
        cdef double* tmp
        cdef long l, n_in, n_out, last = self.n_layers - 1
        cdef double amax, s_in
        self._preprocess(row, x)
        for l in range(self.n_layers):
            n_in = self.dims[l]
            n_out = self.dims[l + 1]
            amax = rachml_absmax(x, n_in)
            s_in = amax / 127.0 if amax > 0 else 1.0
            rachml_quantize(x, 1.0 / s_in, 0, xq, n_in)
            rachml_dense_i8(&self.Q[self.q_off[l]], &self.zeros[0], xq, acc, n_in, n_out)
            rachml_dequantize(acc, self.w_scale[l] * s_in, &self.B[self.b_off[l]], h,
                              n_out, l < last)
            tmp = x
            x = h
            h = tmp
        return _sigmoid(x[0])


cdef class FiqEngine(_IntEngine):
    """int8 weights and activations, int32 accumulators, fixed-point rescale."""
    cdef int32_t[::1] Bq
    cdef int32_t[::1] mult
    cdef int[::1] shift
    cdef int[::1] zp
    cdef double in_scale
    cdef double out_real_scale

    def __init__(self, qweights, folded_bias, multipliers, shifts, zero_points,
                 in_scale, out_real_scale, mean, std):
        self.mode = "full_integer"
        self._setup(list(qweights), mean, std)
        self._pack(list(qweights))
        self.Bq = np.concatenate([np.asarray(b, dtype=np.int32).ravel() for b in folded_bias])
        self.mult = np.asarray(multipliers, dtype=np.int32)
        self.shift = np.asarray(shifts, dtype=np.intc)
        self.zp = np.asarray(zero_points, dtype=np.intc)
        self.in_scale = in_scale
        self.out_real_scale = out_real_scale

    cdef double _infer(self, const double* row) noexcept nogil:
        cdef double x[MAX_WIDTH]
        cdef int8_t a_s[MAX_WIDTH]
        cdef int8_t b_s[MAX_WIDTH]
        cdef int32_t acc[MAX_WIDTH]
        cdef int8_t* a = a_s
        cdef int8_t* b = b_s
        cdef int8_t* tmp
        cdef long l, n_out, last = self.n_layers - 1
        self._preprocess(row, x)
        rachml_quantize(x, 1.0 / self.in_scale, self.zp[0], a, self.dims[0])
        for l in range(self.n_layers):
            n_out = self.dims[l + 1]
            rachml_dense_i8(&self.Q[self.q_off[l]], &self.Bq[self.b_off[l]], a, acc,
                            self.dims[l], n_out)
            if l == last:
                return _sigmoid(acc[0] * self.out_real_scale)
            rachml_requantize(acc, self.mult[l], self.shift[l], self.zp[l + 1], b, n_out)
            tmp = a
            a = b
            b = tmp
        return 0.5
