/* Inner kernels for the MLP inference engines.
 *
 * Every kernel has a portable C body and, on x86-64, an AVX2 variant chosen
 * once at run time. Both variants produce bit-identical results: integer paths
 * are exact and the float paths use the same operations in the same order.
 *
 * int8 weights are stored as int16 input pairs, output-major within a pair:
 *   w16[(p * n_out + i) * 2 + k] = W[i][2p + k]   (zero when 2p + k == n_in)
 * so one pmaddwd yields eight partial dot products.
 */
#ifndef RACHML_KERNELS_H
#define RACHML_KERNELS_H
#include <stdint.h>
#include <math.h>

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define RACHML_X86 1
#include <immintrin.h>
#define RACHML_AVX2 __attribute__((target("avx2")))
#else
#define RACHML_X86 0
#endif

#define RACHML_INLINE static inline __attribute__((always_inline))

/* ------------------------------------------------------------ portable */

RACHML_INLINE void dense_f64_body(const double *restrict wt, const double *restrict b,
                                  const double *restrict x, double *restrict y,
                                  long n_in, long n_out, int relu)
{
    for (long i = 0; i < n_out; i++)
        y[i] = b[i];
    for (long j = 0; j < n_in; j++) {
        const double xj = x[j];
        const double *restrict row = wt + j * n_out;
        for (long i = 0; i < n_out; i++)
            y[i] += row[i] * xj;
    }
    if (relu)
        for (long i = 0; i < n_out; i++)
            y[i] = y[i] < 0.0 ? 0.0 : y[i];
}

static void dense_i16_c(const int16_t *restrict w, const int32_t *restrict b,
                        const int8_t *restrict a, int32_t *restrict acc, long n_in, long n_out)
{
    const long np = (n_in + 1) / 2;
    for (long i = 0; i < n_out; i++)
        acc[i] = b[i];
    for (long p = 0; p < np; p++) {
        const int32_t a0 = a[2 * p];
        const int32_t a1 = 2 * p + 1 < n_in ? a[2 * p + 1] : 0;
        const int16_t *restrict r = w + 2 * p * n_out;
        for (long i = 0; i < n_out; i++)
            acc[i] += r[2 * i] * a0 + r[2 * i + 1] * a1;
    }
}

static double absmax_c(const double *restrict x, long n)
{
    double m = 0.0;
    for (long j = 0; j < n; j++)
        m = fmax(m, fabs(x[j]));
    return m;
}

/* sat8(round_half_away(v) + zp); trunc(v +- 0.5) equals sign(v) * floor(|v| + 0.5) */
RACHML_INLINE int8_t quant1(double v, int32_t zp)
{
    double t = v + copysign(0.5, v);
    t = t > 1e6 ? 1e6 : (t < -1e6 ? -1e6 : t);
    int32_t r = (int32_t)t + zp;
    r = r < -128 ? -128 : (r > 127 ? 127 : r);
    return (int8_t)r;
}

static void quantize_c(const double *restrict x, double inv, int32_t zp,
                       int8_t *restrict q, long n)
{
    for (long j = 0; j < n; j++)
        q[j] = quant1(x[j] * inv, zp);
}

RACHML_INLINE int8_t requant1(int32_t acc, int64_t mult, int64_t half, int s, int64_t hi,
                              int32_t zp)
{
    const int64_t v = (int64_t)acc * mult;
    const int64_t neg = v < 0 ? -1 : 0;
    int64_t r = (((v ^ neg) - neg) + half) >> s;
    r = (r ^ neg) - neg;
    r = r < 0 ? 0 : (r > hi ? hi : r);
    return (int8_t)(r + zp);
}

static void requantize_c(const int32_t *restrict acc, int32_t mult, int shift, int32_t zp,
                         int8_t *restrict q, long n)
{
    const int s = shift > 0 ? shift : 0;
    const int64_t half = s > 0 ? ((int64_t)1 << (s - 1)) : 0;
    for (long i = 0; i < n; i++)
        q[i] = requant1(acc[i], mult, half, s, 127 - zp, zp);
}

static void dense_f64_c(const double *wt, const double *b, const double *x, double *y,
                        long n_in, long n_out, int relu)
{
    dense_f64_body(wt, b, x, y, n_in, n_out, relu);
}

/* ------------------------------------------------------------ avx2 */

#if RACHML_X86
RACHML_AVX2 static void dense_f64_avx2(const double *wt, const double *b, const double *x,
                                       double *y, long n_in, long n_out, int relu)
{
    dense_f64_body(wt, b, x, y, n_in, n_out, relu);
}

RACHML_AVX2 static void dense_i16_avx2(const int16_t *restrict w, const int32_t *restrict b,
                                       const int8_t *restrict a, int32_t *restrict acc,
                                       long n_in, long n_out)
{
    const long np = (n_in + 1) / 2;
    int32_t pairs[np > 0 ? np : 1];
    for (long p = 0; p < np; p++) {
        const int16_t a1 = 2 * p + 1 < n_in ? a[2 * p + 1] : 0;
        pairs[p] = (int32_t)((uint32_t)(uint16_t)a[2 * p] | ((uint32_t)(uint16_t)a1 << 16));
    }
    long i0 = 0;
    for (; i0 + 8 <= n_out; i0 += 8) {
        __m256i s = _mm256_loadu_si256((const __m256i *)(b + i0));
        const int16_t *wp = w + 2 * i0;
        for (long p = 0; p < np; p++) {
            const __m256i av = _mm256_set1_epi32(pairs[p]);
            const __m256i wv = _mm256_loadu_si256((const __m256i *)(wp + 2 * p * n_out));
            s = _mm256_add_epi32(s, _mm256_madd_epi16(wv, av));
        }
        _mm256_storeu_si256((__m256i *)(acc + i0), s);
    }
    for (long i = i0; i < n_out; i++) {
        int32_t s = b[i];
        for (long p = 0; p < np; p++) {
            const int16_t *r = w + 2 * (p * n_out + i);
            s += r[0] * (int32_t)(int16_t)(pairs[p] & 0xffff) + r[1] * (pairs[p] >> 16);
        }
        acc[i] = s;
    }
}

RACHML_AVX2 static double absmax_avx2(const double *restrict x, long n)
{
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d m = _mm256_setzero_pd();
    long j = 0;
    for (; j + 4 <= n; j += 4)
        m = _mm256_max_pd(m, _mm256_and_pd(_mm256_loadu_pd(x + j), mask));
    double buf[4];
    _mm256_storeu_pd(buf, m);
    double r = fmax(fmax(buf[0], buf[1]), fmax(buf[2], buf[3]));
    for (; j < n; j++)
        r = fmax(r, fabs(x[j]));
    return r;
}

RACHML_AVX2 static void quantize_avx2(const double *restrict x, double inv, int32_t zp,
                                      int8_t *restrict q, long n)
{
    const __m256d vinv = _mm256_set1_pd(inv);
    const __m256d sign = _mm256_set1_pd(-0.0);
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d lim = _mm256_set1_pd(1e6), nlim = _mm256_set1_pd(-1e6);
    const __m128i vzp = _mm_set1_epi32(zp);
    const __m128i lo = _mm_set1_epi32(-128), hi = _mm_set1_epi32(127);
    long j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d v = _mm256_mul_pd(_mm256_loadu_pd(x + j), vinv);
        __m256d t = _mm256_add_pd(v, _mm256_or_pd(_mm256_and_pd(v, sign), half));
        t = _mm256_max_pd(_mm256_min_pd(t, lim), nlim);
        __m128i r = _mm_add_epi32(_mm256_cvttpd_epi32(t), vzp);
        r = _mm_max_epi32(_mm_min_epi32(r, hi), lo);
        r = _mm_packs_epi16(_mm_packs_epi32(r, r), r);
        const int32_t packed = _mm_cvtsi128_si32(r);
        __builtin_memcpy(q + j, &packed, 4);
    }
    for (; j < n; j++)
        q[j] = quant1(x[j] * inv, zp);
}

RACHML_AVX2 static void requantize_avx2(const int32_t *restrict acc, int32_t mult, int shift,
                                        int32_t zp, int8_t *restrict q, long n)
{
    const int s = shift > 0 ? shift : 0;
    const int64_t half = s > 0 ? ((int64_t)1 << (s - 1)) : 0;
    const int64_t hi = 127 - zp;
    const __m256i vm = _mm256_set1_epi64x(mult);
    const __m256i vh = _mm256_set1_epi64x(half);
    const __m256i vhi = _mm256_set1_epi64x(hi);
    const __m256i zero = _mm256_setzero_si256();
    const __m128i cnt = _mm_cvtsi32_si128(s);
    const __m256i vzp = _mm256_set1_epi32(zp);
    long i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i a = _mm256_loadu_si256((const __m256i *)(acc + i));
        __m256i out[2];
        for (int k = 0; k < 2; k++) {
            /* k = 0: even lanes, k = 1: odd lanes, each widened to int64 */
            const __m256i src = k ? _mm256_srli_epi64(a, 32) : a;
            const __m256i v = _mm256_mul_epi32(src, vm);
            const __m256i neg = _mm256_cmpgt_epi64(zero, v);
            __m256i r = _mm256_sub_epi64(_mm256_xor_si256(v, neg), neg);
            r = _mm256_srl_epi64(_mm256_add_epi64(r, vh), cnt);
            r = _mm256_sub_epi64(_mm256_xor_si256(r, neg), neg);
            r = _mm256_blendv_epi8(r, zero, _mm256_cmpgt_epi64(zero, r));
            r = _mm256_blendv_epi8(r, vhi, _mm256_cmpgt_epi64(r, vhi));
            out[k] = r;
        }
        __m256i r = _mm256_blend_epi32(out[0], _mm256_slli_epi64(out[1], 32), 0xAA);
        r = _mm256_add_epi32(r, vzp);
        const __m128i r16 = _mm_packs_epi32(_mm256_castsi256_si128(r),
                                            _mm256_extracti128_si256(r, 1));
        _mm_storel_epi64((__m128i *)(q + i), _mm_packs_epi16(r16, r16));
    }
    for (; i < n; i++)
        q[i] = requant1(acc[i], mult, half, s, hi, zp);
}
#endif

/* ------------------------------------------------------------ dispatch */

static int rachml_simd = -1;

/* 1 when the AVX2 kernels are in use; ``allow`` = 0 forces the portable ones */
static int rachml_select(int allow)
{
#if RACHML_X86
    __builtin_cpu_init();
    rachml_simd = allow && __builtin_cpu_supports("avx2") ? 1 : 0;
#else
    rachml_simd = 0;
#endif
    return rachml_simd;
}

#if RACHML_X86
#define RACHML_DISPATCH(name, ...) \
    (rachml_simd == 1 ? name##_avx2(__VA_ARGS__) : name##_c(__VA_ARGS__))
#else
#define RACHML_DISPATCH(name, ...) name##_c(__VA_ARGS__)
#endif

static inline void rachml_dense_f64(const double *wt, const double *b, const double *x,
                                    double *y, long n_in, long n_out, int relu)
{ RACHML_DISPATCH(dense_f64, wt, b, x, y, n_in, n_out, relu); }

static inline void rachml_dense_i8(const int16_t *w, const int32_t *b, const int8_t *a,
                                   int32_t *acc, long n_in, long n_out)
{ RACHML_DISPATCH(dense_i16, w, b, a, acc, n_in, n_out); }

static inline double rachml_absmax(const double *x, long n)
{ return RACHML_DISPATCH(absmax, x, n); }

static inline void rachml_quantize(const double *x, double inv, int32_t zp, int8_t *q, long n)
{ RACHML_DISPATCH(quantize, x, inv, zp, q, n); }

static inline void rachml_requantize(const int32_t *acc, int32_t mult, int shift, int32_t zp,
                                     int8_t *q, long n)
{ RACHML_DISPATCH(requantize, acc, mult, shift, zp, q, n); }

/* y = relu?(acc * scale + b) */
static inline void rachml_dequantize(const int32_t *restrict acc, double scale,
                                     const double *restrict b, double *restrict y,
                                     long n, int relu)
{
    for (long i = 0; i < n; i++) {
        const double v = acc[i] * scale + b[i];
        y[i] = (relu && v < 0.0) ? 0.0 : v;
    }
}
#endif
