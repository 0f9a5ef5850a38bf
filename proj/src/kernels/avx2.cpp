#include <immintrin.h>

#include <cmath>

#include "kernels/conv_impl.hpp"

namespace mtln::kernels {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Even-indexed lanes of the 16 floats starting at p: p[0], p[2], ..., p[14].
inline __m256 load_even(const float* p) {
  const __m256 a = _mm256_loadu_ps(p);
  const __m256 b = _mm256_loadu_ps(p + 8);
  // [a0 a2 b0 b2 | a4 a6 b4 b6] -> [a0 a2 a4 a6 b0 b2 b4 b6]
  const __m256 packed = _mm256_shuffle_ps(a, b, _MM_SHUFFLE(2, 0, 2, 0));
  return _mm256_castpd_ps(_mm256_permute4x64_pd(_mm256_castps_pd(packed), 0xD8));
}

struct Avx2Ops {
  static void axpy(int n, float a, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(a);
    int i = 0;
    for (; i + 8 <= n; i += 8) {
      _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
  }

  static void axpy_s2(int n, float a, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(a);
    int i = 0;
    // load_even reads 16 floats, the last one past x[2 i + 14]; keep it in range.
    for (; i + 8 < n; i += 8) {
      _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, load_even(x + 2 * i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[2 * i], y[i]);
  }

  // Strided stores gain nothing from 256-bit lanes without AVX-512 scatter.
  static void scatter_s2(int n, float a, const float* x, float* y) {
    for (int i = 0; i < n; ++i) y[2 * i] = std::fma(a, x[i], y[2 * i]);
  }

  static float dot(int n, const float* x, const float* y) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 16 <= n; i += 16) {
      acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
      acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
      acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    }
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
    return acc;
  }

  static float dot_s2(int n, const float* x, const float* y) {
    __m256 acc0 = _mm256_setzero_ps();
    int i = 0;
    for (; i + 8 < n; i += 8) {
      acc0 = _mm256_fmadd_ps(load_even(x + 2 * i), _mm256_loadu_ps(y + i), acc0);
    }
    float acc = hsum(acc0);
    for (; i < n; ++i) acc = std::fma(x[2 * i], y[i], acc);
    return acc;
  }
};

bool cpu_supports_avx2() {
#if defined(__GNUC__) || defined(__clang__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table = detail::make_table<Avx2Ops>("avx2");
  static const bool supported = cpu_supports_avx2();
  return supported ? &table : nullptr;
}

}  // namespace mtln::kernels
