#include "kernels/conv_impl.hpp"

namespace mtln::kernels {
namespace {

struct ScalarOps {
  static void axpy(int n, float a, const float* x, float* y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
  }
  static void axpy_s2(int n, float a, const float* x, float* y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[2 * i];
  }
  static void scatter_s2(int n, float a, const float* x, float* y) {
    for (int i = 0; i < n; ++i) y[2 * i] += a * x[i];
  }
  static float dot(int n, const float* x, const float* y) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
  }
  static float dot_s2(int n, const float* x, const float* y) {
    float acc = 0.0f;
    for (int i = 0; i < n; ++i) acc += x[2 * i] * y[i];
    return acc;
  }
};

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = detail::make_table<ScalarOps>("scalar");
  return table;
}

}  // namespace mtln::kernels
