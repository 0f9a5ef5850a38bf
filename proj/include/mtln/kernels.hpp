#pragma once

#include <string_view>
#include <vector>

namespace mtln::kernels {

/// Shape of one NCHW cross-correlation. Padding is symmetric.
struct ConvGeometry {
  int batch = 1;
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int out_channels = 0;
  int out_height = 0;
  int out_width = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

/// Inner-loop kernels used by the tensor ops. Every implementation computes the
/// same mathematical result; only the summation order (and so the last bits)
/// may differ between instruction sets.
struct KernelTable {
  std::string_view name;

  // out = bias + input (*) weight. weight is O x I x K x K, bias has O entries.
  void (*conv2d_forward)(const ConvGeometry&, const float* input, const float* weight, const float* bias,
                         float* output);
  // grad_input += grad_output (*)^T weight
  void (*conv2d_backward_input)(const ConvGeometry&, const float* grad_output, const float* weight,
                                float* grad_input);
  // grad_weight += grad_output x input correlation, grad_bias += spatial sums
  void (*conv2d_backward_weight)(const ConvGeometry&, const float* grad_output, const float* input,
                                 float* grad_weight, float* grad_bias);

  // y = W x + b with W row-major rows x cols.
  void (*matvec)(int rows, int cols, const float* weight, const float* x, const float* bias, float* y);
  // grad_x += W^T grad_y
  void (*matvec_transposed_acc)(int rows, int cols, const float* weight, const float* grad_y, float* grad_x);
  // grad_W += grad_y x^T
  void (*outer_acc)(int rows, int cols, const float* grad_y, const float* x, float* grad_weight);
};

/// Portable reference implementation.
const KernelTable& scalar_table();

/// AVX2+FMA implementation, or nullptr when not compiled in or not supported
/// by the running CPU.
const KernelTable* avx2_table();

/// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

/// Table used by the tensor ops. Chosen once on first use: the best supported
/// instruction set, unless the MTLN_KERNELS environment variable names one
/// ("scalar" or "avx2").
const KernelTable& active();

/// Overrides the active table (tests and benchmarks). Not thread-safe.
void set_active(const KernelTable& table);

}  // namespace mtln::kernels
