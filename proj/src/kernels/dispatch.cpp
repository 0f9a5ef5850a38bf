#include <cstdlib>
#include <string_view>

#include "mtln/kernels.hpp"

namespace mtln::kernels {

#ifndef MTLN_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> tables{&scalar_table()};
  if (const auto* t = avx2_table()) tables.push_back(t);
  return tables;
}

namespace {

const KernelTable* select_default() {
  const char* env = std::getenv("MTLN_KERNELS");
  const std::string_view wanted = env ? env : "";
  if (wanted == "scalar") return &scalar_table();
  if (const auto* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& slot() {
  static const KernelTable* current = select_default();
  return current;
}

}  // namespace

const KernelTable& active() { return *slot(); }

void set_active(const KernelTable& table) { slot() = &table; }

}  // namespace mtln::kernels
