#include <atomic>
#include <cstdlib>
#include <string_view>

#include "texsyn/kernels.hpp"

namespace texsyn::kernels {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("TEXSYN_SIMD")) {
    const std::string_view v(env);
    if (v == "off" || v == "scalar" || v == "0") return &scalar();
  }
  if (const KernelTable* t = avx2()) return t;
  return &scalar();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace texsyn::kernels
