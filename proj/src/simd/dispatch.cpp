#include <atomic>
#include <cstdlib>
#include <string_view>

#include "trajtrack/simd/kernels.hpp"

namespace trajtrack::simd {

#if defined(TRAJTRACK_HAVE_AVX2)
const KernelTable* avx2_table_impl();
#endif

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("TRAJTRACK_SIMD")) {
    if (std::string_view(env) == "scalar") return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels(); t != nullptr && cpu_supports_avx2_fma()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(TRAJTRACK_HAVE_AVX2)
  return avx2_table_impl();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active_kernels() { return *active_slot().load(std::memory_order_acquire); }

bool select_kernels(Isa isa) {
  if (isa == Isa::kScalar) {
    active_slot().store(&scalar_kernels(), std::memory_order_release);
    return true;
  }
  const KernelTable* t = avx2_kernels();
  if (t == nullptr || !cpu_supports_avx2_fma()) return false;
  active_slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace trajtrack::simd
