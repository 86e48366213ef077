#include <cstdlib>
#include <stdexcept>
#include <string>

#include "ddn/kernels.hpp"

namespace ddn::kern {

bool avx2_supported() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

namespace {

const Kernels& resolve() {
  const char* env = std::getenv("DDN_LAB_KERNELS");
  std::string mode = env ? env : "auto";
  if (mode == "scalar") return scalar_kernels();
  if (mode == "avx2") {
    if (!avx2_supported())
      throw std::runtime_error("DDN_LAB_KERNELS=avx2 but CPU lacks AVX2");
    return avx2_kernels();
  }
  if (mode != "auto")
    throw std::runtime_error("DDN_LAB_KERNELS must be scalar, avx2 or auto");
  return avx2_supported() ? avx2_kernels() : scalar_kernels();
}

}  // namespace

const Kernels& active_kernels() {
  static const Kernels& k = resolve();
  return k;
}

std::string_view active_backend_name() { return active_kernels().name; }

}  // namespace ddn::kern
