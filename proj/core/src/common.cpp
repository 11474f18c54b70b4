#include "nova/common.hpp"

#include <cstdlib>
#include <thread>

namespace nova {

std::size_t thread_cap() {
  static const std::size_t cap = [] {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("NOVA_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1 && static_cast<std::size_t>(v) < hw)
        hw = static_cast<std::size_t>(v);
    }
    return hw;
  }();
  return cap;
}

}  // namespace nova
