#include "crossseg/common.hpp"

#include <cstdlib>
#include <thread>

namespace crossseg {

int configured_num_threads() {
  if (const char* env = std::getenv("CROSSSEG_NUM_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace crossseg
