#include "clab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace clab {

std::size_t resolve_thread_count(std::size_t requested) {
  if (const char* env = std::getenv("CONTAGION_LAB_THREADS"); env && *env) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<std::size_t>(value);
    } catch (const std::exception&) {
      // fall through to the flag value
    }
  }
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace clab
