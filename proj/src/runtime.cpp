#include "soundrep/runtime.hpp"

#include <malloc.h>

namespace soundrep {

void tune_allocator() {
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
}

}  // namespace soundrep
