#include "forestsync/config.hpp"

#include <cstdlib>
#include <string>

namespace forestsync {

int dense_size_cap() {
  static const int cap = [] {
    const char* env = std::getenv("FS_DENSE_CAP");
    if (env == nullptr) return 4096;
    try {
      int v = std::stoi(env);
      return v > 0 ? v : 4096;
    } catch (...) {
      return 4096;
    }
  }();
  return cap;
}

}  // namespace forestsync
