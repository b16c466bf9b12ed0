#pragma once

namespace forestsync {

// Size cap for dense O(n³) fallbacks (exact solves, trace bounds). Default
// 4096; override with the FS_DENSE_CAP environment variable (read once).
int dense_size_cap();

}  // namespace forestsync
