#pragma once

namespace forestsync {

// Which per-forest estimator turns a sampled MTSF into a signal estimate:
// the plain root-propagation, its Rao-Blackwellized (root-averaged) version,
// or the latter refined by one preconditioned gradient step.
enum class EstimatorKind { tilde, rao_blackwell, gradient_step };

}  // namespace forestsync
