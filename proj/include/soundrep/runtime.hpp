#pragma once

namespace soundrep {

/// Tunes the process allocator for training workloads: large activation
/// buffers are allocated and freed once per step, so they must be served from
/// the retained heap rather than fresh mmap regions (page-fault churn
/// otherwise dominates the step time). Idempotent.
void tune_allocator();

}  // namespace soundrep
