#pragma once

#include <cstdint>
#include <exception>

namespace agentask {

// batch-level kernels run either serially or OpenMP-parallel; both produce
// bit-identical results (per-item slots, ordered reduction afterwards)
enum class Exec { kSerial, kParallel };

// data-parallel loop over [0, n). Exceptions raised by the body are captured
// and rethrown after the region; letting one escape an OpenMP worker would
// terminate the process.
template <typename Body>
void parallel_for(std::int64_t n, Exec exec, const Body& body) {
  if (exec == Exec::kSerial) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(agentask_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace agentask
