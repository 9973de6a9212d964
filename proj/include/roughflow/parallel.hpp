#pragma once

#include <cstddef>
#include <functional>

namespace roughflow {

/// Worker count from an explicit request, else ROUGHFLOW_WORKERS, else 1.
std::size_t resolve_workers(std::size_t requested);

/// Runs task(i) for i in [0, count) on `workers` threads. Tasks must write
/// only to their own output slot; the first exception is rethrown after all
/// threads join.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& task);

}  // namespace roughflow
