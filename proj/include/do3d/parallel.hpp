#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace do3d {

/// Worker cap from DO3D_THREADS (unset or 0 means hardware concurrency).
int worker_count();

/// Calls `body(row)` for every row in [0, rows), splitting contiguous row
/// ranges across workers. Each row must only write its own outputs.
void parallel_rows(int rows, const std::function<void(int)>& body);

/// Pairwise (tree) summation in index order; deterministic for a given input.
double pairwise_sum(std::span<const double> values);

}  // namespace do3d
