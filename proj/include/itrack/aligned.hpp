#pragma once

#include <Eigen/Core>

#include <vector>

namespace itrack {

// Storage that Eigen maps over. A fixed base alignment keeps vectorized
// reductions in the same order whichever thread or arena allocated it, so
// results do not depend on the thread count.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

}  // namespace itrack
