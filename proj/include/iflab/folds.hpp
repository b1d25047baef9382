#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "iflab/error.hpp"

namespace iflab {

// K-fold assignment: a seeded shuffle of row indices dealt round-robin,
// so fold sizes differ by at most one and the plan is reproducible from
// (n, K, seed).
struct FoldPlan {
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // row index -> fold in [0, K)

  std::vector<std::size_t> fold_rows(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == k) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> complement_rows(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != k) out.push_back(i);
    return out;
  }
};

FoldPlan make_fold_plan(std::size_t n, std::size_t K, std::uint64_t seed);

}  // namespace iflab
