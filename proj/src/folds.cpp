#include "iflab/folds.hpp"

#include <numeric>

#include "iflab/rng.hpp"

namespace iflab {

FoldPlan make_fold_plan(std::size_t n, std::size_t K, std::uint64_t seed) {
  if (K < 2 || K > n)
    fail(Errc::KOutOfRange, "need 2 <= K <= n, got K=" + std::to_string(K) +
                                ", n=" + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos)
    plan.assignment[order[pos]] = static_cast<int>(pos % K);
  return plan;
}

}  // namespace iflab
