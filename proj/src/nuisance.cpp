#include "iflab/nuisance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "iflab/folds.hpp"

namespace iflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cand {
  double sq;        // squared standardized distance
  std::uint32_t id; // training-order row index (tie-break: lowest wins)
};

inline bool cand_less(const Cand& a, const Cand& b) {
  if (a.sq != b.sq) return a.sq < b.sq;
  return a.id < b.id;
}

void standardize_setup(const std::vector<double>& X, std::size_t n, std::size_t d,
                       std::vector<double>& mean, std::vector<double>& scale) {
  mean.assign(d, 0.0);
  scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += X[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  std::vector<double> ss(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double c = X[i * d + j] - mean[j];
      ss[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    double sd = std::sqrt(ss[j] / static_cast<double>(n));
    scale[j] = sd > 0.0 ? sd : 1.0;  // constant features pass through
  }
}

void base_fit(RegressionFit& f, const std::vector<double>& X, std::size_t d,
              const std::vector<double>& targets) {
  if (d == 0) fail(Errc::BadConfig, "regression needs at least one feature");
  if (targets.empty()) fail(Errc::EmptyData, "regression needs at least one row");
  if (X.size() != targets.size() * d)
    fail(Errc::BadConfig, "feature matrix size disagrees with target count");
  f.d = d;
  f.n = targets.size();
  standardize_setup(X, f.n, d, f.mean, f.scale);
  f.feat.resize(f.n * d);
  for (std::size_t i = 0; i < f.n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      f.feat[i * d + j] = (X[i * d + j] - f.mean[j]) / f.scale[j];
  f.target = targets;
  double s = 0.0;
  for (double t : targets) s += t;
  f.global_mean = s / static_cast<double>(f.n);
  if (d == 1) {
    std::vector<std::uint32_t> order(f.n);
    for (std::size_t i = 0; i < f.n; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (f.feat[a] != f.feat[b]) return f.feat[a] < f.feat[b];
      return a < b;
    });
    f.sorted_x.resize(f.n);
    f.sorted_id = std::move(order);
    for (std::size_t i = 0; i < f.n; ++i) f.sorted_x[i] = f.feat[f.sorted_id[i]];
    f.sorted_prefix.resize(f.n + 1);
    f.sorted_prefix[0] = 0.0;
    for (std::size_t i = 0; i < f.n; ++i)
      f.sorted_prefix[i + 1] = f.sorted_prefix[i] + f.target[f.sorted_id[i]];
  }
}

// Collects at least `need` nearest candidates of q (plus every candidate
// tying the need-th squared distance) in nondecreasing |q - x| order.
// Works on the sorted 1-d arrays.
void gather_sorted_1d(const std::vector<double>& xs, const std::vector<std::uint32_t>& ids,
                      double q, std::size_t need, std::vector<Cand>& out) {
  out.clear();
  std::size_t n = xs.size();
  auto it = std::lower_bound(xs.begin(), xs.end(), q);
  std::size_t right = static_cast<std::size_t>(it - xs.begin());
  std::size_t left = right;  // left side is [0, left), right side is [right, n)
  double kth_sq = kInf;
  while (true) {
    double dl = left > 0 ? q - xs[left - 1] : kInf;
    double dr = right < n ? xs[right] - q : kInf;
    if (dl == kInf && dr == kInf) break;
    bool take_left = dl <= dr;
    double diff = take_left ? dl : dr;
    double sq = diff * diff;
    if (out.size() >= need && sq > kth_sq) break;
    if (take_left) {
      --left;
      out.push_back({sq, ids[left]});
    } else {
      out.push_back({sq, ids[right]});
      ++right;
    }
    if (out.size() == need) kth_sq = out.back().sq;
  }
  std::sort(out.begin(), out.end(), cand_less);
}

// Reference path for any dimension: full (distance, id) sort.
void gather_brute(const std::vector<double>& feat, std::size_t n, std::size_t d,
                  const double* q, std::vector<Cand>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = q[j] - feat[i * d + j];
      sq += c * c;
    }
    out[i] = {sq, static_cast<std::uint32_t>(i)};
  }
  std::sort(out.begin(), out.end(), cand_less);
}

double knn_mean_from(const std::vector<Cand>& cands, const std::vector<double>& target,
                     std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += target[cands[i].id];
  return s / static_cast<double>(k);
}

// O(log n) mean of the k nearest 1-d neighbours, selecting exactly the same
// points as gather_sorted_1d + knn_mean_from: squared distances compared as
// doubles, ties at the k-th radius resolved by lowest training id.  Interior
// points are a contiguous sorted range, so their sum comes from the prefix
// table; only the boundary ties need element-wise work.
double knn_sorted_mean(const RegressionFit& f, double q, std::size_t k) {
  const std::vector<double>& xs = f.sorted_x;
  std::size_t n = xs.size();
  std::size_t right0 = static_cast<std::size_t>(
      std::lower_bound(xs.begin(), xs.end(), q) - xs.begin());

  // Choose how many of the k neighbours come from the left side [0, right0).
  // The leftmost included distance grows with m, the rightmost shrinks, so the
  // k-th distance max(dl, dr) is unimodal in m.
  std::size_t lo = k > n - right0 ? k - (n - right0) : 0;
  std::size_t hi = right0 < k ? right0 : k;
  auto dl_of = [&](std::size_t m) { return m > 0 ? q - xs[right0 - m] : -kInf; };
  auto dr_of = [&](std::size_t m) {
    return k - m > 0 ? xs[right0 + (k - m) - 1] - q : -kInf;
  };
  std::size_t a = lo, b = hi;  // smallest m with dl >= dr, if any
  while (a < b) {
    std::size_t mid = a + (b - a) / 2;
    if (dl_of(mid) >= dr_of(mid)) b = mid; else a = mid + 1;
  }
  double best = std::max(dl_of(a), dr_of(a));
  if (a > lo) best = std::min(best, std::max(dl_of(a - 1), dr_of(a - 1)));
  double kth_sq = best * best;  // k-th smallest squared distance

  // Strictly-inside points form a contiguous range [ia, ib); the tie bands
  // [ta, ia) and [ib, tb) hold every point whose squared distance equals
  // kth_sq.  All three are found by binary search on the monotone distances.
  auto left_first = [&](bool strict) {
    std::size_t s = 0, e = right0;
    while (s < e) {
      std::size_t mid = s + (e - s) / 2;
      double d = q - xs[mid];
      double sq = d * d;
      bool outside = strict ? sq >= kth_sq : sq > kth_sq;
      if (outside) s = mid + 1; else e = mid;
    }
    return s;
  };
  auto right_last = [&](bool strict) {
    std::size_t s = right0, e = n;
    while (s < e) {
      std::size_t mid = s + (e - s) / 2;
      double d = xs[mid] - q;
      double sq = d * d;
      bool inside = strict ? sq < kth_sq : sq <= kth_sq;
      if (inside) s = mid + 1; else e = mid;
    }
    return s;
  };
  std::size_t ia = left_first(true), ta = left_first(false);
  std::size_t ib = right_last(true), tb = right_last(false);

  double sum = f.sorted_prefix[ib] - f.sorted_prefix[ia];
  std::size_t need = k - (ib - ia);
  std::size_t ties = (ia - ta) + (tb - ib);
  if (need == ties) {
    sum += f.sorted_prefix[ia] - f.sorted_prefix[ta];
    sum += f.sorted_prefix[tb] - f.sorted_prefix[ib];
  } else {
    thread_local std::vector<std::uint32_t> tie_ids;
    tie_ids.clear();
    for (std::size_t i = ta; i < ia; ++i) tie_ids.push_back(f.sorted_id[i]);
    for (std::size_t i = ib; i < tb; ++i) tie_ids.push_back(f.sorted_id[i]);
    std::nth_element(tie_ids.begin(), tie_ids.begin() + static_cast<std::ptrdiff_t>(need),
                     tie_ids.end());
    for (std::size_t i = 0; i < need; ++i) sum += f.target[tie_ids[i]];
  }
  return sum / static_cast<double>(k);
}

double apply_clamp(const RegressionFit& f, double v) {
  if (!f.clamped) return v;
  if (v < f.clamp_lo || v > f.clamp_hi) {
    if (f.clamp_hits) f.clamp_hits->fetch_add(1, std::memory_order_relaxed);
    return v < f.clamp_lo ? f.clamp_lo : f.clamp_hi;
  }
  return v;
}

}  // namespace

double RegressionFit::predict(const double* q) const {
  thread_local std::vector<Cand> cands;
  thread_local std::vector<double> qs;
  qs.resize(d);
  for (std::size_t j = 0; j < d; ++j) qs[j] = (q[j] - mean[j]) / scale[j];
  double raw = 0.0;
  switch (method) {
    case Method::Knn: {
      std::size_t kk = static_cast<std::size_t>(k);
      if (d == 1) {
        raw = knn_sorted_mean(*this, qs[0], kk);
      } else {
        gather_brute(feat, n, d, qs.data(), cands);
        raw = knn_mean_from(cands, target, kk);
      }
      break;
    }
    case Method::Nw: {
      double num = 0.0, den = 0.0;
      double inv2h2 = 1.0 / (2.0 * h * h);
      for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double c = qs[j] - feat[i * d + j];
          sq += c * c;
        }
        double w = std::exp(-sq * inv2h2);
        num += w * target[i];
        den += w;
      }
      if (den < 1e-300) {
        // all weights underflow: fall back to the nearest neighbour
        if (d == 1)
          gather_sorted_1d(sorted_x, sorted_id, qs[0], 1, cands);
        else
          gather_brute(feat, n, d, qs.data(), cands);
        raw = target[cands[0].id];
      } else {
        raw = num / den;
      }
      break;
    }
    case Method::Hist: {
      double t = qs[0];
      int b = hist_wid > 0.0 ? static_cast<int>(std::floor((t - hist_lo) / hist_wid)) : 0;
      b = std::clamp(b, 0, bins - 1);
      raw = bin_used[static_cast<std::size_t>(b)] ? bin_mean[static_cast<std::size_t>(b)]
                                                  : global_mean;
      break;
    }
  }
  return apply_clamp(*this, raw);
}

RegressionFit fit_knn(const std::vector<double>& X, std::size_t d,
                      const std::vector<double>& targets, int k) {
  RegressionFit f;
  f.method = RegressionFit::Method::Knn;
  base_fit(f, X, d, targets);
  if (k < 1 || static_cast<std::size_t>(k) > f.n)
    fail(Errc::KTooLarge, "k=" + std::to_string(k) + " with n=" + std::to_string(f.n));
  f.k = k;
  return f;
}

RegressionFit fit_kernel_regression(const std::vector<double>& X, std::size_t d,
                                    const std::vector<double>& targets, double h) {
  RegressionFit f;
  f.method = RegressionFit::Method::Nw;
  base_fit(f, X, d, targets);
  if (!(h > 0.0) || !std::isfinite(h))
    fail(Errc::BandwidthOutOfRange, "bandwidth must be positive");
  f.h = h;
  return f;
}

RegressionFit fit_histogram(const std::vector<double>& X, std::size_t d,
                            const std::vector<double>& targets, int bins) {
  if (d != 1) fail(Errc::BadConfig, "histogram regression is univariate");
  RegressionFit f;
  f.method = RegressionFit::Method::Hist;
  base_fit(f, X, d, targets);
  if (bins < 1) fail(Errc::BadConfig, "bins must be >= 1");
  f.bins = bins;
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i < f.n; ++i) {
    lo = std::min(lo, f.feat[i]);
    hi = std::max(hi, f.feat[i]);
  }
  f.hist_lo = lo;
  f.hist_wid = hi > lo ? (hi - lo) / bins : 0.0;
  f.bin_mean.assign(static_cast<std::size_t>(bins), 0.0);
  f.bin_used.assign(static_cast<std::size_t>(bins), 0);
  std::vector<double> cnt(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < f.n; ++i) {
    int b = f.hist_wid > 0.0
                ? std::clamp(static_cast<int>(std::floor((f.feat[i] - lo) / f.hist_wid)), 0,
                             bins - 1)
                : 0;
    auto bi = static_cast<std::size_t>(b);
    f.bin_mean[bi] += f.target[i];
    cnt[bi] += 1.0;
  }
  for (int b = 0; b < bins; ++b) {
    auto bi = static_cast<std::size_t>(b);
    if (cnt[bi] > 0.0) {
      f.bin_mean[bi] /= cnt[bi];
      f.bin_used[bi] = 1;
    }
  }
  return f;
}

double silverman_bandwidth(const std::vector<double>& xs) {
  if (xs.empty()) fail(Errc::EmptyData, "bandwidth rule needs data");
  double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double v : xs) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : xs) ss += (v - m) * (v - m);
  double sd = std::sqrt(ss / n);
  double h = 1.06 * sd * std::pow(n, -0.2);
  if (!(h > 0.0))
    fail(Errc::BandwidthOutOfRange,
         "silverman bandwidth is zero (constant sample); pass h explicitly");
  return h;
}

DensityFit fit_density(const std::vector<double>& xs, double h) {
  if (xs.empty()) fail(Errc::EmptyData, "density fit needs data");
  if (!(h > 0.0) || !std::isfinite(h))
    fail(Errc::BandwidthOutOfRange, "bandwidth must be positive");
  DensityFit f;
  f.h = h;
  f.xs = xs;
  double lo = kInf, hi = -kInf;
  for (double v : xs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  f.lo = lo - 4.0 * h;
  f.hi = hi + 4.0 * h;
  return f;
}

double DensityFit::predict(double t) const {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  double s = 0.0;
  double invh = 1.0 / h;
  for (double v : xs) {
    double u = (t - v) * invh;
    s += std::exp(-0.5 * u * u);
  }
  return s * inv_sqrt_2pi * invh / static_cast<double>(xs.size());
}

namespace {
double grid_trapezoid(const DensityFit& f, bool squared) {
  std::size_t m = f.grid_size;
  double step = (f.hi - f.lo) / static_cast<double>(m - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double v = f.predict(f.lo + step * static_cast<double>(i));
    if (squared) v *= v;
    acc += (i == 0 || i == m - 1) ? 0.5 * v : v;
  }
  return acc * step;
}
}  // namespace

double DensityFit::mass_integral() const { return grid_trapezoid(*this, false); }
double DensityFit::square_integral() const { return grid_trapezoid(*this, true); }

namespace {

// Per-fold CV errors for knn evaluate every candidate k in one pass per
// query: candidates are gathered once to the largest k, sorted by
// (distance, id), and prefix sums give each k's prediction.
void cv_accumulate_knn(const std::vector<double>& X, std::size_t d,
                       const std::vector<double>& targets,
                       const std::vector<std::size_t>& train,
                       const std::vector<std::size_t>& held,
                       const std::vector<int>& ks, std::vector<double>& sse,
                       std::vector<double>& cnt) {
  std::size_t nt = train.size();
  std::vector<double> tx(nt * d), tt(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    for (std::size_t j = 0; j < d; ++j) tx[i * d + j] = X[train[i] * d + j];
    tt[i] = targets[train[i]];
  }
  RegressionFit base;
  base.method = RegressionFit::Method::Knn;
  base_fit(base, tx, d, tt);
  int kmax_feasible = 0;
  for (int kv : ks)
    if (static_cast<std::size_t>(kv) <= nt) kmax_feasible = std::max(kmax_feasible, kv);
  if (kmax_feasible == 0) {  // every k infeasible on this fold
    for (auto& v : sse) v = kInf;
    return;
  }
  std::vector<Cand> cands;
  std::vector<double> qs(d);
  std::vector<double> prefix;
  for (std::size_t hrow : held) {
    for (std::size_t j = 0; j < d; ++j)
      qs[j] = (X[hrow * d + j] - base.mean[j]) / base.scale[j];
    if (d == 1)
      gather_sorted_1d(base.sorted_x, base.sorted_id, qs[0],
                       static_cast<std::size_t>(kmax_feasible), cands);
    else
      gather_brute(base.feat, nt, d, qs.data(), cands);
    prefix.assign(cands.size() + 1, 0.0);
    for (std::size_t i = 0; i < cands.size(); ++i)
      prefix[i + 1] = prefix[i] + tt[cands[i].id];
    for (std::size_t gi = 0; gi < ks.size(); ++gi) {
      auto kk = static_cast<std::size_t>(ks[gi]);
      if (kk > nt) {
        sse[gi] = kInf;
        continue;
      }
      double pred = prefix[kk] / static_cast<double>(kk);
      double e = pred - targets[hrow];
      if (sse[gi] != kInf) {
        sse[gi] += e * e;
        cnt[gi] += 1.0;
      }
    }
  }
  for (std::size_t gi = 0; gi < ks.size(); ++gi)
    if (static_cast<std::size_t>(ks[gi]) > nt) sse[gi] = kInf;
}

}  // namespace

double select_tuning_cv(const std::vector<double>& X, std::size_t d,
                        const std::vector<double>& targets, const LearnerSpec& spec,
                        const std::vector<double>& grid, int folds,
                        std::uint64_t seed) {
  if (grid.empty()) fail(Errc::EmptyGrid, "cv grid is empty");
  if (folds < 2) fail(Errc::BadConfig, "cv needs folds >= 2");
  std::size_t n = targets.size();
  if (n < static_cast<std::size_t>(folds))
    fail(Errc::FoldTooSmall, "cv folds exceed row count");
  FoldPlan plan = make_fold_plan(n, static_cast<std::size_t>(folds), seed);

  std::vector<double> sse(grid.size(), 0.0), cnt(grid.size(), 0.0);
  if (spec.kind == LearnerSpec::Kind::Knn) {
    std::vector<int> ks;
    for (double g : grid) {
      int kv = static_cast<int>(g);
      if (g != kv || kv < 1) fail(Errc::BadLearnerSpec, "knn grid values must be positive integers");
      ks.push_back(kv);
    }
    for (int f = 0; f < folds; ++f)
      cv_accumulate_knn(X, d, targets, plan.complement_rows(f), plan.fold_rows(f), ks,
                        sse, cnt);
  } else {
    for (int f = 0; f < folds; ++f) {
      auto train = plan.complement_rows(f);
      auto held = plan.fold_rows(f);
      std::size_t nt = train.size();
      std::vector<double> tx(nt * d), tt(nt);
      for (std::size_t i = 0; i < nt; ++i) {
        for (std::size_t j = 0; j < d; ++j) tx[i * d + j] = X[train[i] * d + j];
        tt[i] = targets[train[i]];
      }
      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        RegressionFit fit;
        if (spec.kind == LearnerSpec::Kind::Nw)
          fit = fit_kernel_regression(tx, d, tt, grid[gi]);
        else if (spec.kind == LearnerSpec::Kind::Hist)
          fit = fit_histogram(tx, d, tt, static_cast<int>(grid[gi]));
        else
          fail(Errc::BadLearnerSpec, "cv not supported for this learner kind");
        for (std::size_t hrow : held) {
          double e = fit.predict(X.data() + hrow * d) - targets[hrow];
          sse[gi] += e * e;
          cnt[gi] += 1.0;
        }
      }
    }
  }

  std::vector<double> mse(grid.size());
  for (std::size_t gi = 0; gi < grid.size(); ++gi)
    mse[gi] = cnt[gi] > 0.0 ? sse[gi] / cnt[gi] : kInf;

  // walk the grid from smoothest to roughest; strict improvement required,
  // so exact ties keep the smoother setting
  std::vector<std::size_t> order(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  bool smoother_is_larger = spec.kind != LearnerSpec::Kind::Hist;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return smoother_is_larger ? grid[a] > grid[b] : grid[a] < grid[b];
  });
  double best = kInf, best_val = 0.0;
  bool found = false;
  for (std::size_t oi : order) {
    if (mse[oi] < best) {
      best = mse[oi];
      best_val = grid[oi];
      found = true;
    }
  }
  if (!found || best == kInf)
    fail(Errc::KTooLarge, "no cv grid value is feasible on the fold sizes");
  return best_val;
}

RegressionFit fit_spec(const std::vector<double>& X, std::size_t d,
                       const std::vector<double>& targets, const LearnerSpec& spec,
                       std::uint64_t seed) {
  switch (spec.kind) {
    case LearnerSpec::Kind::Knn: {
      int k = spec.k;
      if (spec.cv)
        k = static_cast<int>(
            select_tuning_cv(X, d, targets, spec, spec.grid, spec.cv_folds, seed));
      return fit_knn(X, d, targets, k);
    }
    case LearnerSpec::Kind::Nw: {
      double h = spec.h;
      if (spec.cv) h = select_tuning_cv(X, d, targets, spec, spec.grid, spec.cv_folds, seed);
      return fit_kernel_regression(X, d, targets, h);
    }
    case LearnerSpec::Kind::Hist: {
      int bins = spec.bins;
      if (spec.cv)
        bins = static_cast<int>(
            select_tuning_cv(X, d, targets, spec, spec.grid, spec.cv_folds, seed));
      return fit_histogram(X, d, targets, bins);
    }
    case LearnerSpec::Kind::Kde:
      fail(Errc::BadLearnerSpec, "kde specifies a density, not a regression");
  }
  fail(Errc::BadLearnerSpec, "unknown learner kind");
}

RegressionFit clamp(RegressionFit fit, double lo, double hi,
                    std::shared_ptr<std::atomic<long long>> counter) {
  if (!(lo < hi)) fail(Errc::BadConfig, "clamp needs lo < hi");
  fit.clamped = true;
  fit.clamp_lo = lo;
  fit.clamp_hi = hi;
  fit.clamp_hits = counter ? std::move(counter)
                           : std::make_shared<std::atomic<long long>>(0);
  return fit;
}

// ---------------------------------------------------------------------------
// learner spec grammar

namespace {

struct SpecScanner {
  const std::string& s;
  std::size_t i = 0;
  void skip_ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  std::string ident() {
    skip_ws();
    std::size_t b = i;
    while (i < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
      ++i;
    return s.substr(b, i - b);
  }
  double number() {
    skip_ws();
    std::size_t b = i;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) ||
                            s[i] == '.' || s[i] == '-' || s[i] == '+' ||
                            s[i] == 'e' || s[i] == 'E'))
      ++i;
    if (b == i) fail(Errc::BadLearnerSpec, "expected a number in learner spec '" + s + "'");
    return std::stod(s.substr(b, i - b));
  }
};

}  // namespace

LearnerSpec parse_learner(const std::string& text) {
  LearnerSpec spec;
  spec.text = text;
  SpecScanner sc{text};
  std::string name = sc.ident();
  if (name == "knn")
    spec.kind = LearnerSpec::Kind::Knn;
  else if (name == "nw")
    spec.kind = LearnerSpec::Kind::Nw;
  else if (name == "hist")
    spec.kind = LearnerSpec::Kind::Hist;
  else if (name == "kde")
    spec.kind = LearnerSpec::Kind::Kde;
  else
    fail(Errc::BadLearnerSpec, "unknown learner '" + name + "' in '" + text + "'");
  if (!sc.eat('(')) fail(Errc::BadLearnerSpec, "expected '(' in '" + text + "'");
  bool first = true;
  while (!sc.eat(')')) {
    if (!first && !sc.eat(','))
      fail(Errc::BadLearnerSpec, "expected ',' or ')' in '" + text + "'");
    first = false;
    std::string key = sc.ident();
    if (!sc.eat('=')) fail(Errc::BadLearnerSpec, "expected '=' after '" + key + "'");
    if (key == "k") {
      spec.k = static_cast<int>(sc.number());
    } else if (key == "h") {
      sc.skip_ws();
      if (text.compare(sc.i, 9, "silverman") == 0) {
        spec.silverman = true;
        sc.i += 9;
      } else {
        spec.h = sc.number();
      }
    } else if (key == "bins") {
      spec.bins = static_cast<int>(sc.number());
    } else if (key == "cv") {
      spec.cv = true;
      spec.cv_folds = static_cast<int>(sc.number());
    } else if (key == "grid") {
      if (!sc.eat('[')) fail(Errc::BadLearnerSpec, "expected '[' after grid=");
      while (!sc.eat(']')) {
        if (!spec.grid.empty() && !sc.eat(','))
          fail(Errc::BadLearnerSpec, "expected ',' or ']' in grid list");
        spec.grid.push_back(sc.number());
      }
    } else {
      fail(Errc::BadLearnerSpec, "unknown key '" + key + "' in '" + text + "'");
    }
  }
  sc.skip_ws();
  if (sc.i != text.size())
    fail(Errc::BadLearnerSpec, "trailing input in learner spec '" + text + "'");
  if (spec.cv && spec.grid.empty())
    fail(Errc::BadLearnerSpec, "cv learner needs a grid in '" + text + "'");
  if (!spec.cv) {
    if (spec.kind == LearnerSpec::Kind::Knn && spec.k < 1)
      fail(Errc::BadLearnerSpec, "knn needs k>=1 or cv in '" + text + "'");
    if (spec.kind == LearnerSpec::Kind::Nw && !(spec.h > 0.0))
      fail(Errc::BadLearnerSpec, "nw needs h>0 or cv in '" + text + "'");
    if (spec.kind == LearnerSpec::Kind::Hist && spec.bins < 1)
      fail(Errc::BadLearnerSpec, "hist needs bins>=1 or cv in '" + text + "'");
    if (spec.kind == LearnerSpec::Kind::Kde && !spec.silverman && !(spec.h > 0.0))
      fail(Errc::BadLearnerSpec, "kde needs h>0 or h=silverman in '" + text + "'");
  }
  return spec;
}

}  // namespace iflab
