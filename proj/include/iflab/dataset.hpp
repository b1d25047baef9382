#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iflab/error.hpp"

namespace iflab {

// Tabular sample with role-tagged columns. Layout:
//   x1..xd   real covariates (row-major block)
//   a        integer treatment
//   y        real outcome
//   r        optional integer instrument
//   x2_1..x2_m, a2   optional second-stage block for sequential designs
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;   // first-stage covariate dimension
  std::size_t d2 = 0;  // second-stage covariate dimension (0 when absent)
  std::vector<double> x;   // n * d, row-major
  std::vector<int> a;      // n
  std::vector<double> y;   // n
  std::vector<int> r;      // n when has_instrument
  std::vector<double> x2;  // n * d2 when d2 > 0
  std::vector<int> a2;     // n when d2 > 0
  bool has_instrument = false;

  const double* row_x(std::size_t i) const { return x.data() + i * d; }
  const double* row_x2(std::size_t i) const { return x2.data() + i * d2; }
  void validate() const;
};

// Lightweight row view handed to nuisance functions and IF evaluators.
struct Row {
  const double* x = nullptr;
  std::size_t d = 0;
  int a = 0;
  double y = 0.0;
  int r = 0;
  bool has_r = false;
  const double* x2 = nullptr;
  std::size_t d2 = 0;
  int a2 = 0;
};

inline Row row_view(const Dataset& ds, std::size_t i) {
  Row w;
  w.x = ds.row_x(i);
  w.d = ds.d;
  w.a = ds.a[i];
  w.y = ds.y[i];
  if (ds.has_instrument) {
    w.r = ds.r[i];
    w.has_r = true;
  }
  if (ds.d2 > 0) {
    w.x2 = ds.row_x2(i);
    w.d2 = ds.d2;
    w.a2 = ds.a2[i];
  }
  return w;
}

// Copies the selected rows (in the given order) into a new dataset.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows);

// CSV with header `x1..xd,a,y[,r][,x2_1..x2_m,a2]`. Numbers are written
// with shortest round-trip formatting so read(write(ds)) is exact.
Dataset read_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

}  // namespace iflab
