#pragma once

#include <functional>

#include "sta/rng.hpp"
#include "sta/tensor.hpp"

namespace sta {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t checked = 0;
  double tol = 0.0;
  bool pass = false;
};

/// Compares the backward gradient of f at x against central finite
/// differences. f must rebuild its computation from x on every call (x's
/// entries are nudged in place and restored). With max_coords > 0 a random
/// subset of coordinates is checked; rng is required in that case.
GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h, double tol, int64_t max_coords = 0, Rng* rng = nullptr);

}  // namespace sta
