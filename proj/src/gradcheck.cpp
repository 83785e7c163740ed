#include "sta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sta {

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h, double tol, int64_t max_coords, Rng* rng) {
  if (!x.is_leaf()) throw std::invalid_argument("finite_diff_check: x must be a leaf tensor");
  Tensor out = f(x);
  if (out.numel() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
  Tensor analytic = grad(out, {x})[0];

  const int64_t n = x.numel();
  std::vector<int64_t> coords;
  if (max_coords > 0 && max_coords < n) {
    if (rng == nullptr) throw std::invalid_argument("finite_diff_check: rng required for coordinate subsampling");
    std::vector<int64_t> all(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < max_coords; ++i) {
      const int64_t j = i + rng->uniform_int(n - i);
      std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
    }
    coords.assign(all.begin(), all.begin() + max_coords);
  } else {
    coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
  }

  GradCheckReport report;
  report.tol = tol;
  auto& xd = const_cast<Tensor&>(x).mutable_data();
  for (int64_t i : coords) {
    const double orig = xd[static_cast<size_t>(i)];
    double fp, fm;
    {
      NoGradGuard ng;
      xd[static_cast<size_t>(i)] = orig + h;
      fp = f(x).value();
      xd[static_cast<size_t>(i)] = orig - h;
      fm = f(x).value();
      xd[static_cast<size_t>(i)] = orig;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double an = analytic.item(i);
    const double scale = std::max({std::fabs(numeric), std::fabs(an), 1e-10});
    const double rel = std::fabs(numeric - an) / scale;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coord = i;
      report.worst_analytic = an;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace sta
