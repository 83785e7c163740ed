#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "sta/priors.hpp"
#include "sta/gradcheck.hpp"

using namespace sta;

namespace {

// Adaptive Simpson quadrature, used as the independent oracle for kl_laplace.
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fb,
                   double fm, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1) +
         simpson_rec(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fb, fm, whole, tol, 40);
}

double laplace_pdf(double x, double mu, double b) { return std::exp(-std::fabs(x - mu) / b) / (2.0 * b); }

// KL[Laplace(mq,bq) || Laplace(mp,bp)] by quadrature, splitting at both kinks.
double kl_laplace_quadrature(double mq, double bq, double mp, double bp) {
  auto f = [&](double x) {
    const double q = laplace_pdf(x, mq, bq);
    return q * (std::log(q) - std::log(laplace_pdf(x, mp, bp)));
  };
  const double span = 40.0 * std::max(bq, bp);
  std::vector<double> pts = {mq - span, std::min(mq, mp), std::max(mq, mp), mq + span};
  double total = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    if (pts[i + 1] > pts[i]) total += integrate(f, pts[i], pts[i + 1], 1e-10);
  return total;
}

}  // namespace

TEST_CASE("spike chain config validation") {
  SpikeChainConfig cfg;
  CHECK_NOTHROW(cfg.validate());  // paper defaults: P1=0.1, 0.1/0.9 transitions
  SpikeChainConfig bad = cfg;
  bad.p_turn_on = 0.9;
  bad.p_stay_on = 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.p1 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("near-absorbing chain gives a constant path") {
  SpikeChainConfig cfg;
  cfg.num_fields = 2;
  cfg.p1 = 1.0 - 1e-12;       // y1 pinned on
  cfg.p_stay_on = 1.0 - 1e-12;
  cfg.p_turn_on = 1e-12;
  cfg.reject_all_zero = false;
  Rng rng(3);
  auto path = sample_spike_path(cfg, 64, rng);
  for (double v : path) CHECK(v == 1.0);
}

TEST_CASE("spike transition frequencies match config (Monte-Carlo)") {
  SpikeChainConfig cfg;
  cfg.num_fields = 2;
  cfg.reject_all_zero = false;  // rejection conditions the chain; stats need the raw process
  Rng rng(42);
  const int64_t T = 5001;
  auto path = sample_spike_path(cfg, T, rng);
  int64_t n_on = 0, on_to_off = 0, n_off = 0, off_to_on = 0;
  for (int64_t t = 1; t < T; ++t) {
    for (int64_t k = 0; k < cfg.num_fields; ++k) {
      const bool prev = path[static_cast<size_t>((t - 1) * cfg.num_fields + k)] > 0.5;
      const bool cur = path[static_cast<size_t>(t * cfg.num_fields + k)] > 0.5;
      if (prev) {
        ++n_on;
        if (!cur) ++on_to_off;
      } else {
        ++n_off;
        if (cur) ++off_to_on;
      }
    }
  }
  CHECK(n_on + n_off == 10000);
  const double off_rate = static_cast<double>(on_to_off) / static_cast<double>(n_on);
  const double on_rate = static_cast<double>(off_to_on) / static_cast<double>(n_off);
  const double se_off = std::sqrt(0.1 * 0.9 / static_cast<double>(n_on));
  const double se_on = std::sqrt(0.1 * 0.9 / static_cast<double>(n_off));
  CHECK(std::fabs(off_rate - 0.1) < 3.0 * se_off);   // on->off is 1 - p_stay_on
  CHECK(std::fabs(on_rate - 0.1) < 3.0 * se_on);     // off->on is p_turn_on
}

TEST_CASE("rejection leaves no all-zero rows") {
  SpikeChainConfig cfg;  // defaults, rejection on
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    auto path = sample_spike_path(cfg, 100, rng);
    for (int64_t t = 0; t < 100; ++t) {
      double row_sum = 0;
      for (int64_t k = 0; k < cfg.num_fields; ++k) row_sum += path[static_cast<size_t>(t * cfg.num_fields + k)];
      CHECK(row_sum >= 1.0);
    }
  }
}

TEST_CASE("rejection retry cap signals configuration error") {
  SpikeChainConfig cfg;
  cfg.p1 = 1e-9;
  cfg.p_turn_on = 1e-9;
  cfg.p_stay_on = 2e-9;
  cfg.max_row_retries = 50;
  Rng rng(1);
  CHECK_THROWS_AS(sample_spike_path(cfg, 4, rng), std::runtime_error);
}

TEST_CASE("chain dimensions evolve independently (chi-squared)") {
  SpikeChainConfig cfg;
  cfg.num_fields = 2;
  cfg.reject_all_zero = false;
  Rng rng(2024);
  const int64_t T = 10001;
  auto path = sample_spike_path(cfg, T, rng);
  // within each previous-state bucket, test independence of the two next bits
  double chi2 = 0.0;
  int dof = 0;
  for (int pa = 0; pa < 2; ++pa) {
    for (int pb = 0; pb < 2; ++pb) {
      double n[2][2] = {{0, 0}, {0, 0}};
      for (int64_t t = 1; t < T; ++t) {
        const int qa = path[static_cast<size_t>((t - 1) * 2)] > 0.5;
        const int qb = path[static_cast<size_t>((t - 1) * 2 + 1)] > 0.5;
        if (qa != pa || qb != pb) continue;
        const int ca = path[static_cast<size_t>(t * 2)] > 0.5;
        const int cb = path[static_cast<size_t>(t * 2 + 1)] > 0.5;
        n[ca][cb] += 1.0;
      }
      const double total = n[0][0] + n[0][1] + n[1][0] + n[1][1];
      if (total < 50) continue;
      const double ra = n[1][0] + n[1][1], rb = n[0][1] + n[1][1];
      for (int ca = 0; ca < 2; ++ca) {
        for (int cb = 0; cb < 2; ++cb) {
          const double pa_m = (ca ? ra : total - ra) / total;
          const double pb_m = (cb ? rb : total - rb) / total;
          const double expect = total * pa_m * pb_m;
          if (expect > 1e-9) chi2 += (n[ca][cb] - expect) * (n[ca][cb] - expect) / expect;
        }
      }
      dof += 1;
    }
  }
  // each bucket contributes a 1-dof independence test; alpha = 0.01
  const double thresholds[5] = {0.0, 6.63, 9.21, 11.34, 13.28};
  REQUIRE(dof >= 1);
  CHECK(chi2 < thresholds[dof]);
}

TEST_CASE("slab sampling") {
  SlabConfig cfg;  // mu=1, lambda=0.3 defaults
  Rng rng(5);
  auto s = sample_slab(cfg, 4, 3, rng);
  CHECK(s.size() == 12);
  for (double v : s) CHECK(std::isfinite(v));

  SlabConfig tight;
  tight.lambda = 1e-12;
  auto t = sample_slab(tight, 100, 10, rng);
  for (double v : t) CHECK(std::fabs(v - 1.0) < 1e-9);

  SlabConfig bad;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(sample_slab(bad, 1, 1, rng), std::invalid_argument);
}

TEST_CASE("slab Monte-Carlo statistics: mean and MAD") {
  SlabConfig cfg;
  Rng rng(99);
  const int64_t n = 100000;
  auto s = sample_slab(cfg, n, 1, rng);
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(n);
  double mad = 0.0;
  for (double v : s) mad += std::fabs(v - cfg.mu);
  mad /= static_cast<double>(n);
  const double se_mean = cfg.lambda * std::sqrt(2.0) / std::sqrt(static_cast<double>(n));
  const double se_mad = cfg.lambda / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(mean - cfg.mu) < 3.0 * se_mean);
  CHECK(std::fabs(mad - cfg.lambda) < 3.0 * se_mad);
}

TEST_CASE("kl_bernoulli") {
  Tensor q = Tensor::from_data({3}, {0.2, 0.5, 0.9});
  CHECK(kl_bernoulli(q, q).value() == doctest::Approx(0.0));

  Tensor q1 = Tensor::scalar(0.999999);
  Tensor half = Tensor::scalar(0.5);
  CHECK(kl_bernoulli(q1, half).value() == doctest::Approx(std::log(2.0)).epsilon(1e-4));

  // brute force over the 2-point support
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const double qv = 0.01 + 0.98 * rng.uniform();
    const double pv = 0.01 + 0.98 * rng.uniform();
    const double expect = qv * (std::log(qv) - std::log(pv)) +
                          (1.0 - qv) * (std::log(1.0 - qv) - std::log(1.0 - pv));
    CHECK(kl_bernoulli(Tensor::scalar(qv), Tensor::scalar(pv)).value() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(kl_bernoulli(Tensor::scalar(qv), Tensor::scalar(pv)).value() >= 0.0);
  }

  // clamping keeps endpoints finite
  CHECK(std::isfinite(kl_bernoulli(Tensor::scalar(1.0), Tensor::scalar(0.5)).value()));
  CHECK(std::isfinite(kl_bernoulli(Tensor::scalar(0.0), Tensor::scalar(0.5)).value()));
}

TEST_CASE("kl_laplace closed form matches quadrature") {
  Tensor one = Tensor::scalar(1.0), lam = Tensor::scalar(0.3);
  CHECK(kl_laplace(one, lam, one, lam).value() == doctest::Approx(0.0));

  Rng rng(31);
  for (int rep = 0; rep < 12; ++rep) {
    const double mq = -1.0 + 2.0 * rng.uniform();
    const double bq = 0.2 + 1.5 * rng.uniform();
    const double mp = -1.0 + 2.0 * rng.uniform();
    const double bp = 0.2 + 1.5 * rng.uniform();
    const double closed = kl_laplace(Tensor::scalar(mq), Tensor::scalar(bq), Tensor::scalar(mp),
                                     Tensor::scalar(bp)).value();
    const double quad = kl_laplace_quadrature(mq, bq, mp, bp);
    CHECK(closed == doctest::Approx(quad).epsilon(1e-5));
    CHECK(closed >= 0.0);
  }

  CHECK_THROWS_AS(kl_laplace(one, Tensor::scalar(-0.1), one, lam), std::domain_error);
  CHECK_THROWS_AS(kl_laplace(one, lam, one, Tensor::scalar(0.0)), std::domain_error);
}

TEST_CASE("gumbel_sigmoid saturation and symmetry") {
  for (double tau : {0.1, 0.5, 1.0}) {
    Rng rng(17);
    Tensor y = gumbel_sigmoid(Tensor::full({64}, 20.0), tau, rng);
    for (int64_t i = 0; i < 64; ++i) CHECK(y.item(i) > 0.999);
  }

  Rng rng(55);
  const int64_t n = 10000;
  Tensor y = gumbel_sigmoid(Tensor::zeros({n}), 0.1, rng);
  int64_t above = 0;
  for (int64_t i = 0; i < n; ++i) above += y.item(i) > 0.5;
  const double frac = static_cast<double>(above) / static_cast<double>(n);
  CHECK(std::fabs(frac - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<double>(n)));
}

TEST_CASE("gumbel_sigmoid gradient under fixed noise") {
  Tensor logits = Tensor::leaf({6}, {0.2, -0.4, 1.0, -1.5, 0.0, 0.7});
  auto f = [](const Tensor& t) {
    Rng rng(777);  // same noise each evaluation
    return sum(gumbel_sigmoid(t, 0.5, rng));
  };
  auto rep = finite_diff_check(f, logits, 1e-5, 1e-5);
  CHECK(rep.pass);
}

TEST_CASE("gumbel_sigmoid hard mode is straight-through") {
  Tensor logits = Tensor::leaf({5}, {0.3, -0.8, 2.0, -0.1, 0.5});
  Rng rng1(123), rng2(123);
  Tensor hard = gumbel_sigmoid(logits, 0.5, rng1, true);
  Tensor soft = gumbel_sigmoid(logits, 0.5, rng2, false);
  for (int64_t i = 0; i < 5; ++i) {
    CHECK((hard.item(i) == 0.0 || hard.item(i) == 1.0));
    CHECK(hard.item(i) == (soft.item(i) > 0.5 ? 1.0 : 0.0));
  }
  Tensor gh = grad(sum(hard), {logits})[0];
  Tensor gs = grad(sum(soft), {logits})[0];
  for (int64_t i = 0; i < 5; ++i) CHECK(gh.item(i) == doctest::Approx(gs.item(i)).epsilon(1e-12));
}

TEST_CASE("gumbel_sigmoid converges to Bernoulli as tau -> 0") {
  const double logit = 0.7;
  const double target = 1.0 / (1.0 + std::exp(-logit));
  Rng rng(2718);
  const int64_t n = 10000;
  Tensor y = gumbel_sigmoid(Tensor::full({n}, logit), 0.05, rng);
  double p1 = 0.0;
  for (int64_t i = 0; i < n; ++i) p1 += y.item(i) > 0.5 ? 1.0 : 0.0;
  p1 /= static_cast<double>(n);
  CHECK(std::fabs(p1 - target) < 0.02);  // empirical total variation on {0,1}
}

TEST_CASE("SpikeSlabCode maintains g = y * g_tilde") {
  SpikeChainConfig scfg;
  SlabConfig lcfg;
  Rng rng(4);
  auto y = sample_spike_path(scfg, 6, rng);
  auto gt = sample_slab(lcfg, 6, scfg.num_fields, rng);
  auto code = SpikeSlabCode::from_parts(6, scfg.num_fields, y, gt);
  for (int64_t t = 0; t < 6; ++t)
    for (int64_t k = 0; k < scfg.num_fields; ++k)
      CHECK(code.g_at(t, k) == code.y_at(t, k) * code.g_tilde_at(t, k));
  CHECK_THROWS_AS(SpikeSlabCode::from_parts(3, 2, y, gt), std::invalid_argument);
}
