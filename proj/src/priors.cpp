#include "sta/priors.hpp"

#include <stdexcept>
#include <string>

namespace sta {

void SpikeChainConfig::validate() const {
  if (num_fields <= 0) throw std::invalid_argument("spike chain: num_fields must be positive");
  for (double p : {p1, p_turn_on, p_stay_on})
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("spike chain: probabilities must lie in (0,1)");
  if (!(p_stay_on > p_turn_on))
    throw std::invalid_argument("spike chain: sparse-transition regime requires p_stay_on > p_turn_on");
  if (max_row_retries <= 0) throw std::invalid_argument("spike chain: retry cap must be positive");
}

void SlabConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("slab: lambda must be positive");
}

SpikeSlabCode SpikeSlabCode::from_parts(int64_t T, int64_t K, std::vector<double> y,
                                        std::vector<double> g_tilde) {
  if (static_cast<int64_t>(y.size()) != T * K || static_cast<int64_t>(g_tilde.size()) != T * K)
    throw std::invalid_argument("SpikeSlabCode: component sizes must be T*K");
  SpikeSlabCode c;
  c.seq_len = T;
  c.num_fields = K;
  c.y = std::move(y);
  c.g_tilde = std::move(g_tilde);
  c.g.resize(c.y.size());
  for (size_t i = 0; i < c.g.size(); ++i) c.g[i] = c.y[i] * c.g_tilde[i];
  return c;
}

std::vector<double> sample_spike_path(const SpikeChainConfig& cfg, int64_t T, Rng& rng) {
  cfg.validate();
  if (T < 1) throw std::invalid_argument("sample_spike_path: T must be >= 1");
  const int64_t K = cfg.num_fields;
  std::vector<double> path(static_cast<size_t>(T * K), 0.0);
  std::vector<double> row(static_cast<size_t>(K));
  for (int64_t t = 0; t < T; ++t) {
    const double* prev = t > 0 ? path.data() + (t - 1) * K : nullptr;
    int attempts = 0;
    for (;;) {
      bool any_on = false;
      for (int64_t k = 0; k < K; ++k) {
        const double p = prev == nullptr ? cfg.p1 : (prev[k] > 0.5 ? cfg.p_stay_on : cfg.p_turn_on);
        row[static_cast<size_t>(k)] = rng.bernoulli(p) ? 1.0 : 0.0;
        any_on |= row[static_cast<size_t>(k)] > 0.5;
      }
      if (!cfg.reject_all_zero || any_on) break;
      if (++attempts >= cfg.max_row_retries)
        throw std::runtime_error("sample_spike_path: rejection retry cap hit at t=" + std::to_string(t) +
                                 "; configuration makes all-zero rows too likely");
    }
    std::copy(row.begin(), row.end(), path.begin() + static_cast<size_t>(t * K));
  }
  return path;
}

std::vector<double> sample_slab(const SlabConfig& cfg, int64_t T, int64_t K, Rng& rng) {
  cfg.validate();
  std::vector<double> out(static_cast<size_t>(T * K));
  for (auto& x : out) x = rng.laplace(cfg.mu, cfg.lambda);
  return out;
}

Tensor kl_bernoulli(const Tensor& q, const Tensor& p) {
  Tensor qc = clamp(q, kProbClampEps, 1.0 - kProbClampEps);
  Tensor pc = clamp(p, kProbClampEps, 1.0 - kProbClampEps);
  Tensor one = Tensor::scalar(1.0);
  Tensor t1 = mul(qc, log(div(qc, pc)));
  Tensor t2 = mul(sub(one, qc), log(div(sub(one, qc), sub(one, pc))));
  return sum(add(t1, t2));
}

Tensor kl_laplace(const Tensor& mu_q, const Tensor& b_q, const Tensor& mu_p, const Tensor& b_p) {
  for (double x : b_q.data())
    if (!(x > 0.0)) throw std::domain_error("kl_laplace: non-positive posterior scale");
  for (double x : b_p.data())
    if (!(x > 0.0)) throw std::domain_error("kl_laplace: non-positive prior scale");
  Tensor delta = abs(sub(mu_q, mu_p));
  Tensor ratio = log(div(b_p, b_q));
  Tensor decay = mul(b_q, exp(neg(div(delta, b_q))));
  Tensor kl = sub(add(ratio, div(add(decay, delta), b_p)), Tensor::scalar(1.0));
  return sum(kl);
}

Tensor gumbel_sigmoid(const Tensor& logits, double tau, Rng& rng, bool hard) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_sigmoid: tau must be positive");
  std::vector<double> noise(static_cast<size_t>(logits.numel()));
  for (auto& x : noise) {
    const double g1 = rng.gumbel();
    const double g2 = rng.gumbel();
    x = g1 - g2;
  }
  Tensor n = Tensor::from_data(logits.shape(), std::move(noise));
  Tensor y_soft = sigmoid(div(add(logits, n), Tensor::scalar(tau)));
  if (!hard) return y_soft;
  Tensor y_hard = step(sub(y_soft, Tensor::scalar(0.5)));
  // forward: y_hard, backward: d y_soft (straight-through)
  return add(y_soft, sub(y_hard, y_soft).detach());
}

}  // namespace sta
