#pragma once

#include <cstdint>
#include <vector>

#include "sta/rng.hpp"
#include "sta/tensor.hpp"

namespace sta {

/// Temporally-coherent multivariate Bernoulli chain over which transformation
/// primitives are active. Parameterized directly by the two transition
/// probabilities; the sparse-transition regime requires p_stay_on > p_turn_on.
struct SpikeChainConfig {
  int64_t num_fields = 2;  // K
  double p1 = 0.1;         // initial on-probability
  double p_turn_on = 0.1;  // off -> on
  double p_stay_on = 0.9;  // on -> on
  bool reject_all_zero = true;
  int max_row_retries = 1000;

  void validate() const;
};

/// Laplace speed prior.
struct SlabConfig {
  double mu = 1.0;
  double lambda = 0.3;

  void validate() const;
};

/// Per-sequence transformation codes: binary type y, speed g_tilde, and their
/// product g, each T x K row-major. The product invariant is maintained by
/// construction.
struct SpikeSlabCode {
  int64_t seq_len = 0;     // T
  int64_t num_fields = 0;  // K
  std::vector<double> y;
  std::vector<double> g_tilde;
  std::vector<double> g;

  static SpikeSlabCode from_parts(int64_t T, int64_t K, std::vector<double> y, std::vector<double> g_tilde);

  double y_at(int64_t t, int64_t k) const { return y[static_cast<size_t>(t * num_fields + k)]; }
  double g_tilde_at(int64_t t, int64_t k) const { return g_tilde[static_cast<size_t>(t * num_fields + k)]; }
  double g_at(int64_t t, int64_t k) const { return g[static_cast<size_t>(t * num_fields + k)]; }
};

/// T x K binary matrix sampled from the spike chain. With reject_all_zero,
/// any all-zero row is resampled (conditioned on the previous accepted row);
/// exceeding the retry cap signals a configuration error.
std::vector<double> sample_spike_path(const SpikeChainConfig& cfg, int64_t T, Rng& rng);

/// T x K i.i.d. Laplace(mu, lambda) draws (the chain is independent across
/// time for speeds).
std::vector<double> sample_slab(const SlabConfig& cfg, int64_t T, int64_t K, Rng& rng);

/// Sum over elements of KL[Ber(q) || Ber(p)]; probabilities are clamped to
/// [eps, 1-eps], eps = 1e-7.
Tensor kl_bernoulli(const Tensor& q, const Tensor& p);

/// Sum over elements of KL[Laplace(mu_q, b_q) || Laplace(mu_p, b_p)], closed
/// form; scales must be positive.
Tensor kl_laplace(const Tensor& mu_q, const Tensor& b_q, const Tensor& mu_p, const Tensor& b_p);

/// Relaxed Bernoulli sample y = sigmoid((logits + G1 - G2)/tau), G standard
/// Gumbel. hard rounds the forward value and passes the soft gradient.
Tensor gumbel_sigmoid(const Tensor& logits, double tau, Rng& rng, bool hard = false);

inline constexpr double kProbClampEps = 1e-7;

}  // namespace sta
