#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rise/common.hpp"
#include "rise/rewards.hpp"
#include "rise/tasks.hpp"
#include "rise/verifier.hpp"

namespace rise {

struct ShapeMismatch : std::invalid_argument {
  explicit ShapeMismatch(const std::string& msg) : std::invalid_argument(msg) {}
};

// Linear-softmax policy over a fixed vocabulary. Logits are W * x where x is
// the feature vector for (prompt, context); every probability and gradient
// below is analytically exact, which is what the finite-difference tests pin.
struct PolicyParams {
  int vocab_size = 0;
  int feature_dim = 0;    // m*vocab_size + prompt_feature_dim + 1
  int context_order = 2;  // m: how many trailing tokens condition the policy
  std::vector<double> weights;  // row-major [vocab_size][feature_dim]

  static PolicyParams zeros(int vocab_size, int prompt_feature_dim, int context_order);

  double& at(int v, int f) {
    return weights[static_cast<std::size_t>(v) * static_cast<std::size_t>(feature_dim) +
                   static_cast<std::size_t>(f)];
  }
  double at(int v, int f) const {
    return weights[static_cast<std::size_t>(v) * static_cast<std::size_t>(feature_dim) +
                   static_cast<std::size_t>(f)];
  }
};

// Feature vector for one emission step: m one-hot blocks for the last m
// context tokens (padded on the left with the begin marker), then the
// prompt's feature encoding, then a constant 1 bias. All entries are 0 or 1.
std::vector<double> features(const Prompt& prompt, std::span<const int> context,
                             const Tokenizer& tokenizer, int context_order);

// Log-probabilities over the whole vocabulary at temperature 1.
std::vector<double> token_logprobs(const PolicyParams& params, const Prompt& prompt,
                                   std::span<const int> context, const Tokenizer& tokenizer);

// d log pi(token | prompt, context) / d W: (e_token - p) outer x, laid out
// row-major like the weights.
std::vector<double> grad_logprob(const PolicyParams& params, const Prompt& prompt,
                                 std::span<const int> context, const Tokenizer& tokenizer,
                                 int token);

// Accumulates scale * grad_logprob into grad without allocating.
void accumulate_grad_logprob(const PolicyParams& params, const Prompt& prompt,
                             std::span<const int> context, const Tokenizer& tokenizer, int token,
                             double scale, std::span<double> grad);

struct Trajectory {
  std::vector<int> tokens;            // ends at the terminator or at max_len
  std::vector<double> logp_behavior;  // temperature-1 log-probs of each token
  std::string text;                   // detokenize(tokens)
  Verdict verdict;
  RewardBreakdown reward;
};

// Ancestral sampling at the given temperature (> 0). Behavior log-probs are
// recorded at temperature 1 evaluated at the sampling parameters.
Trajectory sample_trajectory(const PolicyParams& params, const Prompt& prompt,
                             const Tokenizer& tokenizer, double temperature, int max_len,
                             Rng& rng);

// Deterministic argmax decoding (the temperature -> 0 limit of sampling).
Trajectory greedy_trajectory(const PolicyParams& params, const Prompt& prompt,
                             const Tokenizer& tokenizer, int max_len);

// Checkpoint format: one text header line "RISEPOLICY v1 <vocab> <features>
// <context_order>\n" followed by the weight matrix as row-major IEEE-754
// doubles in little-endian byte order.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

namespace detail {

// The feature vector is almost entirely zeros (one-hot blocks plus a handful
// of active prompt features), so the hot paths run on index/value pairs.
struct SparseFeatures {
  std::vector<int> idx;
  std::vector<double> val;
};

SparseFeatures sparse_features(const Prompt& prompt, std::span<const int> context,
                               const Tokenizer& tokenizer, int context_order);

std::vector<double> logprobs_sparse(const PolicyParams& params, const SparseFeatures& x);

// grad[v,f] += scale * (1[v==token] - p(v)) * x[f] given precomputed logprobs.
void accumulate_grad_sparse(const PolicyParams& params, const SparseFeatures& x,
                            std::span<const double> logprobs, int token, double scale,
                            std::span<double> grad);

}  // namespace detail

}  // namespace rise
