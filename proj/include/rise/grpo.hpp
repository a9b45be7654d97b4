#pragma once

#include <span>
#include <string>
#include <vector>

#include "rise/policy.hpp"
#include "rise/tasks.hpp"

namespace rise {

struct MissingReference : std::invalid_argument {
  explicit MissingReference(const std::string& msg) : std::invalid_argument(msg) {}
};

struct EmptyBatch : TrainAbort {
  explicit EmptyBatch(const std::string& msg) : TrainAbort(msg) {}
};

// Ragged per-trajectory, per-token values.
using TokenTensor = std::vector<std::vector<double>>;

struct ClipConfig {
  double eps_low = 0.2;    // lower clip range (1 - eps_low)
  double eps_high = 0.28;  // upper clip range (1 + eps_high), decoupled
  double kl_beta = 0.0;    // 0 disables the reference-policy penalty
};

void validate_clip_config(const ClipConfig& cfg);

struct AdvantageResult {
  std::vector<double> advantages;  // (R_i - mean) / max(std, 1e-8)
  bool degenerate = false;         // population std at or below the guard
};

// Group-relative advantages with population standard deviation. A uniform
// group is flagged degenerate and yields all-zero advantages.
AdvantageResult compute_advantages(std::span<const double> rewards);

// Elementwise exp(logp_new - logp_old); shapes must match exactly.
TokenTensor importance_ratios(const TokenTensor& logp_new, const TokenTensor& logp_old);

struct RolloutGroup {
  Prompt prompt;
  std::vector<Trajectory> trajectories;  // size G
  std::vector<double> rewards;           // total reward per trajectory
  std::vector<double> advantages;        // constant across tokens in a trajectory
  bool degenerate = false;
  int correct_count = 0;
};

// Token-normalized clipped surrogate:
//   (1/sum_i |tau_i|) * sum_i sum_t min(r*A, clip(r, 1-eps_low, 1+eps_high)*A)
// With kl_beta > 0 a per-token reference penalty
//   kl_beta * (exp(ref-new) - (ref-new) - 1)
// is subtracted inside the sum; logp_new and logp_ref are then required.
double clipped_objective(const TokenTensor& ratios, std::span<const double> advantages,
                         const ClipConfig& cfg, const TokenTensor* logp_new = nullptr,
                         const TokenTensor* logp_ref = nullptr);

// Exact gradient of clipped_objective for one rollout group with respect to
// the policy weights. Tokens on the inactive (clipped) min branch contribute
// zero. When kl_beta > 0, ref_params must be provided.
std::vector<double> objective_gradient(const RolloutGroup& group, const PolicyParams& params,
                                       const Tokenizer& tokenizer, const ClipConfig& cfg,
                                       const PolicyParams* ref_params = nullptr);

// Online data filter: keeps groups with 0 < correct_count < G, preserving
// order. Uniform groups carry no group-relative signal.
std::vector<RolloutGroup> filter_groups(std::vector<RolloutGroup> groups);

struct StepStats {
  double mean_accuracy_reward = 0.0;   // over the batch's trajectories
  double mean_response_length = 0.0;   // tokens, terminator included
  double objective = 0.0;              // mean of per-group objectives
  double clipped_fraction = 0.0;       // tokens on the clipped branch
};

// One gradient-ascent update: params += step_size * mean-over-groups gradient.
// The batch must already be filtered and non-empty.
StepStats grpo_step(std::span<const RolloutGroup> batch, PolicyParams& params,
                    const Tokenizer& tokenizer, const ClipConfig& cfg, double step_size,
                    const PolicyParams* ref_params = nullptr);

}  // namespace rise
