#include "rise/grpo.hpp"

#include <algorithm>
#include <cmath>

namespace rise {

namespace {
constexpr double kStdGuard = 1e-8;
}

void validate_clip_config(const ClipConfig& cfg) {
  if (!(cfg.eps_low > 0.0) || !std::isfinite(cfg.eps_low) || !(cfg.eps_high > 0.0) ||
      !std::isfinite(cfg.eps_high))
    throw std::invalid_argument("clip ranges must be positive and finite");
  if (cfg.kl_beta < 0.0 || !std::isfinite(cfg.kl_beta))
    throw std::invalid_argument("kl_beta must be non-negative and finite");
}

AdvantageResult compute_advantages(std::span<const double> rewards) {
  AdvantageResult out;
  const std::size_t n = rewards.size();
  if (n == 0) return out;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double std_dev = std::sqrt(var);
  out.degenerate = std_dev <= kStdGuard;
  const double denom = std::max(std_dev, kStdGuard);
  out.advantages.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.advantages[i] = out.degenerate ? 0.0 : (rewards[i] - mean) / denom;
  return out;
}

TokenTensor importance_ratios(const TokenTensor& logp_new, const TokenTensor& logp_old) {
  if (logp_new.size() != logp_old.size())
    throw ShapeMismatch("ratio inputs have " + std::to_string(logp_new.size()) + " vs " +
                        std::to_string(logp_old.size()) + " trajectories");
  TokenTensor ratios(logp_new.size());
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    if (logp_new[i].size() != logp_old[i].size())
      throw ShapeMismatch("trajectory " + std::to_string(i) + " has mismatched token counts: " +
                          std::to_string(logp_new[i].size()) + " vs " +
                          std::to_string(logp_old[i].size()));
    ratios[i].resize(logp_new[i].size());
    for (std::size_t t = 0; t < logp_new[i].size(); ++t)
      ratios[i][t] = std::exp(logp_new[i][t] - logp_old[i][t]);
  }
  return ratios;
}

namespace {

// k3 estimator of KL(pi_theta || pi_ref) from per-token log-probs; always
// non-negative.
double kl_term(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::exp(d) - d - 1.0;
}

std::size_t total_tokens(const TokenTensor& t) {
  std::size_t n = 0;
  for (const auto& row : t) n += row.size();
  return n;
}

void check_ref_shape(const PolicyParams& params, const PolicyParams* ref) {
  if (ref == nullptr) return;
  if (ref->vocab_size != params.vocab_size || ref->feature_dim != params.feature_dim ||
      ref->context_order != params.context_order)
    throw ShapeMismatch("reference policy dimensions do not match the current policy");
}

}  // namespace

double clipped_objective(const TokenTensor& ratios, std::span<const double> advantages,
                         const ClipConfig& cfg, const TokenTensor* logp_new,
                         const TokenTensor* logp_ref) {
  validate_clip_config(cfg);
  if (ratios.size() != advantages.size())
    throw ShapeMismatch("ratio tensor has " + std::to_string(ratios.size()) +
                        " trajectories but " + std::to_string(advantages.size()) + " advantages");
  const bool want_kl = cfg.kl_beta > 0.0;
  if (want_kl && (logp_new == nullptr || logp_ref == nullptr))
    throw MissingReference("kl_beta > 0 requires current and reference log-probabilities");
  if (want_kl) {
    if (logp_new->size() != ratios.size() || logp_ref->size() != ratios.size())
      throw ShapeMismatch("reference log-prob tensors do not match the ratio tensor");
    for (std::size_t i = 0; i < ratios.size(); ++i)
      if ((*logp_new)[i].size() != ratios[i].size() || (*logp_ref)[i].size() != ratios[i].size())
        throw ShapeMismatch("reference log-prob row " + std::to_string(i) + " shape mismatch");
  }

  const std::size_t n_tokens = total_tokens(ratios);
  if (n_tokens == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double a = advantages[i];
    for (std::size_t t = 0; t < ratios[i].size(); ++t) {
      const double r = ratios[i][t];
      const double clipped = std::clamp(r, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
      acc += std::min(r * a, clipped * a);
      if (want_kl) acc -= cfg.kl_beta * kl_term((*logp_new)[i][t], (*logp_ref)[i][t]);
    }
  }
  return acc / static_cast<double>(n_tokens);
}

std::vector<double> objective_gradient(const RolloutGroup& group, const PolicyParams& params,
                                       const Tokenizer& tokenizer, const ClipConfig& cfg,
                                       const PolicyParams* ref_params) {
  validate_clip_config(cfg);
  const bool want_kl = cfg.kl_beta > 0.0;
  if (want_kl && ref_params == nullptr)
    throw MissingReference("kl_beta > 0 requires reference parameters");
  if (want_kl) check_ref_shape(params, ref_params);
  if (group.trajectories.size() != group.advantages.size())
    throw ShapeMismatch("group has " + std::to_string(group.trajectories.size()) +
                        " trajectories but " + std::to_string(group.advantages.size()) +
                        " advantages");

  std::vector<double> grad(params.weights.size(), 0.0);
  std::size_t n_tokens = 0;
  for (const Trajectory& traj : group.trajectories) n_tokens += traj.tokens.size();
  if (n_tokens == 0) return grad;
  const double inv_n = 1.0 / static_cast<double>(n_tokens);

  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    const Trajectory& traj = group.trajectories[i];
    const double a = group.advantages[i];
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
      const std::span<const int> context(traj.tokens.data(), t);
      const int token = traj.tokens[t];
      const std::vector<double> lp =
          token_logprobs(params, group.prompt, context, tokenizer);
      const double logp_new = lp[static_cast<std::size_t>(token)];
      const double r = std::exp(logp_new - traj.logp_behavior[t]);
      const double clipped = std::clamp(r, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);

      // d min(r*A, clip(r)*A) / d theta: the unclipped branch carries
      // A * r * dlogp; ties resolve to the unclipped branch, the clipped
      // branch is constant in theta.
      double coeff = 0.0;
      if (r * a <= clipped * a) coeff += a * r;
      if (want_kl) {
        const std::vector<double> lp_ref =
            token_logprobs(*ref_params, group.prompt, context, tokenizer);
        const double d = lp_ref[static_cast<std::size_t>(token)] - logp_new;
        // d/dtheta of -beta*(exp(d) - d - 1) with d = ref - new:
        // beta * (exp(d) - 1) * dlogp_new
        coeff += cfg.kl_beta * (std::exp(d) - 1.0);
      }
      if (coeff != 0.0)
        accumulate_grad_logprob(params, group.prompt, context, tokenizer, token, coeff * inv_n,
                                grad);
    }
  }
  return grad;
}

std::vector<RolloutGroup> filter_groups(std::vector<RolloutGroup> groups) {
  std::vector<RolloutGroup> kept;
  kept.reserve(groups.size());
  for (auto& g : groups) {
    const int n = static_cast<int>(g.trajectories.size());
    if (g.correct_count > 0 && g.correct_count < n) kept.push_back(std::move(g));
  }
  return kept;
}

StepStats grpo_step(std::span<const RolloutGroup> batch, PolicyParams& params,
                    const Tokenizer& tokenizer, const ClipConfig& cfg, double step_size,
                    const PolicyParams* ref_params) {
  validate_clip_config(cfg);
  if (batch.empty()) throw EmptyBatch("grpo_step called with an empty batch");
  const bool want_kl = cfg.kl_beta > 0.0;
  if (want_kl && ref_params == nullptr)
    throw MissingReference("kl_beta > 0 requires reference parameters");
  if (want_kl) check_ref_shape(params, ref_params);

  // One fused pass per token: objective terms, clip bookkeeping, and the
  // gradient all come from the same log-prob evaluation. Matches
  // clipped_objective / objective_gradient exactly (unit-tested equivalence).
  StepStats stats;
  std::vector<double> grad(params.weights.size(), 0.0);
  std::size_t n_traj = 0, clipped_tokens = 0, token_count = 0;
  const double inv_groups = 1.0 / static_cast<double>(batch.size());

  for (const RolloutGroup& group : batch) {
    if (group.trajectories.size() != group.advantages.size())
      throw ShapeMismatch("group has " + std::to_string(group.trajectories.size()) +
                          " trajectories but " + std::to_string(group.advantages.size()) +
                          " advantages");
    std::size_t n_tokens = 0;
    for (const Trajectory& traj : group.trajectories) n_tokens += traj.tokens.size();
    for (const Trajectory& traj : group.trajectories) {
      stats.mean_accuracy_reward += traj.reward.accuracy_component;
      stats.mean_response_length += static_cast<double>(traj.tokens.size());
      ++n_traj;
    }
    if (n_tokens == 0) continue;
    const double inv_tokens = 1.0 / static_cast<double>(n_tokens);

    double group_obj = 0.0;
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      const double a = group.advantages[i];
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const std::span<const int> context(traj.tokens.data(), t);
        const int token = traj.tokens[t];
        const detail::SparseFeatures x =
            detail::sparse_features(group.prompt, context, tokenizer, params.context_order);
        const std::vector<double> lp = detail::logprobs_sparse(params, x);
        const double logp_new = lp[static_cast<std::size_t>(token)];
        const double r = std::exp(logp_new - traj.logp_behavior[t]);
        const double clipped = std::clamp(r, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);

        group_obj += std::min(r * a, clipped * a);
        if (r * a > clipped * a) ++clipped_tokens;
        ++token_count;

        double coeff = 0.0;
        if (r * a <= clipped * a) coeff += a * r;
        if (want_kl) {
          const std::vector<double> lp_ref = detail::logprobs_sparse(*ref_params, x);
          const double d = lp_ref[static_cast<std::size_t>(token)] - logp_new;
          group_obj -= cfg.kl_beta * kl_term(logp_new, lp_ref[static_cast<std::size_t>(token)]);
          coeff += cfg.kl_beta * (std::exp(d) - 1.0);
        }
        if (coeff != 0.0)
          detail::accumulate_grad_sparse(params, x, lp, token, coeff * inv_tokens * inv_groups,
                                         grad);
      }
    }
    stats.objective += group_obj * inv_tokens;
  }

  for (std::size_t k = 0; k < params.weights.size(); ++k)
    params.weights[k] += step_size * grad[k];

  stats.objective *= inv_groups;
  if (n_traj > 0) {
    stats.mean_accuracy_reward /= static_cast<double>(n_traj);
    stats.mean_response_length /= static_cast<double>(n_traj);
  }
  if (token_count > 0)
    stats.clipped_fraction = static_cast<double>(clipped_tokens) / static_cast<double>(token_count);
  return stats;
}

}  // namespace rise
