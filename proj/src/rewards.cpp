#include "rise/rewards.hpp"

namespace rise {

double length_penalty(int len, const LengthPolicy& policy) {
  validate_length_policy(policy);
  const int threshold = policy.max_len - policy.buffer;
  if (len <= threshold) return 0.0;
  if (len > policy.max_len) return -1.0;
  return static_cast<double>(threshold - len) / static_cast<double>(policy.buffer);
}

void validate_length_policy(const LengthPolicy& policy) {
  if (policy.buffer <= 0 || policy.buffer >= policy.max_len)
    throw InvalidLengthPolicy("length policy requires 0 < buffer < max_len, got buffer=" +
                              std::to_string(policy.buffer) +
                              " max_len=" + std::to_string(policy.max_len));
}

void validate_weights(const RewardWeights& weights) {
  if (!(weights.w_acc > 0.0))
    throw InvalidWeights("accuracy weight must be positive, got " + std::to_string(weights.w_acc));
}

RewardBreakdown total_reward(const Verdict& verdict, int len, const LengthPolicy& policy,
                             const RewardWeights& weights) {
  validate_weights(weights);
  RewardBreakdown b;
  b.format_component = verdict.format_ok ? 1.0 : 0.0;
  b.accuracy_component = verdict.correct ? 1.0 : 0.0;
  b.length_component = length_penalty(len, policy);
  b.total = weights.w_fmt * b.format_component + weights.w_acc * b.accuracy_component +
            weights.w_len * b.length_component;
  return b;
}

}  // namespace rise
