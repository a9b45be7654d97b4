#pragma once

#include <stdexcept>
#include <string>

#include "rise/verifier.hpp"

namespace rise {

struct InvalidWeights : std::invalid_argument {
  explicit InvalidWeights(const std::string& msg) : std::invalid_argument(msg) {}
};

struct InvalidLengthPolicy : std::invalid_argument {
  explicit InvalidLengthPolicy(const std::string& msg) : std::invalid_argument(msg) {}
};

// Length budget for the soft overlong penalty: free below max_len - buffer,
// linear inside the buffer interval, -1 beyond max_len.
struct LengthPolicy {
  int max_len = 256;
  int buffer = 64;  // 0 < buffer < max_len
};

struct RewardWeights {
  double w_fmt = 0.1;
  double w_acc = 1.0;  // must stay > 0 so correctness dominates the signal
  double w_len = 1.0;
};

struct RewardBreakdown {
  double format_component = 0.0;    // 1 if the response parses, else 0
  double accuracy_component = 0.0;  // 1 if the boxed answer matches, else 0
  double length_component = 0.0;    // soft overlong penalty in [-1, 0]
  double total = 0.0;               // w_fmt*fmt + w_acc*acc + w_len*len
};

// Piecewise-linear overlong penalty:
//   0                                  for len <= max_len - buffer
//   ((max_len - buffer) - len)/buffer  for max_len - buffer < len <= max_len
//   -1                                 for len > max_len
double length_penalty(int len, const LengthPolicy& policy);

void validate_length_policy(const LengthPolicy& policy);
void validate_weights(const RewardWeights& weights);

// Combines the verdict-derived components with the length penalty. Throws
// InvalidWeights when w_acc <= 0 and InvalidLengthPolicy on a bad budget.
RewardBreakdown total_reward(const Verdict& verdict, int len, const LengthPolicy& policy,
                             const RewardWeights& weights);

}  // namespace rise
