#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rise/common.hpp"
#include "rise/curation.hpp"
#include "rise/policy.hpp"
#include "rise/tasks.hpp"

namespace rise {

struct EmptyDataset : DataError {
  explicit EmptyDataset(const std::string& msg) : DataError(msg) {}
};
struct TokenizationFailure : DataError {
  explicit TokenizationFailure(const std::string& msg) : DataError(msg) {}
};

// Mean negative log-likelihood per token of the trajectory text (terminator
// appended) under the policy conditioned on the prompt.
double sft_loss(const PolicyParams& params, const Prompt& prompt, const Tokenizer& tokenizer,
                const std::string& trajectory_text);

struct SftConfig {
  int epochs = 10;
  double step_size = 0.2;
  int batch_size = 32;
  std::uint64_t shuffle_seed = 1;
};

struct SftResult {
  std::vector<double> epoch_mean_loss;  // evaluated before each epoch's updates
  double final_mean_loss = 0.0;         // after the last epoch
};

// Minibatch gradient descent on the mean per-token NLL. Records carry no
// feature vectors, so prompts are joined from the pool by prompt_id; a record
// whose prompt is missing from the pool is a data error. Example order is
// reshuffled every epoch from shuffle_seed, independent of dataset order on
// disk beyond the records themselves.
SftResult sft_train(PolicyParams& params, std::span<const CurationRecord> records,
                    std::span<const Prompt> pool, const Tokenizer& tokenizer,
                    const SftConfig& config);

}  // namespace rise
