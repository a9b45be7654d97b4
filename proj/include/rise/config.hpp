#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rise/curation.hpp"
#include "rise/grpo.hpp"
#include "rise/rewards.hpp"
#include "rise/sft.hpp"

namespace rise {

// Flat key = value run configuration. Unknown and duplicate keys are
// rejected; '#' lines are comments. run.system_prompt values may spell line
// breaks as \n and backslashes as \\.
struct RunConfig {
  std::uint64_t seed = 1;
  int max_steps = 100;
  int eval_every = 0;  // 0 disables periodic held-out evaluation
  std::string pool_path;
  std::string eval_pool_path;  // optional held-out pool for periodic eval
  std::string checkpoint_dir = "checkpoints";
  std::string metrics_path = "metrics.csv";
  std::string system_prompt;  // defaults to kDefaultSystemPrompt

  RewardWeights reward_weights;
  LengthPolicy length_policy;

  ClipConfig clip;
  int group_size = 8;
  double grpo_step_size = 0.5;
  int batch_groups = 8;
  int oversample_cap = 4;

  int context_order = 2;

  int curation_k = 8;
  double curation_temperature = 1.0;
  int curation_retry_budget = 3;
  std::string curation_expert = "oracle";  // "oracle" or "remote"
  std::string curation_expert_url;

  SftConfig sft;
};

RunConfig default_config();

// Parses and validates; source_name only decorates error messages.
RunConfig parse_config(std::string_view text, const std::string& source_name);
RunConfig load_config(const std::string& path);

void validate_config(const RunConfig& config);

// CurationConfig view of the run config (sampling cap shared with the reward
// length budget).
CurationConfig curation_config(const RunConfig& config);

}  // namespace rise
