#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rise/config.hpp"
#include "rise/curation.hpp"
#include "rise/grpo.hpp"
#include "rise/metrics.hpp"
#include "rise/policy.hpp"
#include "rise/sft.hpp"
#include "rise/tasks.hpp"

namespace rise {

// Stderr logging gated by the RISE_LOG environment variable
// (error | info | debug; default info).
enum class LogLevel { Debug = 0, Info = 1, Error = 2 };
LogLevel log_threshold();
void log_line(LogLevel level, const std::string& message);

// Checkpoint writes go through a temp file and an atomic rename, so a crash
// mid-write never corrupts the previous checkpoint.
void save_checkpoint_atomic(const PolicyParams& params, const std::string& path);

struct EvalBucket {
  int count = 0;
  int pass1 = 0;  // greedy decode judged correct
  int passk = 0;  // greedy or any of k-1 sampled decodes correct
};

struct EvalReport {
  int k = 1;
  EvalBucket overall;
  // keyed by (question type, difficulty tier) names; ordered for stable output
  std::map<std::pair<std::string, std::string>, EvalBucket> by_group;
};

// pass@1 uses the greedy decode; pass@k adds k-1 temperature-1 samples on
// streams (seed, prompt_id + "/eval", draw), so pass@k >= pass@1 always.
EvalReport evaluate(const PolicyParams& params, std::span<const Prompt> pool,
                    const Tokenizer& tokenizer, int k, int max_len, std::uint64_t seed);
std::string format_eval_report(const EvalReport& report);

struct TrainOutput {
  std::string checkpoint_path;  // <checkpoint_dir>/policy_final.ckpt
  std::vector<MetricRow> metrics;
};

// RL loop: sample groups (with online filtering and dynamic refill), verify,
// reward, update; one metrics row per step; periodic greedy evaluation and a
// checkpoint at run.eval_every. init_checkpoint "" starts from zero weights.
TrainOutput rl_train(const RunConfig& config, const std::string& init_checkpoint);

// Curates a dataset from the checkpointed policy and writes it to out_path;
// returns the summary (also logged).
CurationSummary curate_command(const RunConfig& config, const std::string& checkpoint_path,
                               const std::string& out_path);

// Fine-tunes the checkpointed policy on a curated dataset; writes the updated
// checkpoint to out_path and returns the per-epoch loss trace.
SftResult sft_command(const RunConfig& config, const std::string& checkpoint_path,
                      const std::string& dataset_path, const std::string& out_path);

EvalReport eval_command(const RunConfig& config, const std::string& checkpoint_path,
                        const std::string& pool_path, int k);

// K-shot rollouts for every pool prompt; one line per prompt with its pass
// rate and per-draw correctness flags.
void rollout_command(const RunConfig& config, const std::string& checkpoint_path,
                     std::ostream& out);

void plot_command(const std::string& metrics_path, const std::string& out_path);

// Prints "format_ok=<b> answer_found=<b> correct=<b>" for the response text
// against the ground truth.
void verify_command(const std::string& text_path, const std::string& ground_truth,
                    std::ostream& out);

void gen_pool_command(int size, OperandRange range, const TypeMix& mix, std::uint64_t seed,
                      const std::string& out_path);

}  // namespace rise
