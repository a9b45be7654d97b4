#include "rise/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "rise/verifier.hpp"

namespace rise {

namespace {

LogLevel parse_threshold() {
  const char* env = std::getenv("RISE_LOG");
  if (env == nullptr) return LogLevel::Info;
  const std::string value(env);
  if (value == "debug") return LogLevel::Debug;
  if (value == "error") return LogLevel::Error;
  return LogLevel::Info;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Error: return "error";
  }
  return "info";
}

}  // namespace

LogLevel log_threshold() {
  static const LogLevel threshold = parse_threshold();
  return threshold;
}

void log_line(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) < static_cast<int>(log_threshold())) return;
  std::cerr << "[rise " << level_name(level) << "] " << message << '\n';
}

void save_checkpoint_atomic(const PolicyParams& params, const std::string& path) {
  const std::string tmp = path + ".tmp";
  save_checkpoint(params, tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

namespace {

std::vector<Prompt> load_pool_checked(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required but empty");
  std::vector<Prompt> pool = read_pool(path);
  if (pool.empty()) throw DataError(what + " has no prompts: " + path);
  return pool;
}

void check_policy_shape(const PolicyParams& params, const Tokenizer& tokenizer,
                        std::size_t prompt_feature_dim, const std::string& what) {
  if (params.vocab_size != tokenizer.size()) {
    throw DataError(what + ": checkpoint vocabulary size " + std::to_string(params.vocab_size) +
                    " does not match the tokenizer's " + std::to_string(tokenizer.size()));
  }
  const int expected = params.context_order * params.vocab_size +
                       static_cast<int>(prompt_feature_dim) + 1;
  if (params.feature_dim != expected) {
    throw DataError(what + ": checkpoint feature dimension " +
                    std::to_string(params.feature_dim) + " does not match the pool's prompts (" +
                    std::to_string(expected) + " expected)");
  }
}

std::string step_checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "policy_step_%06d.ckpt", step);
  return buf;
}

const char* b2s(bool b) { return b ? "true" : "false"; }

std::unique_ptr<ExpertProvider> make_expert(const RunConfig& config, const Tokenizer& tokenizer) {
  if (config.curation_expert == "remote") {
    return std::make_unique<RemoteExpert>(config.curation_expert_url, config.system_prompt);
  }
  return std::make_unique<OracleExpert>(tokenizer);
}

}  // namespace

EvalReport evaluate(const PolicyParams& params, std::span<const Prompt> pool,
                    const Tokenizer& tokenizer, int k, int max_len, std::uint64_t seed) {
  if (k < 1) throw ConfigError("evaluation needs k >= 1");
  EvalReport report;
  report.k = k;
  for (const Prompt& prompt : pool) {
    const Trajectory greedy = greedy_trajectory(params, prompt, tokenizer, max_len);
    const bool correct1 = verify(greedy.text, prompt.ground_truth).correct;
    bool best = correct1;
    for (int draw = 1; draw < k && !best; ++draw) {
      Rng rng = stream_rng(seed, prompt.prompt_id + "/eval", static_cast<std::uint64_t>(draw));
      Trajectory t = sample_trajectory(params, prompt, tokenizer, 1.0, max_len, rng);
      best = verify(t.text, prompt.ground_truth).correct;
    }
    EvalBucket& bucket =
        report.by_group[{to_string(prompt.question_type), to_string(prompt.difficulty_tier)}];
    for (EvalBucket* b : {&bucket, &report.overall}) {
      b->count += 1;
      b->pass1 += correct1 ? 1 : 0;
      b->passk += best ? 1 : 0;
    }
  }
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[64];
  const auto rate = [&](int num, int den) {
    std::snprintf(buf, sizeof buf, "%.4f", den == 0 ? 0.0 : static_cast<double>(num) / den);
    return std::string(buf);
  };
  out << "overall: n=" << report.overall.count << " pass@1=" << rate(report.overall.pass1, report.overall.count)
      << " pass@" << report.k << "=" << rate(report.overall.passk, report.overall.count) << '\n';
  for (const auto& [key, bucket] : report.by_group) {
    out << key.first << '/' << key.second << ": n=" << bucket.count
        << " pass@1=" << rate(bucket.pass1, bucket.count) << " pass@" << report.k << "="
        << rate(bucket.passk, bucket.count) << '\n';
  }
  return out.str();
}

TrainOutput rl_train(const RunConfig& config, const std::string& init_checkpoint) {
  const Tokenizer tokenizer;
  std::vector<Prompt> pool = load_pool_checked(config.pool_path, "run.pool_path");
  const std::size_t feature_dim = pool.front().prompt_features.size();

  PolicyParams params =
      init_checkpoint.empty()
          ? PolicyParams::zeros(tokenizer.size(), static_cast<int>(feature_dim),
                                config.context_order)
          : load_checkpoint(init_checkpoint);
  check_policy_shape(params, tokenizer, feature_dim, "rl_train");

  std::unique_ptr<PolicyParams> ref;
  if (config.clip.kl_beta > 0.0) ref = std::make_unique<PolicyParams>(params);

  std::vector<Prompt> eval_pool;
  if (!config.eval_pool_path.empty()) {
    eval_pool = load_pool_checked(config.eval_pool_path, "run.eval_pool_path");
  }

  if (config.checkpoint_dir.empty()) throw ConfigError("run.checkpoint_dir is required");
  std::filesystem::create_directories(config.checkpoint_dir);

  TrainOutput output;
  MetricsWriter metrics(config.metrics_path);
  std::vector<std::uint64_t> attempts(pool.size(), 0);
  const int group_size = config.group_size;
  const int max_len = config.length_policy.max_len;
  const std::size_t target = static_cast<std::size_t>(config.batch_groups);
  const std::size_t sample_cap =
      target * static_cast<std::size_t>(config.oversample_cap);

  for (int step = 1; step <= config.max_steps; ++step) {
    Rng select = stream_rng(config.seed, "prompt_select", static_cast<std::uint64_t>(step));
    std::vector<RolloutGroup> retained;
    retained.reserve(target);
    std::size_t sampled = 0;
    int filtered = 0;
    double acc_sum = 0.0;
    double len_sum = 0.0;
    std::size_t traj_count = 0;

    while (retained.size() < target && sampled < sample_cap) {
      const std::size_t idx = select.next_index(pool.size());
      const Prompt& prompt = pool[idx];
      RolloutGroup group;
      group.prompt = prompt;
      group.trajectories.reserve(static_cast<std::size_t>(group_size));
      group.rewards.reserve(static_cast<std::size_t>(group_size));
      for (int g = 0; g < group_size; ++g) {
        Rng rng = stream_rng(config.seed, prompt.prompt_id, attempts[idx]++);
        Trajectory t = sample_trajectory(params, prompt, tokenizer, 1.0, max_len, rng);
        t.verdict = verify(t.text, prompt.ground_truth);
        t.reward = total_reward(t.verdict, static_cast<int>(t.tokens.size()),
                                config.length_policy, config.reward_weights);
        if (t.verdict.correct) ++group.correct_count;
        acc_sum += t.reward.accuracy_component;
        len_sum += static_cast<double>(t.tokens.size());
        ++traj_count;
        group.rewards.push_back(t.reward.total);
        group.trajectories.push_back(std::move(t));
      }
      AdvantageResult adv = compute_advantages(group.rewards);
      group.advantages = std::move(adv.advantages);
      group.degenerate = adv.degenerate;
      ++sampled;
      if (group.correct_count > 0 && group.correct_count < group_size) {
        retained.push_back(std::move(group));
      } else {
        ++filtered;
      }
    }

    if (retained.empty()) {
      throw EmptyBatch("step " + std::to_string(step) + ": every group was uniformly correct or"
                       " uniformly incorrect after sampling " + std::to_string(sampled) +
                       " groups (oversample cap " + std::to_string(sample_cap) + ")");
    }

    const StepStats stats = grpo_step(retained, params, tokenizer, config.clip,
                                      config.grpo_step_size, ref.get());

    MetricRow row;
    row.step = step;
    row.mean_accuracy_reward = acc_sum / static_cast<double>(traj_count);
    row.mean_response_length = len_sum / static_cast<double>(traj_count);
    row.objective = stats.objective;
    row.clipped_fraction = stats.clipped_fraction;
    row.groups_filtered = filtered;
    metrics.append(row);
    output.metrics.push_back(row);
    log_line(LogLevel::Debug, "step " + std::to_string(step) + " acc=" +
                                  format_real(row.mean_accuracy_reward) + " len=" +
                                  format_real(row.mean_response_length) + " filtered=" +
                                  std::to_string(filtered));

    if (config.eval_every > 0 && step % config.eval_every == 0) {
      if (!eval_pool.empty()) {
        const EvalReport report = evaluate(params, eval_pool, tokenizer, 1, max_len, config.seed);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f",
                      report.overall.count == 0
                          ? 0.0
                          : static_cast<double>(report.overall.pass1) / report.overall.count);
        log_line(LogLevel::Info,
                 "step " + std::to_string(step) + " held-out pass@1=" + std::string(buf));
      }
      save_checkpoint_atomic(params, (std::filesystem::path(config.checkpoint_dir) /
                                      step_checkpoint_name(step)).string());
    }
  }

  output.checkpoint_path =
      (std::filesystem::path(config.checkpoint_dir) / "policy_final.ckpt").string();
  save_checkpoint_atomic(params, output.checkpoint_path);
  log_line(LogLevel::Info, "wrote " + output.checkpoint_path + " after " +
                               std::to_string(config.max_steps) + " steps");
  return output;
}

CurationSummary curate_command(const RunConfig& config, const std::string& checkpoint_path,
                               const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("curate needs an output path");
  const Tokenizer tokenizer;
  std::vector<Prompt> pool = load_pool_checked(config.pool_path, "run.pool_path");
  PolicyParams params = load_checkpoint(checkpoint_path);
  check_policy_shape(params, tokenizer, pool.front().prompt_features.size(), "curate");

  std::unique_ptr<ExpertProvider> expert = make_expert(config, tokenizer);
  auto [records, summary] =
      curate_records(params, pool, tokenizer, *expert, curation_config(config));

  const std::string tmp = out_path + ".tmp";
  write_sft_dataset(tmp, records);
  std::error_code ec;
  std::filesystem::rename(tmp, out_path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + out_path + ": " + ec.message());
  log_line(LogLevel::Info, "curated " + std::to_string(summary.final_records) + " records -> " +
                               out_path + "\n" + format_summary(summary));
  return summary;
}

SftResult sft_command(const RunConfig& config, const std::string& checkpoint_path,
                      const std::string& dataset_path, const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("sft-train needs an output checkpoint path");
  const Tokenizer tokenizer;
  std::vector<Prompt> pool = load_pool_checked(config.pool_path, "run.pool_path");
  PolicyParams params = load_checkpoint(checkpoint_path);
  check_policy_shape(params, tokenizer, pool.front().prompt_features.size(), "sft-train");

  std::vector<CurationRecord> records = read_sft_dataset(dataset_path);
  if (records.empty()) {
    throw EmptyDataset("dataset " + dataset_path + " has no records; nothing to fine-tune");
  }
  SftResult result = sft_train(params, records, pool, tokenizer, config.sft);
  save_checkpoint_atomic(params, out_path);
  std::ostringstream losses;
  for (std::size_t i = 0; i < result.epoch_mean_loss.size(); ++i) {
    if (i) losses << ' ';
    losses << format_real(result.epoch_mean_loss[i]);
  }
  log_line(LogLevel::Info, "sft epochs=" + std::to_string(config.sft.epochs) + " loss trace: " +
                               losses.str() + " final=" + format_real(result.final_mean_loss));
  return result;
}

EvalReport eval_command(const RunConfig& config, const std::string& checkpoint_path,
                        const std::string& pool_path, int k) {
  const Tokenizer tokenizer;
  std::vector<Prompt> pool = load_pool_checked(pool_path, "evaluation pool");
  PolicyParams params = load_checkpoint(checkpoint_path);
  check_policy_shape(params, tokenizer, pool.front().prompt_features.size(), "eval");
  return evaluate(params, pool, tokenizer, k, config.length_policy.max_len, config.seed);
}

void rollout_command(const RunConfig& config, const std::string& checkpoint_path,
                     std::ostream& out) {
  const Tokenizer tokenizer;
  std::vector<Prompt> pool = load_pool_checked(config.pool_path, "run.pool_path");
  PolicyParams params = load_checkpoint(checkpoint_path);
  check_policy_shape(params, tokenizer, pool.front().prompt_features.size(), "rollout");

  const CurationConfig cc = curation_config(config);
  const std::vector<KShotSample> shots =
      k_shot_sample(params, pool, tokenizer, cc.k, cc.temperature, cc.max_len, cc.seed);
  char rate[32];
  double total = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::snprintf(rate, sizeof rate, "%.6f", shots[i].pass_rate);
    out << pool[i].prompt_id << '\t' << rate << '\t';
    for (const Trajectory& t : shots[i].trajectories) out << (t.verdict.correct ? '1' : '0');
    out << '\n';
    total += shots[i].pass_rate;
  }
  std::snprintf(rate, sizeof rate, "%.6f", pool.empty() ? 0.0 : total / pool.size());
  out << "mean_pass_rate\t" << rate << '\n';
}

void plot_command(const std::string& metrics_path, const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("plot needs an output path");
  const std::vector<MetricRow> rows = read_metrics(metrics_path);
  write_text_atomic(out_path, render_chart(rows));
  log_line(LogLevel::Info, "wrote " + out_path + " (" + std::to_string(rows.size()) + " rows)");
}

void verify_command(const std::string& text_path, const std::string& ground_truth,
                    std::ostream& out) {
  std::ifstream in(text_path, std::ios::binary);
  if (!in) throw DataError("cannot open response file: " + text_path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const Verdict verdict = verify(buffer.str(), ground_truth);
  out << "format_ok=" << b2s(verdict.format_ok) << " answer_found=" << b2s(verdict.answer_found)
      << " correct=" << b2s(verdict.correct) << '\n';
}

void gen_pool_command(int size, OperandRange range, const TypeMix& mix, std::uint64_t seed,
                      const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("gen-pool needs an output path");
  const std::vector<Prompt> pool = generate_pool(size, range, mix, seed);
  const std::string tmp = out_path + ".tmp";
  write_pool(tmp, pool);
  std::error_code ec;
  std::filesystem::rename(tmp, out_path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + out_path + ": " + ec.message());
  log_line(LogLevel::Info, "wrote " + std::to_string(pool.size()) + " prompts -> " + out_path);
}

}  // namespace rise
