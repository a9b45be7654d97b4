#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rise/config.hpp"
#include "rise/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string checkpoint;
  std::string pool;
  std::string out;
  std::optional<std::uint64_t> seed;
};

rise::RunConfig resolve_config(const CommonOpts& opts, bool config_required) {
  rise::RunConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = rise::load_config(opts.config_path);
  } else if (config_required) {
    throw rise::ConfigError("--config is required for this subcommand");
  } else {
    cfg = rise::default_config();
  }
  if (!opts.pool.empty()) cfg.pool_path = opts.pool;
  if (opts.seed) cfg.seed = *opts.seed;
  rise::validate_config(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_checkpoint) {
  cmd->add_option("--config", opts.config_path, "run configuration file (key = value lines)");
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", opts.checkpoint, "policy checkpoint path");
  }
  cmd->add_option("--pool", opts.pool, "prompt pool path (overrides run.pool_path)");
  cmd->add_option("--out", opts.out, "output path");
  cmd->add_option("--seed", opts.seed, "seed override (overrides run.seed)");
}

// Writes report/rollout text to --out when given, else stdout.
void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  rise::write_text_atomic(out_path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RISE: RL incentivization + SFT enhancement on verifiable arithmetic tasks"};
  app.require_subcommand(1);

  CommonOpts rl, rollout, curate, sft, eval, plot, verify, genpool;
  std::string sft_dataset;
  int eval_k = 0;
  std::string verify_text, verify_gt;
  std::string plot_metrics;
  int pool_size = 1000;
  std::string pool_operands = "single";
  std::string pool_mix = "1,0,0";

  CLI::App* c_rl = app.add_subcommand("rl-train", "train the policy with group-relative RL");
  add_common(c_rl, rl, true);

  CLI::App* c_rollout =
      app.add_subcommand("rollout", "sample K trajectories per prompt and report pass rates");
  add_common(c_rollout, rollout, true);

  CLI::App* c_curate =
      app.add_subcommand("curate", "build a fine-tuning dataset from policy rollouts");
  add_common(c_curate, curate, true);

  CLI::App* c_sft = app.add_subcommand("sft-train", "fine-tune the policy on a curated dataset");
  add_common(c_sft, sft, true);
  c_sft->add_option("--dataset", sft_dataset, "curated dataset path")->required();

  CLI::App* c_eval = app.add_subcommand("eval", "report pass@1 and pass@K per type and tier");
  add_common(c_eval, eval, true);
  c_eval->add_option("--k", eval_k, "sampled decodes for pass@K (default: curation.k)");

  CLI::App* c_verify = app.add_subcommand("verify", "judge one response text file");
  c_verify->add_option("--text", verify_text, "file holding the raw response text")->required();
  c_verify->add_option("--gt", verify_gt, "ground-truth answer string")->required();

  CLI::App* c_plot = app.add_subcommand("plot", "render metrics as a two-panel SVG chart");
  add_common(c_plot, plot, false);
  c_plot->add_option("--metrics", plot_metrics, "metrics file (overrides run.metrics_path)");

  CLI::App* c_gen = app.add_subcommand("gen-pool", "generate a synthetic prompt pool");
  add_common(c_gen, genpool, false);
  c_gen->add_option("--size", pool_size, "number of prompts");
  c_gen->add_option("--operands", pool_operands, "operand range: single | double | mixed");
  c_gen->add_option("--mix", pool_mix,
                    "question-type proportions free_form,multiple_choice,true_false");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_rl->parsed()) {
      rise::RunConfig cfg = resolve_config(rl, true);
      rise::rl_train(cfg, rl.checkpoint);
    } else if (c_rollout->parsed()) {
      rise::RunConfig cfg = resolve_config(rollout, true);
      if (rollout.checkpoint.empty()) throw rise::ConfigError("rollout needs --checkpoint");
      std::ostringstream text;
      rise::rollout_command(cfg, rollout.checkpoint, text);
      emit(rollout.out, text.str());
    } else if (c_curate->parsed()) {
      rise::RunConfig cfg = resolve_config(curate, true);
      if (curate.checkpoint.empty()) throw rise::ConfigError("curate needs --checkpoint");
      if (curate.out.empty()) throw rise::ConfigError("curate needs --out");
      rise::CurationSummary summary = rise::curate_command(cfg, curate.checkpoint, curate.out);
      std::cout << rise::format_summary(summary) << '\n';
    } else if (c_sft->parsed()) {
      rise::RunConfig cfg = resolve_config(sft, true);
      if (sft.checkpoint.empty()) throw rise::ConfigError("sft-train needs --checkpoint");
      if (sft.out.empty()) throw rise::ConfigError("sft-train needs --out");
      rise::sft_command(cfg, sft.checkpoint, sft_dataset, sft.out);
    } else if (c_eval->parsed()) {
      rise::RunConfig cfg = resolve_config(eval, true);
      if (eval.checkpoint.empty()) throw rise::ConfigError("eval needs --checkpoint");
      std::string pool_path = !eval.pool.empty() ? eval.pool
                              : !cfg.eval_pool_path.empty() ? cfg.eval_pool_path
                                                            : cfg.pool_path;
      const int k = eval_k > 0 ? eval_k : cfg.curation_k;
      rise::EvalReport report = rise::eval_command(cfg, eval.checkpoint, pool_path, k);
      emit(eval.out, rise::format_eval_report(report));
    } else if (c_verify->parsed()) {
      std::ostringstream text;
      rise::verify_command(verify_text, verify_gt, text);
      std::cout << text.str();
    } else if (c_plot->parsed()) {
      rise::RunConfig cfg = resolve_config(plot, false);
      const std::string metrics = !plot_metrics.empty() ? plot_metrics : cfg.metrics_path;
      if (plot.out.empty()) throw rise::ConfigError("plot needs --out");
      rise::plot_command(metrics, plot.out);
    } else if (c_gen->parsed()) {
      rise::OperandRange range;
      if (pool_operands == "single") {
        range = rise::OperandRange::SingleDigit;
      } else if (pool_operands == "double") {
        range = rise::OperandRange::DoubleDigit;
      } else if (pool_operands == "mixed") {
        range = rise::OperandRange::Mixed;
      } else {
        throw rise::ConfigError("--operands must be single, double, or mixed");
      }
      double f = 1.0, m = 0.0, t = 0.0;
      if (std::sscanf(pool_mix.c_str(), "%lf,%lf,%lf", &f, &m, &t) != 3) {
        throw rise::ConfigError("--mix must be three comma-separated proportions");
      }
      rise::TypeMix mix{f, m, t};
      const std::uint64_t seed = genpool.seed.value_or(1);
      if (genpool.out.empty()) throw rise::ConfigError("gen-pool needs --out");
      rise::gen_pool_command(pool_size, range, mix, seed, genpool.out);
    }
  } catch (const rise::TrainAbort& e) {
    rise::log_line(rise::LogLevel::Error, e.what());
    return 3;
  } catch (const rise::DataError& e) {
    rise::log_line(rise::LogLevel::Error, e.what());
    return 2;
  } catch (const rise::ConfigError& e) {
    rise::log_line(rise::LogLevel::Error, e.what());
    return 1;
  } catch (const std::exception& e) {
    rise::log_line(rise::LogLevel::Error, e.what());
    return 1;
  }
  return 0;
}
