#include "rise/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace rise {

namespace {

std::vector<int> target_tokens(const Tokenizer& tokenizer, const std::string& trajectory_text,
                               const std::string& prompt_id) {
  auto tokens = tokenizer.tokenize(trajectory_text);
  if (!tokens) {
    throw TokenizationFailure("trajectory for prompt " + prompt_id +
                              " contains text outside the vocabulary");
  }
  tokens->push_back(tokenizer.terminator_id());
  return std::move(*tokens);
}

// Mean NLL of the token sequence, optionally accumulating the gradient of the
// per-token mean scaled by `grad_scale`.
double sequence_nll(const PolicyParams& params, const Prompt& prompt, const Tokenizer& tokenizer,
                    std::span<const int> tokens, double grad_scale, std::vector<double>* grad) {
  const int order = params.context_order;
  std::vector<int> context(static_cast<std::size_t>(order), tokenizer.begin_id());
  double nll = 0.0;
  const double per_token = tokens.empty() ? 0.0 : 1.0 / static_cast<double>(tokens.size());
  for (int token : tokens) {
    detail::SparseFeatures x = detail::sparse_features(prompt, context, tokenizer, order);
    std::vector<double> lp = detail::logprobs_sparse(params, x);
    nll -= lp[static_cast<std::size_t>(token)];
    if (grad) {
      detail::accumulate_grad_sparse(params, x, lp, token, grad_scale * per_token, *grad);
    }
    for (int i = 0; i + 1 < order; ++i) context[static_cast<std::size_t>(i)] = context[i + 1];
    if (order > 0) context[static_cast<std::size_t>(order - 1)] = token;
  }
  return tokens.empty() ? 0.0 : nll * per_token;
}

}  // namespace

double sft_loss(const PolicyParams& params, const Prompt& prompt, const Tokenizer& tokenizer,
                const std::string& trajectory_text) {
  std::vector<int> tokens = target_tokens(tokenizer, trajectory_text, prompt.prompt_id);
  return sequence_nll(params, prompt, tokenizer, tokens, 0.0, nullptr);
}

SftResult sft_train(PolicyParams& params, std::span<const CurationRecord> records,
                    std::span<const Prompt> pool, const Tokenizer& tokenizer,
                    const SftConfig& config) {
  if (records.empty()) throw EmptyDataset("sft_train requires a non-empty dataset");
  if (config.epochs < 1) throw ConfigError("sft.epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("sft.batch_size must be >= 1");
  if (!(config.step_size >= 0.0)) throw ConfigError("sft.step_size must be >= 0");

  std::unordered_map<std::string, const Prompt*> by_id;
  by_id.reserve(pool.size());
  for (const Prompt& p : pool) by_id.emplace(p.prompt_id, &p);

  struct Example {
    const Prompt* prompt;
    std::vector<int> tokens;
  };
  std::vector<Example> examples;
  examples.reserve(records.size());
  for (const CurationRecord& r : records) {
    auto it = by_id.find(r.prompt_id);
    if (it == by_id.end()) {
      throw DataError("dataset record " + r.prompt_id + " has no prompt in the pool");
    }
    examples.push_back({it->second, target_tokens(tokenizer, r.trajectory_text, r.prompt_id)});
  }

  SftResult result;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(params.weights.size(), 0.0);

  auto mean_loss = [&]() {
    double total = 0.0;
    for (const Example& ex : examples) {
      total += sequence_nll(params, *ex.prompt, tokenizer, ex.tokens, 0.0, nullptr);
    }
    return total / static_cast<double>(examples.size());
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    result.epoch_mean_loss.push_back(mean_loss());
    Rng rng = stream_rng(config.shuffle_seed, "sft_epoch", static_cast<std::uint64_t>(epoch));
    deterministic_shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      const double per_example = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const Example& ex = examples[order[i]];
        // Descending the NLL mean equals ascending the log-likelihood mean.
        sequence_nll(params, *ex.prompt, tokenizer, ex.tokens, per_example, &grad);
      }
      for (std::size_t i = 0; i < grad.size(); ++i) {
        params.weights[i] += config.step_size * grad[i];
      }
    }
  }
  result.final_mean_loss = mean_loss();
  return result;
}

}  // namespace rise
