#include "rise/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rise {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

PolicyParams PolicyParams::zeros(int vocab_size, int prompt_feature_dim, int context_order) {
  PolicyParams p;
  p.vocab_size = vocab_size;
  p.context_order = context_order;
  p.feature_dim = context_order * vocab_size + prompt_feature_dim + 1;
  p.weights.assign(static_cast<std::size_t>(vocab_size) * static_cast<std::size_t>(p.feature_dim),
                   0.0);
  return p;
}

namespace detail {

SparseFeatures sparse_features(const Prompt& prompt, std::span<const int> context,
                               const Tokenizer& tokenizer, int context_order) {
  const int v = tokenizer.size();
  SparseFeatures x;
  x.idx.reserve(static_cast<std::size_t>(context_order) + 6);
  x.val.reserve(x.idx.capacity());
  // Trailing window, oldest slot first; left-padded with the begin marker.
  for (int slot = 0; slot < context_order; ++slot) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(context.size()) - context_order + slot;
    const int tok = i >= 0 ? context[static_cast<std::size_t>(i)] : tokenizer.begin_id();
    x.idx.push_back(slot * v + tok);
    x.val.push_back(1.0);
  }
  const int base = context_order * v;
  for (std::size_t f = 0; f < prompt.prompt_features.size(); ++f) {
    if (prompt.prompt_features[f] != 0.0) {
      x.idx.push_back(base + static_cast<int>(f));
      x.val.push_back(prompt.prompt_features[f]);
    }
  }
  x.idx.push_back(base + static_cast<int>(prompt.prompt_features.size()));  // bias
  x.val.push_back(1.0);
  return x;
}

std::vector<double> logprobs_sparse(const PolicyParams& params, const SparseFeatures& x) {
  std::vector<double> lp(static_cast<std::size_t>(params.vocab_size), 0.0);
  const double* w = params.weights.data();
  const std::size_t fd = static_cast<std::size_t>(params.feature_dim);
  for (int v = 0; v < params.vocab_size; ++v) {
    const double* row = w + static_cast<std::size_t>(v) * fd;
    double acc = 0.0;
    for (std::size_t k = 0; k < x.idx.size(); ++k)
      acc += row[x.idx[k]] * x.val[k];
    lp[static_cast<std::size_t>(v)] = acc;
  }
  const double mx = *std::max_element(lp.begin(), lp.end());
  double z = 0.0;
  for (double l : lp) z += std::exp(l - mx);
  const double logz = mx + std::log(z);
  for (double& l : lp) l -= logz;
  return lp;
}

void accumulate_grad_sparse(const PolicyParams& params, const SparseFeatures& x,
                            std::span<const double> logprobs, int token, double scale,
                            std::span<double> grad) {
  const std::size_t fd = static_cast<std::size_t>(params.feature_dim);
  for (int v = 0; v < params.vocab_size; ++v) {
    const double coeff =
        scale * ((v == token ? 1.0 : 0.0) - std::exp(logprobs[static_cast<std::size_t>(v)]));
    double* g = grad.data() + static_cast<std::size_t>(v) * fd;
    for (std::size_t k = 0; k < x.idx.size(); ++k) g[x.idx[k]] += coeff * x.val[k];
  }
}

}  // namespace detail

std::vector<double> features(const Prompt& prompt, std::span<const int> context,
                             const Tokenizer& tokenizer, int context_order) {
  const std::size_t dim = static_cast<std::size_t>(context_order) * tokenizer.size() +
                          prompt.prompt_features.size() + 1;
  std::vector<double> x(dim, 0.0);
  const detail::SparseFeatures sf =
      detail::sparse_features(prompt, context, tokenizer, context_order);
  for (std::size_t k = 0; k < sf.idx.size(); ++k)
    x[static_cast<std::size_t>(sf.idx[k])] = sf.val[k];
  return x;
}

namespace {

void check_dims(const PolicyParams& params, const Prompt& prompt, const Tokenizer& tokenizer) {
  const int expect = params.context_order * tokenizer.size() +
                     static_cast<int>(prompt.prompt_features.size()) + 1;
  if (params.vocab_size != tokenizer.size() || params.feature_dim != expect)
    throw ShapeMismatch("policy dimensions (" + std::to_string(params.vocab_size) + "x" +
                        std::to_string(params.feature_dim) + ") do not match vocab " +
                        std::to_string(tokenizer.size()) + " and feature dim " +
                        std::to_string(expect));
}

}  // namespace

std::vector<double> token_logprobs(const PolicyParams& params, const Prompt& prompt,
                                   std::span<const int> context, const Tokenizer& tokenizer) {
  check_dims(params, prompt, tokenizer);
  return detail::logprobs_sparse(
      params, detail::sparse_features(prompt, context, tokenizer, params.context_order));
}

void accumulate_grad_logprob(const PolicyParams& params, const Prompt& prompt,
                             std::span<const int> context, const Tokenizer& tokenizer, int token,
                             double scale, std::span<double> grad) {
  check_dims(params, prompt, tokenizer);
  if (grad.size() != params.weights.size())
    throw ShapeMismatch("gradient buffer size does not match parameter count");
  const detail::SparseFeatures x =
      detail::sparse_features(prompt, context, tokenizer, params.context_order);
  const std::vector<double> lp = detail::logprobs_sparse(params, x);
  detail::accumulate_grad_sparse(params, x, lp, token, scale, grad);
}

std::vector<double> grad_logprob(const PolicyParams& params, const Prompt& prompt,
                                 std::span<const int> context, const Tokenizer& tokenizer,
                                 int token) {
  std::vector<double> grad(params.weights.size(), 0.0);
  accumulate_grad_logprob(params, prompt, context, tokenizer, token, 1.0, grad);
  return grad;
}

namespace {

Trajectory decode(const PolicyParams& params, const Prompt& prompt, const Tokenizer& tokenizer,
                  double temperature, int max_len, Rng* rng) {
  check_dims(params, prompt, tokenizer);
  Trajectory traj;
  std::vector<double> scaled(static_cast<std::size_t>(params.vocab_size));
  while (static_cast<int>(traj.tokens.size()) < max_len) {
    const detail::SparseFeatures x =
        detail::sparse_features(prompt, traj.tokens, tokenizer, params.context_order);
    const std::vector<double> lp = detail::logprobs_sparse(params, x);
    int chosen = 0;
    if (rng == nullptr) {
      chosen = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    } else {
      // Softmax at the sampling temperature, drawn by inverse CDF.
      double mx = -1e300;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        scaled[v] = lp[v] / temperature;
        mx = std::max(mx, scaled[v]);
      }
      double z = 0.0;
      for (double& s : scaled) {
        s = std::exp(s - mx);
        z += s;
      }
      const double u = rng->next_double() * z;
      double cum = 0.0;
      chosen = static_cast<int>(lp.size()) - 1;
      for (std::size_t v = 0; v < scaled.size(); ++v) {
        cum += scaled[v];
        if (u < cum) {
          chosen = static_cast<int>(v);
          break;
        }
      }
    }
    traj.tokens.push_back(chosen);
    traj.logp_behavior.push_back(lp[static_cast<std::size_t>(chosen)]);
    if (chosen == tokenizer.terminator_id()) break;
  }
  traj.text = tokenizer.detokenize(traj.tokens);
  return traj;
}

}  // namespace

Trajectory sample_trajectory(const PolicyParams& params, const Prompt& prompt,
                             const Tokenizer& tokenizer, double temperature, int max_len,
                             Rng& rng) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("sampling temperature must be positive, got " +
                                std::to_string(temperature));
  return decode(params, prompt, tokenizer, temperature, max_len, &rng);
}

Trajectory greedy_trajectory(const PolicyParams& params, const Prompt& prompt,
                             const Tokenizer& tokenizer, int max_len) {
  return decode(params, prompt, tokenizer, 1.0, max_len, nullptr);
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << "RISEPOLICY v1 " << params.vocab_size << ' ' << params.feature_dim << ' '
      << params.context_order << '\n';
  out.write(reinterpret_cast<const char*>(params.weights.data()),
            static_cast<std::streamsize>(params.weights.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointNotFound(path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("checkpoint header missing: " + path);
  std::istringstream hs(header);
  std::string magic, version;
  PolicyParams p;
  if (!(hs >> magic >> version >> p.vocab_size >> p.feature_dim >> p.context_order) ||
      magic != "RISEPOLICY" || version != "v1")
    throw DataError("bad checkpoint header in " + path + ": " + header);
  if (p.vocab_size <= 0 || p.feature_dim <= 0 || p.context_order <= 0 ||
      p.feature_dim <= p.context_order * p.vocab_size)
    throw DataError("checkpoint dimensions are inconsistent in " + path + ": " + header);
  const std::size_t n =
      static_cast<std::size_t>(p.vocab_size) * static_cast<std::size_t>(p.feature_dim);
  p.weights.resize(n);
  in.read(reinterpret_cast<char*>(p.weights.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
    throw DataError("checkpoint payload truncated: " + path);
  char extra = 0;
  if (in.read(&extra, 1)) throw DataError("checkpoint has trailing bytes: " + path);
  return p;
}

}  // namespace rise
