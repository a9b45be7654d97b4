#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "rise/common.hpp"
#include "rise/grpo.hpp"
#include "rise/policy.hpp"
#include "rise/rewards.hpp"
#include "rise/tasks.hpp"

using namespace rise;

namespace {

Prompt easy_prompt() {
  Rng rng(0);
  return build_prompt("p", QuestionType::FreeForm, Tier::Easy, 1, 4, '+', rng);
}

PolicyParams random_params(const Tokenizer& tok, int context_order, std::uint64_t seed,
                           double scale = 0.5) {
  PolicyParams params = PolicyParams::zeros(tok.size(), kPromptFeatureDim, context_order);
  Rng rng(seed);
  for (double& w : params.weights) w = scale * (2.0 * rng.next_double() - 1.0);
  return params;
}

// On-policy rollout group: behavior log-probs recorded under `params` itself,
// so every importance ratio is exactly 1 (interior of the clip range).
RolloutGroup make_group(const PolicyParams& params, const Tokenizer& tok,
                        std::vector<double> advantages, std::uint64_t seed, int max_len = 16) {
  RolloutGroup group;
  group.prompt = easy_prompt();
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    Rng rng = stream_rng(seed, "rollout", i);
    group.trajectories.push_back(
        sample_trajectory(params, group.prompt, tok, 1.0, max_len, rng));
  }
  group.advantages = std::move(advantages);
  return group;
}

// Recomputes the clipped objective from scratch for finite differencing.
double objective_at(const PolicyParams& params, const RolloutGroup& group, const Tokenizer& tok,
                    const ClipConfig& cfg, const PolicyParams* ref) {
  TokenTensor logp_new, logp_ref, logp_old;
  for (const Trajectory& traj : group.trajectories) {
    std::vector<double> row_new, row_ref, row_old;
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
      const std::span<const int> ctx(traj.tokens.data(), t);
      const int token = traj.tokens[t];
      row_new.push_back(
          token_logprobs(params, group.prompt, ctx, tok)[static_cast<std::size_t>(token)]);
      if (ref != nullptr)
        row_ref.push_back(
            token_logprobs(*ref, group.prompt, ctx, tok)[static_cast<std::size_t>(token)]);
      row_old.push_back(traj.logp_behavior[t]);
    }
    logp_new.push_back(std::move(row_new));
    logp_ref.push_back(std::move(row_ref));
    logp_old.push_back(std::move(row_old));
  }
  const TokenTensor ratios = importance_ratios(logp_new, logp_old);
  return clipped_objective(ratios, group.advantages, cfg, ref ? &logp_new : nullptr,
                           ref ? &logp_ref : nullptr);
}

void check_gradient_fd(const RolloutGroup& group, PolicyParams params, const Tokenizer& tok,
                       const ClipConfig& cfg, const PolicyParams* ref, std::uint64_t pick_seed) {
  const std::vector<double> analytic = objective_gradient(group, params, tok, cfg, ref);
  const double h = 1e-5;
  Rng pick(pick_seed);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t i = pick.next_index(params.weights.size());
    const double saved = params.weights[i];
    params.weights[i] = saved + h;
    const double up = objective_at(params, group, tok, cfg, ref);
    params.weights[i] = saved - h;
    const double down = objective_at(params, group, tok, cfg, ref);
    params.weights[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    CHECK(std::fabs(fd - analytic[i]) <= 1e-7 + 1e-4 * std::fabs(analytic[i]));
  }
}

}  // namespace

// ----------------------------------------------------------- clip validation ---

TEST_CASE("validate_clip_config rejects bad ranges") {
  CHECK_NOTHROW(validate_clip_config(ClipConfig{0.2, 0.28, 0.0}));
  CHECK_THROWS_AS(validate_clip_config(ClipConfig{-0.1, 0.28, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_clip_config(ClipConfig{0.2, 0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_clip_config(ClipConfig{0.2, 0.28, -1.0}), std::invalid_argument);
}

// -------------------------------------------------------------- advantages ---

TEST_CASE("compute_advantages centers and scales by the population std") {
  const double r1[] = {1.0, 1.0, 0.0, 0.0};
  const AdvantageResult a1 = compute_advantages(r1);
  CHECK_FALSE(a1.degenerate);
  REQUIRE(a1.advantages.size() == 4);
  CHECK(a1.advantages[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a1.advantages[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a1.advantages[2] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a1.advantages[3] == doctest::Approx(-1.0).epsilon(1e-12));

  const double r2[] = {1.0, 0.0, 0.0, 0.0};
  const AdvantageResult a2 = compute_advantages(r2);
  CHECK(a2.advantages[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK(a2.advantages[1] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("uniform reward groups are degenerate with zero advantages") {
  const double rewards[] = {0.7, 0.7, 0.7};
  const AdvantageResult a = compute_advantages(rewards);
  CHECK(a.degenerate);
  for (double v : a.advantages) CHECK(v == 0.0);

  const double single[] = {1.0};
  CHECK(compute_advantages(single).degenerate);
}

TEST_CASE("advantages are invariant to translation and positive scaling") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rewards(4 + rng.next_index(8));
    for (double& r : rewards) r = rng.next_double();
    std::vector<double> shifted = rewards, scaled = rewards;
    const double shift = 10.0 * rng.next_double() - 5.0;
    const double scale = 0.1 + 5.0 * rng.next_double();
    for (double& r : shifted) r += shift;
    for (double& r : scaled) r *= scale;

    const auto base = compute_advantages(rewards).advantages;
    const auto a_shift = compute_advantages(shifted).advantages;
    const auto a_scale = compute_advantages(scaled).advantages;
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::fabs(a_shift[i] - base[i]) <= 1e-9);
      CHECK(std::fabs(a_scale[i] - base[i]) <= 1e-9);
    }
  }
}

TEST_CASE("normalized advantages have zero mean and unit std") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> rewards(2 + rng.next_index(15));
    for (double& r : rewards) r = 3.0 * rng.next_double();
    const AdvantageResult a = compute_advantages(rewards);
    if (a.degenerate) continue;
    double mean = 0.0, var = 0.0;
    for (double v : a.advantages) mean += v;
    mean /= static_cast<double>(a.advantages.size());
    for (double v : a.advantages) var += (v - mean) * (v - mean);
    var /= static_cast<double>(a.advantages.size());
    CHECK(std::fabs(mean) <= 1e-9);
    CHECK(std::fabs(std::sqrt(var) - 1.0) <= 1e-9);
  }
}

// ------------------------------------------------------------------ ratios ---

TEST_CASE("importance_ratios exponentiates per-token log-prob gaps") {
  const TokenTensor lp_new{{-1.0, -2.0}, {-0.5}};
  const TokenTensor lp_old{{-1.0, -1.5}, {-1.5}};
  const TokenTensor r = importance_ratios(lp_new, lp_old);
  CHECK(r[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[0][1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(r[1][0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("importance_ratios rejects mismatched shapes") {
  CHECK_THROWS_AS(importance_ratios(TokenTensor{{-1.0}}, TokenTensor{{-1.0}, {-2.0}}),
                  ShapeMismatch);
  CHECK_THROWS_AS(importance_ratios(TokenTensor{{-1.0, -2.0}}, TokenTensor{{-1.0}}),
                  ShapeMismatch);
}

// --------------------------------------------------------------- objective ---

TEST_CASE("clipped_objective applies the asymmetric clip per token") {
  const ClipConfig cfg{0.2, 0.28, 0.0};
  // Positive advantage: ratio above 1 + eps_high is capped.
  CHECK(clipped_objective(TokenTensor{{1.5}}, std::vector<double>{1.0}, cfg) ==
        doctest::Approx(1.28).epsilon(1e-12));
  // Positive advantage, small ratio: min takes the raw branch.
  CHECK(clipped_objective(TokenTensor{{0.5}}, std::vector<double>{1.0}, cfg) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Negative advantage, small ratio: clipped branch is the minimum.
  CHECK(clipped_objective(TokenTensor{{0.5}}, std::vector<double>{-1.0}, cfg) ==
        doctest::Approx(-0.8).epsilon(1e-12));
  // Negative advantage, large ratio: raw branch is the minimum (pessimistic).
  CHECK(clipped_objective(TokenTensor{{1.5}}, std::vector<double>{-1.0}, cfg) ==
        doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("clipped_objective normalizes by the total token count") {
  const ClipConfig cfg{0.2, 0.2, 0.0};
  // Two trajectories, three tokens total, all ratios 1: mean of advantages
  // weighted by token counts.
  const TokenTensor ratios{{1.0, 1.0}, {1.0}};
  const std::vector<double> adv{1.0, -2.0};
  CHECK(clipped_objective(ratios, adv, cfg) ==
        doctest::Approx((1.0 + 1.0 - 2.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("token normalization equals the trajectory mean for equal lengths") {
  // With eps_low = eps_high and every trajectory the same length, the
  // token-normalized form reduces to the mean over trajectories of the
  // per-trajectory token mean.
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.next_index(6);
    const std::size_t len = 1 + rng.next_index(8);
    const double eps = 0.1 + 0.3 * rng.next_double();
    const ClipConfig cfg{eps, eps, 0.0};
    TokenTensor ratios(n);
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) {
      adv[i] = 4.0 * rng.next_double() - 2.0;
      for (std::size_t t = 0; t < len; ++t)
        ratios[i].push_back(0.5 + 1.2 * rng.next_double());
    }
    const double token_normalized = clipped_objective(ratios, adv, cfg);
    double traj_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double inner = 0.0;
      for (double r : ratios[i]) {
        const double c = std::clamp(r, 1.0 - eps, 1.0 + eps);
        inner += std::min(r * adv[i], c * adv[i]);
      }
      traj_mean += inner / static_cast<double>(len);
    }
    traj_mean /= static_cast<double>(n);
    CHECK(std::fabs(token_normalized - traj_mean) <= 1e-12);
  }
}

TEST_CASE("kl penalty is zero on-policy and positive off-policy") {
  const ClipConfig cfg{0.2, 0.28, 0.5};
  const TokenTensor ratios{{1.0}};
  const std::vector<double> adv{1.0};
  const TokenTensor lp_same{{-1.0}};
  const double on = clipped_objective(ratios, adv, cfg, &lp_same, &lp_same);
  CHECK(on == doctest::Approx(1.0).epsilon(1e-12));  // penalty exactly 0

  const TokenTensor lp_new{{-2.0}};
  const TokenTensor lp_ref{{-1.0}};
  const double d = -1.0 - -2.0;  // ref - new = 1
  const double expected = 1.0 - 0.5 * (std::exp(d) - d - 1.0);
  CHECK(clipped_objective(ratios, adv, cfg, &lp_new, &lp_ref) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("kl penalty requires both log-prob tensors") {
  const ClipConfig cfg{0.2, 0.28, 0.5};
  CHECK_THROWS_AS(clipped_objective(TokenTensor{{1.0}}, std::vector<double>{1.0}, cfg),
                  MissingReference);
}

// ---------------------------------------------------------------- gradient ---

TEST_CASE("objective_gradient matches finite differences on-policy") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 101);
  const ClipConfig cfg{0.2, 0.28, 0.0};
  RolloutGroup group = make_group(params, tok, {1.3, -0.6, 0.9}, 7);
  check_gradient_fd(group, params, tok, cfg, nullptr, 55);
}

TEST_CASE("objective_gradient matches finite differences off-policy") {
  const Tokenizer tok;
  const ClipConfig cfg{0.2, 0.28, 0.0};
  // Behavior policy differs from the current one, so ratios leave 1 and some
  // tokens sit on the clipped (zero-gradient) branch. Retry seeds that land
  // any ratio near a clip boundary, where finite differences are undefined.
  for (std::uint64_t seed = 201;; ++seed) {
    const PolicyParams behavior = random_params(tok, 2, seed);
    PolicyParams current = behavior;
    Rng jitter(seed + 1);
    for (double& w : current.weights) w += 0.05 * (2.0 * jitter.next_double() - 1.0);

    RolloutGroup group = make_group(behavior, tok, {1.0, -1.0}, seed + 2);
    bool near_boundary = false;
    bool any_clipped = false;
    for (const Trajectory& traj : group.trajectories) {
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const std::span<const int> ctx(traj.tokens.data(), t);
        const double lp = token_logprobs(current, group.prompt, ctx,
                                         tok)[static_cast<std::size_t>(traj.tokens[t])];
        const double r = std::exp(lp - traj.logp_behavior[t]);
        near_boundary = near_boundary || std::fabs(r - 0.8) < 5e-3 || std::fabs(r - 1.28) < 5e-3;
        any_clipped = any_clipped || r < 0.8 || r > 1.28;
      }
    }
    if (near_boundary) continue;
    check_gradient_fd(group, current, tok, cfg, nullptr, seed + 3);
    if (any_clipped) break;  // insist the clipped branch was exercised once
  }
}

TEST_CASE("objective_gradient matches finite differences with a kl penalty") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 301);
  const PolicyParams ref = random_params(tok, 2, 302);
  const ClipConfig cfg{0.2, 0.28, 0.7};
  RolloutGroup group = make_group(params, tok, {0.8, -0.8}, 17);
  check_gradient_fd(group, params, tok, cfg, &ref, 77);
}

TEST_CASE("objective_gradient validates its inputs") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 401);
  RolloutGroup group = make_group(params, tok, {1.0, -1.0}, 3);
  group.advantages.pop_back();
  CHECK_THROWS_AS(objective_gradient(group, params, tok, ClipConfig{}), ShapeMismatch);

  RolloutGroup ok = make_group(params, tok, {1.0, -1.0}, 3);
  CHECK_THROWS_AS(objective_gradient(ok, params, tok, ClipConfig{0.2, 0.28, 0.5}, nullptr),
                  MissingReference);
}

// ------------------------------------------------------------------ filter ---

TEST_CASE("filter_groups keeps exactly the mixed-correctness groups") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 501);
  auto with_count = [&](int correct, std::uint64_t seed) {
    RolloutGroup g = make_group(params, tok, {0.0, 0.0, 0.0, 0.0}, seed);
    g.correct_count = correct;
    return g;
  };
  std::vector<RolloutGroup> groups;
  groups.push_back(with_count(0, 11));  // all wrong: dropped
  groups.push_back(with_count(1, 12));
  groups.push_back(with_count(3, 13));
  groups.push_back(with_count(4, 14));  // all correct (G = 4): dropped
  groups.push_back(with_count(2, 15));

  const std::vector<RolloutGroup> kept = filter_groups(std::move(groups));
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].correct_count == 1);
  CHECK(kept[1].correct_count == 3);
  CHECK(kept[2].correct_count == 2);
  const int g = static_cast<int>(kept[0].trajectories.size());
  for (const RolloutGroup& k : kept) {
    CHECK(k.correct_count > 0);
    CHECK(k.correct_count < g);
  }
}

// -------------------------------------------------------------------- step ---

TEST_CASE("grpo_step ascends by the mean group gradient") {
  const Tokenizer tok;
  const PolicyParams before = random_params(tok, 2, 601);
  const ClipConfig cfg{0.2, 0.28, 0.0};
  std::vector<RolloutGroup> batch;
  batch.push_back(make_group(before, tok, {1.0, -1.0, 0.5}, 21));
  batch.push_back(make_group(before, tok, {-0.4, 1.1}, 22));

  const std::vector<double> g0 = objective_gradient(batch[0], before, tok, cfg);
  const std::vector<double> g1 = objective_gradient(batch[1], before, tok, cfg);

  PolicyParams params = before;
  const double step = 0.7;
  const StepStats stats = grpo_step(batch, params, tok, cfg, step);

  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const double expected = before.weights[i] + step * 0.5 * (g0[i] + g1[i]);
    CHECK(params.weights[i] == doctest::Approx(expected).epsilon(1e-10));
  }

  // On-policy ratios are exactly 1: nothing can clip.
  CHECK(stats.clipped_fraction == 0.0);

  // The reported objective is the mean of per-group objectives at the old
  // parameters.
  const double obj0 = objective_at(before, batch[0], tok, cfg, nullptr);
  const double obj1 = objective_at(before, batch[1], tok, cfg, nullptr);
  CHECK(stats.objective == doctest::Approx(0.5 * (obj0 + obj1)).epsilon(1e-10));

  // Batch means are over trajectories.
  double len_sum = 0.0;
  for (const auto& g : batch)
    for (const auto& t : g.trajectories) len_sum += static_cast<double>(t.tokens.size());
  CHECK(stats.mean_response_length == doctest::Approx(len_sum / 5.0).epsilon(1e-12));
}

TEST_CASE("grpo_step rejects an empty batch") {
  const Tokenizer tok;
  PolicyParams params = random_params(tok, 2, 701);
  CHECK_THROWS_AS(grpo_step({}, params, tok, ClipConfig{}, 0.1), EmptyBatch);
}

TEST_CASE("a positive-advantage on-policy step raises trajectory likelihood") {
  const Tokenizer tok;
  const PolicyParams before = random_params(tok, 2, 801);
  const ClipConfig cfg{0.2, 0.28, 0.0};
  RolloutGroup group = make_group(before, tok, {1.0, 1.0}, 31);

  auto total_logp = [&](const PolicyParams& params) {
    double sum = 0.0;
    for (const Trajectory& traj : group.trajectories)
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const std::span<const int> ctx(traj.tokens.data(), t);
        sum += token_logprobs(params, group.prompt, ctx,
                              tok)[static_cast<std::size_t>(traj.tokens[t])];
      }
    return sum;
  };

  PolicyParams params = before;
  std::vector<RolloutGroup> batch{group};
  grpo_step(batch, params, tok, cfg, 0.05);
  CHECK(total_logp(params) > total_logp(before));
}
