#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rise/common.hpp"
#include "rise/curation.hpp"
#include "rise/policy.hpp"
#include "rise/sft.hpp"
#include "rise/tasks.hpp"
#include "rise/verifier.hpp"

using namespace rise;

namespace {

PolicyParams random_params(const Tokenizer& tok, int context_order, std::uint64_t seed,
                           double scale = 0.5) {
  PolicyParams params = PolicyParams::zeros(tok.size(), kPromptFeatureDim, context_order);
  Rng rng(seed);
  for (double& w : params.weights) w = scale * (2.0 * rng.next_double() - 1.0);
  return params;
}

Trajectory fake_trajectory(const char* text, bool correct) {
  Trajectory t;
  t.text = text;
  t.verdict.format_ok = correct;
  t.verdict.answer_found = correct;
  t.verdict.correct = correct;
  return t;
}

// Teaches the policy one prompt's ideal trajectory well enough that K-shot
// sampling at temperature 1 solves it part of the time.
PolicyParams tuned_on(const Prompt& prompt, const Tokenizer& tok, int epochs) {
  PolicyParams params = PolicyParams::zeros(tok.size(), kPromptFeatureDim, 3);
  CurationRecord record;
  record.prompt_id = prompt.prompt_id;
  record.trajectory_text = tok.detokenize(ideal_trajectory(prompt, tok));
  SftConfig config;
  config.epochs = epochs;
  config.step_size = 2.0;
  config.batch_size = 1;
  const std::vector<CurationRecord> records{record};
  const std::vector<Prompt> pool{prompt};
  sft_train(params, records, pool, tok, config);
  return params;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

class ScriptedExpert : public ExpertProvider {
 public:
  ScriptedExpert(std::vector<std::string> responses) : responses_(std::move(responses)) {}
  std::string generate(const Prompt&, int attempt) override {
    attempts_seen.push_back(attempt);
    const std::size_t i = std::min(static_cast<std::size_t>(attempt), responses_.size() - 1);
    return responses_[i];
  }
  std::vector<int> attempts_seen;

 private:
  std::vector<std::string> responses_;
};

}  // namespace

// ------------------------------------------------------------- pass rates ---

TEST_CASE("pass_rate averages verdict correctness") {
  std::vector<Trajectory> t;
  t.push_back(fake_trajectory("a", true));
  t.push_back(fake_trajectory("b", false));
  t.push_back(fake_trajectory("c", true));
  t.push_back(fake_trajectory("d", false));
  CHECK(pass_rate(t) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pass_rate(std::span<const Trajectory>{}) == 0.0);
}

TEST_CASE("categorize routes by the documented thresholds") {
  CHECK(categorize(1.0) == Category::DropPerfect);
  CHECK(categorize(0.999) == Category::SelfDistill);
  CHECK(categorize(0.5) == Category::SelfDistill);
  CHECK(categorize(0.125) == Category::SelfDistill);
  CHECK(categorize(0.0) == Category::ExpertNeeded);
  CHECK_THROWS_AS(categorize(-0.1), OutOfRange);
  CHECK_THROWS_AS(categorize(1.1), OutOfRange);
}

// ------------------------------------------------------------- k-shot draws ---

TEST_CASE("k_shot_sample draws exactly k verdicts per prompt deterministically") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 11);
  const auto pool = generate_pool(6, OperandRange::SingleDigit, TypeMix{}, 31);

  const auto a = k_shot_sample(params, pool, tok, 5, 1.0, 24, 99);
  const auto b = k_shot_sample(params, pool, tok, 5, 1.0, 24, 99);
  REQUIRE(a.size() == pool.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].trajectories.size() == 5);
    CHECK(a[i].pass_rate == b[i].pass_rate);
    int correct = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(a[i].trajectories[k].tokens == b[i].trajectories[k].tokens);
      const Verdict v = verify(a[i].trajectories[k].text, pool[i].ground_truth);
      CHECK(a[i].trajectories[k].verdict.correct == v.correct);
      if (v.correct) ++correct;
    }
    CHECK(a[i].pass_rate == doctest::Approx(correct / 5.0).epsilon(1e-12));
  }
}

TEST_CASE("k_shot_sample keys draws by prompt identity, not pool order") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 13);
  auto pool = generate_pool(5, OperandRange::SingleDigit, TypeMix{}, 37);
  const auto before = k_shot_sample(params, pool, tok, 3, 1.0, 24, 7);

  std::vector<Prompt> reversed(pool.rbegin(), pool.rend());
  const auto after = k_shot_sample(params, reversed, tok, 3, 1.0, 24, 7);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::size_t j = pool.size() - 1 - i;
    for (int k = 0; k < 3; ++k)
      CHECK(before[i].trajectories[static_cast<std::size_t>(k)].tokens ==
            after[j].trajectories[static_cast<std::size_t>(k)].tokens);
  }
}

TEST_CASE("k_shot_sample changes with the seed") {
  const Tokenizer tok;
  const PolicyParams params = random_params(tok, 2, 17);
  const auto pool = generate_pool(3, OperandRange::SingleDigit, TypeMix{}, 41);
  const auto a = k_shot_sample(params, pool, tok, 4, 1.0, 24, 1);
  const auto b = k_shot_sample(params, pool, tok, 4, 1.0, 24, 2);
  bool any_diff = false;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (int k = 0; k < 4; ++k)
      any_diff = any_diff || a[i].trajectories[static_cast<std::size_t>(k)].tokens !=
                                 b[i].trajectories[static_cast<std::size_t>(k)].tokens;
  CHECK(any_diff);
}

// ---------------------------------------------------------------- selection ---

TEST_CASE("select_self returns only correct trajectories, uniformly") {
  std::vector<Trajectory> t;
  t.push_back(fake_trajectory("wrong1", false));
  t.push_back(fake_trajectory("right1", true));
  t.push_back(fake_trajectory("wrong2", false));
  t.push_back(fake_trajectory("right2", true));

  int first = 0, second = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    Rng rng = stream_rng(5, "select-test", i);
    const std::string chosen = select_self(t, rng);
    if (chosen == "right1")
      ++first;
    else if (chosen == "right2")
      ++second;
    else
      FAIL("selected an incorrect trajectory");
  }
  CHECK(first + second == 10000);
  // Binomial(10000, 0.5): 3 sigma = 150.
  CHECK(first > 5000 - 150);
  CHECK(first < 5000 + 150);
}

TEST_CASE("select_self without a correct trajectory is an error") {
  std::vector<Trajectory> t;
  t.push_back(fake_trajectory("wrong", false));
  Rng rng(1);
  CHECK_THROWS_AS(select_self(t, rng), NoCorrectTrajectory);
}

// ------------------------------------------------------------------ experts ---

TEST_CASE("oracle expert replays the ideal trajectory text") {
  const Tokenizer tok;
  Rng rng(0);
  const Prompt p = build_prompt("p", QuestionType::FreeForm, Tier::Easy, 9, 3, '-', rng);
  OracleExpert oracle(tok);
  const std::string text = oracle.generate(p, 0);
  CHECK(text == tok.detokenize(ideal_trajectory(p, tok)));
  CHECK(verify(text, p.ground_truth).correct);
}

TEST_CASE("request_expert retries until a response verifies") {
  const Tokenizer tok;
  Rng rng(0);
  const Prompt p = build_prompt("p", QuestionType::FreeForm, Tier::Easy, 2, 2, '+', rng);
  const std::string good = tok.detokenize(ideal_trajectory(p, tok));

  ScriptedExpert flaky({"garbage", "<think> x </think><answer> $\\boxed{5}$ </answer>", good});
  const std::string got = request_expert(flaky, p, 3);
  CHECK(got == good);
  CHECK(flaky.attempts_seen == std::vector<int>{0, 1, 2});
}

TEST_CASE("request_expert exhausts the retry budget on persistent failure") {
  Rng rng(0);
  const Prompt p = build_prompt("p", QuestionType::FreeForm, Tier::Easy, 2, 2, '+', rng);
  ScriptedExpert hopeless({"nope"});
  CHECK_THROWS_AS(request_expert(hopeless, p, 4), ExpertExhausted);
  CHECK(hopeless.attempts_seen == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("default system prompt requests the tagged format") {
  CHECK_FALSE(kDefaultSystemPrompt.empty());
  CHECK(kDefaultSystemPrompt.find("<think>") != std::string::npos);
  CHECK(kDefaultSystemPrompt.find("boxed") != std::string::npos);
}

// -------------------------------------------------------------- type filter ---

TEST_CASE("apply_type_filter implements the documented matrix") {
  auto record = [](QuestionType type, double rate, const char* id) {
    CurationRecord r;
    r.prompt_id = id;
    r.question_type = type;
    r.pass_rate = rate;
    return r;
  };
  std::vector<CurationRecord> records;
  records.push_back(record(QuestionType::TrueFalse, 1.0, "tf-high"));
  records.push_back(record(QuestionType::TrueFalse, 0.0, "tf-low"));
  records.push_back(record(QuestionType::MultipleChoice, 0.4, "mc-04"));
  records.push_back(record(QuestionType::MultipleChoice, 0.5, "mc-05"));
  records.push_back(record(QuestionType::MultipleChoice, 0.0, "mc-00"));
  records.push_back(record(QuestionType::FreeForm, 0.0, "ff-00"));
  records.push_back(record(QuestionType::FreeForm, 0.4, "ff-04"));
  records.push_back(record(QuestionType::FreeForm, 1.0, "ff-10"));

  const std::vector<CurationRecord> kept = apply_type_filter(std::move(records));
  std::vector<std::string> ids;
  for (const auto& r : kept) ids.push_back(r.prompt_id);
  CHECK(ids == std::vector<std::string>{"mc-05", "ff-00", "ff-04", "ff-10"});
}

// ------------------------------------------------------------- full pass ---

TEST_CASE("curate_records routes a failing policy entirely to the expert") {
  const Tokenizer tok;
  const auto pool = generate_pool(8, OperandRange::SingleDigit, TypeMix{}, 43);
  const PolicyParams zeros = PolicyParams::zeros(tok.size(), kPromptFeatureDim, 2);
  OracleExpert oracle(tok);
  CurationConfig config;
  config.k = 3;
  config.max_len = 24;
  config.seed = 5;

  const auto [records, summary] = curate_records(zeros, pool, tok, oracle, config);
  CHECK(summary.total_prompts == 8);
  CHECK(summary.drop_perfect == 0);
  CHECK(summary.self_distilled == 0);
  CHECK(summary.expert_records == 8);
  CHECK(summary.expert_exhausted == 0);
  CHECK(summary.final_records == 8);
  CHECK(summary.final_self == 0);
  CHECK(summary.final_expert == 8);
  REQUIRE(records.size() == 8);
  for (const auto& r : records) {
    CHECK(r.source == RecordSource::Expert);
    CHECK(r.pass_rate == 0.0);
    CHECK(verify(r.trajectory_text, r.ground_truth).correct);
  }
  CHECK(std::is_sorted(records.begin(), records.end(),
                       [](const auto& a, const auto& b) { return a.prompt_id < b.prompt_id; }));
}

TEST_CASE("curate_records routes exactly as the k-shot pass rates dictate") {
  const Tokenizer tok;
  const auto pool = generate_pool(6, OperandRange::SingleDigit, TypeMix{}, 47);

  // Tuned on prompt 0 so pass rates spread across (0, 1): prompt 0 is solved
  // most draws and the shared context slots leak partial behavior elsewhere.
  PolicyParams params = tuned_on(pool[0], tok, 400);

  OracleExpert oracle(tok);
  CurationConfig config;
  config.k = 6;
  config.max_len = 24;
  config.seed = 9;

  // Independent reference routing from the same sampling streams.
  const auto shots =
      k_shot_sample(params, pool, tok, config.k, config.temperature, config.max_len, config.seed);
  std::map<std::string, Category> expected;
  std::map<std::string, double> expected_rate;
  int want_drop = 0, want_self = 0, want_expert = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Category c = categorize(shots[i].pass_rate);
    expected[pool[i].prompt_id] = c;
    expected_rate[pool[i].prompt_id] = shots[i].pass_rate;
    if (c == Category::DropPerfect) ++want_drop;
    if (c == Category::SelfDistill) ++want_self;
    if (c == Category::ExpertNeeded) ++want_expert;
  }
  // The tuned policy must produce at least two distinct categories, otherwise
  // this test exercises nothing; the fixed seeds above guarantee it.
  CHECK(want_expert >= 1);
  CHECK(want_drop + want_self >= 1);

  const auto [records, summary] = curate_records(params, pool, tok, oracle, config);
  CHECK(summary.total_prompts == 6);
  CHECK(summary.drop_perfect == want_drop);
  CHECK(summary.self_distilled == want_self);
  CHECK(summary.expert_records == want_expert);
  CHECK(summary.expert_exhausted == 0);
  CHECK(summary.final_records == static_cast<int>(records.size()));
  CHECK(summary.final_self + summary.final_expert == summary.final_records);
  CHECK(summary.final_self == want_self);
  CHECK(summary.final_expert == want_expert);

  std::set<std::string> seen;
  for (const auto& r : records) {
    CHECK(seen.insert(r.prompt_id).second);  // one record per prompt: disjoint
    REQUIRE(expected.count(r.prompt_id) == 1);
    if (r.source == RecordSource::SelfDistilled) {
      CHECK(expected[r.prompt_id] == Category::SelfDistill);
      CHECK(r.pass_rate == doctest::Approx(expected_rate[r.prompt_id]).epsilon(1e-12));
      CHECK(r.pass_rate > 0.0);
      CHECK(r.pass_rate < 1.0);
      // Self-distilled text replays one of the prompt's own correct draws.
      CHECK(verify(r.trajectory_text, r.ground_truth).correct);
    } else {
      CHECK(expected[r.prompt_id] == Category::ExpertNeeded);
      CHECK(r.pass_rate == 0.0);
    }
  }
  for (const auto& [id, category] : expected)
    CHECK(static_cast<int>(seen.count(id)) == (category == Category::DropPerfect ? 0 : 1));
}

TEST_CASE("record source names round-trip") {
  CHECK(to_string(RecordSource::SelfDistilled) ==
        to_string(record_source_from_string(to_string(RecordSource::SelfDistilled))));
  CHECK(record_source_from_string(to_string(RecordSource::Expert)) == RecordSource::Expert);
  CHECK_THROWS_AS(record_source_from_string("nonsense"), DataError);
}

TEST_CASE("format_summary prints every counter") {
  CurationSummary s;
  s.total_prompts = 10;
  s.drop_perfect = 2;
  s.self_distilled = 3;
  s.expert_records = 5;
  const std::string text = format_summary(s);
  CHECK(text.find("10") != std::string::npos);
  CHECK(text.find("2") != std::string::npos);
  CHECK(text.find("3") != std::string::npos);
  CHECK(text.find("5") != std::string::npos);
}

// ------------------------------------------------------------ serialization ---

TEST_CASE("sft datasets round-trip with escaped control characters") {
  std::vector<CurationRecord> records;
  CurationRecord r;
  r.prompt_id = "q1";
  r.question_type = QuestionType::MultipleChoice;
  r.source = RecordSource::SelfDistilled;
  r.pass_rate = 0.625;
  r.ground_truth = "B";
  r.prompt_text = "What is 1+1? Options: (A) 1 (B) 2";
  r.trajectory_text = "line one\nline two\\with backslash\nline three";
  records.push_back(r);
  CurationRecord r2;
  r2.prompt_id = "q2";
  r2.source = RecordSource::Expert;
  r2.pass_rate = 0.0;
  r2.ground_truth = "7";
  r2.prompt_text = "What is 3+4?";
  r2.trajectory_text = "<think> 3+4=7 </think><answer> $\\boxed{7}$ </answer>";
  records.push_back(r2);

  const auto path = temp_file("rise_test_dataset.tsv");
  write_sft_dataset(path.string(), records);
  const auto loaded = read_sft_dataset(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].prompt_id == "q1");
  CHECK(loaded[0].question_type == QuestionType::MultipleChoice);
  CHECK(loaded[0].source == RecordSource::SelfDistilled);
  CHECK(loaded[0].pass_rate == doctest::Approx(0.625).epsilon(1e-9));
  CHECK(loaded[0].trajectory_text == r.trajectory_text);
  CHECK(loaded[1].trajectory_text == r2.trajectory_text);
  CHECK(loaded[1].source == RecordSource::Expert);

  // The on-disk encoding is single-line per record.
  std::ifstream in(path);
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove(path);
}

TEST_CASE("dataset writing rejects unencodable fields") {
  CurationRecord r;
  r.prompt_id = "q\t1";  // a tab would corrupt the column structure
  r.ground_truth = "2";
  r.prompt_text = "t";
  r.trajectory_text = "t";
  const std::vector<CurationRecord> records{r};
  const auto path = temp_file("rise_test_dataset_bad.tsv");
  CHECK_THROWS_AS(write_sft_dataset(path.string(), records), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("dataset reading reports malformed rows by line") {
  const auto path = temp_file("rise_test_dataset_malformed.tsv");
  {
    std::ofstream out(path);
    out << "q1\tFreeForm\tself_distilled\t0.500000\t2\tWhat is 1+1?\t<think> t </think>\n";
    out << "q2\tFreeForm\tself_distilled\t0.500000\tonly six\tfields\n";
  }
  try {
    read_sft_dataset(path.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_sft_dataset("/nonexistent/rise_dataset.tsv"), DataError);
}

TEST_CASE("dataset reading validates the pass-rate range") {
  const auto path = temp_file("rise_test_dataset_rate.tsv");
  {
    std::ofstream out(path);
    out << "q1\tFreeForm\tself_distilled\t1.500000\t2\tWhat is 1+1?\tt\n";
  }
  CHECK_THROWS_AS(read_sft_dataset(path.string()), DataError);
  std::filesystem::remove(path);
}
