#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rise/policy.hpp"
#include "rise/tasks.hpp"
#include "rise/verifier.hpp"

namespace rise {

struct OutOfRange : std::invalid_argument {
  explicit OutOfRange(const std::string& msg) : std::invalid_argument(msg) {}
};
struct NoCorrectTrajectory : std::invalid_argument {
  explicit NoCorrectTrajectory(const std::string& msg) : std::invalid_argument(msg) {}
};
struct ExpertExhausted : std::runtime_error {
  explicit ExpertExhausted(const std::string& msg) : std::runtime_error(msg) {}
};

// Default system prompt sent to remote experts, reproduced byte-for-byte from
// the training setup this project follows (trailing spaces and line breaks
// included); override via run.system_prompt.
extern const std::string kDefaultSystemPrompt;

enum class Category { DropPerfect, SelfDistill, ExpertNeeded };
enum class RecordSource { SelfDistilled, Expert };

std::string to_string(RecordSource s);
RecordSource record_source_from_string(std::string_view s);

struct CurationRecord {
  std::string prompt_id;
  QuestionType question_type = QuestionType::FreeForm;
  RecordSource source = RecordSource::SelfDistilled;
  double pass_rate = 0.0;  // expert records always carry 0
  std::string ground_truth;
  std::string prompt_text;
  std::string trajectory_text;
};

// Supplies trajectory text for prompts the policy cannot solve. attempt is
// 0-based and increments across retries.
class ExpertProvider {
 public:
  virtual ~ExpertProvider() = default;
  virtual std::string generate(const Prompt& prompt, int attempt) = 0;
};

// Replays the task family's ideal trajectories; always verifies.
class OracleExpert : public ExpertProvider {
 public:
  explicit OracleExpert(const Tokenizer& tokenizer) : tokenizer_(tokenizer) {}
  std::string generate(const Prompt& prompt, int attempt) override;

 private:
  const Tokenizer& tokenizer_;
};

// Text protocol over HTTP: POST <base_url>/expert with the system prompt,
// a blank line, then the question text; the response body is the raw
// trajectory text.
class RemoteExpert : public ExpertProvider {
 public:
  RemoteExpert(std::string base_url, std::string system_prompt);
  std::string generate(const Prompt& prompt, int attempt) override;

 private:
  std::string base_url_;
  std::string system_prompt_;
};

struct KShotSample {
  std::vector<Trajectory> trajectories;  // exactly K, verdicts filled in
  double pass_rate = 0.0;
};

// K independent draws per prompt at the given temperature. Trajectory k for
// prompt p uses the stream derived from (seed, p.prompt_id, k), so results do
// not depend on pool order or scheduling.
std::vector<KShotSample> k_shot_sample(const PolicyParams& params, std::span<const Prompt> pool,
                                       const Tokenizer& tokenizer, int k, double temperature,
                                       int max_len, std::uint64_t seed);

// Mean correctness of the verdicts.
double pass_rate(std::span<const Trajectory> trajectories);

// Routing on the K-shot pass rate: 1 -> drop, (0,1) -> self-distill,
// 0 -> ask the expert. Throws OutOfRange outside [0, 1].
Category categorize(double rate);

// Uniformly random choice among the correct trajectories.
std::string select_self(std::span<const Trajectory> trajectories, Rng& rng);

// Queries the provider up to retry_budget times, verifying each response;
// throws ExpertExhausted when no attempt verifies.
std::string request_expert(ExpertProvider& provider, const Prompt& prompt, int retry_budget);

// Question-type filter applied uniformly to both sources: every true/false
// record is removed, multiple-choice records with pass rate below 0.5 are
// removed, free-form records are kept. Order is preserved.
std::vector<CurationRecord> apply_type_filter(std::vector<CurationRecord> records);

struct CurationConfig {
  int k = 8;
  double temperature = 1.0;
  int retry_budget = 3;
  int max_len = 256;
  std::uint64_t seed = 1;
};

struct CurationSummary {
  int total_prompts = 0;
  int drop_perfect = 0;
  int self_distilled = 0;     // records from partially solved prompts
  int expert_records = 0;     // records from fully failed prompts
  int expert_exhausted = 0;   // prompts skipped after the retry budget
  int filtered_out = 0;       // records removed by the type filter
  int final_records = 0;
  int final_by_type[3] = {0, 0, 0};  // indexed by QuestionType
  int final_self = 0;
  int final_expert = 0;
};

// Full curation pass over a pool: K-shot sampling, routing, expert calls,
// type filter. Records are ordered by prompt_id so serialization is
// deterministic.
std::pair<std::vector<CurationRecord>, CurationSummary> curate_records(
    const PolicyParams& params, std::span<const Prompt> pool, const Tokenizer& tokenizer,
    ExpertProvider& provider, const CurationConfig& config);

std::string format_summary(const CurationSummary& summary);

// Line-delimited tab-separated records: prompt_id, question_type, source,
// pass_rate (6 decimals), ground_truth, prompt_text, trajectory_text with
// inner newlines escaped as \n. UTF-8 throughout.
void write_sft_dataset(const std::string& path, std::span<const CurationRecord> records);
std::vector<CurationRecord> read_sft_dataset(const std::string& path);

}  // namespace rise
