#include "rise/curation.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <httplib.h>

#include "rise/common.hpp"

namespace rise {

const std::string kDefaultSystemPrompt =
    "Solve the question. The user asks a question, and you solves it. You first \n"
    "thinks about the reasoning process in the mind and then provides the user \n"
    "with the answer. The answer is in latex format and wrapped in $...$. The \n"
    "final answer must be wrapped using the \\\\boxed{} command. The reasoning \n"
    "process and answer are enclosed within <think> </think> and <answer> \n"
    "</answer> tags, respectively, i.e., <think> Since $1+1=2$, so the answer \n"
    "is $2$. </think><answer> The answer is $\\\\boxed{2}$ </answer>, which \n"
    "means assistant's output should start with <think> and end with </answer>.";

std::string to_string(RecordSource s) {
  return s == RecordSource::SelfDistilled ? "self_distilled" : "expert";
}

RecordSource record_source_from_string(std::string_view s) {
  if (s == "self_distilled") return RecordSource::SelfDistilled;
  if (s == "expert") return RecordSource::Expert;
  throw DataError("unknown record source: " + std::string(s));
}

std::string OracleExpert::generate(const Prompt& prompt, int /*attempt*/) {
  return tokenizer_.detokenize(ideal_trajectory(prompt, tokenizer_));
}

RemoteExpert::RemoteExpert(std::string base_url, std::string system_prompt)
    : base_url_(std::move(base_url)), system_prompt_(std::move(system_prompt)) {
  if (base_url_.empty()) throw ConfigError("remote expert requires a base URL");
}

std::string RemoteExpert::generate(const Prompt& prompt, int /*attempt*/) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(30, 0);
  std::string body = system_prompt_ + "\n\n" + prompt.question_text;
  auto res = client.Post("/expert", body, "text/plain; charset=utf-8");
  if (!res || res->status != 200) return "";  // counts as a failed attempt
  return res->body;
}

namespace {

KShotSample sample_one(const PolicyParams& params, const Prompt& prompt,
                       const Tokenizer& tokenizer, int k, double temperature, int max_len,
                       std::uint64_t seed) {
  KShotSample out;
  out.trajectories.reserve(static_cast<std::size_t>(k));
  int correct = 0;
  for (int draw = 0; draw < k; ++draw) {
    Rng rng = stream_rng(seed, prompt.prompt_id, static_cast<std::uint64_t>(draw));
    Trajectory t = sample_trajectory(params, prompt, tokenizer, temperature, max_len, rng);
    t.verdict = verify(t.text, prompt.ground_truth);
    if (t.verdict.correct) ++correct;
    out.trajectories.push_back(std::move(t));
  }
  out.pass_rate = k > 0 ? static_cast<double>(correct) / static_cast<double>(k) : 0.0;
  return out;
}

}  // namespace

std::vector<KShotSample> k_shot_sample(const PolicyParams& params, std::span<const Prompt> pool,
                                       const Tokenizer& tokenizer, int k, double temperature,
                                       int max_len, std::uint64_t seed) {
  if (k < 1) throw ConfigError("k_shot_sample requires k >= 1");
  if (temperature <= 0.0) throw ConfigError("k_shot_sample requires temperature > 0");
  std::vector<KShotSample> out;
  out.reserve(pool.size());
  for (const Prompt& prompt : pool) {
    out.push_back(sample_one(params, prompt, tokenizer, k, temperature, max_len, seed));
  }
  return out;
}

double pass_rate(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) return 0.0;
  int correct = 0;
  for (const Trajectory& t : trajectories) {
    if (t.verdict.correct) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(trajectories.size());
}

Category categorize(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw OutOfRange("pass rate must lie in [0, 1], got " + std::to_string(rate));
  }
  if (rate == 1.0) return Category::DropPerfect;
  if (rate == 0.0) return Category::ExpertNeeded;
  return Category::SelfDistill;
}

std::string select_self(std::span<const Trajectory> trajectories, Rng& rng) {
  std::vector<std::size_t> correct;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].verdict.correct) correct.push_back(i);
  }
  if (correct.empty()) {
    throw NoCorrectTrajectory("select_self called with no correct trajectory");
  }
  return trajectories[correct[rng.next_index(correct.size())]].text;
}

std::string request_expert(ExpertProvider& provider, const Prompt& prompt, int retry_budget) {
  if (retry_budget < 1) throw ConfigError("expert retry budget must be >= 1");
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    std::string text = provider.generate(prompt, attempt);
    if (verify(text, prompt.ground_truth).correct) return text;
  }
  throw ExpertExhausted("expert failed verification " + std::to_string(retry_budget) +
                        " times for prompt " + prompt.prompt_id);
}

std::vector<CurationRecord> apply_type_filter(std::vector<CurationRecord> records) {
  std::vector<CurationRecord> kept;
  kept.reserve(records.size());
  for (auto& r : records) {
    if (r.question_type == QuestionType::TrueFalse) continue;
    if (r.question_type == QuestionType::MultipleChoice && r.pass_rate < 0.5) continue;
    kept.push_back(std::move(r));
  }
  return kept;
}

std::pair<std::vector<CurationRecord>, CurationSummary> curate_records(
    const PolicyParams& params, std::span<const Prompt> pool, const Tokenizer& tokenizer,
    ExpertProvider& provider, const CurationConfig& config) {
  if (config.k < 1) throw ConfigError("curation.k must be >= 1");
  std::vector<const Prompt*> ordered;
  ordered.reserve(pool.size());
  for (const Prompt& p : pool) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const Prompt* a, const Prompt* b) { return a->prompt_id < b->prompt_id; });

  CurationSummary summary;
  summary.total_prompts = static_cast<int>(pool.size());
  std::vector<CurationRecord> records;
  for (const Prompt* prompt : ordered) {
    KShotSample shot = sample_one(params, *prompt, tokenizer, config.k, config.temperature,
                                  config.max_len, config.seed);
    CurationRecord record;
    record.prompt_id = prompt->prompt_id;
    record.question_type = prompt->question_type;
    record.ground_truth = prompt->ground_truth;
    record.prompt_text = prompt->question_text;
    switch (categorize(shot.pass_rate)) {
      case Category::DropPerfect:
        ++summary.drop_perfect;
        continue;
      case Category::SelfDistill: {
        Rng rng = stream_rng(config.seed, prompt->prompt_id + "/select", 0);
        record.source = RecordSource::SelfDistilled;
        record.pass_rate = shot.pass_rate;
        record.trajectory_text = select_self(shot.trajectories, rng);
        ++summary.self_distilled;
        break;
      }
      case Category::ExpertNeeded: {
        try {
          record.trajectory_text = request_expert(provider, *prompt, config.retry_budget);
        } catch (const ExpertExhausted&) {
          ++summary.expert_exhausted;
          continue;
        }
        record.source = RecordSource::Expert;
        record.pass_rate = 0.0;
        ++summary.expert_records;
        break;
      }
    }
    records.push_back(std::move(record));
  }

  std::size_t before = records.size();
  records = apply_type_filter(std::move(records));
  summary.filtered_out = static_cast<int>(before - records.size());
  summary.final_records = static_cast<int>(records.size());
  for (const auto& r : records) {
    ++summary.final_by_type[static_cast<int>(r.question_type)];
    if (r.source == RecordSource::SelfDistilled) {
      ++summary.final_self;
    } else {
      ++summary.final_expert;
    }
  }
  return {std::move(records), summary};
}

std::string format_summary(const CurationSummary& s) {
  std::ostringstream out;
  out << "prompts=" << s.total_prompts << " drop_perfect=" << s.drop_perfect
      << " self_distilled=" << s.self_distilled << " expert=" << s.expert_records
      << " expert_exhausted=" << s.expert_exhausted << "\n"
      << "type_filter_removed=" << s.filtered_out << " final=" << s.final_records << " (self="
      << s.final_self << " expert=" << s.final_expert << ")";
  for (int i = 0; i < 3; ++i) {
    out << " " << to_string(static_cast<QuestionType>(i)) << "=" << s.final_by_type[i];
  }
  return out.str();
}

namespace {

std::string escape_trajectory(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\t' || c == '\r') {
      throw DataError("trajectory text may not contain tabs or carriage returns");
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape_trajectory(const std::string& text, const std::string& path, int line) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (i + 1 >= text.size()) {
      throw DataError(path + ":" + std::to_string(line) + ": dangling escape in trajectory");
    }
    char next = text[++i];
    if (next == 'n') {
      out += '\n';
    } else if (next == '\\') {
      out += '\\';
    } else {
      throw DataError(path + ":" + std::to_string(line) + ": unknown escape \\" +
                      std::string(1, next));
    }
  }
  return out;
}

void check_plain_field(const std::string& value, const char* what) {
  if (value.find('\t') != std::string::npos || value.find('\n') != std::string::npos ||
      value.find('\r') != std::string::npos) {
    throw DataError(std::string(what) + " may not contain tabs or line breaks");
  }
}

}  // namespace

void write_sft_dataset(const std::string& path, std::span<const CurationRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open dataset file for writing: " + path);
  char rate[32];
  for (const CurationRecord& r : records) {
    check_plain_field(r.prompt_id, "prompt_id");
    check_plain_field(r.ground_truth, "ground_truth");
    check_plain_field(r.prompt_text, "prompt_text");
    std::snprintf(rate, sizeof(rate), "%.6f", r.pass_rate);
    out << r.prompt_id << '\t' << to_string(r.question_type) << '\t' << to_string(r.source)
        << '\t' << rate << '\t' << r.ground_truth << '\t' << r.prompt_text << '\t'
        << escape_trajectory(r.trajectory_text) << '\n';
  }
  out.flush();
  if (!out) throw DataError("failed writing dataset file: " + path);
}

std::vector<CurationRecord> read_sft_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<CurationRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    auto fail = [&](const std::string& why) {
      throw DataError(path + ":" + std::to_string(line_number) + ": " + why);
    };
    if (fields.size() != 7) {
      fail("expected 7 tab-separated fields, got " + std::to_string(fields.size()));
    }
    CurationRecord r;
    r.prompt_id = fields[0];
    if (r.prompt_id.empty()) fail("empty prompt_id");
    r.question_type = question_type_from_string(fields[1]);
    r.source = record_source_from_string(fields[2]);
    char* end = nullptr;
    r.pass_rate = std::strtod(fields[3].c_str(), &end);
    if (end != fields[3].c_str() + fields[3].size() || fields[3].empty()) {
      fail("malformed pass_rate: " + fields[3]);
    }
    if (!(r.pass_rate >= 0.0 && r.pass_rate <= 1.0)) fail("pass_rate outside [0, 1]");
    r.ground_truth = fields[4];
    r.prompt_text = fields[5];
    r.trajectory_text = unescape_trajectory(fields[6], path, line_number);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace rise
