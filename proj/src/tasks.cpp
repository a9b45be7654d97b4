#include "rise/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rise {

std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::FreeForm: return "FreeForm";
    case QuestionType::MultipleChoice: return "MultipleChoice";
    case QuestionType::TrueFalse: return "TrueFalse";
  }
  return "FreeForm";
}

std::string to_string(Tier t) { return t == Tier::Easy ? "Easy" : "Hard"; }

QuestionType question_type_from_string(std::string_view s) {
  if (s == "FreeForm") return QuestionType::FreeForm;
  if (s == "MultipleChoice") return QuestionType::MultipleChoice;
  if (s == "TrueFalse") return QuestionType::TrueFalse;
  throw DataError("unknown question type: " + std::string(s));
}

Tier tier_from_string(std::string_view s) {
  if (s == "Easy") return Tier::Easy;
  if (s == "Hard") return Tier::Hard;
  throw DataError("unknown difficulty tier: " + std::string(s));
}

Tokenizer::Tokenizer() {
  auto add = [this](std::string form, std::string name) {
    forms_.push_back(std::move(form));
    names_.push_back(std::move(name));
  };
  add("<think>", "<think>");
  add("</think>", "</think>");
  add("<answer>", "<answer>");
  add("</answer>", "</answer>");
  terminator_id_ = size();
  add("", "<eot>");
  add("\\boxed{", "\\boxed{");
  add("}", "}");
  add("$", "$");
  for (char d = '0'; d <= '9'; ++d) add(std::string(1, d), std::string(1, d));
  add("-", "-");
  add("+", "+");
  add("=", "=");
  add(" ", "<sp>");
  begin_id_ = size();
  add("", "<bos>");
  for (char c = 'A'; c <= 'E'; ++c) add(std::string(1, c), std::string(1, c));
  add("True", "True");
  add("False", "False");

  for (int i = 0; i < size(); ++i)
    if (!forms_[static_cast<std::size_t>(i)].empty()) by_length_.push_back(i);
  std::stable_sort(by_length_.begin(), by_length_.end(), [this](int a, int b) {
    return forms_[static_cast<std::size_t>(a)].size() > forms_[static_cast<std::size_t>(b)].size();
  });
}

int Tokenizer::id_of(std::string_view form) const {
  for (int i = 0; i < size(); ++i)
    if (forms_[static_cast<std::size_t>(i)] == form && !form.empty()) return i;
  return -1;
}

std::optional<std::vector<int>> Tokenizer::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int matched = -1;
    for (int id : by_length_) {
      const std::string& f = forms_[static_cast<std::size_t>(id)];
      if (text.compare(pos, f.size(), f) == 0) {
        matched = id;
        pos += f.size();
        break;
      }
    }
    if (matched < 0) return std::nullopt;
    out.push_back(matched);
  }
  return out;
}

std::string Tokenizer::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) out += forms_[static_cast<std::size_t>(t)];
  return out;
}

namespace {

int apply_op(int a, int b, char op) { return op == '+' ? a + b : a - b; }

std::vector<double> encode_features(QuestionType type, int a, int b, char op) {
  std::vector<double> f(kPromptFeatureDim, 0.0);
  f[static_cast<std::size_t>(type)] = 1.0;
  f[3 + (op == '+' ? 0 : 1)] = 1.0;
  f[5 + (a % 10) * 10 + (b % 10)] = 1.0;
  f[105 + (a / 10) * 10 + (b / 10)] = 1.0;
  return f;
}

}  // namespace

Prompt build_prompt(std::string prompt_id, QuestionType type, Tier tier, int a, int b, char op,
                    Rng& rng) {
  Prompt p;
  p.prompt_id = std::move(prompt_id);
  p.question_type = type;
  p.difficulty_tier = tier;
  p.prompt_features = encode_features(type, a, b, op);
  const int result = apply_op(a, b, op);
  const std::string expr = std::to_string(a) + op + std::to_string(b);

  switch (type) {
    case QuestionType::FreeForm: {
      p.question_text = "What is " + expr + "?";
      p.ground_truth = std::to_string(result);
      break;
    }
    case QuestionType::MultipleChoice: {
      // Distractors are result +/-1 and +/-2; three of the four are kept.
      std::vector<int> distractors = {result - 2, result - 1, result + 1, result + 2};
      deterministic_shuffle(distractors, rng);
      std::vector<int> options = {result, distractors[0], distractors[1], distractors[2]};
      deterministic_shuffle(options, rng);
      std::string text = "What is " + expr + "? Options:";
      char answer_letter = 'A';
      for (std::size_t i = 0; i < options.size(); ++i) {
        const char letter = static_cast<char>('A' + i);
        text += " (" + std::string(1, letter) + ") " + std::to_string(options[i]);
        if (options[i] == result) answer_letter = letter;
      }
      p.question_text = text;
      p.ground_truth = std::string(1, answer_letter);
      break;
    }
    case QuestionType::TrueFalse: {
      const bool truth = rng.next_index(2) == 0;
      int shown = result;
      if (!truth) {
        const int deltas[4] = {-2, -1, 1, 2};
        shown = result + deltas[rng.next_index(4)];
      }
      p.question_text = "True or False: " + expr + "=" + std::to_string(shown) + ".";
      p.ground_truth = truth ? "True" : "False";
      break;
    }
  }
  return p;
}

namespace {

void validate_mix(const TypeMix& mix) {
  if (mix.free_form < 0 || mix.multiple_choice < 0 || mix.true_false < 0)
    throw InvalidMix("type mix proportions must be non-negative");
  const double sum = mix.free_form + mix.multiple_choice + mix.true_false;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw InvalidMix("type mix proportions must sum to 1, got " + std::to_string(sum));
}

// Operand sampling keeps every answer within the template's shape: easy
// answers are one or two tokens, hard answers exactly two digits (sums capped
// at 99, differences at least 10), so the linear policy can represent them.
void sample_operands(Tier tier, char op, Rng& rng, int& a, int& b) {
  if (tier == Tier::Easy) {
    a = static_cast<int>(rng.next_index(10));
    b = static_cast<int>(rng.next_index(10));
    return;
  }
  if (op == '+') {
    a = 10 + static_cast<int>(rng.next_index(80));       // 10..89
    b = 10 + static_cast<int>(rng.next_index(90 - a));   // 10..99-a
  } else {
    a = 20 + static_cast<int>(rng.next_index(80));       // 20..99
    b = 10 + static_cast<int>(rng.next_index(a - 19));   // 10..a-10
  }
}

}  // namespace

std::vector<Prompt> generate_pool(int size, OperandRange range, const TypeMix& mix,
                                  std::uint64_t seed) {
  validate_mix(mix);
  if (size < 0) throw InvalidMix("pool size must be non-negative");
  std::vector<Prompt> pool;
  pool.reserve(static_cast<std::size_t>(size));
  Rng rng = stream_rng(seed, "pool", 0);
  for (int i = 0; i < size; ++i) {
    const double u = rng.next_double();
    QuestionType type = QuestionType::TrueFalse;
    if (u < mix.free_form)
      type = QuestionType::FreeForm;
    else if (u < mix.free_form + mix.multiple_choice)
      type = QuestionType::MultipleChoice;

    Tier tier = Tier::Easy;
    if (range == OperandRange::DoubleDigit)
      tier = Tier::Hard;
    else if (range == OperandRange::Mixed)
      tier = rng.next_index(2) == 0 ? Tier::Easy : Tier::Hard;

    const char op = rng.next_index(2) == 0 ? '+' : '-';
    int a = 0, b = 0;
    sample_operands(tier, op, rng, a, b);

    char id[32];
    std::snprintf(id, sizeof id, "s%llu-q%06d", static_cast<unsigned long long>(seed), i);
    pool.push_back(build_prompt(id, type, tier, a, b, op, rng));
  }
  return pool;
}

namespace {

// Recovers (a, b, op) from the feature encoding so downstream code never
// parses question text.
void decode_operands(const Prompt& p, int& a, int& b, char& op) {
  op = p.prompt_features[3] > 0.5 ? '+' : '-';
  int units = 0, tens = 0;
  for (int i = 0; i < 100; ++i) {
    if (p.prompt_features[static_cast<std::size_t>(5 + i)] > 0.5) units = i;
    if (p.prompt_features[static_cast<std::size_t>(105 + i)] > 0.5) tens = i;
  }
  a = (tens / 10) * 10 + units / 10;
  b = (tens % 10) * 10 + units % 10;
}

}  // namespace

std::vector<int> ideal_trajectory(const Prompt& prompt, const Tokenizer& tokenizer) {
  int a = 0, b = 0;
  char op = '+';
  decode_operands(prompt, a, b, op);
  const int result = apply_op(a, b, op);

  std::string boxed;
  switch (prompt.question_type) {
    case QuestionType::FreeForm: boxed = std::to_string(result); break;
    case QuestionType::MultipleChoice: boxed = prompt.ground_truth; break;
    case QuestionType::TrueFalse: boxed = prompt.ground_truth; break;
  }
  const std::string text = "<think> " + std::to_string(a) + op + std::to_string(b) + "=" +
                           std::to_string(result) + " </think><answer> $\\boxed{" + boxed +
                           "}$ </answer>";
  auto tokens = tokenizer.tokenize(text);
  if (!tokens) throw DataError("ideal trajectory failed to tokenize: " + text);
  tokens->push_back(tokenizer.terminator_id());
  return *tokens;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void check_field(const std::string& f, const char* what) {
  if (f.find('\t') != std::string::npos || f.find('\n') != std::string::npos)
    throw DataError(std::string("pool field contains a separator: ") + what);
}

}  // namespace

void write_pool(const std::string& path, std::span<const Prompt> pool) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open pool file for writing: " + path);
  for (const Prompt& p : pool) {
    check_field(p.prompt_id, "prompt_id");
    check_field(p.question_text, "question_text");
    check_field(p.ground_truth, "ground_truth");
    out << p.prompt_id << '\t' << to_string(p.question_type) << '\t' << p.question_text << '\t'
        << p.ground_truth << '\t' << to_string(p.difficulty_tier) << '\t';
    for (std::size_t i = 0; i < p.prompt_features.size(); ++i) {
      if (i) out << ',';
      out << format_double(p.prompt_features[i]);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing pool file: " + path);
}

std::vector<Prompt> read_pool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PoolNotFound(path);
  std::vector<Prompt> pool;
  std::string line;
  int line_no = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 6)
      throw DataError("pool record at " + path + ":" + std::to_string(line_no) +
                      " has " + std::to_string(fields.size()) + " fields, expected 6");
    Prompt p;
    p.prompt_id = fields[0];
    p.question_type = question_type_from_string(fields[1]);
    p.question_text = fields[2];
    p.ground_truth = fields[3];
    p.difficulty_tier = tier_from_string(fields[4]);
    for (const std::string& tok : split(fields[5], ',')) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str())
        throw DataError("bad feature value at " + path + ":" + std::to_string(line_no));
      p.prompt_features.push_back(v);
    }
    if (feature_dim == 0) feature_dim = p.prompt_features.size();
    if (p.prompt_features.size() != feature_dim)
      throw DataError("inconsistent feature dimension at " + path + ":" + std::to_string(line_no));
    pool.push_back(std::move(p));
  }
  return pool;
}

}  // namespace rise
