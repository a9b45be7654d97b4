#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rise/common.hpp"

namespace rise {

struct InvalidMix : std::invalid_argument {
  explicit InvalidMix(const std::string& msg) : std::invalid_argument(msg) {}
};

enum class QuestionType { FreeForm, MultipleChoice, TrueFalse };
enum class Tier { Easy, Hard };
enum class OperandRange { SingleDigit, DoubleDigit, Mixed };

std::string to_string(QuestionType t);
std::string to_string(Tier t);
QuestionType question_type_from_string(std::string_view s);
Tier tier_from_string(std::string_view s);

// One verifiable question. The policy never reads question_text; it reads
// prompt_features, a fixed-dimension 0/1 encoding of the question.
struct Prompt {
  std::string prompt_id;
  QuestionType question_type = QuestionType::FreeForm;
  std::string question_text;
  std::string ground_truth;
  Tier difficulty_tier = Tier::Easy;
  std::vector<double> prompt_features;
};

// Feature layout: [question type one-hot (3) | op one-hot (2) |
// units-digit pair one-hot (100) | tens-digit pair one-hot (100)].
inline constexpr int kPromptFeatureDim = 205;

// Fixed response vocabulary. Indices are stable; the begin marker and the
// terminator have no visible text form (they detokenize to "").
class Tokenizer {
 public:
  Tokenizer();

  int size() const { return static_cast<int>(forms_.size()); }
  int begin_id() const { return begin_id_; }
  int terminator_id() const { return terminator_id_; }

  // Printable name for diagnostics; equals the text form for visible symbols.
  const std::string& name(int id) const { return names_[static_cast<std::size_t>(id)]; }
  const std::string& form(int id) const { return forms_[static_cast<std::size_t>(id)]; }
  int id_of(std::string_view form) const;  // -1 when absent

  // Greedy longest-match segmentation; nullopt when some character cannot be
  // matched. detokenize(tokenize(s)) == s for every string the task family or
  // the policy can emit.
  std::optional<std::vector<int>> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> tokens) const;

 private:
  std::vector<std::string> forms_;
  std::vector<std::string> names_;
  std::vector<int> by_length_;  // visible symbol ids, longest form first
  int begin_id_ = -1;
  int terminator_id_ = -1;
};

struct TypeMix {
  double free_form = 1.0;
  double multiple_choice = 0.0;
  double true_false = 0.0;
};

// Constructs one prompt from explicit operands. Multiple-choice option order
// and the true/false assertion offset are drawn from rng.
Prompt build_prompt(std::string prompt_id, QuestionType type, Tier tier, int a, int b, char op,
                    Rng& rng);

// Deterministic synthetic pool: identical (size, range, mix, seed) yield
// byte-identical pools. Throws InvalidMix when proportions are invalid.
std::vector<Prompt> generate_pool(int size, OperandRange range, const TypeMix& mix,
                                  std::uint64_t seed);

// Shortest fully-correct response for a prompt, ending with the terminator:
//   <think> a+b=r </think><answer> $\boxed{ANS}$ </answer>
std::vector<int> ideal_trajectory(const Prompt& prompt, const Tokenizer& tokenizer);

// Line-delimited tab-separated records: prompt_id, question_type,
// question_text, ground_truth, difficulty_tier, prompt_features
// (comma-separated reals). UTF-8 throughout.
void write_pool(const std::string& path, std::span<const Prompt> pool);
std::vector<Prompt> read_pool(const std::string& path);

}  // namespace rise
