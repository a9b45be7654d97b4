#pragma once

#include <set>
#include <string>
#include <string_view>
#include <variant>

namespace rise {

// Rule-based answer checking: parse the response shape, pull out the final
// \boxed{...} value, normalize both sides to a canonical form, and compare.

enum class FormatFailure {
  None,
  MissingThink,     // no <think> section where one is required
  MissingAnswer,    // no <answer> section after the think span
  OutOfOrder,       // tags present but in the wrong order / repeated
  Unclosed,         // an opened tag never closes
  TrailingContent,  // non-whitespace where only whitespace is allowed
};

struct FormatParse {
  bool valid = false;
  std::string think_text;   // verbatim span contents, whitespace preserved
  std::string answer_text;  // verbatim span contents, whitespace preserved
  FormatFailure failure_reason = FormatFailure::None;
};

// Accepts exactly: optional whitespace, <think>...</think>, optional
// whitespace, <answer>...</answer>, optional trailing whitespace.
// No nesting, no repeated tags. Never throws.
FormatParse parse_format(std::string_view raw);

enum class ExtractError { None, NoBoxedAnswer, UnbalancedBraces };

struct Extracted {
  std::string value;
  ExtractError error = ExtractError::None;
  bool ok() const { return error == ExtractError::None; }
};

// Returns the contents of the last \boxed{...} in the text. Nested braces are
// tracked by depth counting; surrounding $ delimiters are irrelevant.
Extracted extract_boxed(std::string_view answer_text);

// Arbitrary-precision signed integer kept as a canonical digit string
// (no leading zeros; zero is {false, "0"}). Exact comparison via operator==.
struct BigInt {
  bool negative = false;
  std::string digits = "0";
  bool operator==(const BigInt&) const = default;
  double to_double() const;
};

struct Rational {  // fully reduced, den > 0
  long long num = 0;
  long long den = 1;
  bool operator==(const Rational&) const = default;
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct Decimal {  // value plus the number of recorded fraction digits
  double value = 0.0;
  int precision = 0;
  bool operator==(const Decimal&) const = default;
};

struct ChoiceSet {  // sorted uppercase letters A-E
  std::set<char> letters;
  bool operator==(const ChoiceSet&) const = default;
};

struct TextAnswer {  // lowercased, whitespace-collapsed
  std::string text;
  bool operator==(const TextAnswer&) const = default;
};

struct CanonicalAnswer {
  std::variant<BigInt, Rational, Decimal, ChoiceSet, TextAnswer> value;
};

enum class NormalizeError { None, EmptyAnswer };

struct Normalized {
  CanonicalAnswer answer;
  NormalizeError error = NormalizeError::None;
  bool ok() const { return error == NormalizeError::None; }
};

// Strips $ signs, \text{...} wrappers, outer whitespace, thousands separators
// inside digit groups, and a single trailing degree/percent marker (percent
// scales the value by 0.01). Classification precedence: integer, rational
// (\frac{a}{b} or a/b), decimal, choice set (comma-separated letters A-E),
// free text (lowercased, whitespace collapsed).
Normalized normalize_answer(std::string_view raw);

// Symmetric equality. Same-variant numeric comparison is exact for
// integer/rational pairs; any comparison that involves a decimal uses absolute
// tolerance 1e-6, as does cross-variant numeric comparison. A numeric-vs-text
// pair attempts a numeric parse of the text side before failing to false.
bool is_equal(const CanonicalAnswer& a, const CanonicalAnswer& b);

struct Verdict {
  bool format_ok = false;
  bool answer_found = false;  // implies format_ok
  bool correct = false;       // implies answer_found
};

// Full chain: parse -> extract -> normalize -> compare against the normalized
// ground truth. The three flags are monotone: correct => answer_found =>
// format_ok. Never throws.
Verdict verify(std::string_view raw_text, std::string_view ground_truth);

}  // namespace rise
