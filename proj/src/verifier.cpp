#include "rise/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace rise {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

bool contains_any_tag(std::string_view s) {
  return s.find(kThinkOpen) != std::string_view::npos ||
         s.find(kThinkClose) != std::string_view::npos ||
         s.find(kAnswerOpen) != std::string_view::npos ||
         s.find(kAnswerClose) != std::string_view::npos;
}

}  // namespace

FormatParse parse_format(std::string_view raw) {
  auto fail = [](FormatFailure r) {
    FormatParse p;
    p.failure_reason = r;
    return p;
  };

  const auto think_open = raw.find(kThinkOpen);
  if (think_open == std::string_view::npos) {
    // An answer tag with no think section at all still reads as out-of-order
    // when it appears before nothing; classify by what is present.
    return fail(FormatFailure::MissingThink);
  }
  const auto first_answer_open = raw.find(kAnswerOpen);
  if (first_answer_open != std::string_view::npos && first_answer_open < think_open)
    return fail(FormatFailure::OutOfOrder);
  const auto stray_close = raw.find(kThinkClose);
  if (stray_close != std::string_view::npos && stray_close < think_open)
    return fail(FormatFailure::OutOfOrder);
  if (!all_whitespace(raw.substr(0, think_open))) return fail(FormatFailure::MissingThink);

  const auto think_body_start = think_open + kThinkOpen.size();
  const auto think_close = raw.find(kThinkClose, think_body_start);
  if (think_close == std::string_view::npos) return fail(FormatFailure::Unclosed);
  const std::string_view think_text = raw.substr(think_body_start, think_close - think_body_start);
  if (contains_any_tag(think_text)) return fail(FormatFailure::OutOfOrder);

  const auto after_think = think_close + kThinkClose.size();
  const auto answer_open = raw.find(kAnswerOpen, after_think);
  if (answer_open == std::string_view::npos) return fail(FormatFailure::MissingAnswer);
  if (!all_whitespace(raw.substr(after_think, answer_open - after_think)))
    return fail(FormatFailure::TrailingContent);

  const auto answer_body_start = answer_open + kAnswerOpen.size();
  const auto answer_close = raw.find(kAnswerClose, answer_body_start);
  if (answer_close == std::string_view::npos) return fail(FormatFailure::Unclosed);
  const std::string_view answer_text = raw.substr(answer_body_start, answer_body_start == answer_close ? 0 : answer_close - answer_body_start);
  if (contains_any_tag(answer_text)) return fail(FormatFailure::OutOfOrder);

  if (!all_whitespace(raw.substr(answer_close + kAnswerClose.size())))
    return fail(FormatFailure::TrailingContent);

  FormatParse p;
  p.valid = true;
  p.think_text.assign(think_text);
  p.answer_text.assign(answer_text);
  return p;
}

Extracted extract_boxed(std::string_view answer_text) {
  constexpr std::string_view kBoxed = "\\boxed{";
  const auto start = answer_text.rfind(kBoxed);
  if (start == std::string_view::npos) return {"", ExtractError::NoBoxedAnswer};
  std::size_t i = start + kBoxed.size();
  int depth = 1;
  std::string content;
  for (; i < answer_text.size(); ++i) {
    const char c = answer_text[i];
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return {content, ExtractError::None};
    }
    content.push_back(c);
  }
  return {"", ExtractError::UnbalancedBraces};
}

double BigInt::to_double() const {
  double v = 0.0;
  for (char c : digits) v = v * 10.0 + (c - '0');
  return negative ? -v : v;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Replaces every \text{...} wrapper with its contents (brace-balanced).
std::string strip_text_wrappers(std::string s) {
  constexpr std::string_view kText = "\\text{";
  for (;;) {
    const auto pos = s.find(kText);
    if (pos == std::string::npos) return s;
    std::size_t i = pos + kText.size();
    int depth = 1;
    while (i < s.size() && depth > 0) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}') --depth;
      ++i;
    }
    if (depth != 0) return s;  // unbalanced: leave as-is, falls through to text
    const std::string inner = s.substr(pos + kText.size(), i - 1 - (pos + kText.size()));
    s = s.substr(0, pos) + inner + s.substr(i);
  }
}

// Drops commas acting as thousands separators: digit before, exactly three
// digits after, and no fourth digit following the group.
std::string strip_thousands(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) {
      const bool three = i + 3 < s.size() &&
                         std::isdigit(static_cast<unsigned char>(s[i + 1])) &&
                         std::isdigit(static_cast<unsigned char>(s[i + 2])) &&
                         std::isdigit(static_cast<unsigned char>(s[i + 3]));
      const bool fourth = i + 4 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 4]));
      if (three && !fourth) continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

// Maps U+2212 (minus sign, UTF-8 E2 88 92) to ASCII '-' so both spellings
// normalize alike.
std::string ascii_minus(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
        static_cast<unsigned char>(s[i + 1]) == 0x88 &&
        static_cast<unsigned char>(s[i + 2]) == 0x92) {
      out.push_back('-');
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

bool parse_bigint(std::string_view s, BigInt& out) {
  if (s.empty()) return false;
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  if (i >= s.size()) return false;
  std::string digits;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    digits.push_back(s[i]);
  }
  const auto nz = digits.find_first_not_of('0');
  digits = nz == std::string::npos ? "0" : digits.substr(nz);
  out.negative = neg && digits != "0";
  out.digits = digits;
  return true;
}

bool parse_ll(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_rational(std::string_view s, Rational& out) {
  // Accepted spellings: \frac{a}{b}, a/b, each with an optional leading sign.
  long long sign = 1;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    if (s[0] == '-') sign = -1;
    s.remove_prefix(1);
  }
  long long num = 0, den = 0;
  constexpr std::string_view kFrac = "\\frac{";
  if (s.substr(0, kFrac.size()) == kFrac) {
    const auto mid = s.find("}{", kFrac.size());
    if (mid == std::string_view::npos || s.back() != '}') return false;
    if (!parse_ll(s.substr(kFrac.size(), mid - kFrac.size()), num)) return false;
    if (!parse_ll(s.substr(mid + 2, s.size() - mid - 3), den)) return false;
  } else {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos) return false;
    if (!parse_ll(s.substr(0, slash), num)) return false;
    if (!parse_ll(s.substr(slash + 1), den)) return false;
  }
  if (den == 0) return false;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const long long g = std::gcd(num < 0 ? -num : num, den);
  if (g > 0) {
    num /= g;
    den /= g;
  }
  out.num = sign * num;
  out.den = den;
  return true;
}

bool parse_decimal(std::string_view s, Decimal& out) {
  if (s.empty()) return false;
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') i = 1;
  bool digits_before = false, digits_after = false, dot = false;
  std::size_t dot_pos = 0;
  for (std::size_t j = i; j < s.size(); ++j) {
    if (s[j] == '.') {
      if (dot) return false;
      dot = true;
      dot_pos = j;
    } else if (std::isdigit(static_cast<unsigned char>(s[j]))) {
      (dot ? digits_after : digits_before) = true;
    } else {
      return false;
    }
  }
  if (!dot || !(digits_before || digits_after)) return false;
  out.value = std::strtod(std::string(s).c_str(), nullptr);
  out.precision = static_cast<int>(s.size() - dot_pos - 1);
  return true;
}

bool parse_choice_set(std::string_view s, ChoiceSet& out) {
  std::set<char> letters;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    const std::string item = trim(s.substr(start, comma - start));
    if (item.size() != 1) return false;
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(item[0])));
    if (up < 'A' || up > 'E') return false;
    letters.insert(up);
    if (comma == s.size()) break;
    start = comma + 1;
  }
  if (letters.empty()) return false;
  out.letters = std::move(letters);
  return true;
}

std::string collapse_text(std::string_view s) {
  std::string out;
  bool in_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_space = !out.empty();
      continue;
    }
    if (in_space) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool numeric_value(const CanonicalAnswer& a, double& out) {
  if (const auto* i = std::get_if<BigInt>(&a.value)) {
    out = i->to_double();
    return true;
  }
  if (const auto* r = std::get_if<Rational>(&a.value)) {
    out = r->to_double();
    return true;
  }
  if (const auto* d = std::get_if<Decimal>(&a.value)) {
    out = d->value;
    return true;
  }
  return false;
}

}  // namespace

Normalized normalize_answer(std::string_view raw) {
  std::string s(raw);
  std::erase(s, '$');
  s = strip_text_wrappers(std::move(s));
  s = ascii_minus(s);
  s = trim(s);
  s = strip_thousands(s);

  // Trailing unit markers: degree (U+00B0) is dropped, percent scales by 0.01.
  bool percent = false;
  if (!s.empty() && s.back() == '%') {
    percent = true;
    s.pop_back();
    s = trim(s);
  } else if (s.size() >= 2 && static_cast<unsigned char>(s[s.size() - 2]) == 0xC2 &&
             static_cast<unsigned char>(s[s.size() - 1]) == 0xB0) {
    s.resize(s.size() - 2);
    s = trim(s);
  }

  if (s.empty()) return {CanonicalAnswer{}, NormalizeError::EmptyAnswer};

  BigInt i;
  if (parse_bigint(s, i)) {
    if (percent) {
      Decimal d{i.to_double() * 0.01, 2};
      return {CanonicalAnswer{d}, NormalizeError::None};
    }
    return {CanonicalAnswer{i}, NormalizeError::None};
  }
  Rational r;
  if (parse_rational(s, r)) {
    if (percent) {
      Decimal d{r.to_double() * 0.01, 2};
      return {CanonicalAnswer{d}, NormalizeError::None};
    }
    return {CanonicalAnswer{r}, NormalizeError::None};
  }
  Decimal d;
  if (parse_decimal(s, d)) {
    if (percent) {
      d.value *= 0.01;
      d.precision += 2;
    }
    return {CanonicalAnswer{d}, NormalizeError::None};
  }
  ChoiceSet c;
  if (parse_choice_set(s, c)) return {CanonicalAnswer{c}, NormalizeError::None};

  TextAnswer t{collapse_text(s)};
  if (t.text.empty()) return {CanonicalAnswer{}, NormalizeError::EmptyAnswer};
  return {CanonicalAnswer{t}, NormalizeError::None};
}

namespace {

constexpr double kNumericTolerance = 1e-6;

// Attempts to read a normalized text answer as a number (used for
// numeric-vs-text comparisons, e.g. Integer(4) vs Text("4 apples") -> false
// but Integer(4) vs Text("4") via re-parse -> true).
bool text_as_number(const TextAnswer& t, double& out) {
  BigInt i;
  if (parse_bigint(t.text, i)) {
    out = i.to_double();
    return true;
  }
  Rational r;
  if (parse_rational(t.text, r)) {
    out = r.to_double();
    return true;
  }
  Decimal d;
  if (parse_decimal(t.text, d)) {
    out = d.value;
    return true;
  }
  return false;
}

}  // namespace

bool is_equal(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  // Exact same-variant comparisons first.
  if (a.value.index() == b.value.index()) {
    if (const auto* ia = std::get_if<BigInt>(&a.value)) return *ia == std::get<BigInt>(b.value);
    if (const auto* ra = std::get_if<Rational>(&a.value)) return *ra == std::get<Rational>(b.value);
    if (const auto* da = std::get_if<Decimal>(&a.value))
      return std::fabs(da->value - std::get<Decimal>(b.value).value) <= kNumericTolerance;
    if (const auto* ca = std::get_if<ChoiceSet>(&a.value)) return *ca == std::get<ChoiceSet>(b.value);
    return std::get<TextAnswer>(a.value) == std::get<TextAnswer>(b.value);
  }

  // Cross-variant numeric comparison at absolute tolerance.
  double va = 0.0, vb = 0.0;
  const bool na = numeric_value(a, va);
  const bool nb = numeric_value(b, vb);
  if (na && nb) return std::fabs(va - vb) <= kNumericTolerance;

  // Numeric vs text: try to parse the text side as a number.
  if (na || nb) {
    const auto* t = na ? std::get_if<TextAnswer>(&b.value) : std::get_if<TextAnswer>(&a.value);
    if (t == nullptr) return false;  // numeric vs choice set
    double vt = 0.0;
    if (!text_as_number(*t, vt)) return false;
    return std::fabs((na ? va : vb) - vt) <= kNumericTolerance;
  }
  return false;  // choice set vs text
}

Verdict verify(std::string_view raw_text, std::string_view ground_truth) {
  Verdict v;
  const FormatParse parse = parse_format(raw_text);
  v.format_ok = parse.valid;
  if (!v.format_ok) return v;

  const Extracted boxed = extract_boxed(parse.answer_text);
  if (!boxed.ok()) return v;
  const Normalized candidate = normalize_answer(boxed.value);
  if (!candidate.ok()) return v;
  v.answer_found = true;

  const Normalized truth = normalize_answer(ground_truth);
  if (!truth.ok()) return v;
  v.correct = is_equal(truth.answer, candidate.answer);
  return v;
}

}  // namespace rise
