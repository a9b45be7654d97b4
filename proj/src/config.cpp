#include "rise/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace rise {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string unescape_value(std::string_view s, const std::string& where) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size()) throw ConfigError(where + ": dangling escape");
    char next = s[++i];
    if (next == 'n') {
      out += '\n';
    } else if (next == '\\') {
      out += '\\';
    } else {
      throw ConfigError(where + ": unknown escape \\" + std::string(1, next));
    }
  }
  return out;
}

template <typename T>
T parse_number(std::string_view value, const std::string& where) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(where + ": malformed number '" + std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view value, const std::string& where) {
  return parse_number<double>(value, where);
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.system_prompt = kDefaultSystemPrompt;
  return cfg;
}

RunConfig parse_config(std::string_view text, const std::string& source_name) {
  RunConfig cfg = default_config();
  std::set<std::string> seen;
  std::size_t pos = 0;
  int line_number = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_number;
    std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const std::string where = source_name + ":" + std::to_string(line_number);
    std::size_t eq = stripped.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    std::string key(trim(stripped.substr(0, eq)));
    std::string_view value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key " + key);

    if (key == "run.seed") {
      cfg.seed = parse_number<std::uint64_t>(value, where);
    } else if (key == "run.max_steps") {
      cfg.max_steps = parse_number<int>(value, where);
    } else if (key == "run.eval_every") {
      cfg.eval_every = parse_number<int>(value, where);
    } else if (key == "run.pool_path") {
      cfg.pool_path = std::string(value);
    } else if (key == "run.eval_pool_path") {
      cfg.eval_pool_path = std::string(value);
    } else if (key == "run.checkpoint_dir") {
      cfg.checkpoint_dir = std::string(value);
    } else if (key == "run.metrics_path") {
      cfg.metrics_path = std::string(value);
    } else if (key == "run.system_prompt") {
      cfg.system_prompt = unescape_value(value, where);
    } else if (key == "reward.w_fmt") {
      cfg.reward_weights.w_fmt = parse_real(value, where);
    } else if (key == "reward.w_acc") {
      cfg.reward_weights.w_acc = parse_real(value, where);
    } else if (key == "reward.w_len") {
      cfg.reward_weights.w_len = parse_real(value, where);
    } else if (key == "reward.max_len") {
      cfg.length_policy.max_len = parse_number<int>(value, where);
    } else if (key == "reward.buffer") {
      cfg.length_policy.buffer = parse_number<int>(value, where);
    } else if (key == "grpo.group_size") {
      cfg.group_size = parse_number<int>(value, where);
    } else if (key == "grpo.eps_low") {
      cfg.clip.eps_low = parse_real(value, where);
    } else if (key == "grpo.eps_high") {
      cfg.clip.eps_high = parse_real(value, where);
    } else if (key == "grpo.kl_beta") {
      cfg.clip.kl_beta = parse_real(value, where);
    } else if (key == "grpo.step_size") {
      cfg.grpo_step_size = parse_real(value, where);
    } else if (key == "grpo.batch_groups") {
      cfg.batch_groups = parse_number<int>(value, where);
    } else if (key == "grpo.oversample_cap") {
      cfg.oversample_cap = parse_number<int>(value, where);
    } else if (key == "policy.context_order") {
      cfg.context_order = parse_number<int>(value, where);
    } else if (key == "curation.k") {
      cfg.curation_k = parse_number<int>(value, where);
    } else if (key == "curation.temperature") {
      cfg.curation_temperature = parse_real(value, where);
    } else if (key == "curation.retry_budget") {
      cfg.curation_retry_budget = parse_number<int>(value, where);
    } else if (key == "curation.expert") {
      cfg.curation_expert = std::string(value);
    } else if (key == "curation.expert_url") {
      cfg.curation_expert_url = std::string(value);
    } else if (key == "sft.epochs") {
      cfg.sft.epochs = parse_number<int>(value, where);
    } else if (key == "sft.step_size") {
      cfg.sft.step_size = parse_real(value, where);
    } else if (key == "sft.batch_size") {
      cfg.sft.batch_size = parse_number<int>(value, where);
    } else if (key == "sft.shuffle_seed") {
      cfg.sft.shuffle_seed = parse_number<std::uint64_t>(value, where);
    } else {
      throw ConfigError(where + ": unknown key " + key);
    }
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

void validate_config(const RunConfig& cfg) {
  if (cfg.max_steps < 0) throw ConfigError("run.max_steps must be >= 0");
  if (cfg.eval_every < 0) throw ConfigError("run.eval_every must be >= 0");
  validate_weights(cfg.reward_weights);
  validate_length_policy(cfg.length_policy);
  validate_clip_config(cfg.clip);
  if (cfg.group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(cfg.grpo_step_size >= 0.0)) throw ConfigError("grpo.step_size must be >= 0");
  if (cfg.batch_groups < 1) throw ConfigError("grpo.batch_groups must be >= 1");
  if (cfg.oversample_cap < 1) throw ConfigError("grpo.oversample_cap must be >= 1");
  if (cfg.context_order < 1) throw ConfigError("policy.context_order must be >= 1");
  if (cfg.curation_k < 1) throw ConfigError("curation.k must be >= 1");
  if (!(cfg.curation_temperature > 0.0)) throw ConfigError("curation.temperature must be > 0");
  if (cfg.curation_retry_budget < 1) throw ConfigError("curation.retry_budget must be >= 1");
  if (cfg.curation_expert != "oracle" && cfg.curation_expert != "remote") {
    throw ConfigError("curation.expert must be 'oracle' or 'remote'");
  }
  if (cfg.curation_expert == "remote" && cfg.curation_expert_url.empty()) {
    throw ConfigError("curation.expert_url is required with curation.expert = remote");
  }
  if (cfg.sft.epochs < 1) throw ConfigError("sft.epochs must be >= 1");
  if (!(cfg.sft.step_size >= 0.0)) throw ConfigError("sft.step_size must be >= 0");
  if (cfg.sft.batch_size < 1) throw ConfigError("sft.batch_size must be >= 1");
}

CurationConfig curation_config(const RunConfig& cfg) {
  CurationConfig out;
  out.k = cfg.curation_k;
  out.temperature = cfg.curation_temperature;
  out.retry_budget = cfg.curation_retry_budget;
  out.max_len = cfg.length_policy.max_len;
  out.seed = cfg.seed;
  return out;
}

}  // namespace rise
