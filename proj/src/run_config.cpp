#include "ttlm/run_config.hpp"

#include <fmt/format.h>

#include <cerrno>
#include <charconv>
#include <cstdlib>

#include "ttlm/data.hpp"
#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(fmt::format("{} expects a non-negative integer, got '{}'", key, v));
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError(fmt::format("{} expects a number, got '{}'", key, v));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(fmt::format("{} expects true or false, got '{}'", key, v));
}

std::optional<std::size_t> parse_optional_size(std::string_view key, std::string_view v) {
  if (v == "none" || v.empty()) return std::nullopt;
  return parse_size(key, v);
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "kind",       "activation",     "rank",       "embed",         "tie_weights",     "zero_init_hidden",
      "seed",       "epochs",         "lr",         "anneal_factor", "clip_norm",       "batch_size",
      "bptt_len",   "eval_batch_size", "eval_interval", "corpus_dir",  "vocab_file",      "run_dir",
      "metrics_path", "max_vocab",    "min_count",  "max_train_tokens"};
  return keys;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "kind") {
    model.kind = CellKind::with_default_activation(parse_cell_tag(value));
  } else if (key == "activation") {
    train.activation = parse_activation(value);
  } else if (key == "rank" || key == "hidden") {
    model.hidden = parse_size(key, value);
  } else if (key == "embed") {
    model.embed = parse_size(key, value);
  } else if (key == "tie_weights") {
    model.tie_weights = parse_bool(key, value);
  } else if (key == "zero_init_hidden") {
    model.zero_init_hidden = parse_bool(key, value);
  } else if (key == "seed") {
    model.seed = parse_size(key, value);
    train.seed = model.seed;
  } else if (key == "epochs") {
    train.epochs = parse_size(key, value);
  } else if (key == "lr") {
    train.lr = parse_double(key, value);
  } else if (key == "anneal_factor") {
    train.anneal_factor = parse_double(key, value);
  } else if (key == "clip_norm") {
    train.clip_norm = parse_double(key, value);
  } else if (key == "batch_size") {
    train.batch_size = parse_size(key, value);
  } else if (key == "bptt_len") {
    train.bptt_len = parse_size(key, value);
  } else if (key == "eval_batch_size") {
    train.eval_batch_size = parse_size(key, value);
  } else if (key == "eval_interval") {
    train.eval_interval = parse_size(key, value);
  } else if (key == "corpus_dir") {
    corpus_dir = std::filesystem::path(std::string(value));
  } else if (key == "vocab_file") {
    vocab_file = value.empty() || value == "none" ? std::nullopt
                                                  : std::optional<std::filesystem::path>(std::string(value));
  } else if (key == "run_dir") {
    if (value.empty()) throw ConfigError("run_dir must not be empty");
    run_dir = std::filesystem::path(std::string(value));
  } else if (key == "metrics_path") {
    metrics_path = value.empty() || value == "none" ? std::nullopt
                                                    : std::optional<std::filesystem::path>(std::string(value));
  } else if (key == "max_vocab") {
    max_vocab = parse_optional_size(key, value);
  } else if (key == "min_count") {
    min_count = parse_size(key, value);
  } else if (key == "max_train_tokens") {
    max_train_tokens = parse_optional_size(key, value);
  } else {
    throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("config line {}: expected key=value", line_no));
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config line {}: {}", line_no, e.what()));
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return parse(read_text_file(path));
}

ModelConfig RunConfig::model_config(std::size_t vocab) const {
  ModelConfig m = model;
  if (train.activation) m.kind.activation = *train.activation;
  m.vocab = vocab;
  return m;
}

std::string RunConfig::to_text() const {
  const Activation act = train.activation.value_or(model.kind.activation);
  const std::size_t embed = model.embed ? model.embed : model.hidden * model.hidden;
  auto opt = [](const auto& o) { return o ? fmt::format("{}", *o) : std::string("none"); };
  auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? p->string() : std::string("none"); };
  std::string out;
  out += fmt::format("kind={}\n", to_string(model.kind.tag));
  out += fmt::format("activation={}\n", to_string(act));
  out += fmt::format("rank={}\n", model.hidden);
  out += fmt::format("embed={}\n", embed);
  out += fmt::format("tie_weights={}\n", model.tie_weights);
  out += fmt::format("zero_init_hidden={}\n", model.zero_init_hidden);
  out += fmt::format("seed={}\n", model.seed);
  out += fmt::format("epochs={}\n", train.epochs);
  out += fmt::format("lr={}\n", train.lr);
  out += fmt::format("anneal_factor={}\n", train.anneal_factor);
  out += fmt::format("clip_norm={}\n", train.clip_norm);
  out += fmt::format("batch_size={}\n", train.batch_size);
  out += fmt::format("bptt_len={}\n", train.bptt_len);
  out += fmt::format("eval_batch_size={}\n", train.eval_batch_size);
  out += fmt::format("eval_interval={}\n", train.eval_interval);
  out += fmt::format("corpus_dir={}\n", corpus_dir.string());
  out += fmt::format("vocab_file={}\n", opt_path(vocab_file));
  out += fmt::format("run_dir={}\n", run_dir.string());
  out += fmt::format("metrics_path={}\n", opt_path(metrics_path));
  out += fmt::format("max_vocab={}\n", opt(max_vocab));
  out += fmt::format("min_count={}\n", min_count);
  out += fmt::format("max_train_tokens={}\n", opt(max_train_tokens));
  return out;
}

}  // namespace ttlm
