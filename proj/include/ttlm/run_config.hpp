#pragma once

// Line-oriented key=value run configuration: model, training and path
// settings merged from a config file and command-line overrides.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttlm/model.hpp"
#include "ttlm/trainer.hpp"

namespace ttlm {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path corpus_dir;
  std::optional<std::filesystem::path> vocab_file;
  std::filesystem::path run_dir = "runs/default";
  std::optional<std::filesystem::path> metrics_path;  // default: <run_dir>/metrics.log
  std::optional<std::size_t> max_vocab;
  std::size_t min_count = 1;
  std::optional<std::size_t> max_train_tokens;

  // Applies one setting; unknown keys and malformed values raise ConfigError.
  // Setting `kind` resets the activation to that kind's default unless an
  // explicit `activation` is given.
  void set(std::string_view key, std::string_view value);

  // '#' starts a comment; blank lines are ignored.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Every key with its effective value, one per line, in a fixed order.
  // parse(to_text()) reproduces this config.
  std::string to_text() const;

  // Model config with the activation override applied and the given vocab.
  ModelConfig model_config(std::size_t vocab) const;

  std::filesystem::path checkpoint_path() const { return run_dir / "best.ckpt"; }
  std::filesystem::path metrics_log_path() const { return metrics_path.value_or(run_dir / "metrics.log"); }
  std::filesystem::path timing_log_path() const { return run_dir / "timing.log"; }
  std::filesystem::path resolved_config_path() const { return run_dir / "resolved.cfg"; }
  std::filesystem::path vocab_echo_path() const { return run_dir / "vocab.txt"; }
};

const std::vector<std::string>& run_config_keys();

}  // namespace ttlm
