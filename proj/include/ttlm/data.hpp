#pragma once

// Word-level corpus handling in the PTB / WikiText plain-text convention:
// whitespace tokens, one <eos> appended per line, <unk> for unknown words.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ttlm {

class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::size_t kUnkIndex = 0;
  static constexpr std::size_t kEosIndex = 1;

  // Reserved tokens only.
  Vocabulary();
  // Tokens in index order; the first two must be <unk> and <eos>.
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::vector<std::size_t> counts = {});

  std::size_t size() const noexcept { return tokens_.size(); }
  // <unk> for out-of-vocabulary tokens.
  std::size_t index_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t index) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t count(std::size_t index) const { return counts_.at(index); }

  // Header line with the size, a line with the reserved tokens, then one
  // token per line in index order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens ranked by descending count, then lexicographically; at most
// max_size non-reserved entries with count >= min_count.
Vocabulary build_vocab(std::string_view train_text, std::optional<std::size_t> max_size = std::nullopt,
                       std::size_t min_count = 1);

struct TokenStream {
  std::vector<std::size_t> ids;

  std::size_t size() const noexcept { return ids.size(); }
};

TokenStream encode(std::string_view text, const Vocabulary& vocab);
std::vector<std::string> decode(const TokenStream& stream, const Vocabulary& vocab);

// rows x cols, column b holding the contiguous stream segment
// [b * rows, (b + 1) * rows). Remainder tokens are dropped.
struct BatchedStream {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> data;  // row-major

  std::size_t at(std::size_t row, std::size_t col) const { return data[row * cols + col]; }
  std::vector<std::size_t> column(std::size_t col) const;
};

BatchedStream batchify(const TokenStream& stream, std::size_t batch_size);

// Inputs are rows [start, start + length), targets the same rows shifted by one.
struct BpttWindow {
  std::size_t start = 0;
  std::size_t length = 0;

  std::vector<std::size_t> inputs(const BatchedStream& b, std::size_t col) const;
  std::vector<std::size_t> targets(const BatchedStream& b, std::size_t col) const;
};

std::vector<BpttWindow> bptt_windows(const BatchedStream& batched, std::size_t bptt_len);

struct CorpusSplits {
  Vocabulary vocab;
  TokenStream train;
  TokenStream valid;
  TokenStream test;
};

struct CorpusOptions {
  std::optional<std::size_t> max_vocab;  // non-reserved entries
  std::size_t min_count = 1;
  std::optional<std::size_t> max_train_tokens;
  std::optional<std::filesystem::path> vocab_file;  // load instead of building
};

// Locates the split file for "train", "valid" or "test" inside `dir`:
// <split>.txt, ptb.<split>.txt or wiki.<split>.tokens.
std::filesystem::path find_split_file(const std::filesystem::path& dir, std::string_view split);
std::string read_text_file(const std::filesystem::path& path);
CorpusSplits load_corpus(const std::filesystem::path& dir, const CorpusOptions& options = {});

// Seeded synthetic corpus: every word has its own next-word distribution,
// a Zipf law over a random permutation of the vocabulary. Words are named
// w0, w1, ...; lines hold `line_length` words.
struct ZipfBigramSpec {
  std::size_t vocab_size = 50;
  double exponent = 1.1;
  std::uint64_t seed = 7;
  std::size_t line_length = 20;
};

class ZipfBigramSource {
 public:
  explicit ZipfBigramSource(const ZipfBigramSpec& spec);
  // Continues the chain; successive calls produce successive text.
  std::string generate(std::size_t n_tokens);

 private:
  ZipfBigramSpec spec_;
  std::vector<std::vector<double>> cumulative_;  // per previous word
  std::uint64_t state_;
  std::size_t prev_ = 0;
  double next_uniform();
};

// exp(entropy) of the unigram distribution of the stream (natural log).
double unigram_entropy_ppl(const TokenStream& stream);

}  // namespace ttlm
