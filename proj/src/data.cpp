#include "ttlm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ttlm/errors.hpp"

namespace ttlm {

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    fn(text.substr(pos, end - pos));
    pos = end + 1;
  }
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

template <typename Fn>
void for_each_word(std::string_view line, Fn&& fn) {
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) fn(line.substr(i, j - i));
    i = j;
  }
}

// Blank lines carry no <eos>, matching the common PTB / WikiText readers
// that skip empty lines.
bool has_words(std::string_view line) {
  return std::any_of(line.begin(), line.end(), [](char c) { return !is_space(c); });
}

}  // namespace

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kUnk), std::string(kEos)};
  counts_ = {0, 0};
  index_ = {{tokens_[0], 0}, {tokens_[1], 1}};
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::vector<std::size_t> counts) {
  if (tokens.size() < 2 || tokens[0] != kUnk || tokens[1] != kEos) {
    throw DataError("vocabulary must start with the reserved tokens <unk> and <eos>");
  }
  if (counts.empty()) counts.assign(tokens.size(), 0);
  if (counts.size() != tokens.size()) throw DataError("vocabulary counts do not match its tokens");
  Vocabulary v;
  v.index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw DataError("vocabulary contains an empty token at index " + std::to_string(i));
    if (!v.index_.emplace(tokens[i], i).second) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
  }
  v.tokens_ = std::move(tokens);
  v.counts_ = std::move(counts);
  return v;
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkIndex : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocabulary::token(std::size_t index) const {
  if (index >= tokens_.size()) {
    throw IndexError("token index " + std::to_string(index) + " out of range for vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[index];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  out << tokens_.size() << '\n' << kUnk << ' ' << kEos << '\n';
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw DataError("failed writing vocabulary file " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocabulary file " + path.string() + " is empty");
  std::size_t expected = 0;
  try {
    expected = std::stoull(line);
  } catch (const std::exception&) {
    throw DataError("vocabulary file " + path.string() + " has a malformed size header");
  }
  if (!std::getline(in, line)) throw DataError("vocabulary file " + path.string() + " lacks the reserved-token header");
  std::vector<std::string> reserved;
  for_each_word(line, [&](std::string_view w) { reserved.emplace_back(w); });
  if (reserved != std::vector<std::string>{std::string(kUnk), std::string(kEos)}) {
    throw DataError("vocabulary file " + path.string() + " has unexpected reserved tokens");
  }
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (tokens.size() != expected) {
    throw DataError("vocabulary file " + path.string() + " declares " + std::to_string(expected) + " tokens but lists " +
                    std::to_string(tokens.size()));
  }
  return from_tokens(std::move(tokens));
}

Vocabulary build_vocab(std::string_view train_text, std::optional<std::size_t> max_size, std::size_t min_count) {
  std::map<std::string, std::size_t, std::less<>> counts;
  std::size_t lines = 0;
  std::size_t unk = 0;
  for_each_line(train_text, [&](std::string_view line) {
    if (!has_words(line)) return;
    ++lines;
    for_each_word(line, [&](std::string_view w) {
      if (w == Vocabulary::kUnk) {
        ++unk;
      } else if (w != Vocabulary::kEos) {
        ++counts[std::string(w)];
      }
    });
  });
  if (lines == 0) throw DataError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(Vocabulary::kUnk), std::string(Vocabulary::kEos)};
  std::vector<std::size_t> kept_counts{unk, lines};
  for (auto& [tok, c] : ranked) {
    if (c < min_count) break;
    if (max_size && tokens.size() - 2 >= *max_size) break;
    tokens.push_back(tok);
    kept_counts.push_back(c);
  }
  return Vocabulary::from_tokens(std::move(tokens), std::move(kept_counts));
}

TokenStream encode(std::string_view text, const Vocabulary& vocab) {
  TokenStream s;
  for_each_line(text, [&](std::string_view line) {
    if (!has_words(line)) return;
    for_each_word(line, [&](std::string_view w) { s.ids.push_back(vocab.index_of(w)); });
    s.ids.push_back(Vocabulary::kEosIndex);
  });
  return s;
}

std::vector<std::string> decode(const TokenStream& stream, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(stream.size());
  for (std::size_t id : stream.ids) out.push_back(vocab.token(id));
  return out;
}

std::vector<std::size_t> BatchedStream::column(std::size_t col) const {
  if (col >= cols) throw IndexError("column " + std::to_string(col) + " out of range for " + std::to_string(cols) + " columns");
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, col);
  return out;
}

BatchedStream batchify(const TokenStream& stream, std::size_t batch_size) {
  if (batch_size == 0) throw DataError("batch_size must be at least 1");
  if (stream.size() < batch_size + 1) {
    throw DataError("stream of " + std::to_string(stream.size()) + " tokens is too short for batch_size " +
                    std::to_string(batch_size));
  }
  BatchedStream b;
  b.cols = batch_size;
  b.rows = stream.size() / batch_size;
  b.data.resize(b.rows * b.cols);
  for (std::size_t c = 0; c < b.cols; ++c) {
    for (std::size_t r = 0; r < b.rows; ++r) b.data[r * b.cols + c] = stream.ids[c * b.rows + r];
  }
  return b;
}

std::vector<std::size_t> BpttWindow::inputs(const BatchedStream& b, std::size_t col) const {
  std::vector<std::size_t> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = b.at(start + i, col);
  return out;
}

std::vector<std::size_t> BpttWindow::targets(const BatchedStream& b, std::size_t col) const {
  std::vector<std::size_t> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = b.at(start + i + 1, col);
  return out;
}

std::vector<BpttWindow> bptt_windows(const BatchedStream& batched, std::size_t bptt_len) {
  if (bptt_len == 0) throw DataError("bptt_len must be at least 1");
  std::vector<BpttWindow> out;
  if (batched.rows < 2) return out;
  const std::size_t last = batched.rows - 1;  // rows that have a successor
  for (std::size_t start = 0; start < last; start += bptt_len) {
    out.push_back({start, std::min(bptt_len, last - start)});
  }
  return out;
}

std::filesystem::path find_split_file(const std::filesystem::path& dir, std::string_view split) {
  const std::string s(split);
  for (const auto& name : {s + ".txt", "ptb." + s + ".txt", "wiki." + s + ".tokens"}) {
    auto p = dir / name;
    if (std::filesystem::is_regular_file(p)) return p;
  }
  throw DataError("no " + s + " split found in " + dir.string() + " (looked for " + s + ".txt, ptb." + s + ".txt, wiki." + s +
                  ".tokens)");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CorpusSplits load_corpus(const std::filesystem::path& dir, const CorpusOptions& options) {
  if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory " + dir.string() + " does not exist");
  const std::string train_text = read_text_file(find_split_file(dir, "train"));
  CorpusSplits out;
  out.vocab = options.vocab_file ? Vocabulary::load(*options.vocab_file)
                                 : build_vocab(train_text, options.max_vocab, options.min_count);
  out.train = encode(train_text, out.vocab);
  if (options.max_train_tokens && out.train.size() > *options.max_train_tokens) {
    out.train.ids.resize(*options.max_train_tokens);
  }
  out.valid = encode(read_text_file(find_split_file(dir, "valid")), out.vocab);
  out.test = encode(read_text_file(find_split_file(dir, "test")), out.vocab);
  return out;
}

ZipfBigramSource::ZipfBigramSource(const ZipfBigramSpec& spec) : spec_(spec), state_(spec.seed) {
  if (spec.vocab_size < 2) throw DataError("synthetic vocabulary needs at least 2 words");
  if (!(spec.exponent > 0.0)) throw DataError("Zipf exponent must be positive");
  if (spec.line_length == 0) throw DataError("line_length must be at least 1");
  std::mt19937_64 rng(spec.seed);
  std::vector<double> weights(spec.vocab_size);
  for (std::size_t r = 0; r < spec.vocab_size; ++r) weights[r] = std::pow(static_cast<double>(r + 1), -spec.exponent);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  cumulative_.resize(spec.vocab_size);
  std::vector<std::size_t> perm(spec.vocab_size);
  for (auto& row : cumulative_) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Fisher-Yates with an explicit draw so the permutation does not depend
    // on the standard library's shuffle implementation.
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
    std::vector<double> p(spec.vocab_size);
    for (std::size_t r = 0; r < spec.vocab_size; ++r) p[perm[r]] = weights[r] / total;
    row.resize(spec.vocab_size);
    std::partial_sum(p.begin(), p.end(), row.begin());
  }
  state_ = rng();
}

double ZipfBigramSource::next_uniform() {
  // splitmix64, portable across standard libraries.
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

std::string ZipfBigramSource::generate(std::size_t n_tokens) {
  std::string out;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto& cdf = cumulative_[prev_];
    const double u = next_uniform() * cdf.back();
    std::size_t next = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    next = std::min(next, cdf.size() - 1);
    out += 'w';
    out += std::to_string(next);
    out += ((i + 1) % spec_.line_length == 0 || i + 1 == n_tokens) ? '\n' : ' ';
    prev_ = next;
  }
  return out;
}

double unigram_entropy_ppl(const TokenStream& stream) {
  if (stream.size() == 0) throw DataError("unigram baseline needs a non-empty stream");
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t id : stream.ids) ++counts[id];
  const double n = static_cast<double>(stream.size());
  double h = 0.0;
  for (const auto& [id, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

}  // namespace ttlm
