#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ttlm/errors.hpp"
#include "ttlm/model.hpp"

namespace ttlm {

namespace {

constexpr char kMagic[8] = {'T', 'T', 'L', 'M', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}

  const char* take(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::Truncated, std::string("checkpoint truncated while reading ") + what);
    }
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*take(1, what)); }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint64_t n = u64(what);
    if (n > buf_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::Truncated, std::string("checkpoint truncated while reading ") + what);
    }
    return std::string(take(n, what), n);
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

std::uint32_t tag_code(CellTag tag) { return static_cast<std::uint32_t>(tag); }

CellTag tag_from_code(std::uint32_t code) {
  if (code > static_cast<std::uint32_t>(CellTag::SecondOrder)) {
    throw CheckpointError(CheckpointError::Kind::KindMismatch, "checkpoint has unknown cell kind code " + std::to_string(code));
  }
  return static_cast<CellTag>(code);
}

void assign_param(ModelParams& p, const std::string& name, Tensor t) {
  std::optional<Tensor>* slot = nullptr;
  if (name == "g_mid") slot = &p.cell.g_mid;
  else if (name == "w_xe") slot = &p.cell.w_xe;
  else if (name == "w_eh") slot = &p.cell.w_eh;
  else if (name == "w_hh") slot = &p.cell.w_hh;
  else if (name == "projection") slot = &p.cell.projection;
  else if (name == "t3") slot = &p.cell.t3;
  else if (name == "bias") slot = &p.cell.bias;
  else if (name == "g_init") slot = &p.g_init;
  else if (name == "head_p") slot = &p.head_p;
  else if (name == "head_v") slot = &p.head_v;
  else if (name == "g_out") slot = &p.g_out;
  if (!slot) throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "checkpoint has unknown parameter '" + name + "'");
  if (slot->has_value()) throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "duplicate parameter '" + name + "'");
  *slot = std::move(t);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LanguageModel& model, const std::string& metadata,
                     const std::vector<std::string>& vocab_tokens) {
  const ModelConfig& cfg = model.config();
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(tag_code(cfg.kind.tag));
  w.u32(cfg.kind.activation == Activation::Tanh ? 1 : 0);
  w.u64(cfg.vocab);
  w.u64(cfg.hidden);
  w.u64(cfg.embed);
  w.u8(cfg.tie_weights ? 1 : 0);
  w.u8(cfg.zero_init_hidden ? 1 : 0);
  w.u64(cfg.seed);
  w.str(metadata);
  w.u64(vocab_tokens.size());
  for (const auto& tok : vocab_tokens) w.str(tok);

  std::uint32_t count = 0;
  model.params().for_each([&](std::string_view, const Tensor&) { ++count; });
  w.u32(count);
  model.params().for_each([&](std::string_view name, const Tensor& t) {
    w.str(std::string(name));
    w.u32(static_cast<std::uint32_t>(t.order()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double x : t.data()) w.f64(x);
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(read_file(path));
  const char* magic = r.take(sizeof(kMagic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, path.string() + " is not a ttlm checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                                      " is not supported (expected " +
                                                                      std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig cfg;
  cfg.kind.tag = tag_from_code(r.u32("cell kind"));
  cfg.kind.activation = r.u32("activation") ? Activation::Tanh : Activation::None;
  cfg.vocab = r.u64("vocab size");
  cfg.hidden = r.u64("hidden size");
  cfg.embed = r.u64("embed size");
  cfg.tie_weights = r.u8("tie flag") != 0;
  cfg.zero_init_hidden = r.u8("zero-init flag") != 0;
  cfg.seed = r.u64("seed");
  std::string metadata = r.str("metadata");
  const std::uint64_t n_tokens = r.u64("vocabulary size");
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str("vocabulary token"));

  ModelParams params;
  params.cell.kind = cfg.kind;
  params.cell.dims = cfg.dims();
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("parameter name");
    const std::uint32_t order = r.u32("parameter order");
    if (order == 0 || order > 8) {
      throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "parameter '" + name + "' has invalid order");
    }
    Shape shape(order);
    std::size_t size = 1;
    for (auto& d : shape) {
      d = r.u64("parameter shape");
      if (d == 0) throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "parameter '" + name + "' has a zero dimension");
      size *= d;
    }
    r.take(0, "parameter data");
    std::vector<double> data(size);
    for (auto& x : data) x = r.f64("parameter data");
    assign_param(params, name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "trailing bytes after checkpoint payload");

  try {
    return {LanguageModel(cfg, std::move(params)), std::move(metadata), std::move(tokens)};
  } catch (const ShapeError& e) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch, std::string("checkpoint shapes are inconsistent: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch, std::string("checkpoint config is invalid: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected_raw) {
  Checkpoint ck = load_checkpoint(path);
  const ModelConfig expected = expected_raw.resolved();
  const ModelConfig& got = ck.model.config();
  if (got.kind.tag != expected.kind.tag) {
    throw CheckpointError(CheckpointError::Kind::KindMismatch, "checkpoint holds a " + std::string(to_string(got.kind.tag)) +
                                                                   " model, expected " +
                                                                   std::string(to_string(expected.kind.tag)));
  }
  if (got.kind.activation != expected.kind.activation) {
    throw CheckpointError(CheckpointError::Kind::KindMismatch, "checkpoint activation is " +
                                                                   std::string(to_string(got.kind.activation)) + ", expected " +
                                                                   std::string(to_string(expected.kind.activation)));
  }
  if (got.dims() != expected.dims() || got.tie_weights != expected.tie_weights ||
      got.zero_init_hidden != expected.zero_init_hidden) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch, "checkpoint dimensions differ from the expected config");
  }
  return ck;
}

}  // namespace ttlm
