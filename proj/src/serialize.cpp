#include "gnnlab/serialize.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnnlab {

namespace {

constexpr char kMagic[4] = {'G', 'N', 'N', 'M'};
constexpr std::uint32_t kVersion = 1;
// A shape dimension beyond this is a corrupt file, not a real model.
constexpr std::uint64_t kDimLimit = 1ull << 30;

// Enum codes are pinned here so the on-disk format survives any
// reordering of the in-memory enums.
std::uint32_t kind_code(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return 0;
    case ModelKind::gat: return 1;
    case ModelKind::dynamo_gat: return 2;
  }
  throw std::runtime_error("save_model: unknown model kind");
}

ModelKind kind_from_code(std::uint32_t c) {
  switch (c) {
    case 0: return ModelKind::gcn;
    case 1: return ModelKind::gat;
    case 2: return ModelKind::dynamo_gat;
  }
  throw std::runtime_error("load_model: unknown model-kind code " + std::to_string(c));
}

std::uint32_t activation_code(Activation a) {
  switch (a) {
    case Activation::identity: return 0;
    case Activation::relu: return 1;
    case Activation::leaky_relu: return 2;
    case Activation::elu: return 3;
    case Activation::tanh: return 4;
  }
  throw std::runtime_error("save_model: unknown activation");
}

Activation activation_from_code(std::uint32_t c) {
  switch (c) {
    case 0: return Activation::identity;
    case 1: return Activation::relu;
    case 2: return Activation::leaky_relu;
    case 3: return Activation::elu;
    case 4: return Activation::tanh;
  }
  throw std::runtime_error("load_model: unknown activation code " + std::to_string(c));
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("save_model: cannot open " + path);
  }

  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

  void u8(std::uint8_t v) { bytes(reinterpret_cast<const char*>(&v), 1); }

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("save_model: write failed for " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("load_model: cannot open " + path);
  }

  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw std::runtime_error("load_model: truncated file " + path_);
  }

  std::uint8_t u8() {
    char b;
    bytes(&b, 1);
    return static_cast<std::uint8_t>(b);
  }

  std::uint32_t u32() {
    char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::uint64_t dim() {
    std::uint64_t v = u64();
    if (v > kDimLimit) throw std::runtime_error("load_model: implausible dimension in " + path_);
    return v;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

void write_array(Writer& w, const Tensor& t) {
  if (!t.defined()) {
    w.u64(0);
    w.u64(0);
    return;
  }
  w.u64(static_cast<std::uint64_t>(t.rows()));
  w.u64(static_cast<std::uint64_t>(t.cols()));
  for (double v : t.value()) w.f64(v);
}

// Fills an existing tensor of the expected shape; the wiring comes
// from init_model, the file only supplies values.
void read_array(Reader& r, Tensor& t, const std::string& what) {
  const std::uint64_t rows = r.dim();
  const std::uint64_t cols = r.dim();
  if (!t.defined()) {
    if (rows != 0 || cols != 0)
      throw std::runtime_error("load_model: unexpected " + what + " array");
    return;
  }
  if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols()))
    throw std::runtime_error("load_model: shape mismatch for " + what);
  for (auto& v : t.value()) v = r.f64();
}

}  // namespace

void save_model(const GnnModel& m, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);

  w.u32(kind_code(m.cfg.kind));
  w.u32(static_cast<std::uint32_t>(m.cfg.depth));
  w.u64(static_cast<std::uint64_t>(m.cfg.hidden_dim));
  w.u32(static_cast<std::uint32_t>(m.cfg.heads_hidden));
  w.u32(static_cast<std::uint32_t>(m.cfg.heads_out));
  w.u32(activation_code(m.cfg.activation));
  w.f64(m.cfg.leaky_slope);
  w.f64(m.cfg.dropout);
  w.u8(m.cfg.residual ? 1 : 0);
  w.u64(static_cast<std::uint64_t>(m.input_dim));
  w.u64(static_cast<std::uint64_t>(m.output_dim));

  w.u32(static_cast<std::uint32_t>(m.layers.size()));
  for (const auto& heads : m.layers) {
    w.u32(static_cast<std::uint32_t>(heads.size()));
    for (const auto& lp : heads) {
      write_array(w, lp.W);
      write_array(w, lp.a);
      w.f64(lp.leaky_slope);
    }
  }
  w.finish(path);
}

GnnModel load_model(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  for (int i = 0; i < 4; ++i)
    if (magic[i] != kMagic[i]) throw std::runtime_error("load_model: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("load_model: unsupported version " + std::to_string(version));

  ModelConfig cfg;
  cfg.kind = kind_from_code(r.u32());
  cfg.depth = static_cast<int>(r.u32());
  cfg.hidden_dim = static_cast<std::int64_t>(r.dim());
  cfg.heads_hidden = static_cast<int>(r.u32());
  cfg.heads_out = static_cast<int>(r.u32());
  cfg.activation = activation_from_code(r.u32());
  cfg.leaky_slope = r.f64();
  cfg.dropout = r.f64();
  cfg.residual = r.u8() != 0;
  const auto input_dim = static_cast<std::int64_t>(r.dim());
  const auto output_dim = static_cast<std::int64_t>(r.dim());

  GnnModel m = init_model(cfg, input_dim, output_dim, 0);

  const std::uint32_t layer_count = r.u32();
  if (layer_count != m.layers.size())
    throw std::runtime_error("load_model: layer count does not match config in " + path);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    auto& heads = m.layers[l];
    const std::uint32_t head_count = r.u32();
    if (head_count != heads.size())
      throw std::runtime_error("load_model: head count does not match config in " + path);
    for (std::uint32_t h = 0; h < head_count; ++h) {
      const std::string tag = "layer " + std::to_string(l) + " head " + std::to_string(h);
      read_array(r, heads[h].W, tag + " W");
      read_array(r, heads[h].a, tag + " a");
      heads[h].leaky_slope = r.f64();
    }
  }
  return m;
}

}  // namespace gnnlab
