#include "cnp/checkpoint.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace cnp {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'C', 'N', 'P', 'K'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    bytes_.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                               std::uint8_t(v >> 24)};
    raw(b, 4);
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  const char* raw(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail("truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(*raw(1)); }
  std::uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw(4));
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(raw(n), n);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelGraph& g) {
  w.u8(static_cast<std::uint8_t>(g.builder));
  w.u32(static_cast<std::uint32_t>(g.single_level_layers));
  const CnpConfig& c = g.config;
  w.u32(c.levels);
  w.u32(c.transform_layers);
  w.u32(c.feature_channels);
  w.u32(c.embed_channels);
  w.u32(c.input_channels);
  w.u32(c.output_channels);
  w.u8(c.fusion == FusionMode::Sum ? 0 : 1);
  w.u8(c.downsample == DownsampleMode::MaxPool ? 0 : 1);
  w.u8(c.residual ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.residual_channel));
}

ModelGraph read_config_and_build(Reader& r) {
  const auto kind = static_cast<BuilderKind>(r.u8());
  const int single_layers = static_cast<int>(r.u32());
  CnpConfig c;
  c.levels = static_cast<int>(r.u32());
  c.transform_layers = static_cast<int>(r.u32());
  c.feature_channels = static_cast<int>(r.u32());
  c.embed_channels = static_cast<int>(r.u32());
  c.input_channels = static_cast<int>(r.u32());
  c.output_channels = static_cast<int>(r.u32());
  c.fusion = r.u8() == 0 ? FusionMode::Sum : FusionMode::Concat;
  c.downsample = r.u8() == 0 ? DownsampleMode::MaxPool : DownsampleMode::StridedConv;
  c.residual = r.u8() != 0;
  c.residual_channel = static_cast<int>(r.u32());
  switch (kind) {
    case BuilderKind::Cnp:
      return build_cnp(c);
    case BuilderKind::SingleLevel:
      return build_single_level(single_layers, c.feature_channels, c.input_channels,
                                c.output_channels);
    case BuilderKind::SimpleMultiscale:
      return build_simple_multiscale(c);
  }
  r.fail("unknown builder kind");
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const ModelGraph& graph, const std::string& path) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  write_config(w, graph);
  w.u32(static_cast<std::uint32_t>(graph.params.size()));
  for (const auto& p : graph.params) {
    w.str(p.name);
    w.u32(4);  // rank
    w.u32(static_cast<std::uint32_t>(p.value.shape.n));
    w.u32(static_cast<std::uint32_t>(p.value.shape.c));
    w.u32(static_cast<std::uint32_t>(p.value.shape.h));
    w.u32(static_cast<std::uint32_t>(p.value.shape.w));
    w.u8(0);  // dtype f32
    for (float v : p.value.data) w.f32(v);
  }
  const std::uint32_t crc = crc32(w.bytes_.data(), w.bytes_.size());
  w.u32(crc);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(w.bytes_.data(), static_cast<std::streamsize>(w.bytes_.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

ModelGraph load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{});
  if (bytes.size() < 8) throw IoError(path + ": truncated checkpoint (only " +
                                      std::to_string(bytes.size()) + " bytes)");
  // Validate the trailing CRC over everything before it.
  const std::uint32_t stored =
      std::uint32_t(static_cast<unsigned char>(bytes[bytes.size() - 4])) |
      (std::uint32_t(static_cast<unsigned char>(bytes[bytes.size() - 3])) << 8) |
      (std::uint32_t(static_cast<unsigned char>(bytes[bytes.size() - 2])) << 16) |
      (std::uint32_t(static_cast<unsigned char>(bytes[bytes.size() - 1])) << 24);
  const std::uint32_t computed = crc32(bytes.data(), bytes.size() - 4);

  Reader r(std::move(bytes), path);
  if (std::memcmp(r.raw(4), kMagic, 4) != 0) r.fail("bad magic (not a CNPK checkpoint)");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    r.fail("unsupported format version " + std::to_string(version) + " (expected " +
           std::to_string(kVersion) + ")");
  if (stored != computed) throw IoError(path + ": CRC mismatch, checkpoint is corrupt");

  ModelGraph g = read_config_and_build(r);
  const std::uint32_t count = r.u32();
  if (count != g.params.size())
    r.fail("parameter count " + std::to_string(count) + " does not match architecture (" +
           std::to_string(g.params.size()) + ")");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank != 4) r.fail("unsupported tensor rank " + std::to_string(rank));
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (r.u8() != 0) r.fail("unsupported dtype for tensor '" + name + "'");
    if (g.params[i].name != name)
      r.fail("tensor '" + name + "' does not match architecture parameter '" + g.params[i].name +
             "'");
    if (!(g.params[i].value.shape == s))
      r.fail("tensor '" + name + "' shape " + s.str() + " does not match " +
             g.params[i].value.shape.str());
    for (auto& v : g.params[i].value.data) v = r.f32();
  }
  if (r.remaining() != 4) r.fail("trailing bytes after checkpoint payload");
  return g;
}

}  // namespace cnp
