#include "ddic/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ddic/error.hpp"

namespace ddic {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'I', 'C', 'M', 'O', 'D', 'L'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

class Writer {
 public:
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  template <typename T>
  void raw(T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    bytes(tmp, sizeof(T));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string source) : buf_(std::move(buf)), source_(std::move(source)) {}

  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated checkpoint at byte " + std::to_string(pos_));
    }
  }
  template <typename T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  params.validate();
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u64(params.arch.input_dim);
  w.u64(params.arch.hidden_dims.size());
  for (std::size_t h : params.arch.hidden_dims) w.u64(h);
  w.u64(params.arch.embedding_dim);
  w.u64(params.arch.cluster_count);
  for (const Matrix* m : params.tensors()) {
    w.u64(m->rows());
    w.u64(m->cols());
    for (double v : m->values()) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path.string());

  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(r.source() + ": not a model checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(r.source() + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }

  ArchitectureSpec arch;
  arch.input_dim = r.u64();
  const std::uint64_t depth = r.u64();
  if (depth > r.remaining() / 8) throw FormatError(r.source() + ": implausible layer count");
  arch.hidden_dims.clear();
  for (std::uint64_t l = 0; l < depth; ++l) arch.hidden_dims.push_back(r.u64());
  arch.embedding_dim = r.u64();
  arch.cluster_count = r.u64();

  // A corrupt header must not trigger a huge allocation.
  const auto widths = arch.encoder_widths();
  long double payload = static_cast<long double>(arch.cluster_count) * arch.embedding_dim;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    payload += 2.0L * (static_cast<long double>(widths[l]) * widths[l + 1]) + widths[l + 1] + widths[l];
  }
  if (payload * 8 > static_cast<long double>(r.remaining())) {
    throw FormatError(r.source() + ": truncated checkpoint, architecture needs more tensor data");
  }

  ModelParams params;
  try {
    params = init_params(arch, 0);
  } catch (const ConfigError& e) {
    throw FormatError(r.source() + ": " + e.what());
  }
  for (Matrix* m : params.tensors()) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows != m->rows() || cols != m->cols()) {
      throw FormatError(r.source() + ": tensor " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " where the architecture needs " + shape_string(*m));
    }
    for (double& v : m->values()) v = r.f64();
  }
  if (!r.at_end()) throw FormatError(r.source() + ": trailing bytes after the last tensor");
  return params;
}

}  // namespace ddic
