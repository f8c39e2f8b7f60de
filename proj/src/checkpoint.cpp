#include "pdqn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pdqn {

namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return std::bit_cast<double>(bits);
  }
  bool match(const char* magic, std::size_t n) {
    need(n);
    const bool ok = std::memcmp(in_.data() + pos_, magic, n) == 0;
    pos_ += n;
    return ok;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const auto& dims = c.net.dims();
  if (dims.empty()) throw ArgumentError("cannot checkpoint an empty network");
  const auto n_scaled = static_cast<Eigen::Index>(dims.front()) - 1;
  if (c.scaler.means.size() != n_scaled || c.scaler.stds.size() != n_scaled) {
    throw ArgumentError("scaler size does not match network input (expected " +
                        std::to_string(n_scaled) + " scaled features)");
  }
  Writer w;
  w.bytes(kCheckpointMagic, kMagicSize);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.u32(static_cast<std::uint32_t>(d));
  const auto& p = c.net.params();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& m = p.weights[l];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) w.f64(m(r, col));
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) w.f64(p.biases[l](i));
  }
  for (Eigen::Index i = 0; i < n_scaled; ++i) w.f64(c.scaler.means(i));
  for (Eigen::Index i = 0; i < n_scaled; ++i) w.f64(c.scaler.stds(i));
  w.u32(c.fingerprint);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagicSize || !r.match(kCheckpointMagic, kMagicSize)) {
    throw FormatError("not a QNET1 checkpoint (bad magic)");
  }
  const std::uint32_t count = r.u32();
  if (count < 2) throw FormatError("checkpoint declares fewer than 2 layers");
  r.need(static_cast<std::size_t>(count) * 4);
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < count; ++i) {
    dims.push_back(r.u32());
    if (dims.back() > (1u << 20)) throw FormatError("checkpoint layer width out of range");
  }

  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw FormatError("checkpoint has a zero-width layer");
    expected += (dims[l] * dims[l + 1] + dims[l + 1]) * 8;
  }
  expected += 2 * (dims.front() - 1) * 8 + 4;
  if (r.remaining() < expected) throw FormatError("checkpoint truncated");
  if (r.remaining() > expected) throw FormatError("checkpoint has trailing bytes");

  Checkpoint c;
  try {
    c.net = QNet(dims);
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint layer dims invalid: ") + e.what());
  }
  auto& p = c.net.params();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    auto& m = p.weights[l];
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(row, col) = r.f64();
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = r.f64();
  }
  const auto n_scaled = static_cast<Eigen::Index>(dims.front()) - 1;
  c.scaler.means.resize(n_scaled);
  c.scaler.stds.resize(n_scaled);
  for (Eigen::Index i = 0; i < n_scaled; ++i) c.scaler.means(i) = r.f64();
  for (Eigen::Index i = 0; i < n_scaled; ++i) c.scaler.stds(i) = r.f64();
  c.fingerprint = r.u32();
  return c;
}

void save_checkpoint(const QNet& net, const Scaler& scaler, std::uint32_t fingerprint,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint({net, scaler, fingerprint});
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace pdqn
