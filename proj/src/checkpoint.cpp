#include "rtx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rtx {
namespace {

constexpr char kMagic[8] = {'R', 'T', 'X', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(u & 0xff));
      u = static_cast<U>(u >> 8);
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw FormatError("checkpoint truncated");
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(
          static_cast<std::make_unsigned_t<T>>(in_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  void f64s(double* p, std::size_t n) {
    need(n * 8);
    for (std::size_t i = 0; i < n; ++i) p[i] = f64();
  }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  const ModelConfig& c = ck.config;
  for (int v : {c.base_channels, c.heads, c.attention_blocks_per_branch, c.fused_channels,
                c.patch_train_size, c.ffn_expansion, c.head_hidden}) {
    w.le<std::int32_t>(v);
  }
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.mode));
  w.le<std::uint64_t>(ck.iteration);

  w.le<std::uint32_t>(static_cast<std::uint32_t>(ck.params.count()));
  for (const auto& e : ck.params.entries()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.f64s(e.values.data(), e.values.size());
  }

  const auto c_in = static_cast<std::uint32_t>(ck.pca.mean.size());
  const auto c_f = static_cast<std::uint32_t>(ck.pca.basis.rows());
  w.le<std::uint32_t>(c_in);
  w.le<std::uint32_t>(c_f);
  w.f64(ck.pca.explained_variance_fraction);
  w.f64s(ck.pca.mean.data(), c_in);
  for (std::uint32_t r = 0; r < c_f; ++r) {
    for (std::uint32_t k = 0; k < c_in; ++k) w.f64(ck.pca.basis(r, k));
  }

  w.le<std::uint64_t>(ck.adam.t);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ck.adam.m.size()));
  for (std::size_t i = 0; i < ck.adam.m.size(); ++i) {
    w.f64s(ck.adam.m[i].data(), ck.adam.m[i].size());
    w.f64s(ck.adam.v[i].data(), ck.adam.v[i].size());
  }

  auto& buf = w.buffer();
  w.le<std::uint64_t>(fnv1a64(buf.data(), buf.size()));
  return std::move(buf);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8) throw FormatError("checkpoint too short");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch");

  Reader r(bytes, body);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not an rtxnet checkpoint");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.base_channels = r.le<std::int32_t>();
  c.heads = r.le<std::int32_t>();
  c.attention_blocks_per_branch = r.le<std::int32_t>();
  c.fused_channels = r.le<std::int32_t>();
  c.patch_train_size = r.le<std::int32_t>();
  c.ffn_expansion = r.le<std::int32_t>();
  c.head_hidden = r.le<std::int32_t>();
  const auto mode = r.le<std::uint32_t>();
  if (mode > 2) throw FormatError("checkpoint has unknown fusion mode");
  c.mode = static_cast<FusionMode>(mode);
  ck.iteration = r.le<std::uint64_t>();

  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint32_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto ndim = r.le<std::uint32_t>();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.le<std::uint32_t>());
    const std::size_t idx = ck.params.add(name, shape);
    auto& e = ck.params.entry(idx);
    r.f64s(e.values.data(), e.values.size());
  }

  const auto c_in = r.le<std::uint32_t>();
  const auto c_f = r.le<std::uint32_t>();
  ck.pca.explained_variance_fraction = r.f64();
  ck.pca.mean.resize(c_in);
  r.f64s(ck.pca.mean.data(), c_in);
  ck.pca.basis.resize(c_f, c_in);
  for (std::uint32_t row = 0; row < c_f; ++row) {
    for (std::uint32_t k = 0; k < c_in; ++k) ck.pca.basis(row, k) = r.f64();
  }

  ck.adam.t = r.le<std::uint64_t>();
  const auto adam_count = r.le<std::uint32_t>();
  if (adam_count != 0 && adam_count != count) throw FormatError("checkpoint Adam state mismatch");
  for (std::uint32_t i = 0; i < adam_count; ++i) {
    const std::size_t n = ck.params.entry(i).size();
    AlignedValues m(n), v(n);
    r.f64s(m.data(), n);
    r.f64s(v.data(), n);
    ck.adam.m.push_back(std::move(m));
    ck.adam.v.push_back(std::move(v));
  }
  if (r.position() != body) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

RtxNet network_from_checkpoint(const Checkpoint& ck) {
  RtxNet net(ck.config);
  auto& store = net.params();
  if (store.count() != ck.params.count()) {
    throw FormatError("checkpoint has " + std::to_string(ck.params.count()) +
                      " parameter entries, the configured network has " +
                      std::to_string(store.count()));
  }
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto& dst = store.entry(i);
    const auto& src = ck.params.entry(i);
    if (dst.name != src.name || dst.shape != src.shape) {
      throw FormatError("checkpoint parameter '" + src.name + "' does not match network entry '" +
                        dst.name + "'");
    }
    dst.values = src.values;
  }
  if (!ck.pca.empty()) net.set_projection(ck.pca);
  return net;
}

Checkpoint checkpoint_from_network(const RtxNet& net, const AdamState& adam,
                                   std::uint64_t iteration) {
  Checkpoint ck;
  ck.config = net.config();
  ck.params = net.params();
  ck.params.zero_grad();
  ck.pca = net.projection();
  ck.adam = adam;
  ck.iteration = iteration;
  return ck;
}

}  // namespace rtx
