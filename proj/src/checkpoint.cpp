#include "urdmu/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "urdmu/errors.hpp"

namespace urdmu {

namespace {

constexpr char kMagic[4] = {'U', 'R', 'D', 'M'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(T{b_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatFault(pos_, std::string("truncated checkpoint: expected ") + what);
    }
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto named = params.named();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  const std::string cfg = to_key_values(params.config);
  out.insert(out.end(), cfg.begin(), cfg.end());
  return out;
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatFault(0, "bad checkpoint magic");
  }
  const std::size_t ver_off = r.pos();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatFault(ver_off, "unsupported checkpoint version " +
                                   std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>("tensor count");

  struct Raw {
    std::string name;
    Shape shape;
    std::vector<double> data;
    std::size_t offset;
  };
  std::vector<Raw> raws;
  for (std::uint32_t i = 0; i < count; ++i) {
    Raw raw;
    raw.offset = r.pos();
    const auto len = r.le<std::uint16_t>("name length");
    const auto name = r.take(len, "tensor name");
    raw.name.assign(name.begin(), name.end());
    const auto rank = r.le<std::uint8_t>("rank");
    if (rank > 2) throw FormatFault(r.pos() - 1, "tensor rank above 2");
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      raw.shape.push_back(r.le<std::uint32_t>("dimension"));
      n *= raw.shape.back();
    }
    r.need(8 * n, "tensor payload");
    raw.data.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t off = r.pos();
      raw.data[j] = std::bit_cast<double>(r.le<std::uint64_t>("value"));
      if (!std::isfinite(raw.data[j])) {
        throw FormatFault(off, "non-finite value in " + raw.name);
      }
    }
    raws.push_back(std::move(raw));
  }
  const std::size_t cfg_off = r.pos();
  const auto cfg_bytes = r.take(r.remaining(), "config");
  TrainConfig cfg;
  try {
    cfg = parse_config(std::string(cfg_bytes.begin(), cfg_bytes.end()));
  } catch (const ContractViolation& e) {
    throw FormatFault(cfg_off, e.what());
  }
  ModelParams params;
  try {
    params = init_model(cfg);
  } catch (const ContractViolation& e) {
    throw FormatFault(cfg_off, std::string("invalid embedded config: ") + e.what());
  }
  auto named = params.named();
  if (named.size() != raws.size()) {
    throw FormatFault(cfg_off, "checkpoint holds " + std::to_string(raws.size()) +
                                   " tensors, config expects " +
                                   std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    const Raw& raw = raws[i];
    if (raw.name != name || raw.shape != t.shape()) {
      throw FormatFault(raw.offset, "tensor '" + raw.name +
                                        "' does not match expected '" + name +
                                        "'");
    }
    std::copy(raw.data.begin(), raw.data.end(), t.mutable_data().begin());
  }
  return params;
}

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputFault("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputFault("short write to " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFault("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace urdmu
