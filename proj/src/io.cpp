#include "xssm/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xssm/config.hpp"

namespace xssm::io {
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

// Reads whitespace-separated header tokens of a PNM-style file; the single
// whitespace byte after the last token is consumed.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  std::string token() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw DataError(path_.string() + ": truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  std::size_t dimension() {
    const auto t = token();
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || v <= 0 || v > (1 << 20)) {
      throw DataError(path_.string() + ": invalid dimension '" + t + "'");
    }
    return static_cast<std::size_t>(v);
  }

  // Offset of the payload.
  std::size_t payload() {
    if (pos_ >= bytes_.size()) throw DataError(path_.string() + ": truncated header");
    return pos_ + 1;
  }

 private:
  const std::string& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

template <typename U>
void put(std::string& out, U value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > end_) throw DataError("checkpoint: truncated");
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    if (pos_ + n > end_) throw DataError("checkpoint: truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

Tensor<float> read_pfm(const fs::path& path) {
  const auto bytes = read_file(path);
  HeaderReader header(bytes, path);
  const auto magic = header.token();
  if (magic != "Pf") {
    throw DataError(path.string() + ": expected grayscale PFM ('Pf'), got '" + magic + "'");
  }
  const std::size_t w = header.dimension(), h = header.dimension();
  const auto scale_token = header.token();
  double scale = 0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw DataError(path.string() + ": invalid scale '" + scale_token + "'");
  }
  if (scale == 0 || !std::isfinite(scale)) throw DataError(path.string() + ": invalid scale");
  const bool little = scale < 0;
  const std::size_t offset = header.payload();
  if (bytes.size() - offset < h * w * 4) throw DataError(path.string() + ": truncated data");
  Tensor<float> out({1, h, w});
  auto dst = out.data_mut();
  for (std::size_t r = 0; r < h; ++r) {
    // First stored row is the bottom one.
    const std::size_t row = h - 1 - r;
    for (std::size_t x = 0; x < w; ++x) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + offset + (r * w + x) * 4, 4);
      if (little != (std::endian::native == std::endian::little)) bits = byteswap32(bits);
      dst[row * w + x] = std::bit_cast<float>(bits);
    }
  }
  return out;
}

void write_pfm(const fs::path& path, const Tensor<float>& map) {
  if (map.rank() != 3 || map.dim(0) != 1 || map.dim(1) == 0 || map.dim(2) == 0) {
    throw ShapeError("write_pfm: expected non-empty [1, H, W], got " + shape_str(map.shape()));
  }
  const std::size_t h = map.dim(1), w = map.dim(2);
  std::string out = "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  const auto src = map.data();
  for (std::size_t r = h; r-- > 0;) {
    for (std::size_t x = 0; x < w; ++x) put(out, std::bit_cast<std::uint32_t>(src[r * w + x]));
  }
  write_atomic(path, out);
}

Tensor<float> read_ppm(const fs::path& path) {
  const auto bytes = read_file(path);
  HeaderReader header(bytes, path);
  const auto magic = header.token();
  if (magic != "P6") throw DataError(path.string() + ": expected binary PPM ('P6'), got '" + magic + "'");
  const std::size_t w = header.dimension(), h = header.dimension(), maxval = header.dimension();
  if (maxval != 255) throw DataError(path.string() + ": only maxval 255 is supported");
  const std::size_t offset = header.payload();
  if (bytes.size() - offset < h * w * 3) throw DataError(path.string() + ": truncated data");
  Tensor<float> out({3, h, w});
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      dst[c * h * w + i] = static_cast<float>(static_cast<unsigned char>(bytes[offset + i * 3 + c])) / 255.0f;
    }
  return out;
}

void write_ppm(const fs::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw ShapeError("write_ppm: expected non-empty [3, H, W], got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const auto src = image.data();
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(src[c * h * w + i], 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  write_atomic(path, out);
}

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out = "XSSM";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (float v : t.data()) put(out, std::bit_cast<std::uint32_t>(v));
  }
  put<std::uint32_t>(out, crc_of(out, out.size()));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "XSSM") != 0) {
    throw DataError("checkpoint: bad magic or truncated file");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes, body)) throw DataError("checkpoint: CRC mismatch");
  Cursor cur(bytes, body);
  cur.get_bytes(4);
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = cur.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = cur.get_bytes(cur.get<std::uint32_t>());
    const auto rank = cur.get<std::uint32_t>();
    if (rank > 8) throw DataError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(cur.get<std::uint64_t>());
    const std::size_t n = shape_numel(shape);
    if (n > cur.remaining() / 4) throw DataError("checkpoint: truncated data for " + name);
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(cur.get<std::uint32_t>());
    out.push_back({name, Tensor<float>(shape, std::move(values))});
  }
  if (cur.remaining() != 0) throw DataError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const fs::path& path, const std::vector<NamedTensor>& tensors) {
  write_atomic(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file(path));
}

void save_model(const fs::path& path, const net::GdsrNet<float>& model) {
  std::vector<NamedTensor> tensors;
  for (const auto& [key, value] : config::model_fields(model.config())) {
    tensors.push_back({"config." + key, Tensor<float>({}, static_cast<float>(value))});
  }
  for (const auto& [name, t] : model.parameters()) tensors.push_back({name, t});
  save_checkpoint(path, tensors);
}

net::GdsrNet<float> load_model(const fs::path& path) {
  const auto tensors = load_checkpoint(path);
  config::KeyValues fields;
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : tensors) {
    if (name.rfind("config.", 0) == 0) {
      if (t.numel() != 1) throw DataError("checkpoint: config entry " + name + " is not a scalar");
      std::ostringstream v;
      v << t.item();
      fields[name.substr(7)] = v.str();
    } else {
      by_name[name] = &t;
    }
  }
  ModelConfig cfg;
  try {
    cfg = config::model_from_fields(fields, path.string());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  auto model = net::GdsrNet<float>::init(cfg, 0);
  auto params = model.parameters();
  if (params.size() != by_name.size()) {
    throw DataError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(by_name.size()));
  }
  for (auto& [name, t] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint: missing tensor " + name);
    if (it->second->shape() != t.shape()) {
      throw DataError("checkpoint: tensor " + name + " has shape " +
                      shape_str(it->second->shape()) + ", expected " + shape_str(t.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), t.data_mut().begin());
  }
  return model;
}

}  // namespace xssm::io
