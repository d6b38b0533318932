#include "patchcert/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "patchcert/report.hpp"

namespace patchcert {
namespace {

using json = nlohmann::json;

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t read_le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

void write_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s <= 24; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Parses "P5"/"P6" headers: magic, width, height, maxval, one whitespace byte.
struct Netpbm {
  int width = 0;
  int height = 0;
  std::size_t data = 0;
};

Netpbm parse_netpbm_header(const std::vector<std::uint8_t>& b, const char* magic) {
  if (b.size() < 2 || b[0] != magic[0] || b[1] != magic[1]) {
    throw FormatError(std::string("expected ") + magic + " magic", 0);
  }
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < b.size() && (std::isspace(b[pos]) || b[pos] == '#')) {
      if (b[pos] == '#')
        while (pos < b.size() && b[pos] != '\n') ++pos;
      else
        ++pos;
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("malformed netpbm header", pos);
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
    return v;
  };
  Netpbm h;
  h.width = static_cast<int>(next_int());
  h.height = static_cast<int>(next_int());
  const long maxval = next_int();
  if (maxval != 255) throw FormatError("only 8-bit netpbm files are supported", pos);
  if (pos >= b.size()) throw FormatError("netpbm header not terminated", pos);
  h.data = pos + 1;
  return h;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset parse_cifar10_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 file length " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                      bytes.size() - bytes.size() % kCifarRecordBytes);
  }
  LabeledDataset data;
  data.num_classes = 10;
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    const int label = bytes[base];
    if (label > 9) throw FormatError("CIFAR-10 label byte " + std::to_string(label) + " exceeds 9", base);
    Image img(32, 32, 3);
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < 1024; ++i)
        img.at(i / 32, i % 32, ch) = static_cast<float>(bytes[base + 1 + static_cast<std::size_t>(ch) * 1024 + i]) / 255.0f;
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
    data.splits.push_back(Split::test);
  }
  return data;
}

LabeledDataset load_cifar10_binary(const std::filesystem::path& path) { return parse_cifar10_binary(read_file_bytes(path)); }

Tensor IdxTensor::to_tensor(bool scale_bytes) const {
  Shape shape(dims.begin(), dims.end());
  std::vector<float> v = values;
  if (scale_bytes && type == IdxType::u8)
    for (auto& x : v) x /= 255.0f;
  return Tensor(std::move(shape), std::move(v));
}

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0) throw FormatError("bad IDX magic", 0);
  IdxTensor t;
  if (bytes[2] == 0x08)
    t.type = IdxType::u8;
  else if (bytes[2] == 0x0D)
    t.type = IdxType::f32;
  else
    throw FormatError("unsupported IDX type code " + std::to_string(bytes[2]), 2);
  const std::size_t rank = bytes[3];
  if (bytes.size() < 4 + 4 * rank) throw FormatError("IDX header truncated", bytes.size());
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.dims.push_back(read_be32(bytes, 4 + 4 * i));
    count *= t.dims.back();
  }
  const std::size_t header = 4 + 4 * rank;
  const std::size_t elem = t.type == IdxType::u8 ? 1 : 4;
  const std::uint64_t payload = bytes.size() - header;
  if (payload != count * elem) {
    throw FormatError("IDX dimensions declare " + std::to_string(count) + " elements (" +
                          std::to_string(count * elem) + " bytes) but payload has " + std::to_string(payload) +
                          " bytes",
                      header);
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (t.type == IdxType::u8) {
      t.values[i] = bytes[header + i];
    } else {
      t.values[i] = std::bit_cast<float>(read_be32(bytes, header + 4 * i));
    }
  }
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.values.size()) throw DimensionError("IDX dims do not match value count");
  std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(t.type), static_cast<std::uint8_t>(t.dims.size())};
  for (auto d : t.dims) write_be32(out, d);
  for (float v : t.values) {
    if (t.type == IdxType::u8) {
      if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) throw DimensionError("u8 IDX value out of range");
      out.push_back(static_cast<std::uint8_t>(v));
    } else {
      write_be32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

IdxTensor load_idx_tensor(const std::filesystem::path& path) { return parse_idx(read_file_bytes(path)); }

void save_idx_tensor(const std::filesystem::path& path, const IdxTensor& t) { write_file_bytes(path, serialize_idx(t)); }

LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                int num_classes) {
  const IdxTensor img = load_idx_tensor(images);
  const IdxTensor lab = load_idx_tensor(labels);
  if (img.type != IdxType::u8 || (img.dims.size() != 3 && img.dims.size() != 4)) {
    throw FormatError("IDX images must be u8 with shape NxHxW or NxHxWxC", 2);
  }
  if (lab.dims.size() != 1 || lab.dims[0] != img.dims[0]) throw FormatError("IDX labels do not match image count", 3);
  const int n = static_cast<int>(img.dims[0]);
  const int h = static_cast<int>(img.dims[1]);
  const int w = static_cast<int>(img.dims[2]);
  const int c = img.dims.size() == 4 ? static_cast<int>(img.dims[3]) : 1;
  const std::size_t per = static_cast<std::size_t>(h) * w * c;
  LabeledDataset data;
  data.num_classes = num_classes;
  for (int i = 0; i < n; ++i) {
    std::vector<float> px(img.values.begin() + static_cast<std::ptrdiff_t>(i * per),
                          img.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    for (auto& v : px) v /= 255.0f;
    data.images.emplace_back(h, w, c, std::move(px));
    data.labels.push_back(static_cast<int>(lab.values[static_cast<std::size_t>(i)]));
    data.splits.push_back(Split::test);
  }
  data.validate();
  return data;
}

std::vector<std::uint8_t> serialize_checkpoint(const ViTConfig& cfg, const ModelParams& params) {
  check_params(params, cfg);
  json manifest = json::array();
  params.for_each([&](const std::string& name, const Tensor& t) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}});
  });
  const json header = {{"config", config_to_json(cfg)}, {"params", manifest}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{'S', 'V', 'I', 'T'};
  write_le32(out, kCheckpointVersion);
  write_le32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  params.for_each([&](const std::string&, const Tensor& t) {
    for (float v : t.data()) write_le32(out, std::bit_cast<std::uint32_t>(v));
  });
  return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "SVIT", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = read_le32(bytes, 4);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t header_len = read_le32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) throw FormatError("checkpoint header truncated", 12);
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), 12);
  }
  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.params = zero_params(ck.config);
  const auto& manifest = header.at("params");
  std::size_t pos = 12 + header_len;
  std::size_t i = 0;
  ck.params.for_each([&](const std::string& name, Tensor& t) {
    if (i >= manifest.size() || manifest[i].at("name") != name ||
        manifest[i].at("shape").get<Shape>() != t.shape()) {
      throw FormatError("checkpoint manifest entry " + std::to_string(i) + " does not match parameter " + name, 12);
    }
    ++i;
    if (bytes.size() < pos + 4 * t.numel()) throw FormatError("checkpoint data truncated at " + name, pos);
    for (auto& v : t.data()) {
      v = std::bit_cast<float>(read_le32(bytes, pos));
      pos += 4;
    }
  });
  if (i != manifest.size()) throw FormatError("checkpoint manifest lists extra parameters", 12);
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint data", pos);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ViTConfig& cfg, const ModelParams& params) {
  write_file_bytes(path, serialize_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch) out.push_back(to_byte(img.at(r, c, img.channels == 3 ? ch : 0)));
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Mask& mask) {
  const std::string header = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (auto b : mask.bits) out.push_back(b ? 255 : 0);
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  const Netpbm h = parse_netpbm_header(bytes, "P6");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() != h.data + n) throw FormatError("PPM payload size mismatch", h.data);
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<float>(bytes[h.data + i]) / 255.0f;
  return Image(h.height, h.width, 3, std::move(px));
}

Mask decode_pgm(const std::vector<std::uint8_t>& bytes) {
  const Netpbm h = parse_netpbm_header(bytes, "P5");
  Mask m(h.height, h.width);
  if (bytes.size() != h.data + m.bits.size()) throw FormatError("PGM payload size mismatch", h.data);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = bytes[h.data + i] ? 1 : 0;
  return m;
}

}  // namespace patchcert
