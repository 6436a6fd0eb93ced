// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#include "tore/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "tore/rng.hpp"

namespace tore {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Pixmaps

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view d) : d_(d) {}

  void skip_space_and_comments() {
    while (pos_ < d_.size()) {
      const char c = d_[pos_];
      if (c == '#') {
        while (pos_ < d_.size() && d_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < d_.size() && std::isdigit(static_cast<unsigned char>(d_[pos_]))) {
      v = v * 10 + (d_[pos_] - '0');
      if (v > 1 << 24) throw LoadError(std::string("pixmap: ") + what + " too large", static_cast<long>(start));
      ++pos_;
    }
    if (pos_ == start) throw LoadError(std::string("pixmap: expected ") + what, static_cast<long>(start));
    return static_cast<int>(v);
  }

  std::size_t pos_ = 0;

 private:
  std::string_view d_;
};

}  // namespace

Pixmap parse_pnm(std::string_view data) {
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6')) {
    throw LoadError("pixmap: expected binary P5 or P6 magic", 0);
  }
  Pixmap img;
  img.channels = data[1] == '5' ? 1 : 3;
  HeaderReader r(data);
  r.pos_ = 2;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval_at = r.pos_;
  const int maxval = r.number("maxval");
  if (img.width <= 0 || img.height <= 0) throw LoadError("pixmap: zero dimension", static_cast<long>(maxval_at));
  if (maxval != 255) throw LoadError("pixmap: only maxval 255 is supported", static_cast<long>(maxval_at));
  if (r.pos_ >= data.size() || !std::isspace(static_cast<unsigned char>(data[r.pos_]))) {
    throw LoadError("pixmap: missing whitespace after maxval", static_cast<long>(r.pos_));
  }
  ++r.pos_;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (data.size() - r.pos_ < n) throw LoadError("pixmap: truncated pixel data", static_cast<long>(data.size()));
  img.bytes.assign(reinterpret_cast<const std::uint8_t*>(data.data() + r.pos_),
                   reinterpret_cast<const std::uint8_t*>(data.data() + r.pos_ + n));
  return img;
}

std::string format_pnm(const Pixmap& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractError("pixmap: channels must be 1 or 3");
  if (img.bytes.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw DimensionError("pixmap: byte count does not match the dimensions");
  }
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.bytes.data()), img.bytes.size());
  return out;
}

Pixmap read_pnm(const std::filesystem::path& path) {
  try {
    return parse_pnm(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError("'" + path.string() + "': " + e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const Pixmap& img) { write_file(path, format_pnm(img)); }

Tensor pixmap_to_tensor(const Pixmap& img, int channels_out) {
  if (channels_out != img.channels && !(img.channels == 1 && channels_out == 3)) {
    throw DimensionError("pixmap: cannot convert " + std::to_string(img.channels) + " channels to " +
                         std::to_string(channels_out));
  }
  Tensor t({img.height, img.width, channels_out});
  const std::size_t px = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < px; ++i)
    for (int c = 0; c < channels_out; ++c) {
      const int src = img.channels == 1 ? 0 : c;
      t[i * channels_out + c] = static_cast<float>(img.bytes[i * img.channels + src]) / 255.0f;
    }
  return t;
}

Pixmap tensor_to_pixmap(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw DimensionError("pixmap: image must be [H × W × 1|3], got " + Tensor::shape_string(image.shape()));
  }
  Pixmap img{image.dim(1), image.dim(0), image.dim(2), {}};
  img.bytes.reserve(image.size());
  for (float v : image.data()) img.bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return img;
}

Tensor read_image(const std::filesystem::path& path, int channels) { return pixmap_to_tensor(read_pnm(path), channels); }

void write_image(const std::filesystem::path& path, const Tensor& image) { write_pnm(path, tensor_to_pixmap(image)); }

// ---------------------------------------------------------------------------
// Datasets

std::vector<Sample> load_dataset(const std::filesystem::path& root, int num_classes, int channels) {
  const auto csv_path = root / "labels.csv";
  std::ifstream in(csv_path);
  if (!in) throw LoadError("dataset: missing '" + csv_path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw LoadError("dataset: '" + csv_path.string() + "' is empty (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,label") throw LoadError("dataset: header must be 'filename,label', got '" + line + "'");
  std::vector<Sample> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    const std::string where = "labels.csv line " + std::to_string(row) + " ('" + line + "')";
    if (comma == std::string::npos || comma == 0) throw LoadError(where + ": expected filename,label");
    const std::string file = line.substr(0, comma), label_s = line.substr(comma + 1);
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(label_s, &used);
      if (used != label_s.size()) throw std::invalid_argument(label_s);
    } catch (const std::logic_error&) {
      throw LoadError(where + ": label is not an integer");
    }
    if (label < 0 || label >= num_classes) {
      throw LoadError(where + ": label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    const auto path = root / file;
    if (!std::filesystem::exists(path)) throw LoadError(where + ": missing image file '" + path.string() + "'");
    try {
      out.push_back({read_image(path, channels), label});
    } catch (const Error& e) {
      throw LoadError(where + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(root);
  std::string csv = "filename,label\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.ppm", i);
    write_image(root / name, samples[i].image);
    csv += std::string(name) + "," + std::to_string(samples[i].label) + "\n";
  }
  write_file(root / "labels.csv", csv);
}

namespace {

constexpr const char* kClassNames[] = {"disk", "square", "triangle", "plus", "ring",
                                       "hstripes", "vstripes", "checker", "cross", "frame"};

// Shape membership in local coordinates, roughly [-1, 1]².
bool inside(int shape, double x, double y) {
  const double r = std::hypot(x, y);
  const double box = std::max(std::abs(x), std::abs(y));
  switch (shape) {
    case 0: return r < 0.85;
    case 1: return box < 0.75;
    case 2: return y > -0.8 && y < 0.75 && std::abs(x) < (y + 0.8) * 0.6;
    case 3: return (std::abs(x) < 0.25 && std::abs(y) < 0.85) || (std::abs(y) < 0.25 && std::abs(x) < 0.85);
    case 4: return r > 0.5 && r < 0.85;
    case 5: return box < 0.9 && static_cast<int>(std::floor((y + 1.0) / 0.3)) % 2 == 0;
    case 6: return box < 0.9 && static_cast<int>(std::floor((x + 1.0) / 0.3)) % 2 == 0;
    case 7: return box < 0.9 && (static_cast<int>(std::floor((x + 1.0) / 0.36)) + static_cast<int>(std::floor((y + 1.0) / 0.36))) % 2 == 0;
    case 8: return box < 0.85 && (std::abs(x - y) < 0.26 || std::abs(x + y) < 0.26);
    default: return box > 0.55 && box < 0.85;
  }
}

}  // namespace

const char* synthetic_class_name(int label) { return kClassNames[((label % 10) + 10) % 10]; }

Sample synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed, SplitName split, int index) {
  Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(split)), static_cast<std::uint64_t>(index)));
  const int label = index % spec.num_classes;
  const int shape = label % 10;
  const double angle = rng.uniform(-15.0, 15.0) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(0.8, 1.0);
  const double half = 0.5 * std::min(spec.height, spec.width);
  const double cx = 0.5 * spec.width + rng.uniform(-0.1, 0.1) * half;
  const double cy = 0.5 * spec.height + rng.uniform(-0.1, 0.1) * half;
  const double bg = rng.uniform(0.0, 0.3);
  const double fg = rng.uniform(0.65, 1.0);
  const double ca = std::cos(angle), sa = std::sin(angle);

  Sample s{Tensor({spec.height, spec.width, spec.channels}), label};
  for (int py = 0; py < spec.height; ++py)
    for (int px = 0; px < spec.width; ++px) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double dx = (px + 0.25 + 0.5 * sx - cx) / (half * scale);
          const double dy = (py + 0.25 + 0.5 * sy - cy) / (half * scale);
          hits += inside(shape, ca * dx + sa * dy, -sa * dx + ca * dy);
        }
      const double cover = hits / 4.0;
      const double v = std::clamp(bg + (fg - bg) * cover + 0.03 * rng.normal(), 0.0, 1.0);
      for (int c = 0; c < spec.channels; ++c) {
        s.image[(static_cast<std::size_t>(py) * spec.width + px) * spec.channels + c] = static_cast<float>(v);
      }
    }
  return s;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_classes <= 0 || spec.height <= 0 || spec.width <= 0 || spec.channels <= 0) {
    throw ContractError("synthetic: dimensions and class count must be positive");
  }
  Dataset d;
  for (int i = 0; i < spec.train; ++i) d.train.push_back(synthetic_sample(spec, seed, SplitName::train, i));
  for (int i = 0; i < spec.val; ++i) d.val.push_back(synthetic_sample(spec, seed, SplitName::val, i));
  for (int i = 0; i < spec.test; ++i) d.test.push_back(synthetic_sample(spec, seed, SplitName::test, i));
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "TORE0001";
constexpr std::string_view kConfigRecord = "__config__";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view d) : d_(d) {}

  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == d_.size(); }

  std::string_view take(std::size_t n, const char* what) {
    if (d_.size() - pos_ < n) throw LoadError(std::string("checkpoint: truncated ") + what, static_cast<long>(pos_));
    auto s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[static_cast<std::size_t>(i)])) << (8 * i);
    return v;
  }

 private:
  std::string_view d_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Model& model) {
  std::string out(kMagic);
  std::uint32_t count = 1;
  model.visit([&](const Parameter<float>&) { ++count; });
  put_u32(out, count);
  model.visit([&](const Parameter<float>& p) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (int d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : p.value.data()) put_f32(out, v);
  });
  const std::string cfg = serialize_configs(model.config, model.decoder_config);
  put_u32(out, static_cast<std::uint32_t>(kConfigRecord.size()));
  out += kConfigRecord;
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  return out;
}

Model checkpoint_from_bytes(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw LoadError("checkpoint: bad magic", 0);
  const std::uint32_t count = r.u32("record count");
  if (count == 0) throw LoadError("checkpoint: no records", 8);

  struct Record {
    std::vector<int> shape;
    std::vector<float> values;
    std::size_t offset;
  };
  std::map<std::string, Record> records;
  std::vector<std::string> order;
  std::string config;
  std::size_t config_offset = 0;
  bool have_config = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t name_len = r.u32("record name length");
    if (name_len == 0 || name_len > 4096) throw LoadError("checkpoint: bad record name length", static_cast<long>(at));
    const std::string name(r.take(name_len, "record name"));
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw LoadError("checkpoint: rank " + std::to_string(rank) + " too large", static_cast<long>(at));
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t dim = r.u32("dims");
      if (dim == 0 || dim > (1u << 28)) throw LoadError("checkpoint: bad dimension", static_cast<long>(r.offset() - 4));
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    if (name == kConfigRecord) {
      if (i + 1 != count) throw LoadError("checkpoint: config record must be last", static_cast<long>(at));
      if (rank != 1) throw LoadError("checkpoint: config record must have rank 1", static_cast<long>(at));
      config_offset = r.offset();
      config = std::string(r.take(n, "config payload"));
      have_config = true;
      continue;
    }
    const std::string_view raw = r.take(n * 4, "tensor data");
    Record rec{shape, std::vector<float>(n), at};
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[k * 4 + static_cast<std::size_t>(b)])) << (8 * b);
      rec.values[k] = std::bit_cast<float>(u);
    }
    if (!records.emplace(name, std::move(rec)).second) throw LoadError("checkpoint: duplicate record '" + name + "'", static_cast<long>(at));
    order.push_back(name);
  }
  if (!r.done()) throw LoadError("checkpoint: trailing bytes", static_cast<long>(r.offset()));
  if (!have_config) throw LoadError("checkpoint: missing config record", static_cast<long>(r.offset()));

  ModelConfig mc;
  DecoderConfig dc;
  std::size_t line_start = 0;
  while (line_start < config.size()) {
    std::size_t end = config.find('\n', line_start);
    if (end == std::string::npos) end = config.size();
    const std::string line = config.substr(line_start, end - line_start);
    const long off = static_cast<long>(config_offset + line_start);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw LoadError("checkpoint: malformed config line '" + line + "'", off);
      try {
        if (!apply_model_key(mc, dc, line.substr(0, eq), line.substr(eq + 1))) {
          throw LoadError("checkpoint: unknown config key '" + line.substr(0, eq) + "'", off);
        }
      } catch (const UsageError& e) {
        throw LoadError(std::string("checkpoint: ") + e.what(), off);
      }
    }
    line_start = end + 1;
  }
  Model m;
  try {
    m = Model::shaped(mc, dc);
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint: invalid config: ") + e.what(), static_cast<long>(config_offset));
  }
  std::size_t expected = 0;
  m.visit([&](Parameter<float>& p) {
    ++expected;
    auto it = records.find(p.name);
    if (it == records.end()) throw LoadError("checkpoint: missing tensor '" + p.name + "'", static_cast<long>(bytes.size()));
    if (it->second.shape != p.value.shape()) {
      throw LoadError("checkpoint: tensor '" + p.name + "' has shape " + Tensor::shape_string(it->second.shape) +
                          ", expected " + Tensor::shape_string(p.value.shape()),
                      static_cast<long>(it->second.offset));
    }
    p.value = Tensor(p.value.shape(), std::move(it->second.values));
    if (!p.value.all_finite()) throw LoadError("checkpoint: tensor '" + p.name + "' holds non-finite values", static_cast<long>(it->second.offset));
  });
  if (expected != records.size()) {
    for (const auto& name : order) {
      bool known = false;
      m.visit([&](const Parameter<float>& p) { known = known || p.name == name; });
      if (!known) throw LoadError("checkpoint: unexpected tensor '" + name + "'", static_cast<long>(records.at(name).offset));
    }
  }
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) { write_file(path, checkpoint_bytes(model)); }

Model load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_bytes(read_file(path)); }

}  // namespace tore
