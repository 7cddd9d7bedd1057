#include "ucolor/io.hpp"

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ucolor/config.hpp"
#include "ucolor/error.hpp"

namespace ucolor::io {

using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("error writing " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::uint8_t to_byte(double v) {
  if (!(v > 0.0)) return 0;  // also NaN
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

namespace {

struct Netpbm {
  int channels = 0;
  std::size_t width = 0, height = 0;
  std::string_view payload;
};

Netpbm parse_netpbm(std::string_view b, const std::string& what) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '6' && b[1] != '5')) {
    throw FormatError(what + ": malformed header: expected magic P6 or P5");
  }
  Netpbm out;
  out.channels = b[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  auto next_number = [&](const char* field) -> std::size_t {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= b.size() || !std::isdigit(static_cast<unsigned char>(b[pos]))) {
      throw FormatError(what + ": malformed header: missing " + field);
    }
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
      v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
      if (v > (std::size_t{1} << 31)) throw FormatError(what + ": malformed header: " + field + " too large");
      ++pos;
    }
    return v;
  };
  out.width = next_number("width");
  out.height = next_number("height");
  const std::size_t maxval = next_number("maxval");
  if (out.width == 0 || out.height == 0) throw FormatError(what + ": malformed header: zero extent");
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    throw FormatError(what + ": malformed header: no separator before payload");
  }
  ++pos;
  if (maxval != 255) throw FormatError(what + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
  const std::size_t need = out.width * out.height * static_cast<std::size_t>(out.channels);
  const std::size_t have = b.size() - pos;
  if (have < need) {
    throw FormatError(what + ": truncated payload: expected " + std::to_string(need) + " bytes, got " +
                      std::to_string(have));
  }
  out.payload = b.substr(pos, need);
  return out;
}

}  // namespace

Image decode_ppm(std::string_view bytes, const std::string& what) {
  const Netpbm p = parse_netpbm(bytes, what);
  Image img(p.height, p.width);
  const auto* src = reinterpret_cast<const unsigned char*>(p.payload.data());
  for (std::size_t i = 0; i < p.height * p.width; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[3 * i + c] = src[p.channels == 3 ? 3 * i + c : i] / 255.0;
  return img;
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out[header + i] = static_cast<char>(to_byte(img.pixels[i]));
  return out;
}

GrayBytes decode_pgm(std::string_view bytes, const std::string& what) {
  const Netpbm p = parse_netpbm(bytes, what);
  if (p.channels != 1) throw FormatError(what + ": expected a P5 grayscale map");
  GrayBytes g{p.height, p.width, {}};
  g.data.assign(p.payload.begin(), p.payload.end());
  return g;
}

std::string encode_pgm(const GrayBytes& g) {
  std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  out.append(g.data.begin(), g.data.end());
  return out;
}

namespace {

std::string png_encode(png_image& image, const void* buffer) {
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer, 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

Image decode_png(std::string_view bytes, const std::string& what) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(what + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(what + ": " + image.message);
  }
  Image img(image.height, image.width);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
  return img;
}

std::string encode_png(const Image& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
  return png_encode(image, buf.data());
}

std::string encode_png_gray(const GrayBytes& g) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(g.width);
  image.height = static_cast<png_uint_32>(g.height);
  image.format = PNG_FORMAT_GRAY;
  return png_encode(image, g.data.data());
}

bool is_png(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

Image read_image(const fs::path& path) {
  const std::string bytes = read_file(path);
  return is_png(path) ? decode_png(bytes, path.string()) : decode_ppm(bytes, path.string());
}

void write_image(const Image& img, const fs::path& path) {
  atomic_write(path, is_png(path) ? encode_png(img) : encode_ppm(img));
}

GrayBytes quantize(const TransmissionMap& t) {
  GrayBytes g{t.height, t.width, std::vector<std::uint8_t>(t.values.size())};
  for (std::size_t i = 0; i < t.values.size(); ++i) g.data[i] = to_byte(t.values[i]);
  return g;
}

void write_gray(const GrayBytes& g, const fs::path& path) {
  atomic_write(path, is_png(path) ? encode_png_gray(g) : encode_pgm(g));
}

TransmissionMap read_transmission(const fs::path& path) {
  const std::string bytes = read_file(path);
  TransmissionMap t;
  if (is_png(path)) {
    const Image img = decode_png(bytes, path.string());
    t = TransmissionMap(img.height, img.width);
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = img.pixels[3 * i];
  } else {
    const GrayBytes g = decode_pgm(bytes, path.string());
    t = TransmissionMap(g.height, g.width);
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = g.data[i] / 255.0;
  }
  return t;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view b) : b_(b) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* field) {
    need(n, field);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (remaining() < n) {
      throw FormatError(std::string("weights file truncated reading ") + field + ": need " + std::to_string(n) +
                        " bytes, " + std::to_string(remaining()) + " left");
    }
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const net::ModelConfig& cfg, const net::ModelWeights& w) {
  std::string out = "UCLR";
  put_u32(out, kWeightsVersion);
  const std::string echo = config::model_json(cfg);
  put_u32(out, static_cast<std::uint32_t>(echo.size()));
  out += echo;
  put_u32(out, static_cast<std::uint32_t>(w.size()));
  for (const auto& [name, t] : w) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

LoadedWeights decode_weights(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.take(4, "magic") != "UCLR") throw FormatError("not a weights file: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightsVersion) {
    throw FormatError("unsupported weights version " + std::to_string(version) + " (expected " +
                      std::to_string(kWeightsVersion) + ")");
  }
  LoadedWeights out;
  const std::uint32_t echo_len = r.u32("config length");
  out.config = config::parse_model_json(std::string(r.take(echo_len, "config")));
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name(r.take(name_len, "name"));
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw FormatError("weights file: " + name + " has rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32("extent"));
      n *= shape.back();
    }
    if (n == 0 || n > r.remaining() / 4) {
      throw FormatError("weights file truncated: " + name + " " + shape_string(shape) + " does not fit the remaining " +
                        std::to_string(r.remaining()) + " bytes");
    }
    Tensor t(shape);
    for (double& v : t.data()) v = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
    if (!out.weights.emplace(std::move(name), std::move(t)).second) {
      throw FormatError("weights file: duplicate tensor name");
    }
  }
  if (r.remaining() != 0) throw FormatError("weights file: " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

void save_weights(const fs::path& path, const net::ModelConfig& cfg, const net::ModelWeights& w) {
  atomic_write(path, encode_weights(cfg, w));
}

LoadedWeights load_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights " + path.string());
  char head[8];
  in.read(head, sizeof head);
  if (in.gcount() < 4 || std::string_view(head, 4) != "UCLR") {
    throw FormatError(path.string() + ": not a weights file: bad magic");
  }
  if (in.gcount() < 8) throw FormatError(path.string() + ": weights file truncated reading version");
  ByteReader vr(std::string_view(head + 4, 4));
  if (const auto v = vr.u32("version"); v != kWeightsVersion) {
    throw FormatError(path.string() + ": unsupported weights version " + std::to_string(v));
  }
  return decode_weights(read_file(path));
}

namespace {

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed JSON: " + e.what());
  }
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw ConfigError(where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  const json j = parse_json_file(path);
  const std::string where = path.string();
  only_keys(j, where, {"name", "root", "entries"});
  DatasetManifest m;
  m.name = j.contains("name") ? string_field(j, "name", where) : path.stem().string();
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  m.root = j.contains("root") ? base / string_field(j, "root", where) : base;
  if (!j.contains("entries") || !j["entries"].is_array()) throw ConfigError(where + ": 'entries' must be an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j["entries"].size(); ++i) {
    const json& e = j["entries"][i];
    const std::string ew = where + ": entries[" + std::to_string(i) + "]";
    only_keys(e, ew, {"input", "reference"});
    ManifestEntry entry;
    entry.input = string_field(e, "input", ew);
    if (e.contains("reference")) entry.reference = string_field(e, "reference", ew);
    if (!seen.insert(entry.input).second) throw ConfigError(ew + ": duplicate input " + entry.input);
    if (!fs::exists(m.resolve(entry.input))) throw IoError(ew + ": missing file " + m.resolve(entry.input).string());
    if (entry.reference && !fs::exists(m.resolve(*entry.reference))) {
      throw IoError(ew + ": missing file " + m.resolve(*entry.reference).string());
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

metrics::ColorCheckerLayout parse_layout(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("layout: malformed JSON: ") + e.what());
  }
  only_keys(j, "layout", {"patches"});
  if (!j.contains("patches") || !j["patches"].is_array()) throw ConfigError("layout: 'patches' must be an array");
  metrics::ColorCheckerLayout layout;
  for (std::size_t i = 0; i < j["patches"].size(); ++i) {
    const json& p = j["patches"][i];
    const std::string where = "layout: patches[" + std::to_string(i) + "]";
    only_keys(p, where, {"x", "y", "width", "height", "lab"});
    auto count = [&](const char* key) -> std::size_t {
      if (!p.contains(key) || !p[key].is_number_unsigned()) {
        throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
      }
      return p[key].get<std::size_t>();
    };
    layout.patches.push_back({count("x"), count("y"), count("width"), count("height")});
    if (!p.contains("lab") || !p["lab"].is_array() || p["lab"].size() != 3 ||
        !std::all_of(p["lab"].begin(), p["lab"].end(), [](const json& v) { return v.is_number(); })) {
      throw ConfigError(where + ": 'lab' must be three numbers");
    }
    layout.reference_lab.push_back({p["lab"][0].get<double>(), p["lab"][1].get<double>(), p["lab"][2].get<double>()});
  }
  if (layout.patches.size() != metrics::ColorCheckerLayout::kPatches) {
    throw ConfigError("layout: expected 24 patches, got " + std::to_string(layout.patches.size()));
  }
  return layout;
}

metrics::ColorCheckerLayout load_layout(const fs::path& path) { return parse_layout(read_file(path)); }

std::string layout_json(const metrics::ColorCheckerLayout& layout) {
  nlohmann::ordered_json patches = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < layout.patches.size(); ++i) {
    const auto& r = layout.patches[i];
    const auto& lab = layout.reference_lab[i];
    patches.push_back(
        {{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}, {"lab", {lab[0], lab[1], lab[2]}}});
  }
  nlohmann::ordered_json j;
  j["patches"] = patches;
  return j.dump(2) + "\n";
}

metrics::EvalReport evaluate(const DatasetManifest& manifest, const fs::path& results_dir, bool with_reference,
                             const metrics::ColorCheckerLayout* layout) {
  metrics::EvalReport report;
  report.with_reference = with_reference;
  report.with_layout = layout != nullptr;
  for (const auto& entry : manifest.entries) {
    const fs::path rel(entry.input);
    const fs::path result_path = results_dir / (rel.is_absolute() ? rel.filename() : rel);
    if (!fs::exists(result_path)) {
      report.missing.push_back(entry.input);
      continue;
    }
    const Image result = read_image(result_path);
    std::optional<Image> reference;
    if (with_reference && entry.reference) reference = read_image(manifest.resolve(*entry.reference));
    report.records.push_back(
        metrics::evaluate_image(entry.input, result, reference ? &*reference : nullptr, layout));
  }
  report.aggregate = metrics::aggregate(report.records);
  return report;
}

}  // namespace ucolor::io
