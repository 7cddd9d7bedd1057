#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ucolor/image.hpp"
#include "ucolor/metrics.hpp"
#include "ucolor/net.hpp"

namespace ucolor::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);
// Writes to a sibling temporary and renames over the target, so a failure
// never leaves a partial file behind.
void atomic_write(const fs::path& path, std::string_view bytes);

// round(255 v), v clamped to [0,1].
std::uint8_t to_byte(double v);

// 8-bit gray plane, row-major.
struct GrayBytes {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> data;
};

// PPM P6 / PGM P5, maxval 255. P5 input is replicated into three channels.
Image decode_ppm(std::string_view bytes, const std::string& what = "ppm");
std::string encode_ppm(const Image& img);
GrayBytes decode_pgm(std::string_view bytes, const std::string& what = "pgm");
std::string encode_pgm(const GrayBytes& g);

Image decode_png(std::string_view bytes, const std::string& what = "png");
std::string encode_png(const Image& img);
std::string encode_png_gray(const GrayBytes& g);

bool is_png(const fs::path& path);
// Format picked by extension: .png, otherwise PPM/PGM.
Image read_image(const fs::path& path);
void write_image(const Image& img, const fs::path& path);

GrayBytes quantize(const TransmissionMap& t);
void write_gray(const GrayBytes& g, const fs::path& path);
TransmissionMap read_transmission(const fs::path& path);

// "UCLR", u32 version, u32 + model-config JSON, u32 count, then per tensor
// u32 name length, name, u32 rank, u32 extents, float32 payload; all little
// endian.
inline constexpr std::uint32_t kWeightsVersion = 1;
std::string encode_weights(const net::ModelConfig& cfg, const net::ModelWeights& w);
struct LoadedWeights {
  net::ModelConfig config;
  net::ModelWeights weights;
};
LoadedWeights decode_weights(std::string_view bytes);
void save_weights(const fs::path& path, const net::ModelConfig& cfg, const net::ModelWeights& w);
LoadedWeights load_weights(const fs::path& path);

struct ManifestEntry {
  std::string input;
  std::optional<std::string> reference;
};

struct DatasetManifest {
  std::string name;
  fs::path root;
  std::vector<ManifestEntry> entries;

  fs::path resolve(const std::string& rel) const { return root / rel; }
};

// {"name", "root" (default: the manifest's directory), "entries": [{"input", "reference"}]}.
// Rejects unknown keys, duplicate inputs and files that do not exist.
DatasetManifest load_manifest(const fs::path& path);

// {"patches": [{"x", "y", "width", "height", "lab": [L, a, b]}, ... 24]}
metrics::ColorCheckerLayout parse_layout(const std::string& json_text);
metrics::ColorCheckerLayout load_layout(const fs::path& path);
std::string layout_json(const metrics::ColorCheckerLayout& layout);

// Results are looked up under results_dir by each entry's input path.
// Missing results are listed in the report and skipped.
metrics::EvalReport evaluate(const DatasetManifest& manifest, const fs::path& results_dir, bool with_reference,
                             const metrics::ColorCheckerLayout* layout = nullptr);

}  // namespace ucolor::io
