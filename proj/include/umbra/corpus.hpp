#pragma once

// Labeled sample sets: the synthetic traffic-sign corpus, its JSON manifest,
// and the brightness filter that drops dark or already-shadowed images.

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "umbra/color.hpp"
#include "umbra/error.hpp"
#include "umbra/image.hpp"
#include "umbra/image_io.hpp"
#include "umbra/random.hpp"

namespace umbra {

// Threshold on mean in-mask L, expressed on the 0..255 scale (L* x 2.55).
inline constexpr double kDarkThreshold = 120.0;

inline double mean_lightness_255(const Image& img, const RegionMask& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (mask.at(x, y)) {
        sum += rgb_to_lab(img.at(x, y)).l;
        ++n;
      }
  if (n == 0) return std::nan("");
  return sum / static_cast<double>(n) * 2.55;
}

// Samples whose value is exactly at the threshold are kept.
inline bool bright_enough(double mean_l255, double threshold = kDarkThreshold) {
  return !(mean_l255 < threshold);
}

using WarningSink = std::function<void(std::string_view)>;

inline std::vector<Sample> filter_dark(std::span<const Sample> samples, double threshold = kDarkThreshold,
                                       const WarningSink& warn = {}) {
  std::vector<Sample> kept;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (!s.mask.matches(s.image)) throw std::invalid_argument("sample mask size differs from image size");
    const double l = mean_lightness_255(s.image, s.mask);
    if (std::isnan(l)) {
      const std::string msg = "sample " + std::to_string(i) + " has an empty mask; removed";
      if (warn) warn(msg);
      else std::clog << "warning: " << msg << '\n';
      continue;
    }
    if (bright_enough(l, threshold)) kept.push_back(s);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Synthetic sign corpus

inline constexpr int kSignSide = 32;

// Round signs with a red ring and a 2x3 grid of gray ink blocks in a white
// field. Each class lights a different set of blocks; any two sets differ in
// at least three blocks.
inline const std::vector<std::string>& sign_class_names() {
  static const std::vector<std::string> names{"glyph_0", "glyph_1", "glyph_2", "glyph_3",
                                              "glyph_4", "glyph_5", "glyph_6", "glyph_7"};
  return names;
}

namespace detail {

inline constexpr RgbPixel kPaintRed{200, 24, 32};
inline constexpr RgbPixel kPaintWhite{245, 245, 245};
inline constexpr RgbPixel kPaintInk{90, 90, 90};

// Sign color at sign-local coordinates (radius 13.5 units), or nullopt for
// background. Blocks are 6x6 units, bit (row * 2 + col) of the class code,
// rows counted from the top.
inline std::optional<RgbPixel> sign_color(std::size_t cls, double u, double v) {
  static constexpr unsigned kCodes[8] = {0x01, 0x27, 0x14, 0x0a, 0x32, 0x2c, 0x1f, 0x39};
  constexpr double r = 13.5;
  const double rho = std::hypot(u, v);
  if (rho > r) return std::nullopt;
  if (rho > r - 2.5) return kPaintRed;
  if (u >= -6.0 && u < 6.0 && v >= -9.0 && v < 9.0) {
    const int col = u < 0.0 ? 0 : 1;
    const int row = static_cast<int>(std::floor((v + 9.0) / 6.0));
    if ((kCodes[cls % 8] >> (row * 2 + col)) & 1u) return kPaintInk;
  }
  return kPaintWhite;
}

struct RenderJitter {
  double rotation_deg{0.0};
  double scale{1.0};
  double dx{0.0};
  double dy{0.0};
  double brightness{1.0};
};

inline RgbPixel scale_pixel(RgbPixel p, double s) {
  return {quantize(p.r * s), quantize(p.g * s), quantize(p.b * s)};
}

}  // namespace detail

// Noise-free template on a flat gray background.
inline Image render_sign(std::size_t cls, const detail::RenderJitter& j = {},
                         RgbPixel background = {110, 118, 112}) {
  Image img(kSignSide, kSignSide, background);
  const double c = kSignSide / 2.0;
  const double th = j.rotation_deg * 3.14159265358979323846 / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  for (int y = 0; y < kSignSide; ++y) {
    for (int x = 0; x < kSignSide; ++x) {
      const double px = x + 0.5 - c - j.dx;
      const double py = y + 0.5 - c - j.dy;
      const double u = (px * ct + py * st) / j.scale;
      const double v = (-px * st + py * ct) / j.scale;
      if (auto col = detail::sign_color(cls, u, v)) img.set(x, y, detail::scale_pixel(*col, j.brightness));
    }
  }
  return img;
}

inline RegionMask disc_mask(int side, double cx, double cy, double radius) {
  RegionMask m(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= radius) m.set(x, y, true);
  return m;
}

// `per_class` jittered renderings of each of `classes` sign templates.
// Pure in (seed, classes, per_class).
inline std::vector<Sample> generate_corpus(std::uint64_t seed, std::size_t classes = 8, std::size_t per_class = 100) {
  if (classes == 0 || classes > sign_class_names().size())
    throw std::invalid_argument("class count must be in [1, 8]");
  std::vector<Sample> out;
  out.reserve(classes * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t cls = 0; cls < classes; ++cls) {
      Rng rng(derive_seed(seed, i * classes + cls));
      detail::RenderJitter j;
      j.rotation_deg = rng.uniform(-5.0, 5.0);
      j.scale = rng.uniform(0.92, 1.05);
      j.dx = rng.uniform(-1.0, 1.0);
      j.dy = rng.uniform(-1.0, 1.0);
      j.brightness = rng.uniform(0.9, 1.1);
      const RgbPixel bg{static_cast<std::uint8_t>(rng.uniform(70, 150)),
                        static_cast<std::uint8_t>(rng.uniform(80, 160)),
                        static_cast<std::uint8_t>(rng.uniform(70, 150))};
      Image img = render_sign(cls, j, bg);
      for (int y = 0; y < kSignSide; ++y) {
        for (int x = 0; x < kSignSide; ++x) {
          if (img.at(x, y) != bg) continue;  // sign pixel
          const double n = rng.uniform(-15.0, 15.0);
          img.set(x, y, detail::scale_pixel(bg, 1.0 + n / 128.0));
        }
      }
      const double c = kSignSide / 2.0;
      out.push_back({std::move(img), cls, disc_mask(kSignSide, c + j.dx, c + j.dy, 14.0 * j.scale)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: {"classes": [...], "entries": [{"image", "mask", "label"}]}.
// Paths are relative to the manifest's directory; mask may be "full".

struct ManifestEntry {
  std::string image;
  std::string mask{kFullMask};
  std::size_t label{0};
};

struct CorpusManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

inline nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) entries.push_back({{"image", e.image}, {"mask", e.mask}, {"label", e.label}});
  return {{"classes", m.class_names}, {"entries", entries}};
}

inline CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  CorpusManifest m;
  m.root = path.parent_path();
  try {
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.image = e.at("image").get<std::string>();
      me.mask = e.value("mask", std::string(kFullMask));
      me.label = e.at("label").get<std::size_t>();
      if (me.label >= m.class_names.size()) throw FormatError("label out of range in " + path.string());
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest schema in " + path.string() + ": " + e.what());
  }
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(m.root / e.image))
      throw Error("manifest references missing image " + (m.root / e.image).string());
    if (e.mask != kFullMask && !std::filesystem::exists(m.root / e.mask))
      throw Error("manifest references missing mask " + (m.root / e.mask).string());
  }
  return m;
}

inline std::vector<Sample> load_samples(const CorpusManifest& m) {
  std::vector<Sample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    Image img = load_image((m.root / e.image).string());
    const std::string mask_spec = e.mask == kFullMask ? e.mask : (m.root / e.mask).string();
    RegionMask mask = load_mask(mask_spec, img.width(), img.height());
    out.push_back({std::move(img), e.label, std::move(mask)});
  }
  return out;
}

// Writes images/NNNNN.ppm, masks/NNNNN.pgm and manifest.json under `dir`.
inline CorpusManifest write_corpus(std::span<const Sample> samples, const std::vector<std::string>& class_names,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  CorpusManifest m;
  m.root = dir;
  m.class_names = class_names;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu", i);
    ManifestEntry e{std::string("images/") + name + ".ppm", std::string("masks/") + name + ".pgm",
                    samples[i].label};
    save_image(samples[i].image, (dir / e.image).string());
    save_mask(samples[i].mask, (dir / e.mask).string());
    m.entries.push_back(std::move(e));
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw Error("failed writing manifest in " + dir.string());
  return m;
}

}  // namespace umbra
