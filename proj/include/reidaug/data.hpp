#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "rng.hpp"

namespace reidaug {

inline constexpr int kJunkIdentity = -1;

enum class Source { real, generated };
enum class Split { train, query, gallery };

inline std::string to_string(Split s) {
  switch (s) {
  case Split::train:
    return "train";
  case Split::query:
    return "query";
  case Split::gallery:
    return "gallery";
  }
  return "?";
}

struct PersonImage {
  ImageTensor pixels;
  int identity = 0;
  int camera = 0;
  Source source = Source::real;
  std::optional<std::string> origin_path;
};

struct Dataset {
  std::vector<PersonImage> samples;
  Split split = Split::train;
  std::string name;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Distinct non-junk identities, ascending.
  std::vector<int> identities() const {
    std::set<int> ids;
    for (const auto &s : samples)
      if (s.identity != kJunkIdentity)
        ids.insert(s.identity);
    return {ids.begin(), ids.end()};
  }

  std::multiset<int> identity_multiset() const {
    std::multiset<int> ids;
    for (const auto &s : samples)
      ids.insert(s.identity);
    return ids;
  }

  Dataset without_junk() const {
    Dataset out{{}, split, name};
    for (const auto &s : samples)
      if (s.identity != kJunkIdentity)
        out.samples.push_back(s);
    return out;
  }
};

/// Appends b's samples after a's.
inline Dataset concat(const Dataset &a, const Dataset &b) {
  Dataset out = a;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

struct ChannelStats {
  double mean_r = 0.0;
  double mean_g = 0.0;
  double mean_b = 0.0;
  std::uint64_t count = 0;

  std::array<float, 3> fill() const {
    return {static_cast<float>(mean_r), static_cast<float>(mean_g), static_cast<float>(mean_b)};
  }
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string path; // relative to the manifest's directory
  int identity = 0;
  int camera = 0;
  bool operator==(const ManifestEntry &) const = default;
};

inline constexpr const char *kManifestName = "manifest.tsv";

namespace detail {

inline std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    return std::nullopt;
  return v;
}

} // namespace detail

inline std::string format_manifest(const std::vector<ManifestEntry> &entries) {
  std::string out;
  for (const auto &e : entries)
    out += e.path + '\t' + std::to_string(e.identity) + '\t' + std::to_string(e.camera) + '\n';
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(const std::string &text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw IoError("manifest line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    auto id = detail::parse_int(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    auto cam = detail::parse_int(std::string_view(line).substr(t2 + 1));
    if (!id || !cam || *cam < 0)
      throw IoError("manifest line " + std::to_string(lineno) + ": bad identity/camera");
    out.push_back({line.substr(0, t1), *id, *cam});
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IoError("cannot open manifest: " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

inline void write_manifest(const std::filesystem::path &file, const std::vector<ManifestEntry> &entries) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot write manifest: " + file.string());
  out << format_manifest(entries);
}

/// Parses `{id}_c{cam}...` (Market-1501 naming). Junk detections carry id -1.
inline std::optional<ManifestEntry> parse_benchmark_filename(const std::string &filename) {
  static const std::regex pattern(R"(^(-?\d+)_c(\d+).*)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern))
    return std::nullopt;
  auto id = detail::parse_int(m[1].str());
  auto cam = detail::parse_int(m[2].str());
  if (!id || !cam || *id < kJunkIdentity)
    return std::nullopt;
  return ManifestEntry{filename, *id, *cam};
}

// ---------------------------------------------------------------------------
// Directory ingestion
// ---------------------------------------------------------------------------

struct LoadReport {
  std::vector<std::string> unmatched;                        // names not following the convention
  std::vector<std::pair<std::string, std::string>> failures; // (path, reason)
  bool used_manifest = false;

  bool clean() const noexcept { return unmatched.empty() && failures.empty(); }
};

struct LoadResult {
  Dataset dataset;
  LoadReport report;
  std::vector<ManifestEntry> manifest; // entries that loaded, in dataset order
};

inline bool is_image_file(const std::filesystem::path &p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

/// Builds a manifest from filenames in `dir` (sorted by name). Non-matching image files land in `unmatched`.
inline std::vector<ManifestEntry> manifest_from_filenames(const std::filesystem::path &dir,
                                                          std::vector<std::string> *unmatched = nullptr) {
  std::vector<std::string> names;
  for (const auto &e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path()))
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::vector<ManifestEntry> out;
  for (const auto &n : names) {
    if (auto entry = parse_benchmark_filename(n))
      out.push_back(*entry);
    else if (unmatched)
      unmatched->push_back(n);
  }
  return out;
}

/**
 * Loads a split from a directory. A `manifest.tsv` sidecar wins when present;
 * otherwise filenames are parsed. Per-file problems go into the report.
 */
inline LoadResult load_directory(const std::filesystem::path &dir, Split split) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir))
    throw IoError("dataset directory not found: " + dir.string());

  LoadResult result;
  std::vector<ManifestEntry> entries;
  if (fs::exists(dir / kManifestName)) {
    entries = read_manifest(dir / kManifestName);
    result.report.used_manifest = true;
  } else {
    entries = manifest_from_filenames(dir, &result.report.unmatched);
  }

  result.dataset.split = split;
  result.dataset.name = dir.filename().string();
  for (const auto &e : entries) {
    try {
      PersonImage p;
      p.pixels = io::read_rgb(dir / e.path);
      p.identity = e.identity;
      p.camera = e.camera;
      p.origin_path = e.path;
      result.dataset.samples.push_back(std::move(p));
      result.manifest.push_back(e);
    } catch (const std::exception &ex) {
      result.report.failures.emplace_back(e.path, ex.what());
    }
  }
  if (result.dataset.empty())
    throw IoError("no images found in " + dir.string());
  return result;
}

/// Writes samples as PNGs plus manifest.tsv. Filenames come from `names` (same length as ds).
inline std::vector<ManifestEntry> write_dataset(const std::filesystem::path &dir, const Dataset &ds,
                                                const std::vector<std::string> &names) {
  if (names.size() != ds.size())
    throw ArgumentError("write_dataset: name count differs from sample count");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    io::write_png(dir / names[i], ds.samples[i].pixels);
    entries.push_back({names[i], ds.samples[i].identity, ds.samples[i].camera});
  }
  write_manifest(dir / kManifestName, entries);
  return entries;
}

inline std::string benchmark_filename(int identity, int camera, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d_c%d_%06zu.png", identity, camera, index);
  return buf;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthOptions {
  int first_id = 0;  // identities are first_id .. first_id + n_ids - 1
  int n_cameras = 2; // cameras are 1..n_cameras, assigned round-robin per identity
};

namespace detail {

struct IdentitySignature {
  std::array<float, 3> upper, lower, head, accent;
  double torso_width;
  double leg_gap;
  bool stripe;
  bool bag;
};

inline IdentitySignature make_signature(std::uint64_t seed, int identity) {
  Rng rng = Rng::substream(seed, {0x1d, static_cast<std::uint64_t>(identity)});
  auto color = [&] {
    return std::array<float, 3>{static_cast<float>(rng.uniform(20, 235)), static_cast<float>(rng.uniform(20, 235)),
                                static_cast<float>(rng.uniform(20, 235))};
  };
  IdentitySignature s;
  s.upper = color();
  s.lower = color();
  s.head = {static_cast<float>(rng.uniform(150, 230)), static_cast<float>(rng.uniform(110, 180)),
            static_cast<float>(rng.uniform(90, 150))};
  s.accent = color();
  s.torso_width = rng.uniform(0.45, 0.75);
  s.leg_gap = rng.uniform(0.0, 0.2);
  s.stripe = rng.bernoulli(0.5);
  s.bag = rng.bernoulli(0.5);
  return s;
}

} // namespace detail

/**
 * Deterministic synthetic pedestrians. Each identity has a fixed clothing
 * signature; each image adds placement, illumination and noise jitter.
 */
inline Dataset synth_corpus(int n_ids, int imgs_per_id, int height, int width, std::uint64_t seed,
                            SynthOptions opts = {}) {
  if (n_ids < 1 || imgs_per_id < 1)
    throw ArgumentError("synth_corpus: n_ids and imgs_per_id must be >= 1");
  if (height < 8 || width < 8)
    throw ArgumentError("synth_corpus: height and width must be >= 8");
  if (opts.n_cameras < 1 || opts.first_id < 0)
    throw ArgumentError("synth_corpus: bad options");

  Dataset ds;
  ds.name = "synthetic";
  const auto H = static_cast<std::size_t>(height), W = static_cast<std::size_t>(width);
  for (int k = 0; k < n_ids; ++k) {
    const int id = opts.first_id + k;
    const auto sig = detail::make_signature(seed, id);
    for (int j = 0; j < imgs_per_id; ++j) {
      Rng rng = Rng::substream(seed, {0x1e, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(j)});
      const float bg_base = static_cast<float>(rng.uniform(60, 200));
      const std::array<float, 3> bg{bg_base + static_cast<float>(rng.uniform(-25, 25)),
                                    bg_base + static_cast<float>(rng.uniform(-25, 25)),
                                    bg_base + static_cast<float>(rng.uniform(-25, 25))};
      const double dx = rng.uniform(-0.08, 0.08) * width;
      const double dy = rng.uniform(-0.04, 0.04) * height;
      const double gain = rng.uniform(0.85, 1.15);
      const double cx = width / 2.0 + dx;
      const double half_torso = sig.torso_width * width / 2.0;

      ImageTensor img(3, H, W);
      for (std::size_t y = 0; y < H; ++y) {
        const double v = (static_cast<double>(y) + 0.5 - dy) / height;
        for (std::size_t x = 0; x < W; ++x) {
          const double u = static_cast<double>(x) + 0.5 - cx;
          const std::array<float, 3> *col = &bg;
          bool lit = false;
          if (v >= 0.04 && v < 0.2 && std::abs(u) < 0.16 * width) {
            col = &sig.head;
            lit = true;
          } else if (v >= 0.2 && v < 0.55 && std::abs(u) < half_torso) {
            col = (sig.stripe && v >= 0.33 && v < 0.41) ? &sig.accent : &sig.upper;
            lit = true;
          } else if (v >= 0.55 && v < 0.96 && std::abs(u) < half_torso * 0.85 &&
                     std::abs(u) >= sig.leg_gap * width / 2.0) {
            col = &sig.lower;
            lit = true;
          } else if (sig.bag && v >= 0.4 && v < 0.6 && u >= half_torso && u < half_torso + 0.15 * width) {
            col = &sig.accent;
            lit = true;
          }
          for (std::size_t c = 0; c < 3; ++c) {
            double val = (*col)[c] * (lit ? gain : 1.0) + rng.normal(0.0, 6.0);
            img.at(c, y, x) = static_cast<float>(std::clamp(val, 0.0, 255.0));
          }
        }
      }
      PersonImage p;
      p.pixels = std::move(img);
      p.identity = id;
      p.camera = 1 + j % opts.n_cameras;
      ds.samples.push_back(std::move(p));
    }
  }
  return ds;
}

/// Per-channel mean over every pixel of every image (train split by convention).
inline ChannelStats channel_means(const Dataset &ds) {
  if (ds.empty())
    throw ArgumentError("channel_means: empty dataset");
  std::array<double, 3> sum{0, 0, 0};
  std::uint64_t count = 0;
  for (const auto &s : ds.samples) {
    const auto &img = s.pixels;
    if (img.channels() != 3)
      throw ArgumentError("channel_means: image without 3 channels");
    const std::size_t plane = img.height() * img.width();
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      const float *p = img.pixels().data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i)
        acc += p[i];
      sum[c] += acc;
    }
    count += plane;
  }
  if (count == 0)
    throw ArgumentError("channel_means: no pixels");
  const double n = static_cast<double>(count);
  return {sum[0] / n, sum[1] / n, sum[2] / n, count};
}

} // namespace reidaug
