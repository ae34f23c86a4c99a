#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "data.hpp"
#include "gan.hpp"
#include "occlude.hpp"

namespace reidaug::augment {

/// How many generated variants each real training image contributes.
struct AugmentationPlan {
  std::size_t n_real = 0;
  std::size_t m_generated = 0;
  std::vector<std::size_t> per_image_counts;
  std::uint64_t seed = 0;
};

/**
 * Balanced allocation of M generated images over n_real sources: each gets
 * floor(M / n_real); M mod n_real sources chosen by seed get one more.
 */
inline AugmentationPlan plan(std::int64_t n_real, std::int64_t m, std::uint64_t seed) {
  if (n_real < 1)
    throw ArgumentError("plan: n_real must be >= 1");
  if (m < 0)
    throw ArgumentError("plan: M must be >= 0");
  AugmentationPlan p;
  p.n_real = static_cast<std::size_t>(n_real);
  p.m_generated = static_cast<std::size_t>(m);
  p.seed = seed;
  p.per_image_counts.assign(p.n_real, p.m_generated / p.n_real);
  const std::size_t extra = p.m_generated % p.n_real;
  if (extra > 0) {
    std::vector<std::size_t> idx(p.n_real);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = Rng::substream(seed, {0xa117});
    rng.shuffle(idx);
    for (std::size_t k = 0; k < extra; ++k)
      ++p.per_image_counts[idx[k]];
  }
  return p;
}

/// Identity multiset the plan will add: each source identity repeated by its count.
inline std::multiset<int> planned_identities(const Dataset &train, const AugmentationPlan &p) {
  std::multiset<int> ids;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t k = 0; k < p.per_image_counts[i]; ++k)
      ids.insert(train.samples[i].identity);
  return ids;
}

/// (source index, variant) of each generated sample, in output order.
struct GeneratedRef {
  std::size_t source = 0;
  std::size_t variant = 0;
};

inline std::vector<GeneratedRef> generation_order(const AugmentationPlan &p) {
  std::vector<GeneratedRef> refs;
  for (std::size_t i = 0; i < p.n_real; ++i)
    for (std::size_t v = 0; v < p.per_image_counts[i]; ++v)
      refs.push_back({i, v});
  return refs;
}

/**
 * Real samples (unchanged, original order) followed by generated samples in
 * plan order. Variant v of every source uses occlusion pass v of the
 * generation stream, so each variant sees a fresh rectangle.
 */
inline Dataset build_augmented_set(const Dataset &train, const gan::Restorer &restore, const AugmentationPlan &p,
                                   const OcclusionConfig &occ, const ChannelStats &stats) {
  if (p.n_real != train.size())
    throw ArgumentError("build_augmented_set: plan was made for " + std::to_string(p.n_real) + " images, got " +
                        std::to_string(train.size()));
  if (p.per_image_counts.size() != p.n_real)
    throw ArgumentError("build_augmented_set: malformed plan");
  Dataset out = train;
  if (p.m_generated == 0)
    return out;
  const std::size_t max_variants = *std::max_element(p.per_image_counts.begin(), p.per_image_counts.end());
  // Generate pass by pass, then emit in plan order.
  std::vector<Dataset> passes;
  for (std::size_t v = 0; v < max_variants; ++v) {
    Dataset subset{{}, train.split, train.name};
    for (std::size_t i = 0; i < train.size(); ++i)
      if (p.per_image_counts[i] > v)
        subset.samples.push_back(train.samples[i]);
    passes.push_back(gan::generate_deoccluded(restore, subset, occ, stats, p.seed, v));
  }
  std::vector<std::size_t> cursor(max_variants, 0);
  for (const auto &ref : generation_order(p))
    out.samples.push_back(std::move(passes[ref.variant].samples[cursor[ref.variant]++]));
  out.name = train.name + "-augmented";
  return out;
}

/// Stem of a sample's source file, or a positional stand-in for in-memory corpora.
inline std::string source_stem(const PersonImage &s, std::size_t index) {
  if (s.origin_path)
    return std::filesystem::path(*s.origin_path).stem().string();
  char buf[32];
  std::snprintf(buf, sizeof buf, "src%06zu", index);
  return buf;
}

/// `{id:04d}_c{cam}_gen{variant}_{srcstem}.png`
inline std::string generated_filename(const PersonImage &source, std::size_t source_index, std::size_t variant) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d_c%d_gen%zu_", source.identity, source.camera, variant);
  return std::string(buf) + source_stem(source, source_index) + ".png";
}

/// Output filenames for an augmented set: real names first, then generated names.
inline std::vector<std::string> augmented_filenames(const Dataset &train, const AugmentationPlan &p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < train.size(); ++i)
    names.push_back(train.samples[i].origin_path
                        ? std::filesystem::path(*train.samples[i].origin_path).replace_extension(".png").string()
                        : benchmark_filename(train.samples[i].identity, train.samples[i].camera, i));
  for (const auto &ref : generation_order(p))
    names.push_back(generated_filename(train.samples[ref.source], ref.source, ref.variant));
  return names;
}

} // namespace reidaug::augment
