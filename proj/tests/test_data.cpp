#include <gtest/gtest.h>

#include <fstream>

#include "reidaug/data.hpp"
#include "reidaug/image_io.hpp"
#include "test_util.hpp"

using namespace reidaug;
using reidaug::testing::TempDir;

TEST(BenchmarkFilename, ParsesIdentityAndCamera) {
  auto e = parse_benchmark_filename("0002_c1s1_000451_01.jpg");
  ASSERT_TRUE(e);
  EXPECT_EQ(e->identity, 2);
  EXPECT_EQ(e->camera, 1);
}

TEST(BenchmarkFilename, JunkSentinel) {
  auto e = parse_benchmark_filename("-1_c3s2_000000_00.jpg");
  ASSERT_TRUE(e);
  EXPECT_EQ(e->identity, kJunkIdentity);
  EXPECT_EQ(e->camera, 3);
}

TEST(BenchmarkFilename, RejectsOtherNames) {
  EXPECT_FALSE(parse_benchmark_filename("readme.png"));
  EXPECT_FALSE(parse_benchmark_filename("0002-c1.jpg"));
  EXPECT_FALSE(parse_benchmark_filename("-2_c1.jpg"));
}

TEST(Manifest, RoundTripsRandomEntries) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ManifestEntry> entries;
    const auto n = rng.uniform_int(0, 20);
    for (int i = 0; i < n; ++i)
      entries.push_back({"dir/" + std::to_string(rng.uniform_int(0, 99999)) + ".png",
                         static_cast<int>(rng.uniform_int(-1, 1500)), static_cast<int>(rng.uniform_int(0, 8))});
    EXPECT_EQ(parse_manifest(format_manifest(entries)), entries);
  }
}

TEST(Manifest, RejectsMalformedLines) {
  EXPECT_THROW(parse_manifest("a.png\t1\n"), IoError);
  EXPECT_THROW(parse_manifest("a.png\tx\t1\n"), IoError);
  EXPECT_THROW(parse_manifest("a.png\t1\t2\t3\n"), IoError);
}

namespace {
ImageTensor solid(std::size_t h, std::size_t w, float r, float g, float b) {
  ImageTensor img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  return img;
}
} // namespace

TEST(LoadDirectory, ParsesFilenamesAndReportsProblems) {
  TempDir dir;
  io::write_png(dir / "0002_c1s1_000451_01.png", solid(8, 4, 10, 20, 30));
  io::write_png(dir / "-1_c3s2_000000_00.png", solid(8, 4, 1, 2, 3));
  io::write_png(dir / "unlabeled.png", solid(8, 4, 0, 0, 0));
  std::ofstream(dir / "0005_c2s1_000001_01.jpg") << "not an image";

  auto res = load_directory(dir.path(), Split::train);
  ASSERT_EQ(res.dataset.size(), 2u);
  // sorted by name: "-1_..." < "0002_..."
  EXPECT_EQ(res.dataset.samples[0].identity, -1);
  EXPECT_EQ(res.dataset.samples[0].camera, 3);
  EXPECT_EQ(res.dataset.samples[1].identity, 2);
  EXPECT_EQ(res.dataset.samples[1].camera, 1);
  EXPECT_FLOAT_EQ(res.dataset.samples[1].pixels.at(2, 0, 0), 30.0f);
  ASSERT_EQ(res.report.unmatched.size(), 1u);
  EXPECT_EQ(res.report.unmatched[0], "unlabeled.png");
  ASSERT_EQ(res.report.failures.size(), 1u);
  EXPECT_EQ(res.report.failures[0].first, "0005_c2s1_000001_01.jpg");
  EXPECT_FALSE(res.report.used_manifest);
  EXPECT_EQ(res.dataset.without_junk().size(), 1u);
}

TEST(LoadDirectory, ManifestTakesPrecedenceAndFixesOrder) {
  TempDir dir;
  io::write_png(dir / "b.png", solid(8, 4, 1, 1, 1));
  io::write_png(dir / "a.png", solid(8, 4, 2, 2, 2));
  write_manifest(dir / kManifestName, {{"b.png", 7, 2}, {"a.png", 3, 1}});
  auto res = load_directory(dir.path(), Split::gallery);
  EXPECT_TRUE(res.report.used_manifest);
  ASSERT_EQ(res.dataset.size(), 2u);
  EXPECT_EQ(res.dataset.samples[0].identity, 7);
  EXPECT_EQ(res.dataset.samples[1].identity, 3);
  EXPECT_EQ(res.dataset.split, Split::gallery);
  EXPECT_EQ(res.manifest, (std::vector<ManifestEntry>{{"b.png", 7, 2}, {"a.png", 3, 1}}));
}

TEST(LoadDirectory, EmptyDirectoryIsFatal) {
  TempDir dir;
  try {
    load_directory(dir.path(), Split::train);
    FAIL() << "expected IoError";
  } catch (const IoError &e) {
    EXPECT_NE(std::string(e.what()).find("no images found"), std::string::npos);
  }
}

TEST(LoadDirectory, MissingPathIsFatal) {
  EXPECT_THROW(load_directory("/nonexistent/reidaug/path", Split::train), IoError);
}

TEST(LoadDirectory, JpegDecodes) {
  TempDir dir;
  cv::Mat m(8, 4, CV_8UC3, cv::Scalar(30, 20, 10)); // BGR
  cv::imwrite((dir / "0001_c1_000001.jpg").string(), m);
  auto res = load_directory(dir.path(), Split::query);
  ASSERT_EQ(res.dataset.size(), 1u);
  EXPECT_NEAR(res.dataset.samples[0].pixels.at(0, 3, 2), 10.0f, 3.0f);
  EXPECT_NEAR(res.dataset.samples[0].pixels.at(2, 3, 2), 30.0f, 3.0f);
}

TEST(SynthCorpus, CountsAndIdentities) {
  auto ds = synth_corpus(16, 8, 32, 16, 7);
  EXPECT_EQ(ds.size(), 128u);
  EXPECT_EQ(ds.identities().size(), 16u);
  for (const auto &s : ds.samples) {
    EXPECT_EQ(s.pixels.channels(), 3u);
    EXPECT_EQ(s.pixels.height(), 32u);
    EXPECT_EQ(s.pixels.width(), 16u);
    EXPECT_TRUE(s.pixels.in_range());
    EXPECT_EQ(s.source, Source::real);
  }
}

TEST(SynthCorpus, DeterministicPerSeed) {
  auto a = synth_corpus(4, 3, 16, 8, 11);
  auto b = synth_corpus(4, 3, 16, 8, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.samples[i].pixels, b.samples[i].pixels);
}

TEST(SynthCorpus, SeedsChangePixelsNotLabels) {
  auto a = synth_corpus(4, 3, 16, 8, 1);
  auto b = synth_corpus(4, 3, 16, 8, 2);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].identity, b.samples[i].identity);
    EXPECT_EQ(a.samples[i].camera, b.samples[i].camera);
    any_diff |= !(a.samples[i].pixels == b.samples[i].pixels);
  }
  EXPECT_TRUE(any_diff);
}

TEST(SynthCorpus, SingleSampleAndBadArguments) {
  auto one = synth_corpus(1, 1, 32, 16, 0);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_THROW(synth_corpus(0, 8, 32, 16, 0), ArgumentError);
  EXPECT_THROW(synth_corpus(4, 0, 32, 16, 0), ArgumentError);
  EXPECT_THROW(synth_corpus(4, 4, 7, 16, 0), ArgumentError);
}

TEST(ChannelMeans, ZeroImages) {
  Dataset ds;
  ds.samples.push_back({ImageTensor(3, 4, 4), 0, 1, Source::real, {}});
  auto s = channel_means(ds);
  EXPECT_EQ(s.mean_r, 0.0);
  EXPECT_EQ(s.mean_g, 0.0);
  EXPECT_EQ(s.mean_b, 0.0);
  EXPECT_EQ(s.count, 16u);
}

TEST(ChannelMeans, HandComputedAverage) {
  Dataset ds;
  ds.samples.push_back({solid(1, 1, 10, 0, 0), 0, 1, Source::real, {}});
  ds.samples.push_back({solid(1, 1, 30, 0, 0), 1, 1, Source::real, {}});
  EXPECT_DOUBLE_EQ(channel_means(ds).mean_r, 20.0);
}

TEST(ChannelMeans, EmptyDatasetRejected) { EXPECT_THROW(channel_means(Dataset{}), ArgumentError); }

TEST(ChannelMeans, ConcatenationIsPixelWeighted) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = synth_corpus(2, 3, 16, 8, seed);
    auto b = synth_corpus(3, 2, 24, 12, seed + 100);
    const auto sa = channel_means(a), sb = channel_means(b), sab = channel_means(concat(a, b));
    const double wa = static_cast<double>(sa.count), wb = static_cast<double>(sb.count);
    auto combine = [&](double x, double y) { return (x * wa + y * wb) / (wa + wb); };
    EXPECT_NEAR(sab.mean_r, combine(sa.mean_r, sb.mean_r), 1e-6 * sab.mean_r);
    EXPECT_NEAR(sab.mean_g, combine(sa.mean_g, sb.mean_g), 1e-6 * sab.mean_g);
    EXPECT_NEAR(sab.mean_b, combine(sa.mean_b, sb.mean_b), 1e-6 * sab.mean_b);
    EXPECT_EQ(sab.count, sa.count + sb.count);
  }
}
