// Acceptance suite: one PASS/FAIL line per top-level criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "reidaug/reidaug.hpp"
#include "test_util.hpp"

using namespace reidaug;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Accumulates the reasons a criterion failed; empty means PASS.
struct Verdict {
  std::vector<std::string> problems;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok)
      problems.push_back(what);
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

ImageTensor random_image(std::size_t h, std::size_t w, Rng &rng) {
  ImageTensor img(3, h, w);
  for (auto &v : img.pixels())
    v = static_cast<float>(rng.uniform_int(0, 255));
  return img;
}

// ---------------------------------------------------------------------------

Verdict occlusion_exactness() {
  Verdict v;
  const auto t0 = Clock::now();
  OcclusionConfig cfg;
  Rng rng(101);
  std::size_t bad_outside = 0, bad_inside = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t H = static_cast<std::size_t>(rng.uniform_int(8, 128));
    const std::size_t W = static_cast<std::size_t>(rng.uniform_int(8, 64));
    const auto img = random_image(H, W, rng);
    const std::array<float, 3> fill{static_cast<float>(rng.uniform(0, 255)), static_cast<float>(rng.uniform(0, 255)),
                                    static_cast<float>(rng.uniform(0, 255))};
    const auto r = sample_rect(cfg, H, W, rng, fill).rect;
    const auto p = apply_occlusion(img, r);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const bool inside = x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h;
          if (inside)
            bad_inside += p.occluded.at(c, y, x) != r.fill[c];
          else
            bad_outside += p.occluded.at(c, y, x) != img.at(c, y, x);
        }
  }
  v.require(bad_outside == 0, num(static_cast<double>(bad_outside)) + " pixels changed outside the rectangle");
  v.require(bad_inside == 0, num(static_cast<double>(bad_inside)) + " pixels inside the rectangle not filled exactly");

  std::size_t violations = 0;
  const std::size_t sizes[][2] = {{32, 16}, {64, 32}, {128, 64}, {256, 128}, {48, 48}};
  for (int i = 0; i < 10000; ++i) {
    const auto H = sizes[i % 5][0], W = sizes[i % 5][1];
    const auto r = sample_rect(cfg, H, W, rng).rect;
    const double area = double(r.w * r.h) / double(H * W), aspect = double(r.w) / double(r.h);
    const bool ok = r.w >= 1 && r.h >= 1 && r.x + r.w <= W && r.y + r.h <= H && area >= cfg.area_ratio_min - 1e-12 &&
                    area <= cfg.area_ratio_max + 1e-12 && aspect >= cfg.aspect_min - 1e-12 &&
                    aspect <= cfg.aspect_max + 1e-12;
    violations += !ok;
  }
  v.require(violations == 0, num(static_cast<double>(violations)) + " sampled rectangles violate the constraints");
  const double t = seconds_since(t0);
  v.require(t < 30.0, "took " + num(t) + " s");
  v.detail = "1000 images, 10000 rectangles, " + num(t) + " s";
  return v;
}

Verdict loss_hand_checks() {
  Verdict v;
  ImageTensor a(1, 2, 2, 0.0f), b(1, 2, 2, 0.0f);
  b.at(0, 1, 0) = 1.0f;
  const double mse = gan::euclidean_loss(a, b);
  v.require(near(mse, 0.25, 1e-6), "euclidean 2x2 -> " + num(mse));

  const std::vector<double> preds{0.9, 0.2};
  const std::vector<int> labels{1, 0};
  const double bce = gan::discriminator_loss(preds, labels);
  const double bce_ref = -(std::log(0.9) + std::log(0.8)) / 2.0;
  v.require(near(bce, bce_ref, 1e-6) && near(bce, 0.1643, 1e-4), "bce (0.9 real, 0.2 fake) -> " + num(bce));

  const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
  const std::vector<int> mixed{1, 0, 1, 0};
  const double bce_half = gan::discriminator_loss(half, mixed);
  v.require(near(bce_half, std::log(2.0), 1e-9), "bce at 0.5 -> " + num(bce_half));

  const std::vector<double> one_half{0.5};
  const double sat = gan::adversarial_loss(one_half, gan::AdversarialMode::saturating);
  const double nsat = gan::adversarial_loss(one_half, gan::AdversarialMode::non_saturating);
  v.require(near(sat, -std::log(2.0), 1e-6), "saturating at 0.5 -> " + num(sat));
  v.require(near(nsat, std::log(2.0), 1e-6), "non-saturating at 0.5 -> " + num(nsat));

  const std::vector<double> fooled{0.9, 0.8};
  const double ns2 = gan::adversarial_loss(fooled, gan::AdversarialMode::non_saturating);
  v.require(near(ns2, bce_ref, 1e-6), "non-saturating (0.9, 0.8) -> " + num(ns2));
  v.detail = "mse " + num(mse) + ", bce " + num(bce) + ", adv " + num(nsat);
  return v;
}

Verdict gradient_checks() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto worst = testing::gradient_suite(20240601, 20);
  double overall = 0.0;
  for (auto k : testing::all_op_kinds()) {
    if (!worst.count(k)) {
      v.problems.push_back(std::string(nn::to_string(k)) + " not exercised");
      continue;
    }
    overall = std::max(overall, worst.at(k));
    v.require(worst.at(k) < 1e-4, std::string(nn::to_string(k)) + " relative error " + num(worst.at(k)));
  }
  const double t = seconds_since(t0);
  v.require(t < 300.0, "took " + num(t) + " s");
  v.detail = num(static_cast<double>(testing::all_op_kinds().size())) + " ops x 20 shapes, worst " + num(overall) +
             ", " + num(t) + " s";
  return v;
}

Verdict unet_shapes() {
  Verdict v;
  Rng rng(7);
  int checked = 0;
  for (std::size_t d = 1; d <= 3; ++d) {
    gan::UNetGenerator<float> g({d, 4, gan::OutputActivation::tanh_scaled});
    g.reset_parameters(rng);
    const std::size_t step = std::size_t{1} << d;
    for (std::size_t H = step; H <= 64; H += step)
      for (std::size_t W = step; W <= 64; W += step) {
        nn::Tensor<float> x({1, 3, H, W});
        for (auto &e : x.vec())
          e = static_cast<float>(rng.uniform(0, 255));
        const auto y = g.forward(x, nn::Mode::eval);
        v.require(y.shape() == x.shape(), "depth " + num(double(d)) + " changed shape at " + num(double(H)) + "x" +
                                              num(double(W)));
        ++checked;
      }
  }
  gan::UNetGenerator<float> g3(gan::GeneratorConfig{});
  std::string message;
  try {
    g3.forward(nn::Tensor<float>({1, 3, 30, 16}), nn::Mode::eval);
  } catch (const ArgumentError &e) {
    message = e.what();
  }
  v.require(message.find("H not divisible by 8") != std::string::npos, "(3,30,16) error was '" + message + "'");
  bool w_rejected = false;
  try {
    g3.forward(nn::Tensor<float>({1, 3, 32, 12}), nn::Mode::eval);
  } catch (const ArgumentError &) {
    w_rejected = true;
  }
  v.require(w_rejected, "(3,32,12) accepted");
  v.detail = num(checked) + " shapes";
  return v;
}

Verdict desk_gan() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto train = synth_corpus(16, 8, 32, 16, 11);
  const auto held = synth_corpus(16, 2, 32, 16, 12, {1000, 2});
  const auto stats = channel_means(train);
  OcclusionConfig held_occ;
  held_occ.seed = 99;
  const auto pairs = occlude_dataset(held, held_occ, stats);

  gan::GanTrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 11;
  gan::GanTrainer<float> untrained(cfg, 32, 16);
  const double before = gan::reconstruction_loss(untrained.model().generator, pairs);
  auto first = gan::train_gan<float>(train, OcclusionConfig{}, stats, cfg);
  const double after = gan::reconstruction_loss(first.model.generator, pairs);
  auto second = gan::train_gan<float>(train, OcclusionConfig{}, stats, cfg);
  const double again = gan::reconstruction_loss(second.model.generator, pairs);

  const double ratio = after / before;
  v.require(ratio <= 0.5, "held-out loss ratio " + num(ratio));
  v.require(first.log == second.log && after == again, "two runs with the same seed differ");
  const double t = seconds_since(t0);
  v.require(t < 600.0, "took " + num(t) + " s");
  v.detail = "held-out loss " + num(before) + " -> " + num(after) + " (ratio " + num(ratio) + "), " + num(t) + " s";
  return v;
}

Verdict label_preservation() {
  Verdict v;
  const auto train = synth_corpus(6, 3, 32, 16, 21);
  const auto stats = channel_means(train);
  gan::UNetGenerator<float> g({3, 4, gan::OutputActivation::tanh_scaled});
  Rng rng(21);
  g.reset_parameters(rng);
  const auto restore = gan::make_restorer(g);
  const auto n = static_cast<std::int64_t>(train.size());
  for (std::int64_t m : {std::int64_t{0}, n / 2, n, 2 * n + 3}) {
    const auto p = augment::plan(n, m, 5);
    const auto out = augment::build_augmented_set(train, restore, p, OcclusionConfig{}, stats);
    const std::string tag = "M=" + num(double(m)) + ": ";
    if (out.size() != static_cast<std::size_t>(n + m)) {
      v.problems.push_back(tag + "size " + num(double(out.size())));
      continue;
    }
    for (std::size_t i = 0; i < train.size(); ++i)
      v.require(out.samples[i].pixels == train.samples[i].pixels &&
                    out.samples[i].identity == train.samples[i].identity,
                tag + "real sample " + num(double(i)) + " altered");
    const auto order = augment::generation_order(p);
    std::multiset<int> gen_ids;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto &gen = out.samples[train.size() + k];
      const auto &src = train.samples[order[k].source];
      v.require(gen.identity == src.identity && gen.camera == src.camera, tag + "generated sample mislabeled");
      v.require(gen.pixels.same_shape(src.pixels), tag + "generated sample has a different shape");
      gen_ids.insert(gen.identity);
    }
    v.require(gen_ids == augment::planned_identities(train, p), tag + "identity multiset differs from plan");
  }
  v.detail = "M in {0, n/2, n, 2n+3}, n=" + num(double(n));
  return v;
}

Verdict metric_oracle() {
  Verdict v;
  Rng rng(31);
  std::size_t mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const int nq = static_cast<int>(rng.uniform_int(1, 5)), ng = static_cast<int>(rng.uniform_int(1, 20));
    const auto inst = testing::random_instance(rng, nq, ng, static_cast<int>(rng.uniform_int(1, 6)),
                                               static_cast<int>(rng.uniform_int(1, 5)), 0.1);
    const auto d = eval::pairwise_distances(inst.q, inst.g);
    const bool drop = rng.uniform() < 0.8;
    eval::EvalProtocol proto;
    proto.exclude_same_id_same_cam = drop;
    const auto rep = eval::evaluate(d, inst.q_meta, inst.g_meta, proto);
    const auto ref = testing::oracle_metrics(d.values, inst.q_meta, inst.g_meta, proto.junk_ids, drop);
    bool same = rep.mAP == ref.map && rep.excluded_queries == ref.excluded && rep.cmc.size() == ref.cmc.size();
    for (std::size_t k = 0; same && k < ref.cmc.size(); ++k)
      same = rep.cmc[k] == ref.cmc[k];
    mismatches += !same;
  }
  v.require(mismatches == 0, num(double(mismatches)) + " of 500 instances disagree with the oracle");

  // Perfect retrieval: each query has exactly one true match (other camera), its nearest valid entry.
  std::size_t imperfect = 0;
  for (int t = 0; t < 50; ++t) {
    const int nq = static_cast<int>(rng.uniform_int(1, 5)), extra = static_cast<int>(rng.uniform_int(0, 10));
    eval::Matrix q(nq, 4), g(nq + extra, 4);
    std::vector<eval::SampleMeta> qm, gm;
    for (int i = 0; i < nq; ++i) {
      for (int k = 0; k < 4; ++k) {
        q(i, k) = 10.0 * i + rng.normal(0, 0.01);
        g(i, k) = q(i, k) + rng.normal(0, 0.01);
      }
      qm.push_back({i, 1});
      gm.push_back({i, 2});
    }
    for (int j = nq; j < nq + extra; ++j) {
      for (int k = 0; k < 4; ++k)
        g(j, k) = 1000.0 + rng.normal(0, 1.0);
      gm.push_back({100 + j, 2});
    }
    const auto rep = eval::evaluate(eval::pairwise_distances(q, g), qm, gm);
    imperfect += !(rep.mAP == 1.0 && rep.rank(1) == 1.0);
  }
  v.require(imperfect == 0, num(double(imperfect)) + " perfect-retrieval instances scored below 1");
  v.detail = "500 oracle instances, 50 perfect-retrieval instances";
  return v;
}

Verdict rerank_oracle() {
  Verdict v;
  Rng rng(41);
  bool identity = true;
  for (int t = 0; t < 20; ++t) {
    const auto inst = testing::random_instance(rng, 4, 12, 3, 3);
    const auto qg = eval::pairwise_distances(inst.q, inst.g);
    const auto out = eval::rerank_k_reciprocal(qg, eval::pairwise_distances(inst.q, inst.q),
                                               eval::pairwise_distances(inst.g, inst.g), {5, 2, 1.0});
    identity = identity && (out.values.array() == qg.values.array()).all();
  }
  v.require(identity, "lambda = 1 changed the distances");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t)
    worst = std::max(worst, testing::rerank_disagreement(rng));
  v.require(worst < 1e-9, "oracle disagreement " + num(worst));
  v.detail = "100 instances, worst " + num(worst);
  return v;
}

Verdict end_to_end() {
  Verdict v;
  const auto t0 = Clock::now();
  double sum0 = 0.0, sum_n = 0.0;
  std::string per_seed;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    auto c = cli::resolve_config("{}", {"seed=" + std::to_string(s), "gan.epochs=30"});
    const auto corpus = cli::load_corpus(c);
    const auto stats = channel_means(corpus.train);
    const auto query = cli::occlude_queries(corpus.query, c, stats);
    auto trainer = cli::make_gan_trainer(c);
    for (int e = 0; e < c.gan.epochs; ++e)
      trainer->run_epoch(corpus.train, c.occlusion, stats);
    const auto restore = cli::make_restorer(c, trainer.get());
    double r1[2];
    const std::int64_t ms[2] = {0, static_cast<std::int64_t>(corpus.train.size())};
    for (int k = 0; k < 2; ++k) {
      const auto aug = cli::augmented_training_set(corpus.train, restore, ms[k], c, stats);
      auto trained = baseline::train_classifier<float>(aug, c.baseline);
      r1[k] = cli::evaluate_classifier(trained.net, query, corpus.gallery, c).report.rank(1);
    }
    sum0 += r1[0];
    sum_n += r1[1];
    per_seed += " [" + num(r1[0]) + " -> " + num(r1[1]) + "]";
  }
  const double mean0 = sum0 / seeds, mean_n = sum_n / seeds;
  v.require(mean_n >= mean0 - 0.02, "mean Rank-1 " + num(mean0) + " (M=0) vs " + num(mean_n) + " (M=n)");
  const double t = seconds_since(t0);
  v.require(t < 1800.0, "took " + num(t) + " s");
  v.detail = "mean Rank-1 M=0 " + num(mean0) + ", M=n " + num(mean_n) + ";" + per_seed + ", " + num(t) + " s";
  return v;
}

/// Every regular file below `root`, keyed by relative path.
std::map<std::string, std::string> tree_contents(const fs::path &root) {
  std::map<std::string, std::string> out;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).generic_string()] = testing::slurp(e.path());
  return out;
}

Verdict cli_reproducibility() {
  Verdict v;
  testing::TempDir dir("reidaug-accept");
  std::map<std::string, std::string> runs[2];
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run));
    cli::Json j;
    j["seed"] = 13;
    j["output_dir"] = out.string();
    j["data"]["synthetic"] = {{"train_ids", 4}, {"test_ids", 4}, {"images_per_id", 4}};
    j["gan"] = {{"epochs", 2}, {"batch_size", 4}, {"base_channels", 4}, {"disc_base_channels", 4}};
    j["baseline"] = {{"epochs", 3}, {"batch_size", 4}, {"stage_channels", {4, 8}}, {"feature_dim", 8}};
    j["augment"] = {{"m", 8}};
    j["eval"] = {{"rerank", true}};
    j["rerank"] = {{"k1", 4}, {"k2", 2}};
    j["sensitivity"] = {{"m_values", {0, 8}}};
    const auto cfg = dir / ("c" + std::to_string(run) + ".json");
    cli::write_text(cfg, j.dump(2));
    for (const char *cmd : {"stats", "occlude", "train-gan", "generate", "train-baseline", "evaluate", "sensitivity"}) {
      std::ostringstream o, e;
      const int code = cli::run_cli({cmd, "--config", cfg.string()}, o, e);
      v.require(code == 0, std::string(cmd) + " exited with " + num(code) + ": " + e.str());
    }
    runs[run] = tree_contents(out);
  }
  std::size_t structured = 0;
  for (const auto &[name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    // The config snapshots legitimately differ in output_dir; everything else must be byte-identical.
    if (name.ends_with(".config.json"))
      continue;
    v.require(it != runs[1].end() && it->second == bytes, name + " differs between runs");
    const auto ext = fs::path(name).extension();
    structured += ext == ".json" || ext == ".csv" || ext == ".tsv";
  }
  v.require(runs[0].size() == runs[1].size(), "runs produced different file sets");
  v.require(structured > 0, "no manifests, CSVs or JSON produced");
  v.detail = num(double(runs[0].size())) + " files compared (" + num(double(structured)) + " manifests/CSV/JSON)";
  return v;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Verdict()>>> criteria{
      {"occlusion_exactness", occlusion_exactness},
      {"loss_hand_checks", loss_hand_checks},
      {"gradient_checks", gradient_checks},
      {"unet_shape_contract", unet_shapes},
      {"desk_gan_reconstruction", desk_gan},
      {"augmentation_label_preservation", label_preservation},
      {"metric_oracle", metric_oracle},
      {"rerank_oracle", rerank_oracle},
      {"end_to_end_augmentation", end_to_end},
      {"cli_reproducibility", cli_reproducibility},
  };
  int failed = 0;
  for (const auto &[name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception &e) {
      v.problems.push_back(std::string("exception: ") + e.what());
    }
    if (v.problems.empty()) {
      std::cout << "PASS " << name << " (" << v.detail << ")" << std::endl;
    } else {
      ++failed;
      std::cout << "FAIL " << name << ":";
      for (const auto &p : v.problems)
        std::cout << " " << p << ";";
      std::cout << std::endl;
    }
  }
  return failed == 0 ? 0 : 1;
}
