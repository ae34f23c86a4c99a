#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"

namespace reidaug::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands (and usable from tests)
// ---------------------------------------------------------------------------

struct Corpus {
  Dataset train;
  Dataset query;
  Dataset gallery;
};

/// Resolves the configured data source into train / query / gallery splits.
inline Corpus load_corpus(const RunConfig &c) {
  Corpus out;
  const auto H = static_cast<std::size_t>(c.data.height), W = static_cast<std::size_t>(c.data.width);
  if (c.data.source == "synthetic") {
    const auto &s = c.data.synthetic;
    out.train = synth_corpus(s.train_ids, s.images_per_id, c.data.height, c.data.width, c.seed, {0, s.cameras});
    out.train.name = "synthetic-train";
    const Dataset test = synth_corpus(s.test_ids, s.images_per_id, c.data.height, c.data.width,
                                      substream_seed(c.seed, {0x7e57}), {s.test_first_id, s.cameras});
    out.query = {{}, Split::query, "synthetic-query"};
    out.gallery = {{}, Split::gallery, "synthetic-gallery"};
    for (const auto &p : test.samples)
      (p.camera == 1 ? out.query : out.gallery).samples.push_back(p);
    return out;
  }
  out.train = gan::resized(load_directory(c.data.train_dir, Split::train).dataset, H, W);
  out.query = gan::resized(load_directory(c.data.query_dir, Split::query).dataset, H, W);
  out.gallery = gan::resized(load_directory(c.data.gallery_dir, Split::gallery).dataset, H, W);
  return out;
}

/// Test-time occlusion of query images (independent stream from training occlusions).
inline Dataset occlude_queries(const Dataset &query, const RunConfig &c, const ChannelStats &stats) {
  OcclusionConfig occ = c.occlusion;
  occ.seed = substream_seed(c.seed, {0x9e57});
  const auto pairs = occlude_dataset(query, occ, stats, 0);
  Dataset out = query;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.samples[i].pixels = pairs[i].occluded;
  return out;
}

/// A GAN trainer whose generator serves as the restorer for augmentation.
using GanHandle = std::unique_ptr<gan::GanTrainer<float>>;

inline std::pair<std::size_t, std::size_t> gan_resolution(const RunConfig &c) {
  if (c.gan.image_height)
    return {c.gan.image_height, c.gan.image_width};
  return {static_cast<std::size_t>(c.data.height), static_cast<std::size_t>(c.data.width)};
}

inline GanHandle make_gan_trainer(const RunConfig &c) {
  const auto [h, w] = gan_resolution(c);
  return std::make_unique<gan::GanTrainer<float>>(c.gan, h, w);
}

inline gan::Restorer make_restorer(const RunConfig &c, gan::GanTrainer<float> *trainer) {
  if (c.augment.restorer == "original" || trainer == nullptr)
    return gan::original_passthrough();
  const auto [h, w] = gan_resolution(c);
  const bool same = h == static_cast<std::size_t>(c.data.height) && w == static_cast<std::size_t>(c.data.width);
  return gan::make_restorer(trainer->model().generator, same ? 0 : h, same ? 0 : w);
}

/// Augmented training set with generated samples quantized to 8 bits (as if written to disk).
inline Dataset augmented_training_set(const Dataset &train, const gan::Restorer &restore, std::int64_t m,
                                      const RunConfig &c, const ChannelStats &stats) {
  const auto p = augment::plan(static_cast<std::int64_t>(train.size()), m, c.seed);
  Dataset aug = augment::build_augmented_set(train, restore, p, c.occlusion, stats);
  for (std::size_t i = train.size(); i < aug.size(); ++i)
    aug.samples[i].pixels = io::quantize8(aug.samples[i].pixels);
  return aug;
}

inline std::vector<eval::SampleMeta> metadata(const Dataset &ds) {
  std::vector<eval::SampleMeta> m;
  for (const auto &s : ds.samples)
    m.push_back({s.identity, s.camera});
  return m;
}

inline eval::EvalProtocol protocol(const RunConfig &c) {
  eval::EvalProtocol p;
  p.exclude_same_id_same_cam = c.eval.exclude_same_id_same_cam;
  p.junk_ids = {c.eval.junk_ids.begin(), c.eval.junk_ids.end()};
  p.query_mode = c.eval.query_mode == "multi" ? eval::QueryMode::multi : eval::QueryMode::single;
  p.no_match = c.eval.no_match == "score_zero" ? eval::NoMatchPolicy::score_zero : eval::NoMatchPolicy::exclude;
  p.pooling = c.eval.pooling == "max" ? eval::Pooling::max : eval::Pooling::mean;
  return p;
}

struct Evaluation {
  eval::EvalReport report;
  std::optional<eval::EvalReport> reranked;
};

/// Descriptors -> distances -> CMC/mAP (and the re-ranked variant when enabled).
inline Evaluation evaluate_classifier(baseline::ClassifierNet<float> &net, const Dataset &query, const Dataset &gallery,
                                      const RunConfig &c) {
  const auto prot = protocol(c);
  eval::EmbeddingMatrix qf = baseline::extract_features(net, query);
  const eval::EmbeddingMatrix gf = baseline::extract_features(net, gallery);
  auto q_meta = metadata(query);
  const auto g_meta = metadata(gallery);
  if (prot.query_mode == eval::QueryMode::multi)
    std::tie(qf, q_meta) = eval::pool_multi_query(qf, q_meta, prot.pooling);
  const auto qg = eval::pairwise_distances(qf, gf);
  Evaluation out{eval::evaluate(qg, q_meta, g_meta, prot, c.seed), std::nullopt};
  if (c.eval.rerank) {
    const auto rr = eval::rerank_k_reciprocal(qg, eval::pairwise_distances(qf, qf), eval::pairwise_distances(gf, gf),
                                              c.rerank);
    out.reranked = eval::evaluate(rr, q_meta, g_meta, prot, c.seed);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

inline void write_text(const fs::path &file, const std::string &text) {
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + file.string());
}

inline std::string read_text(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IoError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_snapshot(const RunConfig &c, const std::string &command) {
  write_text(fs::path(c.output_dir) / (command + ".config.json"), to_json(c).dump(2) + "\n");
}

inline std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Grids of up to `per_grid` columns; each column stacks one image per row source.
inline std::vector<fs::path> write_grids(const fs::path &dir, const std::string &stem,
                                         const std::vector<std::vector<ImageTensor>> &columns, std::size_t per_grid) {
  std::vector<fs::path> written;
  for (std::size_t start = 0, k = 0; start < columns.size(); start += per_grid, ++k) {
    const std::size_t end = std::min(columns.size(), start + per_grid);
    std::vector<std::vector<ImageTensor>> chunk(columns.begin() + static_cast<std::ptrdiff_t>(start),
                                                columns.begin() + static_cast<std::ptrdiff_t>(end));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.png", stem.c_str(), k);
    io::write_png(dir / name, io::compose_grid(chunk));
    written.push_back(dir / name);
  }
  return written;
}

inline fs::path gan_dir(const RunConfig &c) { return fs::path(c.output_dir) / "gan"; }
inline fs::path gan_final(const RunConfig &c) { return gan_dir(c) / "final.ckpt"; }
inline fs::path baseline_dir(const RunConfig &c) { return fs::path(c.output_dir) / "baseline"; }

inline std::string epoch_checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
  return buf;
}

/// Loads the trained GAN (needed unless the ablation restorer is configured).
inline GanHandle load_trained_gan(const RunConfig &c) {
  if (c.augment.restorer == "original")
    return nullptr;
  if (!fs::exists(gan_final(c)))
    throw IoError("no trained GAN at " + gan_final(c).string() + " (run train-gan first)");
  auto trainer = make_gan_trainer(c);
  trainer->restore(nn::Checkpoint::load(gan_final(c)));
  return trainer;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_stats(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "stats");
  const Corpus corpus = load_corpus(c);
  const auto s = channel_means(corpus.train);
  Json j;
  j["mean_r"] = s.mean_r;
  j["mean_g"] = s.mean_g;
  j["mean_b"] = s.mean_b;
  j["pixel_count"] = s.count;
  j["n_train"] = corpus.train.size();
  j["n_train_identities"] = corpus.train.identities().size();
  j["n_query"] = corpus.query.size();
  j["n_gallery"] = corpus.gallery.size();
  write_text(fs::path(c.output_dir) / "stats.json", j.dump(2) + "\n");
  out << "channel means (R, G, B): " << fmt("%.4f", s.mean_r) << ", " << fmt("%.4f", s.mean_g) << ", "
      << fmt("%.4f", s.mean_b) << " over " << corpus.train.size() << " training images\n";
  return 0;
}

inline int cmd_occlude(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "occlude");
  const Corpus corpus = load_corpus(c);
  const auto stats = channel_means(corpus.train);
  const auto pairs = occlude_dataset(corpus.train, c.occlusion, stats, 0);
  const fs::path dir = fs::path(c.output_dir) / "occluded";
  Dataset occluded = corpus.train;
  std::vector<std::string> names;
  std::string rects = "file\tx\ty\tw\th\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    occluded.samples[i].pixels = pairs[i].occluded;
    const auto &src = corpus.train.samples[i];
    names.push_back(src.origin_path ? fs::path(*src.origin_path).replace_extension(".png").string()
                                    : benchmark_filename(src.identity, src.camera, i));
    const auto &r = pairs[i].rect;
    rects += names.back() + "\t" + std::to_string(r.x) + "\t" + std::to_string(r.y) + "\t" + std::to_string(r.w) +
             "\t" + std::to_string(r.h) + "\n";
  }
  write_dataset(dir, occluded, names);
  write_text(dir / "rects.tsv", rects);
  std::vector<std::vector<ImageTensor>> columns;
  for (std::size_t i = 0; i < pairs.size() && i < static_cast<std::size_t>(c.augment.grid_columns); ++i)
    columns.push_back({pairs[i].original, pairs[i].occluded});
  write_grids(fs::path(c.output_dir) / "grids", "occlusion", columns, static_cast<std::size_t>(c.augment.grid_columns));
  out << "occluded " << pairs.size() << " images into " << dir.string() << "\n";
  return 0;
}

inline int cmd_train_gan(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "train-gan");
  const Corpus corpus = load_corpus(c);
  const auto stats = channel_means(corpus.train);
  const auto [h, w] = gan_resolution(c);
  const Dataset work = gan::resized(corpus.train, c.gan.image_height ? h : 0, w);
  auto trainer = make_gan_trainer(c);

  const fs::path dir = gan_dir(c);
  if (c.gan_resume && fs::exists(dir)) {
    for (int e = c.gan.epochs; e >= 1; --e) {
      if (fs::exists(dir / epoch_checkpoint_name(e))) {
        trainer->restore(nn::Checkpoint::load(dir / epoch_checkpoint_name(e)));
        out << "resuming from epoch " << e << "\n";
        break;
      }
    }
  }
  while (trainer->epochs_done() < c.gan.epochs) {
    const auto entry = trainer->run_epoch(work, c.occlusion, stats);
    trainer->state().save(dir / epoch_checkpoint_name(entry.epoch));
    out << "epoch " << entry.epoch << ": d_loss " << fmt("%.6f", entry.d_loss) << ", g_adv " << fmt("%.6f", entry.g_adv_loss)
        << ", g_l2 " << fmt("%.6f", entry.g_l2_loss) << "\n";
  }
  trainer->state().save(gan_final(c));
  write_text(dir / "train_log.csv", gan::format_gan_log(trainer->log()));
  return 0;
}

inline int cmd_generate(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "generate");
  const Corpus corpus = load_corpus(c);
  const auto stats = channel_means(corpus.train);
  auto trainer = load_trained_gan(c);
  const auto restore = make_restorer(c, trainer.get());
  const auto p = augment::plan(static_cast<std::int64_t>(corpus.train.size()), c.augment.m, c.seed);
  const Dataset aug = augment::build_augmented_set(corpus.train, restore, p, c.occlusion, stats);
  const fs::path dir = fs::path(c.output_dir) / "augmented";
  fs::remove_all(dir);
  write_dataset(dir, aug, augment::augmented_filenames(corpus.train, p));

  // Figure grid: (original, occluded, restored) for the first few training images.
  const std::size_t cols = std::min(corpus.train.size(), static_cast<std::size_t>(c.augment.grid_columns));
  Dataset sample{{corpus.train.samples.begin(), corpus.train.samples.begin() + static_cast<std::ptrdiff_t>(cols)},
                 Split::train, "grid"};
  OcclusionConfig gen_occ = c.occlusion;
  gen_occ.seed = gan::generation_seed(c.seed);
  const auto pairs = occlude_dataset(sample, gen_occ, stats, 0);
  const auto restored = restore(pairs);
  std::vector<std::vector<ImageTensor>> columns;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    columns.push_back({pairs[i].original, pairs[i].occluded, restored[i]});
  write_grids(fs::path(c.output_dir) / "grids", "generated", columns, cols);
  out << "wrote " << aug.size() << " images (" << corpus.train.size() << " real + " << c.augment.m << " generated) to "
      << dir.string() << "\n";
  return 0;
}

inline int cmd_train_baseline(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "train-baseline");
  Dataset train;
  if (c.baseline_train_set == "augmented") {
    const fs::path dir = fs::path(c.output_dir) / "augmented";
    if (!fs::exists(dir / kManifestName))
      throw IoError("no augmented set at " + dir.string() + " (run generate first)");
    train = load_directory(dir, Split::train).dataset;
  } else {
    train = load_corpus(c).train;
  }
  auto trained = baseline::train_classifier<float>(train, c.baseline);
  const fs::path dir = baseline_dir(c);
  baseline::classifier_checkpoint(trained.net).save(dir / "classifier.ckpt");
  Json classes;
  classes["identities"] = trained.classes.identities();
  classes["feature_dim"] = trained.net.feature_dim();
  write_text(dir / "classes.json", classes.dump(2) + "\n");
  write_text(dir / "train_log.csv", baseline::format_baseline_log(trained.log));
  const auto &last = trained.log.back();
  out << "trained on " << train.size() << " images, " << trained.classes.size() << " identities; final loss "
      << fmt("%.6f", last.loss) << ", accuracy " << fmt("%.4f", last.accuracy) << "\n";
  return 0;
}

inline Json report_json(const eval::EvalReport &r, const std::optional<eval::RerankParams> &rr = std::nullopt) {
  Json j = eval::to_json(r);
  if (rr)
    j["rerank"] = {{"k1", rr->k1}, {"k2", rr->k2}, {"lambda", rr->lambda}};
  return j;
}

inline int cmd_evaluate(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "evaluate");
  const fs::path dir = baseline_dir(c);
  if (!fs::exists(dir / "classifier.ckpt") || !fs::exists(dir / "classes.json"))
    throw IoError("no trained classifier in " + dir.string() + " (run train-baseline first)");
  const Json classes = Json::parse(read_text(dir / "classes.json"), nullptr, false);
  if (classes.is_discarded() || !classes.contains("identities"))
    throw IoError("malformed " + (dir / "classes.json").string());
  baseline::ClassifierNet<float> net(c.baseline.net, classes["identities"].size());
  baseline::load_classifier(net, nn::Checkpoint::load(dir / "classifier.ckpt"));

  const Corpus corpus = load_corpus(c);
  const auto stats = channel_means(corpus.train);
  const Dataset query = c.eval.occlude_queries ? occlude_queries(corpus.query, c, stats) : corpus.query;
  const auto result = evaluate_classifier(net, query, corpus.gallery, c);
  const fs::path edir = fs::path(c.output_dir) / "eval";
  write_text(edir / "report.json", report_json(result.report).dump(2) + "\n");
  out << "mAP " << fmt("%.4f", result.report.mAP) << ", Rank-1 " << fmt("%.4f", result.report.rank(1)) << ", Rank-5 "
      << fmt("%.4f", result.report.rank(5)) << ", Rank-10 " << fmt("%.4f", result.report.rank(10)) << "\n";
  if (result.reranked) {
    write_text(edir / "report_reranked.json", report_json(*result.reranked, c.rerank).dump(2) + "\n");
    out << "re-ranked: mAP " << fmt("%.4f", result.reranked->mAP) << ", Rank-1 "
        << fmt("%.4f", result.reranked->rank(1)) << "\n";
  }
  return 0;
}

struct SensitivityRow {
  std::int64_t m = 0;
  double map = 0.0;
  double rank1 = 0.0;
};

/// For each M: augment with the trained GAN, retrain the classifier from the same seed, evaluate.
inline std::vector<SensitivityRow> sensitivity_sweep(const RunConfig &c, const Corpus &corpus,
                                                     const gan::Restorer &restore, std::ostream *progress = nullptr) {
  const auto stats = channel_means(corpus.train);
  const Dataset query = c.eval.occlude_queries ? occlude_queries(corpus.query, c, stats) : corpus.query;
  std::vector<SensitivityRow> rows;
  for (auto m : c.sensitivity_m) {
    const Dataset aug = augmented_training_set(corpus.train, restore, m, c, stats);
    auto trained = baseline::train_classifier<float>(aug, c.baseline);
    const auto r = evaluate_classifier(trained.net, query, corpus.gallery, c).report;
    rows.push_back({m, r.mAP, r.rank(1)});
    if (progress)
      *progress << "M=" << m << ": mAP " << fmt("%.4f", r.mAP) << ", Rank-1 " << fmt("%.4f", r.rank(1)) << "\n";
  }
  return rows;
}

inline std::string format_sensitivity(const std::vector<SensitivityRow> &rows) {
  std::string s = "M,map,rank1\n";
  for (const auto &r : rows)
    s += std::to_string(r.m) + "," + fmt("%.9g", r.map) + "," + fmt("%.9g", r.rank1) + "\n";
  return s;
}

inline int cmd_sensitivity(const RunConfig &c, std::ostream &out) {
  write_snapshot(c, "sensitivity");
  const Corpus corpus = load_corpus(c);
  auto trainer = load_trained_gan(c);
  const auto rows = sensitivity_sweep(c, corpus, make_restorer(c, trainer.get()), &out);
  write_text(fs::path(c.output_dir) / "sensitivity" / "sensitivity.csv", format_sensitivity(rows));
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTraining = 3;
inline constexpr int kExitIo = 4;

/// Parses argv-style arguments (without the program name) and runs one command.
inline int run_cli(const std::vector<std::string> &args, std::ostream &out = std::cout,
                   std::ostream &err = std::cerr) {
  CLI::App app{"Occlusion-recovery data augmentation for person re-identification"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"stats", "compute per-channel means of the training split"},
      {"occlude", "write randomly occluded training images, rectangles and preview grids"},
      {"train-gan", "train the de-occlusion GAN (resumes from epoch checkpoints)"},
      {"generate", "write the augmented training set (real + M generated) and preview grids"},
      {"train-baseline", "train the identity classifier"},
      {"evaluate", "compute CMC / mAP (and the re-ranked report when enabled)"},
      {"sensitivity", "sweep M: augment, retrain, evaluate"}};
  for (const auto &[name, help] : commands) {
    auto *sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--set", overrides, "override a config value, e.g. --set gan.epochs=5")->take_all();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig c = load_config(config_path, overrides);
    if (command == "stats")
      return cmd_stats(c, out);
    if (command == "occlude")
      return cmd_occlude(c, out);
    if (command == "train-gan")
      return cmd_train_gan(c, out);
    if (command == "generate")
      return cmd_generate(c, out);
    if (command == "train-baseline")
      return cmd_train_baseline(c, out);
    if (command == "evaluate")
      return cmd_evaluate(c, out);
    return cmd_sensitivity(c, out);
  } catch (const TrainingAborted &e) {
    err << "training aborted: " << e.what() << "\n";
    return kExitTraining;
  } catch (const IoError &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError &e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  }
}

} // namespace reidaug::cli
