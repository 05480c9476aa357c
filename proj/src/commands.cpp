// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/commands.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "divad/analytic_backends.hpp"
#include "divad/errors.hpp"
#include "divad/image_io.hpp"
#include "divad/selftest/selftest.hpp"
#include "divad/tensor_blob.hpp"

namespace divad {

using nlohmann::json;

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

BackendSet make_backends(const RunConfig& config, const NoiseSchedule& schedule, const SyntheticCorpus* corpus) {
  BackendSet set;
  std::optional<SyntheticCorpus> loaded;
  if (!corpus && !config.world_file.empty()) {
    loaded = read_synthetic_world(config.world_file);
    const auto side = static_cast<std::size_t>(config.image_side);
    if (loaded->world.mean.shape() != std::vector<std::size_t>{3, side, side}) {
      throw ConfigError("backend.world_file", "world is " + shape_string(loaded->world.mean.shape()) +
                                                  ", io.image_side is " + std::to_string(side));
    }
    corpus = &*loaded;
  }
  const bool needs_client = config.backend == BackendKind::remote || config.features == FeatureKind::remote ||
                            config.segmenter == SegmenterKind::remote;
  set.meta = {{"backend", to_string(config.backend)},
              {"features", to_string(config.features)},
              {"segmenter", to_string(config.segmenter)}};
  if (needs_client) {
    RemoteOptions opts;
    opts.url = config.server_url;
    opts.pool_size = config.pool_size;
    opts.timeout_seconds = config.timeout_seconds;
    set.client = std::make_shared<RemoteClient>(opts);
    const ServerInfo info = set.client->info();
    set.meta["server"] = info.to_json();
    if (config.backend == BackendKind::remote && info.num_base_steps != schedule.num_base_steps()) {
      throw ConfigError("schedule.num_base_steps", "server reports " + std::to_string(info.num_base_steps) +
                                                       " base steps, schedule has " +
                                                       std::to_string(schedule.num_base_steps()));
    }
  }

  switch (config.backend) {
    case BackendKind::remote:
      set.autoencoder = std::make_unique<RemoteAutoencoder>(set.client);
      set.denoiser = std::make_unique<RemoteDenoiser>(set.client);
      break;
    case BackendKind::constant:
      set.autoencoder = std::make_unique<IdentityAutoencoder>();
      set.denoiser = std::make_unique<ConstantDenoiser>(config.constant_eps, schedule.num_base_steps());
      break;
    case BackendKind::analytic:
      set.autoencoder = std::make_unique<IdentityAutoencoder>();
      if (corpus) {
        set.denoiser = std::make_unique<GuidedGaussianDenoiser>(corpus->world, corpus->generic_world, schedule);
      } else {
        const auto side = static_cast<std::size_t>(config.image_side);
        set.denoiser = std::make_unique<GaussianDenoiser>(
            GaussianWorldModel::uniform({3, side, side}, config.world_mean, config.world_std), schedule);
      }
      break;
  }

  switch (config.features) {
    case FeatureKind::identity: set.features = std::make_unique<IdentityFeatures>(); break;
    case FeatureKind::mean_pool: set.features = std::make_unique<MeanPoolFeatures>(config.patch_size); break;
    case FeatureKind::remote: set.features = std::make_unique<RemoteFeatures>(set.client); break;
  }

  switch (config.segmenter) {
    case SegmenterKind::none: break;
    case SegmenterKind::remote:
      set.segmenter = std::make_unique<RemoteSegmenter>(set.client, config.segmenter_threshold);
      break;
    case SegmenterKind::footprint:
      if (!corpus) throw ConfigError("segmenter.kind", "'footprint' needs a synthetic corpus or backend.world_file");
      set.segmenter = std::make_unique<FixedMaskSegmenter>(corpus->footprint);
      break;
  }
  return set;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Tensor map_tensor(const Map& m) {
  return Tensor({static_cast<std::size_t>(m.height), static_cast<std::size_t>(m.width)},
                std::vector<double>(m.values.begin(), m.values.end()));
}

Map tensor_map(const Tensor& t, const fs::path& source) {
  if (t.rank() != 2) throw DataError(source.string() + ": expected a rank-2 map, got " + shape_string(t.shape()));
  Map m(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
  for (std::size_t i = 0; i < t.size(); ++i) m.values[i] = static_cast<float>(t[i]);
  return m;
}

std::string model_label(const json& meta) {
  if (meta.contains("server") && meta["server"].contains("models")) {
    const json& models = meta["server"]["models"];
    if (models.contains("diffusion") && models["diffusion"].is_string()) return models["diffusion"].get<std::string>();
    return models.dump();
  }
  return meta.value("backend", std::string("?"));
}

void write_report(const fs::path& dir, const MetricsReport& report) {
  fs::create_directories(dir);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", report.table());
}

}  // namespace

nlohmann::json heatmap_sidecar(const AnomalyResult& result) { return result.summary_json(); }

int cmd_selftest(bool mutate_invert_sign, const Context& ctx) {
  selftest::Options opts;
  opts.mutate_invert_sign = mutate_invert_sign;
  if (mutate_invert_sign) ctx.log << "mutation mode: eps sign flipped inside invert_step\n";
  bool ok = true;
  for (const auto& r : selftest::run_selftest(opts)) {
    char secs[32];
    std::snprintf(secs, sizeof(secs), "%.2fs", r.seconds);
    ctx.out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << secs << "): " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

BenchOutcome synth_bench(const RunConfig& config, const std::optional<fs::path>& out_dir, const Context& ctx) {
  config.validate();
  SyntheticCorpus corpus =
      generate_synthetic(config.seed, config.synth_images, config.synth_side, config.synth_anomaly, config.synth_world);
  const NoiseSchedule schedule = build_schedule(config.schedule);
  const TimestepPlan plan = build_plan(schedule.num_base_steps(), config.plan_steps);
  const BackendSet backends = make_backends(config, schedule, &corpus);
  const ClassConfig cls = config.class_config(kSyntheticClass);
  const auto ids = sample_ids(corpus.manifest);

  std::vector<AnomalyResult> results(corpus.images.size());
  parallel_for(results.size(), config.worker_count(), [&](std::size_t i) {
    results[i] = score_image(corpus.images[i], cls, backends.view(), schedule, plan, config.scoring);
    results[i].sample_id = ids[i];
  });

  std::vector<std::optional<ObjectMask>> gt(corpus.gt_masks.begin(), corpus.gt_masks.end());
  MetricsReport report = evaluate(make_eval_samples(results, corpus.manifest, gt));
  report.meta = {{"command", "synth-bench"}, {"config", config.to_json()}, {"backends", backends.meta}};

  if (out_dir) {
    write_report(*out_dir, report);
    if (config.synth_write_heatmaps) {
      const fs::path hm = *out_dir / "heatmaps";
      fs::create_directories(hm);
      for (const auto& r : results) {
        write_heatmap_png(hm / (r.sample_id + ".png"), r.masked_map);
        write_text(hm / (r.sample_id + ".json"), heatmap_sidecar(r).dump(2) + "\n");
      }
    }
    ctx.log << "wrote " << (*out_dir / "report.json").string() << '\n';
  }
  return BenchOutcome{std::move(report), std::move(results), std::move(corpus)};
}

Manifest cmd_scan(const std::string& layout, const fs::path& root, const std::optional<fs::path>& split_csv,
                  const fs::path& manifest_out, const Context& ctx) {
  Manifest m;
  if (layout == "mvtec" || layout == "mpdd") {
    m = scan_mvtec_layout(root);
  } else if (layout == "visa") {
    m = scan_visa_layout(root, split_csv ? *split_csv : root / "split_csv" / "1cls.csv");
  } else {
    throw ConfigError("layout", "expected mvtec, mpdd or visa, got '" + layout + "'");
  }
  for (const auto& w : m.warnings) ctx.log << "warning: " << w << '\n';
  if (manifest_out.has_parent_path()) fs::create_directories(manifest_out.parent_path());
  write_manifest(manifest_out, m);
  std::size_t anomalies = 0;
  for (const auto& r : m.records) anomalies += r.label == Label::anomaly ? 1 : 0;
  ctx.out << m.records.size() << " records (" << anomalies << " anomaly, " << m.records.size() - anomalies
          << " normal) -> " << manifest_out.string() << '\n';
  return m;
}

RunSummary cmd_run(const fs::path& manifest_path, const RunConfig& config, const fs::path& out_dir,
                   const Context& ctx) {
  config.validate();
  const Manifest manifest = read_manifest(manifest_path);
  for (const auto& w : manifest.warnings) ctx.log << "warning: " << w << '\n';
  const NoiseSchedule schedule = build_schedule(config.schedule);
  const TimestepPlan plan = build_plan(schedule.num_base_steps(), config.plan_steps);
  const BackendSet backends = make_backends(config, schedule);
  const auto ids = sample_ids(manifest);

  const fs::path samples = out_dir / "samples";
  fs::create_directories(samples);
  write_text(out_dir / "run.json", json{{"manifest", fs::absolute(manifest_path).lexically_normal().string()},
                                        {"config", config.to_json()},
                                        {"backends", backends.meta}}
                                       .dump(2) + "\n");

  std::vector<std::size_t> pending;
  RunSummary summary;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (fs::exists(samples / (ids[i] + ".done"))) {
      ++summary.skipped;
    } else {
      pending.push_back(i);
    }
  }
  ctx.log << pending.size() << " sample(s) to score, " << summary.skipped << " already done\n";

  std::mutex log_mutex;
  std::atomic<std::size_t> done{0};
  parallel_for(pending.size(), config.worker_count(), [&](std::size_t k) {
    const std::size_t i = pending[k];
    const SampleRecord& rec = manifest.records[i];
    const Image image = load_image_resized(rec.image_path, config.image_side);
    ScoringConfig scoring = config.scoring;
    scoring.keep_intermediates = config.save_tensors;
    AnomalyResult r = score_image(image, config.class_config(rec.class_name), backends.view(), schedule, plan, scoring);
    r.sample_id = ids[i];
    const fs::path base = samples / ids[i];
    write_heatmap_png(base.string() + ".png", r.masked_map);
    write_blob_file(base.string() + "_map.dten", map_tensor(r.masked_map));
    if (config.save_tensors) {
      write_blob_file(base.string() + "_raw.dten", map_tensor(r.map));
      if (r.reconstruction) write_png(base.string() + "_recon.png", *r.reconstruction);
    }
    write_text(base.string() + ".json", heatmap_sidecar(r).dump(2) + "\n");
    write_text(base.string() + ".done", "");
    const std::size_t n = ++done;
    std::lock_guard lock(log_mutex);
    for (const auto& w : r.warnings) ctx.log << "warning: " << ids[i] << ": " << w << '\n';
    ctx.log << "[" << n << "/" << pending.size() << "] " << ids[i] << " score " << r.image_score << '\n';
  });
  summary.processed = pending.size();
  return summary;
}

MetricsReport cmd_evaluate(const fs::path& results_dir, const fs::path& manifest_path, const Context& ctx) {
  const Manifest manifest = read_manifest(manifest_path);
  validate_masks(manifest);
  const auto ids = sample_ids(manifest);
  const fs::path samples = results_dir / "samples";
  std::vector<EvalSample> eval(manifest.records.size());
  parallel_for(eval.size(), static_cast<int>(std::max(1u, std::thread::hardware_concurrency())), [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    const fs::path base = samples / ids[i];
    if (!fs::exists(base.string() + ".done")) {
      throw DataError("sample '" + ids[i] + "' has no completed result in " + samples.string());
    }
    const json side = read_json_file(base.string() + ".json");
    const fs::path map_path = base.string() + "_map.dten";
    EvalSample s;
    s.sample_id = ids[i];
    s.class_name = rec.class_name;
    s.label = rec.label;
    s.image_score = side.at("image_score").get<double>();
    s.map = tensor_map(read_blob_file(map_path), map_path);
    if (rec.mask_path) {
      if (s.map.height != s.map.width) throw DataError(map_path.string() + ": map is not square");
      s.gt_mask = load_mask_resized(*rec.mask_path, s.map.height, rec.mask_threshold);
    }
    eval[i] = std::move(s);
  });
  MetricsReport report = evaluate(eval);
  report.meta = {{"command", "evaluate"}, {"manifest", fs::absolute(manifest_path).lexically_normal().string()}};
  if (fs::exists(results_dir / "run.json")) {
    const json run = read_json_file(results_dir / "run.json");
    if (run.contains("config")) report.meta["config"] = run["config"];
    if (run.contains("backends")) report.meta["backends"] = run["backends"];
  }
  write_report(results_dir, report);
  ctx.log << "wrote " << (results_dir / "report.json").string() << '\n';
  return report;
}

SweepOutcome cmd_sweep(const RunConfig& config, const std::vector<int>& t_primes,
                       const std::optional<fs::path>& manifest_path, const fs::path& out_dir, const Context& ctx) {
  if (t_primes.empty()) throw ConfigError("values", "sweep needs at least one T' value");
  SweepOutcome outcome;
  outcome.values = t_primes;
  std::string dataset = manifest_path ? manifest_path->stem().string() : std::string(kSyntheticClass);
  std::string model = "?";
  double best = -1.0;
  for (int v : t_primes) {
    RunConfig c = config;
    c.scoring.t_prime = v;
    c.validate();
    const fs::path dir = out_dir / ("tprime_" + std::to_string(v));
    ctx.log << "sweep: T'=" << v << '\n';
    MetricsReport report;
    if (manifest_path) {
      cmd_run(*manifest_path, c, dir, ctx);
      report = cmd_evaluate(dir, *manifest_path, ctx);
    } else {
      report = synth_bench(c, dir, ctx).report;
    }
    if (report.meta.contains("backends")) model = model_label(report.meta["backends"]);
    const double score = report.mean.average();
    if (score > best) {
      best = score;
      outcome.best_value = v;
    }
    outcome.reports.push_back(std::move(report));
  }

  std::string header = "  T'  model       | " + dataset;
  char buf[160];
  std::string table = header + "\n";
  table += "                  |  ROC_I  ROC_P    PRO   AP_P   F1_P   mean\n";
  table += std::string(62, '-') + "\n";
  for (std::size_t k = 0; k < outcome.values.size(); ++k) {
    const MetricSet& m = outcome.reports[k].mean;
    std::snprintf(buf, sizeof(buf), "%4d  %-11.11s | %6.1f %6.1f %6.1f %6.1f %6.1f %6.1f%s\n", outcome.values[k],
                  model.c_str(), 100 * m.roc_i, 100 * m.roc_p, 100 * m.pro, 100 * m.ap_p, 100 * m.f1_p,
                  100 * m.average(), outcome.values[k] == outcome.best_value ? "  *" : "");
    table += buf;
  }
  outcome.table = table;

  json j = {{"values", outcome.values}, {"best_t_prime", outcome.best_value}, {"dataset", dataset}, {"model", model}};
  j["reports"] = json::array();
  for (const auto& r : outcome.reports) j["reports"].push_back(r.to_json());
  fs::create_directories(out_dir);
  write_text(out_dir / "sweep.json", j.dump(2) + "\n");
  write_text(out_dir / "sweep.txt", table);
  ctx.out << table;
  return outcome;
}

AnomalyResult cmd_heatmap(const fs::path& image_path, const std::string& class_name, const RunConfig& config,
                          const fs::path& out_dir, const Context& ctx) {
  config.validate();
  const Image image = load_image_resized(image_path, config.image_side);
  const NoiseSchedule schedule = build_schedule(config.schedule);
  const TimestepPlan plan = build_plan(schedule.num_base_steps(), config.plan_steps);
  const BackendSet backends = make_backends(config, schedule);
  ScoringConfig scoring = config.scoring;
  scoring.keep_intermediates = true;
  AnomalyResult r = score_image(image, config.class_config(class_name), backends.view(), schedule, plan, scoring);
  r.sample_id = image_path.stem().string();
  for (const auto& w : r.warnings) ctx.log << "warning: " << w << '\n';

  fs::create_directories(out_dir);
  const std::string base = (out_dir / r.sample_id).string();
  write_heatmap_png(base + "_heatmap.png", r.masked_map);
  write_heatmap_png(base + "_raw_map.png", r.map);
  write_blob_file(base + "_map.dten", map_tensor(r.masked_map));
  write_blob_file(base + "_raw_map.dten", map_tensor(r.map));
  if (r.patch_map) write_blob_file(base + "_patch_map.dten", map_tensor(*r.patch_map));
  if (r.reconstruction) write_png(base + "_reconstruction.png", *r.reconstruction);
  if (r.object_mask) {
    std::ofstream m(base + "_object_mask.png", std::ios::binary);
    m << encode_mask_png(*r.object_mask);
  }
  write_text(base + ".json", heatmap_sidecar(r).dump(2) + "\n");
  ctx.out << "image_score " << r.image_score << " -> " << base << "_heatmap.png\n";
  return r;
}

}  // namespace divad
