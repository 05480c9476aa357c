// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "divad/anomaly_map.hpp"
#include "divad/backend.hpp"
#include "divad/config.hpp"
#include "divad/dataset.hpp"
#include "divad/metrics.hpp"
#include "divad/remote.hpp"
#include "divad/schedule.hpp"

namespace divad {

namespace fs = std::filesystem;

/// Runs fn(0) .. fn(n-1) on at most `workers` threads. The first exception
/// stops further work and is rethrown once all threads have joined.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Backends owned for the duration of one command.
struct BackendSet {
  std::shared_ptr<RemoteClient> client;
  std::unique_ptr<Autoencoder> autoencoder;
  std::unique_ptr<DenoiserBackend> denoiser;
  std::unique_ptr<FeatureExtractor> features;
  std::unique_ptr<ObjectSegmenter> segmenter;
  nlohmann::json meta = nlohmann::json::object();  // kinds and server model ids

  ScoringBackends view() const {
    return {autoencoder.get(), denoiser.get(), features.get(), segmenter.get()};
  }
};

/// `corpus` supplies the analytic worlds and the footprint segmenter for
/// synthetic runs. Without it they come from backend.world_file, or the
/// analytic world is uniform over (3, image_side, image_side). Remote kinds
/// contact the server immediately.
BackendSet make_backends(const RunConfig& config, const NoiseSchedule& schedule,
                         const SyntheticCorpus* corpus = nullptr);

struct Context {
  std::ostream& out;  // reports and tables
  std::ostream& log;  // progress and warnings
};

/// Prints one PASS/FAIL line per suite; returns the process exit status.
int cmd_selftest(bool mutate_invert_sign, const Context& ctx);

struct BenchOutcome {
  MetricsReport report;
  std::vector<AnomalyResult> results;
  SyntheticCorpus corpus;
};

/// Synthetic corpus, analytic backends, evaluation. Writes report.json,
/// report.txt and (optionally) heatmaps under `out_dir` when given.
BenchOutcome synth_bench(const RunConfig& config, const std::optional<fs::path>& out_dir, const Context& ctx);

/// Scans a dataset layout ("mvtec", "mpdd" or "visa") and writes a manifest.
Manifest cmd_scan(const std::string& layout, const fs::path& root, const std::optional<fs::path>& split_csv,
                  const fs::path& manifest_out, const Context& ctx);

struct RunSummary {
  std::size_t processed = 0;
  std::size_t skipped = 0;  // already marked done
};

/// Scores every manifest record into out_dir/samples; samples with a
/// `<id>.done` marker are skipped.
RunSummary cmd_run(const fs::path& manifest_path, const RunConfig& config, const fs::path& out_dir,
                   const Context& ctx);

/// Evaluates a results directory against its manifest; writes report.json
/// and report.txt into `results_dir`.
MetricsReport cmd_evaluate(const fs::path& results_dir, const fs::path& manifest_path, const Context& ctx);

struct SweepOutcome {
  std::vector<int> values;
  std::vector<MetricsReport> reports;
  int best_value = 0;
  std::string table;
};

/// One report per T' value; synthetic corpus unless a manifest is given.
SweepOutcome cmd_sweep(const RunConfig& config, const std::vector<int>& t_primes,
                       const std::optional<fs::path>& manifest_path, const fs::path& out_dir, const Context& ctx);

/// Single-image pipeline writing the heatmap and every intermediate.
AnomalyResult cmd_heatmap(const fs::path& image_path, const std::string& class_name, const RunConfig& config,
                          const fs::path& out_dir, const Context& ctx);

/// Sidecar written next to every heatmap PNG.
nlohmann::json heatmap_sidecar(const AnomalyResult& result);

}  // namespace divad
