// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "divad/commands.hpp"
#include "divad/errors.hpp"

namespace {

using divad::RunConfig;

struct ConfigOptions {
  std::optional<std::string> file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
};

void add_config_options(CLI::App* sub, ConfigOptions& opts) {
  sub->add_option("--config", opts.file, "JSON file of flat dotted keys");
  sub->add_option("--set", opts.sets, "KEY=VALUE override, repeatable (also class.<name>.<field>)");
  for (const auto& key : divad::config_keys()) {
    const std::string name = key.name;
    sub->add_option_function<std::string>(
           "--" + name, [&opts, name](const std::string& v) { opts.flags[name] = v; }, key.help)
        ->group("Configuration");
  }
}

RunConfig resolve_config(const ConfigOptions& opts, const std::optional<std::string>& out_dir = std::nullopt) {
  std::vector<std::pair<std::string, std::string>> overrides(opts.flags.begin(), opts.flags.end());
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw divad::ConfigError("--set", "expected KEY=VALUE, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (out_dir) overrides.emplace_back("run.output_dir", *out_dir);
  return divad::load_run_config(opts.file ? std::optional<std::filesystem::path>(*opts.file) : std::nullopt,
                                overrides);
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void append_nested(std::ostringstream& msg, const std::exception& e) {
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    msg << " <- " << inner.what();
    append_nested(msg, inner);
  } catch (...) {
  }
}

int report_error(const char* kind, const std::exception& e) {
  std::ostringstream msg;
  msg << e.what();
  append_nested(msg, e);
  std::cerr << "divad-error[" << kind << "]: " << one_line(msg.str()) << std::endl;
  return 1;
}

std::vector<int> parse_values(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw divad::ConfigError("--values", "not an integer: '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DIVAD zero-shot anomaly detection toolkit"};
  app.require_subcommand(1);

  bool mutate_flag = false;
  std::string mutate;
  auto* selftest = app.add_subcommand("selftest", "Exact-roundtrip, analytic-denoiser and metric-oracle suites");
  selftest->add_option("--mutate", mutate, "Inject a defect to check the suites catch it")
      ->check(CLI::IsMember({"invert-sign"}))
      ->each([&](const std::string&) { mutate_flag = true; });

  ConfigOptions bench_cfg;
  std::optional<std::string> bench_out;
  auto* bench = app.add_subcommand("synth-bench", "Synthetic end-to-end benchmark with analytic backends");
  bool export_corpus = false;
  bench->add_option("--out", bench_out, "Output directory (run.output_dir)");
  bench->add_flag("--export-corpus", export_corpus, "Also write images, masks and manifest.jsonl to <out>/corpus");
  add_config_options(bench, bench_cfg);

  std::string layout = "mvtec", root, scan_out;
  std::optional<std::string> csv;
  auto* scan = app.add_subcommand("scan", "Scan a dataset layout into a JSONL manifest");
  scan->add_option("--layout", layout, "mvtec | mpdd | visa")->check(CLI::IsMember({"mvtec", "mpdd", "visa"}));
  scan->add_option("--root", root, "Dataset root or class directory")->required();
  scan->add_option("--csv", csv, "VisA split CSV (default <root>/split_csv/1cls.csv)");
  scan->add_option("--out", scan_out, "Manifest path")->required();

  ConfigOptions run_cfg;
  std::string run_manifest;
  std::optional<std::string> run_out;
  auto* run = app.add_subcommand("run", "Score every manifest record (resumable)");
  run->add_option("--manifest", run_manifest, "Manifest path")->required();
  run->add_option("--out", run_out, "Results directory (run.output_dir)");
  add_config_options(run, run_cfg);

  std::string eval_results, eval_manifest;
  auto* evaluate = app.add_subcommand("evaluate", "Five-metric report for a results directory");
  evaluate->add_option("--results", eval_results, "Results directory written by run")->required();
  evaluate->add_option("--manifest", eval_manifest, "Manifest path")->required();

  ConfigOptions sweep_cfg;
  std::optional<std::string> sweep_manifest, sweep_out;
  std::string sweep_values = "30,20,15,10,5";
  auto* sweep = app.add_subcommand("sweep", "T' sweep with one report per value");
  sweep->add_option("--values", sweep_values, "Comma-separated T' values");
  sweep->add_option("--manifest", sweep_manifest, "Manifest path (default: synthetic corpus)");
  sweep->add_option("--out", sweep_out, "Output directory (run.output_dir)");
  add_config_options(sweep, sweep_cfg);

  ConfigOptions heat_cfg;
  std::string heat_image, heat_class = "object";
  std::optional<std::string> heat_out;
  auto* heatmap = app.add_subcommand("heatmap", "Single-image heatmap with intermediates");
  heatmap->add_option("--image", heat_image, "Input image")->required();
  heatmap->add_option("--class", heat_class, "Class name (prompt word and mask default)");
  heatmap->add_option("--out", heat_out, "Output directory (run.output_dir)");
  add_config_options(heatmap, heat_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "divad-error[usage]: " << one_line(e.what()) << std::endl;
    return 2;
  }

  const divad::Context ctx{std::cout, std::cerr};
  try {
    if (*selftest) return divad::cmd_selftest(mutate_flag, ctx);
    if (*bench) {
      const RunConfig c = resolve_config(bench_cfg, bench_out);
      const auto outcome = divad::synth_bench(c, c.output_dir, ctx);
      if (export_corpus) {
        std::cerr << "wrote " << divad::write_synthetic(c.output_dir / "corpus", outcome.corpus).string() << '\n';
      }
      std::cout << outcome.report.table();
      return 0;
    }
    if (*scan) {
      divad::cmd_scan(layout, root, csv ? std::optional<std::filesystem::path>(*csv) : std::nullopt, scan_out, ctx);
      return 0;
    }
    if (*run) {
      const RunConfig c = resolve_config(run_cfg, run_out);
      const auto s = divad::cmd_run(run_manifest, c, c.output_dir, ctx);
      std::cout << "scored " << s.processed << ", skipped " << s.skipped << " -> " << c.output_dir.string() << '\n';
      return 0;
    }
    if (*evaluate) {
      std::cout << divad::cmd_evaluate(eval_results, eval_manifest, ctx).table();
      return 0;
    }
    if (*sweep) {
      const RunConfig c = resolve_config(sweep_cfg, sweep_out);
      const auto values = parse_values(sweep_values);
      const auto outcome = divad::cmd_sweep(
          c, values, sweep_manifest ? std::optional<std::filesystem::path>(*sweep_manifest) : std::nullopt,
          c.output_dir, ctx);
      std::cout << "best T' " << outcome.best_value << '\n';
      return 0;
    }
    if (*heatmap) {
      const RunConfig c = resolve_config(heat_cfg, heat_out);
      divad::cmd_heatmap(heat_image, heat_class, c, c.output_dir, ctx);
      return 0;
    }
  } catch (const divad::Error& e) {
    return report_error(e.kind(), e);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("io", e);
  } catch (const std::exception& e) {
    return report_error("internal", e);
  }
  return 1;
}
