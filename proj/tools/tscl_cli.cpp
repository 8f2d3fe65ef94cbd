#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tscl/experiment.hpp"
#include "tscl/plot.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  int workers = 1;
  long long seed_offset = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory (overrides output_dir)");
  sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--seed-offset", c.seed_offset, "added to every seed");
}

int run_mode(tscl::Mode mode, const Common& c) {
  nlohmann::json j;
  {
    std::ifstream in(c.config);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: " << c.config << ": " << e.what() << '\n';
      return 2;
    }
  }
  if (j.contains("mode") && j["mode"] != std::string(tscl::to_string(mode))) {
    std::cerr << "error: config mode '" << j["mode"].get<std::string>() << "' does not match subcommand\n";
    return 2;
  }
  j["mode"] = std::string(tscl::to_string(mode));

  tscl::ExperimentConfig cfg;
  try {
    cfg = tscl::config_from_json(j);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  for (auto& s : cfg.seeds) s += static_cast<std::uint64_t>(c.seed_offset);
  cfg.integrals.seed += static_cast<std::uint64_t>(c.seed_offset);

  tscl::RunManifest man;
  try {
    man = tscl::run(cfg, c.workers);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  int failed = 0;
  for (const auto& r : man.runs) {
    if (r.ok) continue;
    ++failed;
    std::cerr << "run V=" << r.v << (r.vtilde ? " Vtilde=" + std::to_string(*r.vtilde) : std::string())
              << " seed=" << r.seed << " failed: " << r.message << '\n';
  }
  if (mode == tscl::Mode::IntegralsCheck)
    std::printf("integral checks: %d/%d passed\n", man.integral_checks - man.integral_failures, man.integral_checks);
  else
    std::printf("runs: %zu ok, %d failed\n", man.runs.size() - failed, failed);
  std::printf("wrote %zu files to %s (%.1f s)\n", man.files.size(), cfg.output_dir.c_str(), man.wall_clock_seconds);
  return man.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-task teacher-student learning dynamics: ODEs, simulations and sweeps"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    tscl::Mode mode;
  };
  const Sub subs[] = {
      {"ode-run", "integrate the order-parameter ODEs", tscl::Mode::OdeRun},
      {"sim-run", "simulate online SGD", tscl::Mode::SimRun},
      {"sweep-v", "sweep feature similarity V", tscl::Mode::SweepV},
      {"sweep-2d", "sweep the (V, Vtilde) grid in the mean-field regime", tscl::Mode::Sweep2D},
      {"integrals-check", "compare closed-form integrals against Monte Carlo", tscl::Mode::IntegralsCheck},
  };
  Common common[std::size(subs)];
  CLI::App* cmds[std::size(subs)];
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    cmds[i] = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmds[i], common[i]);
  }

  std::string csv_path, out_path, kind = "lines", title;
  bool log_y = false;
  auto* plot_cmd = app.add_subcommand("plot", "render a trace, cross-section or heatmap CSV as SVG");
  plot_cmd->add_option("csv", csv_path, "input CSV")->required();
  plot_cmd->add_option("--out", out_path, "output SVG")->required();
  plot_cmd->add_option("--kind", kind, "lines or heatmap")->check(CLI::IsMember({"lines", "heatmap"}));
  plot_cmd->add_flag("--log-y", log_y, "log10 y axis");
  plot_cmd->add_option("--title", title, "figure title");

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < std::size(subs); ++i)
    if (cmds[i]->parsed()) return run_mode(subs[i].mode, common[i]);

  try {
    tscl::plot::Options opt;
    opt.log_y = log_y;
    opt.title = title;
    tscl::plot::emit_plot(csv_path, kind == "heatmap" ? tscl::plot::Kind::Heatmap : tscl::plot::Kind::Lines,
                          out_path, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
