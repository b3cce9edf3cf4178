// ubsgd: run, certify, bound and sweep experiments from a JSON config.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "ubsgd/harness.hpp"

namespace {

void print_bound_table(const ubsgd::Json& b) {
  std::printf("formula            %s\n", b["formula"].get<std::string>().c_str());
  for (const char* key : {"bound", "conservative_bound", "r2", "r2_alt", "cap",
                          "transient", "stationary", "dist2_init"}) {
    if (!b.contains(key)) continue;
    const auto& v = b[key];
    if (v.is_number()) {
      std::printf("%-18s %s\n", key, ubsgd::format_double(v.get<double>()).c_str());
    } else {
      std::printf("%-18s -\n", key);
    }
  }
  std::printf("\nhypothesis                     satisfied\n");
  for (const auto& h : b["hypotheses"]) {
    std::printf("%-30s %s\n", h["name"].get<std::string>().c_str(),
                h["satisfied"].get<bool>() ? "yes" : "NO");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uniform boundedness checks for SGD and momentum SGD"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis;
  int seeds = 0;
  bool override_cap = false;
  std::vector<double> values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seeds", seeds, "number of seeds derived from the master seed")
        ->check(CLI::Range(2, 1 << 20));
    sub->add_flag("--override-cap", override_cap, "run even if the step cap is violated");
  };
  auto* run = app.add_subcommand("run", "simulate the ensemble and check it against the bound");
  auto* certify = app.add_subcommand("certify", "verify the problem's certificates empirically");
  auto* bound = app.add_subcommand("bound", "print the bound and its hypotheses");
  auto* sweep = app.add_subcommand("sweep", "repeat run over values of one config entry");
  for (auto* s : {run, certify, bound, sweep}) add_common(s);
  sweep->add_option("--axis", axis, "dotted path of a numeric config entry, e.g. schedule.eta1")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  ubsgd::ExperimentConfig cfg;
  try {
    cfg = ubsgd::load_config(config_path);
  } catch (const ubsgd::ConfigError& e) {
    std::cout << ubsgd::dump({{"status", "error"}, {"error", "config_error"},
                              {"message", e.what()}});
    return 2;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seeds > 0) {
    cfg.seeds.list.clear();
    cfg.seeds.count = seeds;
  }
  if (override_cap) cfg.override_cap = true;

  ubsgd::CommandResult r;
  try {
    if (*run) r = ubsgd::cmd_run(cfg);
    if (*certify) r = ubsgd::cmd_certify(cfg);
    if (*bound) r = ubsgd::cmd_bound(cfg);
    if (*sweep) r = ubsgd::cmd_sweep(cfg, axis, values);
  } catch (const std::exception& e) {
    std::cerr << "ubsgd: " << e.what() << "\n";
    return 1;
  }
  if (*bound && r.exit_code == 0) {
    print_bound_table(r.report);
  } else {
    std::cout << ubsgd::dump(r.report);
  }
  return r.exit_code;
}
