#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "battkit/errors.hpp"
#include "battkit/harness.hpp"
#include "battkit/ocv.hpp"
#include "battkit/timeseries.hpp"

namespace {

// BATTKIT_OUT_DIR takes precedence over -o for directory outputs.
std::string resolve_out_dir(const std::string& cli_value) {
  if (const char* env = std::getenv("BATTKIT_OUT_DIR"); env && *env)
    return env;
  return cli_value;
}

void print_report(const battkit::harness::RunReport& rep) {
  std::printf("%s\n", rep.to_json().c_str());
}

int run_metrics(const std::string& est_path, const std::string& truth_path) {
  using battkit::CsvTable;
  const CsvTable est = battkit::read_csv_table(est_path);
  const CsvTable truth = battkit::read_csv_table(truth_path);

  auto soc_column = [](const CsvTable& t, const char* preferred) {
    for (const char* name : {preferred, "soc_hat", "soc_true", "soc"})
      if (t.has(name)) return &t.col(name);
    throw battkit::FormatError("no SOC column found");
  };
  const auto* est_soc = soc_column(est, "soc_hat");
  const auto* truth_soc = soc_column(truth, "soc_true");
  const double rmse = battkit::harness::rmse_soc(*est_soc, *truth_soc);
  std::printf("{\n  \"rmse_soc_pct\": %.6f", rmse);
  if (est.has("qb_hat") && truth.has("qb_true") && !est.col("qb_hat").empty()) {
    const double re = battkit::harness::re_capacity(
        est.col("qb_hat").back(), truth.col("qb_true").back());
    std::printf(",\n  \"re_qb_pct\": %.6f", re);
  }
  std::printf("\n}\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"battkit - bias-compensated SOC/SOH estimation toolkit"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, anchors_path, curve_out, est_path,
      truth_path;
  bool compare = false;

  auto* sim = app.add_subcommand(
      "simulate", "Simulate a scenario and write the measured series");
  sim->add_option("scenario", scenario_path, "scenario JSON")->required();
  sim->add_option("-o,--out", out_dir, "output directory")->required();

  auto* run = app.add_subcommand(
      "run", "Run the bias-compensated estimator on a scenario twin");
  run->add_option("scenario", scenario_path, "scenario JSON")->required();
  run->add_option("-o,--out", out_dir, "output directory");
  run->add_flag("--compare", compare,
                "also run the continuous-estimation baseline");

  auto* base = app.add_subcommand(
      "baseline", "Run only the continuous-estimation baseline");
  base->add_option("scenario", scenario_path, "scenario JSON")->required();
  base->add_option("-o,--out", out_dir, "output directory");

  auto* fit = app.add_subcommand("fit-ocv",
                                 "Fit an OCV polynomial from an anchor table");
  fit->add_option("anchors", anchors_path, "anchor CSV (soc,v_ocv)")
      ->required();
  fit->add_option("-o,--out", curve_out, "output curve JSON")->required();

  auto* met = app.add_subcommand("metrics",
                                 "SOC RMSE between two aligned series");
  met->add_option("est", est_path, "estimate CSV")->required();
  met->add_option("truth", truth_path, "ground-truth CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const auto sc = battkit::harness::load_scenario(scenario_path);
      battkit::harness::simulate_to_dir(sc, resolve_out_dir(out_dir));
      return 0;
    }
    if (run->parsed() || base->parsed()) {
      const auto sc = battkit::harness::load_scenario(scenario_path);
      battkit::harness::RunOptions opt;
      opt.compare_baseline = compare;
      opt.baseline_only = base->parsed();
      opt.out_dir = resolve_out_dir(out_dir);
      print_report(battkit::harness::run_scenario(sc, opt));
      return 0;
    }
    if (fit->parsed()) {
      const auto anchors = battkit::ocv::read_anchors_csv(anchors_path);
      const auto rep = battkit::ocv::fit(anchors);
      rep.curve().save_json(curve_out);
      std::printf("{\n  \"residual_max_v\": %.3e,\n  \"condition\": %.3e\n}\n",
                  rep.residual_max_v, rep.condition);
      return 0;
    }
    if (met->parsed()) return run_metrics(est_path, truth_path);
  } catch (const battkit::NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const battkit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 2;
  }
  return 0;
}
