#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lab/experiment.hpp"
#include "lab/transcript_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int report(const lab::ExperimentOutcome& out, const std::string& dir) {
  std::cout << (out.passed ? "PASS" : "FAIL") << " (" << dir << ")\n";
  for (const auto& f : out.failures) std::cout << "  " << f << '\n';
  return out.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lab: batch-query learning experiments"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", output, "override the output directory");

  std::string transcript;
  auto* verify = app.add_subcommand("verify", "check a transcript round by round");
  verify->add_option("transcript", transcript, "transcript JSONL")->required()->check(CLI::ExistingFile);

  int n = 4;
  long b = 8, trials = 10000;
  double tau = 1.0 / 32;
  std::uint64_t seed = 1;
  std::string noise = "plus_tau", stats_out = "out/extract";
  auto* stats = app.add_subcommand("extract-stats", "sample extraction statistics");
  stats->add_option("--n", n);
  stats->add_option("--b", b);
  stats->add_option("--tau", tau);
  stats->add_option("--trials", trials);
  stats->add_option("--seed", seed);
  stats->add_option("--noise", noise);
  stats->add_option("--out", stats_out);

  std::string param = "b", sweep_out = "out/sweep";
  std::vector<long> values{2, 8, 32, 128};
  double rho = 1.0 / 16, p_y = 0.3;
  long sweep_trials = 1000;
  std::uint64_t sweep_seed = 1;
  auto* sweep = app.add_subcommand("sweep", "validity of simulated batch answers across batch sizes");
  sweep->add_option("--param", param)->check(CLI::IsMember({"b"}));
  sweep->add_option("--values", values)->delimiter(',');
  sweep->add_option("--rho", rho);
  sweep->add_option("--p-y", p_y);
  sweep->add_option("--trials", sweep_trials);
  sweep->add_option("--seed", sweep_seed);
  sweep->add_option("--out", sweep_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = lab::ExperimentConfig::load(config_path);
      if (!output.empty()) cfg.output = output;
      return report(lab::run_experiment(cfg), cfg.output);
    }
    if (*verify) {
      lab::VerifyReport rep = lab::verify_transcript_file(transcript);
      for (const auto& r : rep.rounds) std::cout << "round " << r.t << ": " << (r.ok ? "ok" : "FLAGGED") << "  " << r.detail << '\n';
      if (rep.trajectory_checked) {
        std::cout << "trajectory audit: " << (rep.trajectory_failures.empty() ? "ok" : "FAILED") << '\n';
        for (const auto& f : rep.trajectory_failures) std::cout << "  " << f << '\n';
      }
      std::cout << rep.flagged << " of " << rep.rounds.size() << " rounds flagged\n";
      return rep.ok() ? 0 : 1;
    }
    if (*stats) {
      lab::ExperimentConfig cfg;
      cfg.kind = lab::ExperimentKind::ExtractStats;
      cfg.trials = trials;
      cfg.seed = seed;
      cfg.output = stats_out;
      cfg.params = {{"n", n}, {"b", b}, {"tau", tau}, {"noise", noise}, {"support", std::min(16L, 1L << (n + 1))}};
      return report(lab::run_experiment(cfg), cfg.output);
    }
    if (*sweep) {
      lab::ExperimentConfig cfg;
      cfg.kind = lab::ExperimentKind::RegimeSweep;
      cfg.trials = sweep_trials;
      cfg.seed = sweep_seed;
      cfg.output = sweep_out;
      cfg.params = {{"param", param}, {"values", values}, {"rho", rho}, {"p_y", p_y}};
      return report(lab::run_experiment(cfg), cfg.output);
    }
  } catch (const lab::TranscriptParseError& e) {
    std::cerr << "malformed transcript: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
