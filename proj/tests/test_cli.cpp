#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lab/experiment.hpp"
#include "lab/reductions.hpp"
#include "lab/transcript_io.hpp"

namespace fs = std::filesystem;
using namespace lab;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lab_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::string join(const std::vector<std::string>& ls) {
  std::string out;
  for (const auto& l : ls) out += l + "\n";
  return out;
}

json parity_config(const fs::path& out) {
  return {{"experiment", "ParityEndToEnd"},
          {"pipeline",
           {{"pipeline", {"pac_to_bsq", "bsq_alternating", "diffsim"}},
            {"payload", "parity"},
            {"params", {{"n", 3}, {"b", 4}, {"rho", 1.0 / 64}, {"delta", 0.2}, {"payload_m", 6}}}}},
          {"trials", 3},
          {"seed", 4},
          {"transcript", true},
          {"output", out.string()}};
}

}  // namespace

TEST_CASE("config parsing") {
  ExperimentConfig c = ExperimentConfig::load(std::string(LAB_DATA_DIR) + "/extract_stats.json");
  CHECK(c.kind == ExperimentKind::ExtractStats);
  CHECK(fs::path(c.distribution).is_absolute() == fs::path(LAB_DATA_DIR).is_absolute());
  CHECK(fs::exists(c.distribution));
  CHECK(experiment_kind_from_string("GadgetAudit") == ExperimentKind::GadgetAudit);
  CHECK_THROWS(experiment_kind_from_string("Nope"));
  CHECK_THROWS(ExperimentConfig::from_json(json{{"trials", 3}}));
  for (auto name : {"parity_end_to_end", "regime_sweep", "gadget_audit", "reduction_matrix"})
    CHECK_NOTHROW(ExperimentConfig::load(std::string(LAB_DATA_DIR) + "/" + name + ".json"));
}

TEST_CASE("runs are byte-identical across repeats") {
  fs::path a = scratch("det_a"), b = scratch("det_b");
  auto ca = ExperimentConfig::from_json(parity_config(a)), cb = ExperimentConfig::from_json(parity_config(b));
  ExperimentOutcome oa = run_experiment(ca), ob = run_experiment(cb);
  CHECK(oa.passed);
  CHECK(ob.passed);
  for (auto f : {"results.csv", "summary.json", "run.log", "transcript.jsonl"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "results.csv").rfind("# ", 0) == 0);
}

TEST_CASE("verify: gradient transcript from a run") {
  fs::path d = scratch("verify_grad");
  ExperimentOutcome o = run_experiment(ExperimentConfig::from_json(parity_config(d)));
  REQUIRE(o.passed);
  VerifyReport rep = verify_transcript_file((d / "transcript.jsonl").string());
  CHECK(rep.paradigm == "bsgd");
  CHECK(rep.model_rebuilt);
  CHECK(rep.trajectory_checked);
  CHECK(rep.ok());
  CHECK(rep.rounds.size() > 0);

  // Shift one update coordinate by a full grid step.
  auto ls = lines_of(slurp(d / "transcript.jsonl"));
  json step = json::parse(ls[2]);
  REQUIRE(!step["g"]["val"].empty());
  step["g"]["val"][0] = step["g"]["val"][0].get<double>() + 2.0 / 64;
  ls[2] = step.dump();
  std::istringstream bad(join(ls));
  VerifyReport r2 = verify_transcript(bad);
  CHECK(r2.flagged >= 1);
  CHECK_FALSE(r2.rounds[1].ok);
  CHECK(r2.rounds[0].ok);
}

TEST_CASE("verify: a response moved by 2 tau flags exactly that round") {
  FiniteDistribution D = random_distribution(3, 8, 2);
  BatchOracle o(D, 4, 1.0 / 16, Adversary{NoiseAdversary::SeededRandom, 1}, 3);
  for (int i = 0; i < 6; ++i)
    o.answer(SQQuery(1, [i](const Example& e, Eigen::Ref<Eigen::VectorXd> out) { out[0] = e.x[i % 3] ? 1 : -1; }));
  std::ostringstream os;
  write_query_transcript(os, json{{"paradigm", "bsq"}, {"tau", 1.0 / 16}}, o.log());
  std::istringstream good(os.str());
  VerifyReport ok = verify_transcript(good);
  CHECK(ok.ok());
  CHECK(ok.rounds.size() == 6);

  auto ls = lines_of(os.str());
  json r = json::parse(ls[4]);
  r["response"][0] = r["response"][0].get<double>() + 2.0 / 16;
  ls[4] = r.dump();
  std::istringstream tampered(join(ls));
  VerifyReport rep = verify_transcript(tampered);
  CHECK(rep.flagged == 1);
  CHECK_FALSE(rep.rounds[3].ok);
}

TEST_CASE("verify: malformed transcripts") {
  std::istringstream empty("");
  CHECK_THROWS_AS(verify_transcript(empty), TranscriptParseError);
  std::istringstream garbage("{\"kind\": \"header\", \"paradigm\": \"bsq\", \"tau\": 0.1}\n{not json\n");
  CHECK_THROWS_AS(verify_transcript(garbage), TranscriptParseError);
  std::istringstream no_header("{\"kind\": \"round\"}\n");
  CHECK_THROWS_AS(verify_transcript(no_header), TranscriptParseError);
  CHECK_THROWS_AS(verify_transcript_file("/nonexistent/transcript.jsonl"), TranscriptParseError);
}

TEST_CASE("command-line binary") {
  const std::string cli = LAB_CLI;
  fs::path d = scratch("binary");
  fs::create_directories(d);
  std::ofstream(d / "cfg.json") << parity_config(d / "run").dump();
  CHECK(std::system((cli + " run " + (d / "cfg.json").string() + " > /dev/null").c_str()) == 0);
  CHECK(std::system((cli + " verify " + (d / "run" / "transcript.jsonl").string() + " > " + (d / "v.txt").string())
                        .c_str()) == 0);
  const std::string v = slurp(d / "v.txt");
  CHECK(v.find("round 1: ok") != std::string::npos);
  CHECK(v.find("0 of ") != std::string::npos);
  CHECK(std::system((cli + " extract-stats --n 2 --b 4 --tau 0.0625 --trials 5000 --out " + (d / "ex").string() +
                     " > /dev/null")
                        .c_str()) == 0);
  CHECK(fs::exists(d / "ex" / "summary.json"));
  CHECK(std::system((cli + " sweep --values 2,64 --trials 50 --out " + (d / "sw").string() + " > /dev/null").c_str()) ==
        0);
  CHECK(json::parse(slurp(d / "sw" / "summary.json"))["points"].size() == 2);
  CHECK(std::system((cli + " run /nonexistent.json > /dev/null 2>&1").c_str()) != 0);
}
