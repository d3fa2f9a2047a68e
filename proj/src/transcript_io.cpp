#include "lab/transcript_io.hpp"

#include <fstream>
#include <sstream>

#include "lab/diffsim.hpp"
#include "lab/reductions.hpp"

namespace lab {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json sparse_json(const SparseGrad& g) {
  std::vector<long> idx;
  std::vector<double> val;
  for (SparseGrad::InnerIterator it(g); it; ++it) {
    idx.push_back(it.index());
    val.push_back(it.value());
  }
  return {{"idx", idx}, {"val", val}};
}

SparseGrad json_sparse(const json& j, long dim) {
  SparseGrad g(dim);
  auto idx = j.at("idx").get<std::vector<long>>();
  auto val = j.at("val").get<std::vector<double>>();
  if (idx.size() != val.size()) throw TranscriptParseError("sparse vector: idx/val length mismatch");
  for (std::size_t i = 0; i < idx.size(); ++i) g.insert(idx[i]) = val[i];
  return g;
}

json batch_json(const std::vector<Example>& items) {
  json arr = json::array();
  for (const auto& e : items) arr.push_back({bits_to_string(e.x), e.y});
  return arr;
}

std::vector<Example> json_batch(const json& j) {
  std::vector<Example> out;
  for (const auto& it : j) out.push_back({bits_from_string(it.at(0).get<std::string>()), it.at(1).get<int>()});
  return out;
}

}  // namespace

void write_query_transcript(std::ostream& os, json header, const std::vector<OracleRound>& log) {
  header["kind"] = "header";
  os << header.dump() << '\n';
  for (const auto& r : log) {
    json j{{"kind", "round"}, {"t", r.round}, {"restriction", to_string(r.restriction)}};
    if (!r.hidden.items.empty()) j["batch"] = batch_json(r.hidden.items);
    if (r.values.size() > 0) {
      json rows = json::array();
      for (Eigen::Index i = 0; i < r.values.rows(); ++i) rows.push_back(vec_json(r.values.row(i).transpose()));
      j["values"] = rows;
    }
    j["exact"] = vec_json(r.exact);
    j["response"] = vec_json(r.response);
    os << j.dump() << '\n';
  }
}

void write_gradient_transcript(std::ostream& os, json header, const Transcript& tr) {
  header["kind"] = "header";
  if (!header.contains("paradigm")) header["paradigm"] = tr.paradigm;
  header["T"] = tr.T;
  header["rho"] = tr.rho;
  header["gamma"] = tr.gamma;
  header["b"] = tr.b;
  header["p"] = tr.p;
  header["seed"] = tr.seed;
  header["initial"] = sparse_json(tr.initial.sparseView());
  if (!tr.fixed_batch.items.empty()) header["fixed_batch"] = batch_json(tr.fixed_batch.items);
  os << header.dump() << '\n';
  for (const auto& r : tr.rounds) {
    json j{{"kind", "step"}, {"t", r.t}, {"exact", sparse_json(r.exact)}, {"g", sparse_json(r.g)}, {"hash", r.hash}};
    if (!r.batch.items.empty()) j["batch"] = batch_json(r.batch.items);
    os << j.dump() << '\n';
  }
}

namespace {

void verify_query(const json& header, const std::vector<json>& rows, VerifyReport& rep) {
  const double tol = header.at("tau").get<double>();
  for (const auto& row : rows) {
    RoundVerdict v;
    v.t = row.at("t").get<long>();
    Eigen::VectorXd response = json_vec(row.at("response"));
    Eigen::VectorXd exact = json_vec(row.at("exact"));
    Eigen::VectorXd mean = exact;
    if (row.contains("values")) {
      const auto& vals = row.at("values");
      mean = Eigen::VectorXd::Zero(response.size());
      for (const auto& r : vals) mean += json_vec(r);
      mean /= static_cast<double>(vals.size());
      if ((mean - exact).lpNorm<Eigen::Infinity>() > 1e-9) {
        v.ok = false;
        v.detail = "recorded mean differs from the hidden values";
      }
    }
    const double dev = (response - mean).lpNorm<Eigen::Infinity>();
    if (dev > tol + 1e-12) {
      v.ok = false;
      std::ostringstream os;
      os << "response deviates by " << dev << " > tau = " << tol;
      v.detail = os.str();
    }
    if (v.ok) {
      std::ostringstream os;
      os << "deviation " << dev;
      v.detail = os.str();
    }
    rep.rounds.push_back(v);
  }
}

void verify_gradient(const json& header, const std::vector<json>& rows, VerifyReport& rep) {
  const GridStep rho = GridStep::from_value(header.at("rho").get<double>());
  const double gamma = header.value("gamma", 1.0);
  const long p = header.at("p").get<long>();
  std::shared_ptr<const DiffModel> model;
  std::unique_ptr<StepObserver> auditor;
  TrajectoryAuditor* traj = nullptr;
  if (header.contains("pipeline")) {
    Pipeline pl = build_pipeline(header.at("pipeline"));
    const auto* gl = std::get_if<GradientLearner>(&pl.method);
    if (!gl) throw TranscriptParseError("pipeline in header does not produce a gradient method");
    model = gl->model_factory ? gl->model_factory() : gl->model;
    if (model->dimension() != p) throw TranscriptParseError("rebuilt model has a different dimension");
    if (auto cm = std::dynamic_pointer_cast<const ComposedModel>(model)) {
      auto a = std::make_unique<TrajectoryAuditor>(cm);
      traj = a.get();
      auditor = std::move(a);
    }
    rep.model_rebuilt = true;
  }
  std::vector<Example> fixed;
  if (header.contains("fixed_batch")) fixed = json_batch(header.at("fixed_batch"));
  Eigen::VectorXd w = Eigen::VectorXd(json_sparse(header.at("initial"), p));
  for (const auto& row : rows) {
    RoundVerdict v;
    v.t = row.at("t").get<long>();
    SparseGrad exact = json_sparse(row.at("exact"), p);
    SparseGrad g = json_sparse(row.at("g"), p);
    std::vector<Example> items = row.contains("batch") ? json_batch(row.at("batch")) : fixed;
    SparseGrad reference = exact;
    if (model) {
      reference = average_clipped_gradient(*model, w, items);
      SparseGrad diff = reference - exact;
      double worst = 0.0;
      for (SparseGrad::InnerIterator it(diff); it; ++it) worst = std::max(worst, std::abs(it.value()));
      if (worst > 1e-9) {
        v.ok = false;
        v.detail = "recorded gradient differs from the recomputed one";
      }
    }
    if (!valid_rounding(g, reference, rho)) {
      v.ok = false;
      v.detail = "update is not a valid rounding of the clipped batch gradient";
    }
    for (SparseGrad::InnerIterator it(g); it; ++it) w[it.index()] -= gamma * it.value();
    if (auditor) auditor->on_step(v.t, w, items, reference, g);
    if (v.ok) v.detail = "valid rounding";
    rep.rounds.push_back(v);
  }
  if (auditor) {
    auditor->on_finish(w);
    rep.trajectory_checked = true;
    if (traj) rep.trajectory_failures = traj->failures();
  }
}

}  // namespace

VerifyReport verify_transcript(std::istream& is) {
  std::string line;
  json header;
  std::vector<json> rows;
  long lineno = 0;
  try {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("kind", "") != "header") throw TranscriptParseError("first line is not a header");
        header = std::move(j);
      } else {
        rows.push_back(std::move(j));
      }
    }
  } catch (const json::exception& e) {
    throw TranscriptParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
  if (header.is_null()) throw TranscriptParseError("empty transcript");
  VerifyReport rep;
  rep.paradigm = header.value("paradigm", "");
  try {
    if (rep.paradigm == "bsgd" || rep.paradigm == "fbgd" || rep.paradigm == "scripted")
      verify_gradient(header, rows, rep);
    else
      verify_query(header, rows, rep);
  } catch (const json::exception& e) {
    throw TranscriptParseError(e.what());
  }
  for (const auto& r : rep.rounds)
    if (!r.ok) ++rep.flagged;
  return rep;
}

VerifyReport verify_transcript_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TranscriptParseError("cannot open " + path);
  return verify_transcript(in);
}

}  // namespace lab
