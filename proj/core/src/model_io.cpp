#include "serec/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "tsv.hpp"

namespace serec {

using nlohmann::json;

void save_model(const std::filesystem::path& dir, const FactorModel& model, const ModelMeta& meta,
                const ExposureModel& provider) {
  std::filesystem::create_directories(dir);
  json j = {{"kind", meta.kind},
            {"k", meta.k},
            {"lambda_theta", meta.lambda_theta},
            {"lambda_beta", meta.lambda_beta},
            {"lambda_y", meta.lambda_y},
            {"seed", meta.seed},
            {"iterations", meta.iterations},
            {"converged", meta.converged},
            {"final_log_likelihood", meta.final_log_likelihood},
            {"n_users", meta.n_users},
            {"n_items", meta.n_items},
            {"hyper", meta.hyper},
            {"sources", meta.sources}};
  tsv::open_out(dir / "meta.json") << j.dump(2) << '\n';
  tsv::write_matrix(dir / "theta.tsv", model.theta);
  tsv::write_matrix(dir / "beta.tsv", model.beta);
  provider.save(dir);
}

LoadedModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw ParseError((dir / "meta.json").string(), 0, "cannot open file");
  const json j = json::parse(in);
  LoadedModel out;
  ModelMeta& m = out.meta;
  m.kind = j.at("kind").get<std::string>();
  m.k = j.at("k").get<Index>();
  m.lambda_theta = j.at("lambda_theta").get<double>();
  m.lambda_beta = j.at("lambda_beta").get<double>();
  m.lambda_y = j.at("lambda_y").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.iterations = j.at("iterations").get<int>();
  m.converged = j.value("converged", false);
  m.final_log_likelihood = j.at("final_log_likelihood").get<double>();
  m.n_users = j.at("n_users").get<Index>();
  m.n_items = j.at("n_items").get<Index>();
  m.hyper = j.value("hyper", std::map<std::string, double>{});
  m.sources = j.value("sources", std::map<std::string, std::string>{});

  out.model.theta = tsv::read_matrix(dir / "theta.tsv");
  out.model.beta = tsv::read_matrix(dir / "beta.tsv");
  out.model.lambda_theta = m.lambda_theta;
  out.model.lambda_beta = m.lambda_beta;
  out.model.lambda_y = m.lambda_y;
  if (out.model.theta.rows() != m.n_users || out.model.beta.rows() != m.n_items ||
      out.model.theta.cols() != m.k || out.model.beta.cols() != m.k)
    throw ParseError(dir.string(), 0, "factor files do not match meta.json dimensions");
  return out;
}

void write_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  auto out = tsv::open_out(path);
  out << "# iteration\tobjective\n";
  for (std::size_t t = 0; t < trace.size(); ++t) out << t + 1 << '\t' << tsv::format_double(trace[t]) << '\n';
}

std::vector<double> read_trace(const std::filesystem::path& path) {
  std::vector<double> trace;
  tsv::for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    auto v = f.size() == 2 ? tsv::parse_double(f[1]) : std::nullopt;
    if (!v) throw ParseError(path.string(), line, "expected `iteration objective`");
    trace.push_back(*v);
  });
  return trace;
}

}  // namespace serec
