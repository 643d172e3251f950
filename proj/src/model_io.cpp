#include "cdhmm/model_io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "cdhmm/errors.hpp"

namespace cdhmm::io {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw ValidationError("model file: field '" + field + "': " + what);
}

const json& field(const json& j, const char* name, const std::string& ctx) {
  const std::string path = ctx.empty() ? name : ctx + "." + name;
  if (!j.is_object()) bad(ctx, "expected an object");
  auto it = j.find(name);
  if (it == j.end()) bad(path, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

std::vector<double> numbers(const json& j, const std::string& path, std::size_t expected = 0) {
  if (!j.is_array()) bad(path, "expected an array");
  if (expected && j.size() != expected) {
    bad(path, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  }
  std::vector<double> v;
  v.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return v;
}

std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    bad(path, "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

ordered_json vec2(const Vec2& v) { return ordered_json::array({v.x(), v.y()}); }

Vec2 read_vec2(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 2);
  return {v[0], v[1]};
}

template <class V>
ordered_json vec(const V& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <class V>
V read_vec(const json& j, const std::string& path) {
  V out;
  const auto v = numbers(j, path, static_cast<std::size_t>(out.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[static_cast<std::size_t>(i)];
  return out;
}

ordered_json stats_json(const features::FeatureStats& s) {
  return ordered_json{{"mean", s.mean}, {"std", s.stddev}};
}

features::FeatureStats read_stats(const json& j, const std::string& path, std::size_t dim) {
  features::FeatureStats s;
  s.mean = numbers(field(j, "mean", path), path + ".mean", dim - 1);
  s.stddev = numbers(field(j, "std", path), path + ".std", dim - 1);
  for (double sd : s.stddev) {
    if (sd < 0.0) bad(path + ".std", "negative standard deviation");
  }
  return s;
}

}  // namespace

ordered_json em_config_to_json(const train::EmConfig& c) {
  return ordered_json{
      {"iterations", c.iterations},
      {"batch_size", c.batch_size},
      {"lambda_m", c.penalties.man},
      {"lambda_z", c.penalties.zonal},
      {"lambda_s", c.penalties.switching},
      {"inner_max_iterations", c.inner_max_iterations},
      {"seed", c.seed},
      {"tolerance", c.tolerance},
      {"inverse_likelihood_weights", c.inverse_likelihood_weights},
      {"zone_means_all_frames", c.zone_means_all_frames},
      {"zone_metric", c.zone_metric == ZoneDistance::Euclidean ? "euclidean" : "l1"},
      {"neighbour_hops", c.neighbour_hops},
      {"gamma_o_min", c.gamma_o_min},
      {"gamma_o_max", c.gamma_o_max},
      {"pi_ridge", c.pi_ridge},
      {"beta_bound", c.beta_bound},
  };
}

train::EmConfig em_config_from_json(const json& j, train::EmConfig c) {
  if (!j.is_object()) bad("em_config", "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = "em_config." + key;
    if (key == "iterations") c.iterations = count(value, path);
    else if (key == "batch_size") c.batch_size = count(value, path);
    else if (key == "lambda_m") c.penalties.man = number(value, path);
    else if (key == "lambda_z") c.penalties.zonal = number(value, path);
    else if (key == "lambda_s") c.penalties.switching = number(value, path);
    else if (key == "inner_max_iterations") c.inner_max_iterations = count(value, path);
    else if (key == "seed") c.seed = count(value, path);
    else if (key == "tolerance") c.tolerance = number(value, path);
    else if (key == "neighbour_hops") c.neighbour_hops = count(value, path);
    else if (key == "gamma_o_min") c.gamma_o_min = number(value, path);
    else if (key == "gamma_o_max") c.gamma_o_max = number(value, path);
    else if (key == "pi_ridge") c.pi_ridge = number(value, path);
    else if (key == "beta_bound") c.beta_bound = number(value, path);
    else if (key == "inverse_likelihood_weights" || key == "zone_means_all_frames") {
      if (!value.is_boolean()) bad(path, "expected a boolean");
      (key == "inverse_likelihood_weights" ? c.inverse_likelihood_weights : c.zone_means_all_frames) =
          value.get<bool>();
    } else if (key == "zone_metric") {
      if (value == "euclidean") c.zone_metric = ZoneDistance::Euclidean;
      else if (value == "l1") c.zone_metric = ZoneDistance::L1;
      else bad(path, "expected \"euclidean\" or \"l1\"");
    } else {
      bad(path, "unknown key");
    }
  }
  c.validate();
  return c;
}

ordered_json model_to_json(const ModelFile& m) {
  const auto& p = m.params;
  ordered_json zones = ordered_json::array();
  for (const auto& z : p.zones) {
    zones.push_back({{"mean", vec2(z.mean)},
                     {"cov", ordered_json::array({vec2(z.cov.row(0).transpose()), vec2(z.cov.row(1).transpose())})}});
  }
  ordered_json cells = ordered_json::array();
  for (const auto& c : p.grid.cells()) cells.push_back({{"gamma_o", c.gamma_o}, {"sigma2", c.sigma2}});

  ordered_json out;
  out["version"] = kModelVersion;
  out["team_id"] = p.team_id;
  out["delivery_type"] = data::to_string(p.delivery_type);
  out["K"] = p.states.attackers;
  out["zones"] = std::move(zones);
  out["gamma_grid"] = {{"origin", vec2(p.grid.origin())},
                       {"bin_size", p.grid.bin_size()},
                       {"nx", p.grid.nx()},
                       {"ny", p.grid.ny()},
                       {"cells", std::move(cells)}};
  out["beta"] = {{"m", vec(p.beta.man)}, {"z", vec(p.beta.zonal)}, {"s", vec(p.beta.switching)}};
  out["pi"] = p.initial;
  out["goal_center"] = vec2(p.goal_center);
  out["standardizer"] = {{"man", stats_json(p.standardizer.man)},
                         {"zonal", stats_json(p.standardizer.zonal)},
                         {"switching", stats_json(p.standardizer.switching)}};
  out["em_config"] = m.config ? em_config_to_json(*m.config) : ordered_json(nullptr);
  out["ll_trace"] = m.ll_trace;
  return out;
}

ModelFile model_from_json(const json& j) {
  if (!j.is_object()) bad("", "expected a JSON object");
  const json& version = field(j, "version", "");
  if (!version.is_string() || version.get<std::string>() != kModelVersion) {
    throw ValidationError("unsupported model version " + version.dump() + " (expected \"" + kModelVersion + "\")");
  }
  ModelFile m;
  auto& p = m.params;
  const json& team = field(j, "team_id", "");
  if (!team.is_string()) bad("team_id", "expected a string");
  p.team_id = team.get<std::string>();
  const json& delivery = field(j, "delivery_type", "");
  if (!delivery.is_string()) bad("delivery_type", "expected a string");
  try {
    p.delivery_type = data::delivery_from_string(delivery.get<std::string>());
  } catch (const ValidationError& e) {
    bad("delivery_type", e.what());
  }
  p.states.attackers = count(field(j, "K", ""), "K");

  const json& zones = field(j, "zones", "");
  if (!zones.is_array()) bad("zones", "expected an array");
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const std::string path = "zones[" + std::to_string(i) + "]";
    hmm::ZonalGaussian z;
    z.mean = read_vec2(field(zones[i], "mean", path), path + ".mean");
    const json& cov = field(zones[i], "cov", path);
    if (!cov.is_array() || cov.size() != 2) bad(path + ".cov", "expected a 2x2 matrix");
    z.cov.row(0) = read_vec2(cov[0], path + ".cov[0]").transpose();
    z.cov.row(1) = read_vec2(cov[1], path + ".cov[1]").transpose();
    p.zones.push_back(z);
  }

  const json& g = field(j, "gamma_grid", "");
  const Vec2 origin = read_vec2(field(g, "origin", "gamma_grid"), "gamma_grid.origin");
  const double bin_size = number(field(g, "bin_size", "gamma_grid"), "gamma_grid.bin_size");
  const std::size_t nx = count(field(g, "nx", "gamma_grid"), "gamma_grid.nx");
  const std::size_t ny = count(field(g, "ny", "gamma_grid"), "gamma_grid.ny");
  if (!(bin_size > 0.0) || nx == 0 || ny == 0) bad("gamma_grid", "degenerate grid");
  p.grid = hmm::MarkingBinGrid(origin, bin_size, nx, ny);
  const json& cells = field(g, "cells", "gamma_grid");
  if (!cells.is_array() || cells.size() != nx * ny) bad("gamma_grid.cells", "expected nx * ny cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string path = "gamma_grid.cells[" + std::to_string(i) + "]";
    p.grid[i].gamma_o = number(field(cells[i], "gamma_o", path), path + ".gamma_o");
    p.grid[i].sigma2 = number(field(cells[i], "sigma2", path), path + ".sigma2");
  }

  const json& beta = field(j, "beta", "");
  p.beta.man = read_vec<hmm::PairWeights>(field(beta, "m", "beta"), "beta.m");
  p.beta.zonal = read_vec<hmm::ZonalWeights>(field(beta, "z", "beta"), "beta.z");
  p.beta.switching = read_vec<hmm::PairWeights>(field(beta, "s", "beta"), "beta.s");
  p.initial = numbers(field(j, "pi", ""), "pi", p.states.size());
  p.goal_center = read_vec2(field(j, "goal_center", ""), "goal_center");

  const json& st = field(j, "standardizer", "");
  p.standardizer.man = read_stats(field(st, "man", "standardizer"), "standardizer.man", features::kPairDim);
  p.standardizer.zonal = read_stats(field(st, "zonal", "standardizer"), "standardizer.zonal", features::kZonalDim);
  p.standardizer.switching =
      read_stats(field(st, "switching", "standardizer"), "standardizer.switching", features::kPairDim);

  const json& cfg = field(j, "em_config", "");
  if (!cfg.is_null()) m.config = em_config_from_json(cfg);
  m.ll_trace = numbers(field(j, "ll_trace", ""), "ll_trace");

  p.validate();
  return m;
}

std::string serialize_model(const ModelFile& model) { return model_to_json(model).dump(2) + "\n"; }

ModelFile parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("corrupt model file: ") + e.what());
  }
  return model_from_json(j);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  write_file_atomic(path, serialize_model(model));
}

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace cdhmm::io
