#pragma once

// Experiment configuration (plain key = value text), config hashing, and report/artifact writers
// shared by the command-line driver.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cable_mesh.hpp"
#include "elliptic.hpp"
#include "errors.hpp"
#include "fractal_graph.hpp"
#include "heat_semigroup.hpp"
#include "stats.hpp"

namespace cablelab {

using Json = nlohmann::ordered_json;

struct ExperimentConfig {
  Family family = Family::sierpinski;
  int N = 2;
  int generation = 5;
  int mesh_k = 4;
  // Empty lists and zero counts select the command's default.
  std::vector<double> radii;        ///< Ball radii for elliptic scans.
  int centers = 0;                  ///< Ball centers per radius, or heat sources.
  int samples = 0;                  ///< Random data per ball, or Riesz battery size.
  std::vector<double> times;        ///< Heat time grid.
  std::vector<double> p;            ///< Exponents (Poisson p, L^p norms).
  std::vector<double> epsilon;      ///< Quasi-Riesz orders; empty means the family default.
  std::vector<int> generations;     ///< Riesz scan sizes.
  std::uint64_t seed = 1;
  std::string out = "out";
  int workers = 1;
  std::size_t budget_nodes = kDefaultNodeBudget;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += format_double(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty())
    throw InputError("config: bad value for " + key + ": '" + text + "'");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

}  // namespace detail

/// Sorted `key = value` lines; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv{
      {"family", to_string(c.family)},
      {"N", std::to_string(c.N)},
      {"generation", std::to_string(c.generation)},
      {"mesh_k", std::to_string(c.mesh_k)},
      {"radii", detail::join(c.radii)},
      {"centers", std::to_string(c.centers)},
      {"samples", std::to_string(c.samples)},
      {"times", detail::join(c.times)},
      {"p", detail::join(c.p)},
      {"epsilon", detail::join(c.epsilon)},
      {"generations", detail::join(c.generations)},
      {"seed", std::to_string(c.seed)},
      {"out", c.out},
      {"workers", std::to_string(c.workers)},
      {"budget_nodes", std::to_string(c.budget_nodes)},
  };
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

/// Applies `key = value` lines on top of `base`. Blank lines and lines starting with '#' are skipped.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq)), val = detail::trim(t.substr(eq + 1));
    if (key == "family") base.family = parse_family(val);
    else if (key == "N") base.N = detail::parse_number<int>(key, val);
    else if (key == "generation") base.generation = detail::parse_number<int>(key, val);
    else if (key == "mesh_k") base.mesh_k = detail::parse_number<int>(key, val);
    else if (key == "radii") base.radii = detail::parse_list<double>(key, val);
    else if (key == "centers") base.centers = detail::parse_number<int>(key, val);
    else if (key == "samples") base.samples = detail::parse_number<int>(key, val);
    else if (key == "times") base.times = detail::parse_list<double>(key, val);
    else if (key == "p") base.p = detail::parse_list<double>(key, val);
    else if (key == "epsilon") base.epsilon = detail::parse_list<double>(key, val);
    else if (key == "generations") base.generations = detail::parse_list<int>(key, val);
    else if (key == "seed") base.seed = detail::parse_number<std::uint64_t>(key, val);
    else if (key == "out") base.out = val;
    else if (key == "workers") base.workers = detail::parse_number<int>(key, val);
    else if (key == "budget_nodes") base.budget_nodes = detail::parse_number<std::size_t>(key, val);
    else throw InputError("config: unknown key '" + key + "'");
  }
  return base;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.N < 1) throw InputError("config: N must be >= 1");
  if (c.generation < 0) throw InputError("config: generation must be >= 0");
  if (c.mesh_k < 1) throw InputError("config: mesh_k must be >= 1");
  if (c.centers < 0 || c.samples < 0) throw InputError("config: centers and samples must be >= 0");
  if (c.workers < 1) throw InputError("config: workers must be >= 1");
  for (double r : c.radii)
    if (!(r > 0.0)) throw InputError("config: radii must be positive");
  for (double t : c.times)
    if (!(t > 0.0)) throw InputError("config: times must be positive");
  for (double p : c.p)
    if (!(p > 1.0) || !std::isfinite(p)) throw InputError("config: p values must lie in (1, inf)");
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// FNV-1a of the serialized config, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(serialize_config(c));
  return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
  if (!out) throw InputError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Graph and operator artifacts

inline Json graph_json(const CableGraph& g) {
  Json j;
  j["family"] = to_string(g.family);
  j["N"] = g.dim;
  j["generation"] = g.generation;
  j["vertex_count"] = g.vertices.size();
  j["edge_count"] = g.edges.size();
  Json vs = Json::array();
  for (const auto& v : g.vertices) vs.push_back(v);
  j["vertices"] = std::move(vs);
  Json es = Json::array();
  for (const auto& [a, b] : g.edges) es.push_back(Json::array({a, b}));
  j["edges"] = std::move(es);
  j["truncation_vertices"] = g.truncation_vertices;
  return j;
}

/// COO triplets of the stiffness matrix (row,col,value), then the lumped mass as (i,i,m_i) under a
/// separate header.
inline std::string operator_coo(const Mesh& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# stiffness " << m.num_nodes() << "x" << m.num_nodes() << "\nrow,col,value\n";
  const auto& S = m.stiffness();
  for (int c = 0; c < S.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(S, c); it; ++it) os << it.row() << "," << it.col() << "," << it.value() << "\n";
  os << "# mass\nrow,col,value\n";
  for (Eigen::Index i = 0; i < m.mass().size(); ++i) os << i << "," << i << "," << m.mass()[i] << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Report fragments

inline Json fit_json(const LinearFit& f) {
  return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"points", f.points}};
}

inline Json inequality_json(const InequalityFit& f) {
  Json j;
  j["name"] = f.name;
  j["exponents"] = f.exponents;
  j["fitted_constant"] = f.fitted_constant;
  j["provenance"] = "sup of lhs/rhs over " + std::to_string(f.samples.size()) + " samples";
  j["samples"] = f.samples.size();
  j["margin_min"] = f.margin_min;
  j["skipped_margin"] = f.skipped_margin;
  Json pr = Json::array();
  for (const auto& r : f.per_radius) pr.push_back(Json{{"r", r.r}, {"constant", r.constant}, {"samples", r.samples}});
  j["per_radius"] = std::move(pr);
  j["trend"] = f.trend ? fit_json(*f.trend) : Json(nullptr);
  j["notes"] = f.notes;
  return j;
}

inline std::string inequality_csv(const std::vector<const InequalityFit*>& fits) {
  std::ostringstream os;
  os << std::setprecision(17) << "fit,center,r,lhs,rhs,ratio,tag\n";
  for (const auto* f : fits)
    for (const auto& s : f->samples)
      os << f->name << "," << s.center << "," << s.r << "," << s.lhs << "," << s.rhs << "," << s.ratio << "," << s.tag
         << "\n";
  return os.str();
}

inline Json envelope_json(const EnvelopeFit& f) {
  return Json{{"name", f.name},
              {"C1", f.c1},
              {"C2", f.c2},
              {"constant", f.constant},
              {"constant_at_C2_zero", f.constant_at_zero},
              {"max_normalized_ratio", f.max_normalized_ratio},
              {"samples", f.samples},
              {"provenance", "C1 = 1; C2 largest grid value in [0,4] with K(C2) <= 2 K(0); K = sup of ratios"}};
}

/// One row per sampled kernel value: (family, generation, k, x, y, t, d, p, grad_p, dpdt, bound_rhs, ratio).
/// bound_rhs and ratio refer to the given envelope, whose ratios are aligned with the selected records.
inline std::string heat_csv(const HeatScan& scan, const std::vector<const HeatRecord*>& recs, const EnvelopeFit& env) {
  std::ostringstream os;
  os << std::setprecision(17) << "family,generation,k,x,y,t,d,p,grad_p,dpdt,bound_rhs,ratio\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = *recs[i];
    const double ratio = env.ratios[i] / env.constant;
    const double value = r.segment ? r.grad : (env.name == "Davies" ? std::abs(r.dpdt) : r.p);
    const double rhs = ratio > 0.0 ? value / ratio : 0.0;
    os << scan.family << "," << scan.generation << "," << scan.k << "," << r.x << "," << r.y << "," << r.t << "," << r.d
       << "," << r.p << "," << r.grad << "," << r.dpdt << "," << rhs << "," << ratio << "\n";
  }
  return os.str();
}

}  // namespace cablelab
