#include "topopt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace topopt::io {

using nlohmann::json;
namespace pr = topopt::problems;

namespace {

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ParseError(where + ": unknown key '" + key + "'");
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

double get_number(const json& obj, const std::string& where, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path_of(where, key) + ": required");
  if (!it->is_number()) throw ParseError(path_of(where, key) + ": expected a number");
  return it->get<double>();
}

double get_number(const json& obj, const std::string& where, const char* key, double fallback) {
  return obj.contains(key) ? get_number(obj, where, key) : fallback;
}

int get_int(const json& obj, const std::string& where, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path_of(where, key) + ": required");
  if (!it->is_number_integer()) throw ParseError(path_of(where, key) + ": expected an integer");
  const auto v = it->get<long long>();
  if (v < INT32_MIN || v > INT32_MAX) throw ParseError(path_of(where, key) + ": out of range");
  return static_cast<int>(v);
}

int get_int(const json& obj, const std::string& where, const char* key, int fallback) {
  return obj.contains(key) ? get_int(obj, where, key) : fallback;
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) throw ParseError(path_of(where, key) + ": expected true or false");
  return it->get<bool>();
}

std::vector<double> get_numbers(const json& value, const std::string& where, std::size_t n) {
  if (!value.is_array() || value.size() != n)
    throw ParseError(where + ": expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& x : value) {
    if (!x.is_number()) throw ParseError(where + ": expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<int> get_ints(const json& value, const std::string& where, std::size_t n) {
  if (!value.is_array() || value.size() != n)
    throw ParseError(where + ": expected an array of " + std::to_string(n) + " integers");
  std::vector<int> out;
  for (const auto& x : value) {
    if (!x.is_number_integer()) throw ParseError(where + ": expected an array of integers");
    out.push_back(x.get<int>());
  }
  return out;
}

pr::NodeSelector parse_selector(const json& obj, const std::string& where) {
  check_keys(obj, where, {"node", "node_box", "point", "box"});
  if (obj.size() != 1)
    throw ParseError(where + ": exactly one of node, node_box, point, box is required");
  const auto& [key, value] = *obj.items().begin();
  const std::string at = where + "." + key;
  if (key == "node") {
    const auto v = get_ints(value, at, 2);
    return pr::NodeSelector::node(v[0], v[1]);
  }
  if (key == "node_box") {
    const auto v = get_ints(value, at, 4);
    return pr::NodeSelector::node_box(v[0], v[1], v[2], v[3]);
  }
  if (key == "point") {
    const auto v = get_numbers(value, at, 2);
    return pr::NodeSelector::point(v[0], v[1]);
  }
  const auto v = get_numbers(value, at, 4);
  return pr::NodeSelector::box(v[0], v[1], v[2], v[3]);
}

json selector_json(const pr::NodeSelector& s) {
  switch (s.kind) {
    case pr::NodeSelector::Kind::node:
      return {{"node", {s.i0, s.j0}}};
    case pr::NodeSelector::Kind::node_box:
      return {{"node_box", {s.i0, s.j0, s.i1, s.j1}}};
    case pr::NodeSelector::Kind::point:
      return {{"point", {s.x0, s.y0}}};
    case pr::NodeSelector::Kind::box:
    default:
      return {{"box", {s.x0, s.y0, s.x1, s.y1}}};
  }
}

pr::DofMask parse_dofs(const json& value, const std::string& where) {
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    if (s == "x") return pr::DofMask::x;
    if (s == "y") return pr::DofMask::y;
    if (s == "xy") return pr::DofMask::xy;
  }
  throw ParseError(where + ": expected \"x\", \"y\" or \"xy\"");
}

const char* dofs_name(pr::DofMask m) {
  switch (m) {
    case pr::DofMask::x: return "x";
    case pr::DofMask::y: return "y";
    case pr::DofMask::xy:
    default: return "xy";
  }
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

const json& array_at(const json& doc, const char* key) {
  static const json empty = json::array();
  const auto it = doc.find(key);
  if (it == doc.end()) return empty;
  if (!it->is_array()) throw ParseError(std::string(key) + ": expected an array");
  return *it;
}

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace

pr::ProblemSpec parse_problem(std::string_view text) {
  const json doc = parse_json(text);
  check_keys(doc, "problem", {"name", "nx", "ny", "volume_fraction", "v_lo", "eta", "filter",
                              "material", "fixtures", "loads", "passive"});
  pr::ProblemSpec p;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) throw ParseError("name: expected a string");
    p.name = doc["name"].get<std::string>();
  }
  p.nx = get_int(doc, "", "nx");
  p.ny = get_int(doc, "", "ny");
  p.volume_fraction = get_number(doc, "", "volume_fraction");
  p.v_lo = get_number(doc, "", "v_lo", p.v_lo);
  p.eta = get_number(doc, "", "eta", p.eta);
  if (doc.contains("filter")) {
    const auto& f = doc["filter"];
    check_keys(f, "filter", {"size", "sigma"});
    p.filter.size = get_int(f, "filter", "size", p.filter.size);
    p.filter.sigma = get_number(f, "filter", "sigma", p.filter.sigma);
  }
  if (doc.contains("material")) {
    const auto& m = doc["material"];
    check_keys(m, "material", {"young_modulus", "poisson_ratio"});
    p.material.young_modulus = get_number(m, "material", "young_modulus", p.material.young_modulus);
    p.material.poisson_ratio = get_number(m, "material", "poisson_ratio", p.material.poisson_ratio);
  }
  const auto& fixtures = array_at(doc, "fixtures");
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const std::string at = "fixtures[" + std::to_string(i) + "]";
    check_keys(fixtures[i], at, {"select", "dofs"});
    if (!fixtures[i].contains("select")) throw ParseError(at + ".select: required");
    pr::Fixture fx;
    fx.where = parse_selector(fixtures[i]["select"], at + ".select");
    fx.dofs = fixtures[i].contains("dofs") ? parse_dofs(fixtures[i]["dofs"], at + ".dofs")
                                           : pr::DofMask::xy;
    p.fixtures.push_back(fx);
  }
  const auto& loads = array_at(doc, "loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string at = "loads[" + std::to_string(i) + "]";
    check_keys(loads[i], at, {"select", "fx", "fy"});
    if (!loads[i].contains("select")) throw ParseError(at + ".select: required");
    pr::Load ld;
    ld.where = parse_selector(loads[i]["select"], at + ".select");
    ld.fx = get_number(loads[i], at, "fx", 0.0);
    ld.fy = get_number(loads[i], at, "fy", 0.0);
    p.loads.push_back(ld);
  }
  const auto& passive = array_at(doc, "passive");
  for (std::size_t i = 0; i < passive.size(); ++i) {
    const std::string at = "passive[" + std::to_string(i) + "]";
    check_keys(passive[i], at, {"box"});
    if (!passive[i].contains("box")) throw ParseError(at + ".box: required");
    const auto b = get_numbers(passive[i]["box"], at + ".box", 4);
    p.passive.push_back({b[0], b[1], b[2], b[3]});
  }
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw ParseError(e.what());
  }
  return p;
}

std::string serialize_problem(const pr::ProblemSpec& p) {
  json doc;
  doc["name"] = p.name;
  doc["nx"] = p.nx;
  doc["ny"] = p.ny;
  doc["volume_fraction"] = p.volume_fraction;
  doc["v_lo"] = p.v_lo;
  doc["eta"] = p.eta;
  doc["filter"] = {{"size", p.filter.size}, {"sigma", p.filter.sigma}};
  doc["material"] = {{"young_modulus", p.material.young_modulus},
                     {"poisson_ratio", p.material.poisson_ratio}};
  doc["fixtures"] = json::array();
  for (const auto& f : p.fixtures)
    doc["fixtures"].push_back({{"select", selector_json(f.where)}, {"dofs", dofs_name(f.dofs)}});
  doc["loads"] = json::array();
  for (const auto& l : p.loads)
    doc["loads"].push_back({{"select", selector_json(l.where)}, {"fx", l.fx}, {"fy", l.fy}});
  doc["passive"] = json::array();
  for (const auto& r : p.passive) doc["passive"].push_back({{"box", {r.x0, r.y0, r.x1, r.y1}}});
  return doc.dump(2) + "\n";
}

solver::SolverConfig parse_config(std::string_view text) {
  const json doc = parse_json(text);
  check_keys(doc, "config", {"algorithm", "alpha0", "m", "beta", "krylov_dim", "max_iters",
                             "tol_dv", "tol_res", "snapshot_every", "seed", "mean_projection",
                             "record_wall_time"});
  solver::SolverConfig c;
  if (doc.contains("algorithm")) {
    if (!doc["algorithm"].is_string()) throw ParseError("algorithm: expected a string");
    try {
      c.algorithm = solver::parse_algorithm(doc["algorithm"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("algorithm: ") + e.what());
    }
  }
  if (doc.contains("alpha0") && !doc["alpha0"].is_null()) c.alpha0 = get_number(doc, "", "alpha0");
  if (doc.contains("beta") && !doc["beta"].is_null()) c.beta = get_number(doc, "", "beta");
  c.m = get_number(doc, "", "m", c.m);
  c.krylov_dim = get_int(doc, "", "krylov_dim", c.krylov_dim);
  c.max_iters = get_int(doc, "", "max_iters", c.max_iters);
  c.tol_dv = get_number(doc, "", "tol_dv", c.tol_dv);
  c.tol_res = get_number(doc, "", "tol_res", c.tol_res);
  c.snapshot_every = get_int(doc, "", "snapshot_every", c.snapshot_every);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
      throw ParseError("seed: expected a non-negative integer");
    if (doc["seed"].is_number_integer() && doc["seed"].get<long long>() < 0)
      throw ParseError("seed: expected a non-negative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  c.mean_projection = get_bool(doc, "", "mean_projection", c.mean_projection);
  c.record_wall_time = get_bool(doc, "", "record_wall_time", c.record_wall_time);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return c;
}

std::string serialize_config(const solver::SolverConfig& c) {
  json doc;
  doc["algorithm"] = std::string(solver::to_string(c.algorithm));
  doc["alpha0"] = c.alpha0 ? json(*c.alpha0) : json(nullptr);
  doc["m"] = c.m;
  doc["beta"] = c.beta ? json(*c.beta) : json(nullptr);
  doc["krylov_dim"] = c.krylov_dim;
  doc["max_iters"] = c.max_iters;
  doc["tol_dv"] = c.tol_dv;
  doc["tol_res"] = c.tol_res;
  doc["snapshot_every"] = c.snapshot_every;
  doc["seed"] = c.seed;
  doc["mean_projection"] = c.mean_projection;
  doc["record_wall_time"] = c.record_wall_time;
  return doc.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_pgm(std::span<const double> v, int nx, int ny) {
  const auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  if (v.size() != n) throw std::invalid_argument("density size does not match nx * ny");
  std::string out = "P5\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
  out.reserve(out.size() + n);
  for (double x : v) {
    const double c = std::clamp(x, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::floor(255.0 * (1.0 - c) + 0.5))));
  }
  return out;
}

void write_snapshot(std::span<const double> v, int nx, int ny, const std::filesystem::path& path) {
  write_bytes(path, encode_pgm(v, nx, ny));
}

std::string encode_convergence(const solver::ConvergenceRecord& record) {
  std::string out = "iter,elapsed_s,compliance,residual_inf,dv_inf,volume\n";
  for (const auto& r : record.rows) {
    out += std::to_string(r.iter);
    for (double x : {r.elapsed_s, r.compliance, r.residual_inf, r.dv_inf, r.volume}) {
      out += ',';
      out += fmt17(x);
    }
    out += '\n';
  }
  return out;
}

void write_convergence(const solver::ConvergenceRecord& record, const std::filesystem::path& path) {
  write_bytes(path, encode_convergence(record));
}

solver::ConvergenceRecord parse_convergence(std::string_view csv) {
  solver::ConvergenceRecord rec;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "iter,elapsed_s,compliance,residual_inf,dv_inf,volume")
    throw ParseError("convergence log: unexpected header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    solver::ConvergenceRow r;
    double* fields[] = {&r.elapsed_s, &r.compliance, &r.residual_inf, &r.dv_inf, &r.volume};
    std::istringstream ls(line);
    std::string cell;
    if (!std::getline(ls, cell, ',')) throw ParseError("line " + std::to_string(lineno));
    r.iter = std::stoi(cell);
    for (double* f : fields) {
      if (!std::getline(ls, cell, ','))
        throw ParseError("convergence log line " + std::to_string(lineno) + ": too few columns");
      *f = std::strtod(cell.c_str(), nullptr);
    }
    rec.rows.push_back(r);
  }
  return rec;
}

RunSummary summarize(const solver::RunResult& result, const solver::SolverConfig& config) {
  RunSummary s;
  s.termination = std::string(solver::to_string(result.reason));
  s.config = config;
  if (!result.record.rows.empty()) {
    const auto& last = result.record.rows.back();
    s.iterations = last.iter;
    s.elapsed_s = last.elapsed_s;
    s.compliance = last.compliance;
    s.volume = last.volume;
    s.residual_inf = last.residual_inf;
  } else {
    s.iterations = result.state.iter;
    s.compliance = result.state.compliance;
    s.volume = result.state.volume;
    s.residual_inf = result.state.residual_inf;
  }
  return s;
}

std::string summary_json(const RunSummary& s) {
  json doc;
  doc["termination"] = s.termination;
  doc["iterations"] = s.iterations;
  doc["elapsed_s"] = s.elapsed_s;
  doc["compliance"] = s.compliance;
  doc["volume"] = s.volume;
  doc["residual_inf"] = s.residual_inf;
  doc["config"] = json::parse(serialize_config(s.config));
  return doc.dump(2) + "\n";
}

void write_summary(const RunSummary& summary, const std::filesystem::path& path) {
  write_bytes(path, summary_json(summary));
}

} // namespace topopt::io
