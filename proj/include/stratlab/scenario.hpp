#pragma once

// Scenario files and the batch runner behind strat-lab.
//
//   name: radial-lp
//   seed: 7
//   output: out/radial-lp
//   models:
//     f: radial(3,2)
//   analysis: { gamma: 0.5, eta: 0.05, epsilon: 0.1, tau: 0.1, j_max: 8,
//               deltas: [0.1, 0.5, 1.0] }
//   tasks:
//     - { type: lp-sweep, model: f, k: 1, expect: { verdicts: [C, C, D, D] } }
//
// Each task writes <task>.csv (plus task-specific extra tables) into the
// output directory; the runner adds summary.json and manifest.txt. The
// manifest is written even when a task fails.

#include "stratlab/catalog.hpp"
#include "stratlab/core.hpp"
#include "stratlab/currents.hpp"
#include "stratlab/energy.hpp"
#include "stratlab/homogeneity.hpp"
#include "stratlab/io.hpp"
#include "stratlab/parallel.hpp"
#include "stratlab/regularity.hpp"
#include "stratlab/stratification.hpp"

#include <yaml-cpp/yaml.h>

#include <Eigen/Core>

#include <chrono>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace stratlab {

inline constexpr const char* kVersion = "0.3.0";

/// A task-level assertion that did not hold.
class TaskFailure : public Error {
 public:
  explicit TaskFailure(const std::string& what) : Error("TaskFailure: " + what) {}
};

struct AnalysisConfig {
  double gamma = 0.5;
  double eta = 0.05;
  double epsilon = 0.1;  // threshold for H/L scale labels
  double tau = 0.1;
  std::vector<double> deltas{0.1, 0.5, 1.0};
  int j_max = 8;
  double r0 = 1.0;
  double tolerance = std::numeric_limits<double>::infinity();  // relative quadrature tolerance
  QuadOrders orders{};
  HomogeneityOptions homogeneity{64, 3, 8};
  SweepOptions sweep{};
};

struct TaskSpec {
  std::string name;
  std::string type;
  std::string model;  // alias into Scenario::models
  YAML::Node params;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  int threads = 1;
  std::vector<std::pair<std::string, std::string>> models;  // alias -> id
  AnalysisConfig analysis;
  std::vector<TaskSpec> tasks;
  std::string text;          // config source
  std::string source = "-";  // path, for the manifest

  const std::string& model_id(const std::string& alias) const {
    for (const auto& [a, id] : models)
      if (a == alias) return id;
    throw ConfigError("task references undeclared model '" + alias + "'");
  }
};

inline const std::vector<std::string>& task_types() {
  static const std::vector<std::string> t = {"energy-profile", "strata",  "decompose",
                                             "tube-fit",       "lp-sweep", "cone-split",
                                             "current-suite"};
  return t;
}

namespace yaml {

template <class T>
T get(const YAML::Node& n, const std::string& key, const T& fallback) {
  if (!n || !n[key]) return fallback;
  try {
    return n[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

inline Vec vec(const YAML::Node& n, const std::string& what) {
  if (!n || !n.IsSequence()) throw ConfigError(what + " must be a list of numbers");
  if (n.size() > static_cast<std::size_t>(kMaxDim)) throw ConfigError(what + " is too long");
  Vec v(static_cast<int>(n.size()));
  try {
    for (std::size_t i = 0; i < n.size(); ++i) v(i) = n[i].as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(what + " must be a list of numbers");
  }
  return v;
}

inline std::vector<double> numbers(const YAML::Node& n, const std::string& what,
                                   std::vector<double> fallback) {
  if (!n) return fallback;
  if (!n.IsSequence()) throw ConfigError(what + " must be a list of numbers");
  std::vector<double> out;
  try {
    for (const auto& x : n) out.push_back(x.as<double>());
  } catch (const YAML::Exception&) {
    throw ConfigError(what + " must be a list of numbers");
  }
  return out;
}

inline std::vector<Vec> vecs(const YAML::Node& n, const std::string& what) {
  if (!n || !n.IsSequence()) throw ConfigError(what + " must be a list of vectors");
  std::vector<Vec> out;
  for (const auto& x : n) out.push_back(vec(x, what));
  return out;
}

inline Mat frame(const YAML::Node& n, int dim, const std::string& what) {
  const auto cols = n ? vecs(n, what) : std::vector<Vec>{};
  Mat m(dim, static_cast<int>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j].size() != dim) throw ConfigError(what + " vectors must have the model dimension");
    m.col(static_cast<int>(j)) = cols[j];
  }
  return m;
}

}  // namespace yaml

/// Parses and validates a scenario. Every model id is resolved, so unknown
/// ids fail here rather than mid-run.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "-") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping");
  static const std::set<std::string> top = {"name", "seed", "output", "threads", "models", "analysis", "tasks"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!top.count(key)) throw ConfigError("unknown top-level key '" + key + "'");
  }
  Scenario sc;
  sc.text = text;
  sc.source = source;
  sc.name = yaml::get<std::string>(root, "name", "scenario");
  if (!root["seed"]) throw ConfigError("seed is required");
  sc.seed = yaml::get<std::uint64_t>(root, "seed", 0);
  sc.output = yaml::get<std::string>(root, "output", "out/" + sc.name);
  sc.threads = yaml::get<int>(root, "threads", 1);

  const YAML::Node models = root["models"];
  if (!models || !models.IsMap() || models.size() == 0) throw ConfigError("models must be a nonempty mapping");
  for (const auto& kv : models) {
    const auto alias = kv.first.as<std::string>();
    const auto id = kv.second.as<std::string>();
    parse_model(id);
    sc.models.emplace_back(alias, id);
  }

  const YAML::Node an = root["analysis"];
  AnalysisConfig& a = sc.analysis;
  if (an) {
    if (!an.IsMap()) throw ConfigError("analysis must be a mapping");
    a.gamma = yaml::get(an, "gamma", a.gamma);
    a.eta = yaml::get(an, "eta", a.eta);
    a.epsilon = yaml::get(an, "epsilon", a.epsilon);
    a.tau = yaml::get(an, "tau", a.tau);
    a.deltas = yaml::numbers(an["deltas"], "deltas", a.deltas);
    a.j_max = yaml::get(an, "j_max", a.j_max);
    a.r0 = yaml::get(an, "r0", a.r0);
    a.tolerance = yaml::get(an, "tolerance", a.tolerance);
    a.orders.radial = yaml::get(an, "radial_order", a.orders.radial);
    a.orders.polar = yaml::get(an, "polar_order", a.orders.polar);
    a.orders.sphere = yaml::get(an, "sphere_order", a.orders.sphere);
    a.homogeneity.net_size = yaml::get(an, "net_size", a.homogeneity.net_size);
    a.homogeneity.coarse_order = yaml::get(an, "coarse_order", a.homogeneity.coarse_order);
    a.homogeneity.fine_order = yaml::get(an, "fine_order", a.homogeneity.fine_order);
    a.sweep.m_lo = yaml::get(an, "sweep_m_lo", a.sweep.m_lo);
    a.sweep.m_hi = yaml::get(an, "sweep_m_hi", a.sweep.m_hi);
    a.sweep.threshold = yaml::get(an, "sweep_threshold", a.sweep.threshold);
  }
  if (!(a.gamma > 0.0 && a.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(a.eta > 0.0)) throw ConfigError("eta must be positive");
  if (a.j_max < 1 || a.j_max > 30) throw ConfigError("j_max must lie in [1, 30]");
  for (double d : a.deltas)
    if (!(d > 0.0)) throw ConfigError("deltas must be positive");
  if (a.sweep.m_hi - a.sweep.m_lo < 3) throw ConfigError("sweep needs at least 4 cutoffs");

  const YAML::Node tasks = root["tasks"];
  if (!tasks || !tasks.IsSequence() || tasks.size() == 0) throw ConfigError("tasks must be a nonempty list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const YAML::Node t = tasks[i];
    if (!t.IsMap()) throw ConfigError("each task must be a mapping");
    TaskSpec spec;
    spec.type = yaml::get<std::string>(t, "type", "");
    if (std::find(task_types().begin(), task_types().end(), spec.type) == task_types().end())
      throw ConfigError("unknown task type '" + spec.type + "'");
    spec.name = yaml::get<std::string>(t, "name", spec.type + "-" + std::to_string(i + 1));
    if (!names.insert(spec.name).second) throw ConfigError("duplicate task name '" + spec.name + "'");
    if (spec.name.find_first_of("/\\") != std::string::npos) throw ConfigError("task names cannot contain path separators");
    spec.model = yaml::get<std::string>(t, "model", "");
    const CatalogModel m = parse_model(sc.model_id(spec.model));
    const bool wants_surface = spec.type == "current-suite";
    if (wants_surface != m.is_surface())
      throw ConfigError("task '" + spec.name + "' needs a " + (wants_surface ? "hypersurface" : "map") + " model");
    spec.params = t;
    sc.tasks.push_back(std::move(spec));
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_text(path), path.string());
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
  std::optional<int> threads;
  std::optional<double> tolerance;
};

struct TaskOutcome {
  std::string name;
  std::string type;
  std::string status;  // pass | fail | error
  std::vector<std::string> messages;
  std::vector<std::string> files;
  double seconds = 0.0;
};

struct RunReport {
  std::filesystem::path output;
  std::uint64_t seed = 0;
  std::vector<TaskOutcome> tasks;
  bool ok() const {
    for (const auto& t : tasks)
      if (t.status != "pass") return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Tasks

struct TaskContext {
  const Scenario& sc;
  const TaskSpec& spec;
  const CatalogModel& model;
  AnalysisConfig analysis;
  std::uint64_t seed;
  std::filesystem::path dir;
  TaskOutcome& out;
  Json summary = Json::object();

  EnergyOptions energy() const { return {analysis.orders, analysis.tolerance}; }
  const YAML::Node& p() const { return spec.params; }
  YAML::Node expect() const {
    const YAML::Node e = spec.params["expect"];
    return e ? e : YAML::Node(YAML::NodeType::Map);
  }

  void write(const std::string& suffix, const Table& t) {
    const std::string file = spec.name + suffix + ".csv";
    write_csv(dir / file, t);
    out.files.push_back(file);
  }
  void check(bool ok, const std::string& what) {
    if (!ok) out.messages.push_back(what);
  }
};

namespace tasks {

inline std::string vec_string(const Vec& v) {
  std::string s = "[";
  for (int i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v(i));
  return s + "]";
}

/// Deterministic centres in B_rad(0) away from the singular set.
inline std::vector<Vec> sample_centers(const ManifoldMap& f, std::size_t count, double rad,
                                       std::uint64_t seed) {
  const int n = f.dim();
  HaltonSequence seq(n + 1, seed);
  std::vector<double> u(n + 1);
  std::vector<Vec> out;
  for (std::uint64_t i = 0; out.size() < count && i < 64 * count + 64; ++i) {
    seq.point(i, u.data());
    const Vec x = rad * ball_point_from_uniforms(u.data(), n);
    if (f.singular_distance(x) < 1e-3) continue;
    out.push_back(x);
  }
  return out;
}

inline std::vector<Vec> task_grid(const ManifoldMap& f, const YAML::Node& p) {
  const std::string kind = yaml::get<std::string>(p, "grid", "graded");
  if (kind == "uniform") return uniform_grid(f.dim(), yaml::get(p, "spacing", 0.25));
  if (kind == "points") return yaml::vecs(p["points"], "points");
  if (kind != "graded") throw ConfigError("grid must be graded, uniform or points");
  GradedGridOptions g;
  g.background = yaml::get(p, "background", g.background);
  g.levels = yaml::get(p, "levels", g.levels);
  g.spine_spacing = yaml::get(p, "spine_spacing", g.spine_spacing);
  return graded_grid(f, g);
}

inline void energy_profile_task(TaskContext& c) {
  const ManifoldMap& f = *c.model.map;
  const int n = f.dim();
  std::vector<Vec> centers;
  if (c.p()["centers"]) centers = yaml::vecs(c.p()["centers"], "centers");
  else
    centers = sample_centers(f, yaml::get<std::size_t>(c.p(), "random", 20),
                             yaml::get(c.p(), "center_radius", 0.5), c.seed);
  const int levels = yaml::get(c.p(), "levels", 6);
  const int id_levels = yaml::get(c.p(), "identity_levels", 2);
  const double factor = yaml::get(c.expect(), "factor", 3.0);
  const bool check = c.model.stationary;
  const bool want_mono = yaml::get(c.expect(), "monotone", check);
  const bool want_id = yaml::get(c.expect(), "identity", check);

  Table prof({"center", "j", "r", "theta", "error"});
  Table ident({"center", "s", "t", "drop", "drop_error", "radial_defect", "defect_error", "within"});
  Table ctab({"center", "x"});
  std::vector<EnergyProfile> profiles(centers.size());
  struct IdRow {
    double s, t;
    QuadResult w, d;
  };
  std::vector<std::vector<IdRow>> ids(centers.size());
  parallel_for(centers.size(), [&](std::size_t i) {
    profiles[i] = energy_profile(f, centers[i], c.analysis.gamma, levels, c.analysis.r0, c.energy());
    double t = c.analysis.r0;
    for (int j = 0; j < id_levels; ++j, t *= c.analysis.gamma) {
      const double s = t * c.analysis.gamma;
      ids[i].push_back({s, t, monotonicity_drop(f, centers[i], s, t, c.energy()),
                        radial_defect(f, centers[i], s, t, c.energy())});
    }
  });
  int mono_bad = 0, id_bad = 0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    ctab.add(static_cast<long long>(i), vec_string(centers[i]));
    const auto& pr = profiles[i];
    for (std::size_t j = 0; j < pr.radii.size(); ++j)
      prof.add(static_cast<long long>(i), static_cast<long long>(j), pr.radii[j], pr.values[j], pr.errors[j]);
    if (!pr.monotone(factor)) ++mono_bad;
    for (const auto& r : ids[i]) {
      const bool ok = std::abs(r.w.value - r.d.value) <= factor * (r.w.error + r.d.error);
      if (!ok) ++id_bad;
      ident.add(static_cast<long long>(i), r.s, r.t, r.w.value, r.w.error, r.d.value, r.d.error,
                ok ? "yes" : "no");
    }
  }
  c.write("", prof);
  c.write("_identity", ident);
  c.write("_centers", ctab);
  c.summary["centers"] = centers.size();
  c.summary["stationary"] = c.model.stationary;
  c.summary["non_monotone_centers"] = mono_bad;
  c.summary["identity_violations"] = id_bad;
  (void)n;
  if (want_mono) c.check(mono_bad == 0, std::to_string(mono_bad) + " centers with non-monotone profiles");
  if (want_id) c.check(id_bad == 0, std::to_string(id_bad) + " drop/defect pairs outside the error band");
}

inline StratumOptions stratum_options(const TaskContext& c) {
  StratumOptions so;
  so.eta = c.analysis.eta;
  so.gamma = c.analysis.gamma;
  so.j_max = c.analysis.j_max;
  so.homogeneity = c.analysis.homogeneity;
  so.homogeneity.seed = c.seed;
  return so;
}

inline std::vector<int> int_list(const YAML::Node& n, std::vector<int> fallback) {
  if (!n) return fallback;
  if (n.IsScalar()) return {n.as<int>()};
  std::vector<int> out;
  for (const auto& x : n) out.push_back(x.as<int>());
  return out;
}

inline void strata_task(TaskContext& c) {
  const ManifoldMap& f = *c.model.map;
  const int n = f.dim();
  const auto grid = task_grid(f, c.p());
  std::vector<int> ks = int_list(c.p()["ks"], {});
  if (ks.empty())
    for (int k = 0; k < n; ++k) ks.push_back(k);
  const StratumGrid sg = effective_stratum(f, grid, ks, stratum_options(c));

  std::vector<std::string> head = {"point", "x"};
  for (int k : sg.ks) head.push_back("depth_k" + std::to_string(k));
  Table t(head);
  for (std::size_t p = 0; p < sg.points.size(); ++p) {
    std::vector<Table::Cell> row = {static_cast<long long>(p), vec_string(sg.points[p])};
    for (std::size_t a = 0; a < sg.ks.size(); ++a) row.push_back(static_cast<long long>(sg.depth[a][p]));
    t.add_row(std::move(row));
  }
  c.write("", t);
  Json members = Json::object();
  for (int k : sg.ks) members[std::to_string(k)] = sg.members(k, sg.j_max).size();
  c.summary["points"] = sg.points.size();
  c.summary["members_at_j_max"] = members;

  // Pigeonhole scan of bad scales and tuple-class counts.
  if (yaml::get(c.p(), "pigeonhole", true)) {
    const double lambda = f.energy_bound();
    const bool finite = std::isfinite(lambda);
    std::vector<BadScaleScan> scans(sg.points.size());
    parallel_for(sg.points.size(), [&](std::size_t p) {
      scans[p] = bad_scales(f, sg.points[p], c.analysis.gamma, c.analysis.j_max, c.energy());
    });
    Table ph({"point", "delta", "count", "bound"});
    int viol = 0;
    for (std::size_t p = 0; p < scans.size(); ++p) {
      for (double d : c.analysis.deltas) {
        const long long K = finite ? bad_scale_bound(lambda, d, n) : -1;
        const int cnt = scans[p].count(d);
        if (finite && cnt > K) ++viol;
        ph.add(static_cast<long long>(p), d, static_cast<long long>(cnt), K);
      }
    }
    c.write("_pigeonhole", ph);
    c.summary["pigeonhole_violations"] = viol;
    c.summary["energy_bound"] = json_number(lambda);
    if (finite) c.check(viol == 0, std::to_string(viol) + " bad-scale counts above the bound");

    StratumGrid tg = sg;
    assign_tuples(f, tg, c.analysis.epsilon, 0.0, stratum_options(c).homogeneity);
    Table tc({"j", "classes", "bound"});
    const double delta = *std::min_element(c.analysis.deltas.begin(), c.analysis.deltas.end());
    int tviol = 0;
    for (int j = 1; j <= tg.j_max; ++j) {
      std::set<std::string> classes;
      for (std::size_t p = 0; p < tg.points.size(); ++p) classes.insert(tg.tuple(p, j));
      const double bound = finite ? tuple_class_bound(j, bad_scale_bound(lambda, delta, n))
                                  : std::ldexp(1.0, j);
      if (static_cast<double>(classes.size()) > bound) ++tviol;
      tc.add(static_cast<long long>(j), static_cast<long long>(classes.size()), bound);
    }
    c.write("_tuples", tc);
    c.check(tviol == 0, std::to_string(tviol) + " depths with more tuple classes than the bound");
  }
}

inline void decompose_task(TaskContext& c) {
  const ManifoldMap& f = *c.model.map;
  const int k = yaml::get(c.p(), "k", 0);
  const auto grid = task_grid(f, c.p());
  StratumGrid sg = effective_stratum(f, grid, {k}, stratum_options(c));
  if (yaml::get(c.p(), "tuples", true))
    assign_tuples(f, sg, c.analysis.epsilon, 0.0, stratum_options(c).homogeneity);
  const CoverResult cr = decompose(sg, k);
  Table t({"j", "radius", "classes", "balls"});
  for (const auto& lvl : cr.levels)
    t.add(static_cast<long long>(lvl.j), lvl.radius, static_cast<long long>(lvl.classes()),
          static_cast<long long>(lvl.total()));
  c.write("", t);
  const int j_lo = yaml::get(c.p(), "fit_from", 3);
  const int j_hi = yaml::get(c.p(), "fit_to", c.analysis.j_max);
  std::size_t mx = 0;
  for (const auto& lvl : cr.levels)
    if (lvl.j >= j_lo && lvl.j <= j_hi) mx = std::max(mx, lvl.total());
  c.summary["max_balls"] = mx;
  c.summary["grid_points"] = sg.points.size();
  try {
    const double e = count_growth_exponent(cr, c.analysis.gamma, j_lo, j_hi);
    c.summary["exponent"] = e;
    if (auto r = c.expect()["exponent"]) {
      const auto lim = yaml::numbers(r, "exponent", {});
      if (lim.size() != 2) throw ConfigError("expect.exponent must be [lo, hi]");
      c.check(e >= lim[0] && e <= lim[1], "count exponent " + format_double(e) + " outside range");
    }
  } catch (const InsufficientData& e) {
    c.summary["exponent"] = nullptr;
    if (c.expect()["exponent"]) c.check(false, e.what());
  }
  if (c.expect()["max_balls"]) {
    const auto lim = c.expect()["max_balls"].as<std::size_t>();
    c.check(mx <= lim, "ball count " + std::to_string(mx) + " above " + std::to_string(lim));
  }
}

inline std::vector<double> radius_ladder(const YAML::Node& p) {
  if (p["radii"]) return yaml::numbers(p["radii"], "radii", {});
  const int lo = yaml::get(p, "log2_min", -7), hi = yaml::get(p, "log2_max", -2);
  std::vector<double> out;
  for (int e = lo; e <= hi; ++e) out.push_back(std::ldexp(1.0, e));
  return out;
}

inline void tube_fit_task(TaskContext& c) {
  const ManifoldMap& f = *c.model.map;
  const int n = f.dim();
  const std::string set = yaml::get<std::string>(c.p(), "set", "bad-set");
  const auto radii = radius_ladder(c.p());
  const std::size_t samples = yaml::get<std::size_t>(c.p(), "samples", 20000);
  const std::string m = yaml::get<std::string>(c.p(), "method", "auto");
  const TubeMethod method = m == "uniform" ? TubeMethod::Uniform : m == "union" ? TubeMethod::Union : TubeMethod::Auto;
  if (m != "uniform" && m != "union" && m != "auto") throw ConfigError("method must be auto, uniform or union");

  std::optional<RegularityField> field;
  std::vector<Vec> fixed;
  if (set == "bad-set") {
    field = regularity_field(f, task_grid(f, c.p()), RegularityOptions{1e-3});
  } else if (set == "points") {
    fixed = yaml::vecs(c.p()["points"], "points");
  } else if (set == "segment") {
    const Vec a = yaml::vec(c.p()["from"], "from"), b = yaml::vec(c.p()["to"], "to");
    const int m_pts = yaml::get(c.p(), "segment_points", 4097);
    for (int i = 0; i < m_pts; ++i) fixed.push_back(a + (b - a) * (i / double(m_pts - 1)));
  } else {
    throw ConfigError("set must be bad-set, points or segment");
  }
  Table t({"r", "volume", "error", "samples", "set_size", "union_sampling"});
  std::vector<TubeEstimate> tubes;
  for (double r : radii) {
    const std::vector<Vec> S = field ? bad_set(*field, r) : fixed;
    TubeEstimate e = tube_volume(S, n, r, samples, c.seed, method);
    tubes.push_back(e);
    t.add(r, e.volume, e.error, static_cast<long long>(e.samples), static_cast<long long>(S.size()),
          e.union_sampling ? "yes" : "no");
  }
  c.write("", t);
  const MinkowskiFit fit = minkowski_fit(tubes);
  c.summary["slope"] = fit.slope;
  c.summary["intercept"] = fit.intercept;
  c.summary["residual"] = fit.residual;
  if (auto r = c.expect()["slope"]) {
    const auto lim = yaml::numbers(r, "slope", {});
    if (lim.size() != 2) throw ConfigError("expect.slope must be [lo, hi]");
    c.check(fit.slope >= lim[0] && fit.slope <= lim[1], "tube slope " + format_double(fit.slope) + " outside range");
  }
}

inline std::vector<char> verdict_list(const YAML::Node& n) {
  std::vector<char> out;
  if (!n) return out;
  for (const auto& x : n) {
    const auto s = x.as<std::string>();
    if (s.empty() || (s[0] != 'C' && s[0] != 'D')) throw ConfigError("verdicts are C or D");
    out.push_back(s[0]);
  }
  return out;
}

inline void sweep_rows(const std::vector<SweepResult>& rs, const std::string& integrand, Table& t,
                       Table& detail) {
  for (const auto& r : rs) {
    t.add(integrand, r.p, std::string(1, verdict_char(r.verdict)), verdict_name(r.verdict), r.decay,
          r.rate, r.extrapolated, r.values.back(), r.errors.back());
    for (std::size_t i = 0; i < r.eps.size(); ++i) detail.add(integrand, r.p, r.eps[i], r.values[i], r.errors[i]);
  }
}

inline void check_sweeps(TaskContext& c, const std::vector<SweepResult>& rs, const YAML::Node& ex) {
  const auto want = verdict_list(ex["verdicts"]);
  if (!want.empty()) {
    if (want.size() != rs.size()) throw ConfigError("expect.verdicts length must match the p grid");
    for (std::size_t i = 0; i < rs.size(); ++i)
      c.check(verdict_char(rs[i].verdict) == want[i],
              "p = " + format_double(rs[i].p) + ": verdict " + verdict_name(rs[i].verdict));
  }
  const auto vals = yaml::numbers(ex["values"], "values", {});
  const double rel = yaml::get(ex, "rel_tol", 0.01);
  for (std::size_t i = 0; i < vals.size() && i < rs.size(); ++i) {
    if (!std::isfinite(vals[i])) continue;
    c.check(std::abs(rs[i].extrapolated - vals[i]) <= rel * std::abs(vals[i]),
            "p = " + format_double(rs[i].p) + ": value " + format_double(rs[i].extrapolated));
  }
  const auto rates = yaml::numbers(ex["rates"], "rates", {});
  const double rrel = yaml::get(ex, "rate_rel_tol", 0.1);
  for (std::size_t i = 0; i < rates.size() && i < rs.size(); ++i) {
    if (!(rates[i] > 0.0)) continue;
    c.check(std::abs(rs[i].rate - rates[i]) <= rrel * rates[i],
            "p = " + format_double(rs[i].p) + ": rate " + format_double(rs[i].rate));
  }
}

inline void lp_sweep_task(TaskContext& c) {
  const ManifoldMap& f = *c.model.map;
  LpOptions opt;
  opt.sweep = c.analysis.sweep;
  opt.gradient_orders = c.analysis.orders;
  std::vector<double> ps;
  if (c.p()["p"]) {
    ps = yaml::numbers(c.p()["p"], "p", {});
  } else {
    const int k = yaml::get(c.p(), "k", 1);
    for (double dp : {-0.5, -0.1, 0.0, 0.1}) ps.push_back(2.0 + k + dp);
  }
  const std::string which = yaml::get<std::string>(c.p(), "integrand", "gradient");
  if (which != "gradient" && which != "inverse-regularity" && which != "both")
    throw ConfigError("integrand must be gradient, inverse-regularity or both");
  Table t({"integrand", "p", "verdict", "verdict_name", "decay", "rate", "extrapolated", "value_at_min_eps", "error"});
  Table d({"integrand", "p", "eps", "value", "error"});
  std::vector<SweepResult> grad, inv;
  if (which != "inverse-regularity") {
    grad.resize(ps.size());
    parallel_for(ps.size(), [&](std::size_t i) { grad[i] = lp_integral(f, ps[i], LpIntegrand::Gradient, opt); });
    sweep_rows(grad, "gradient", t, d);
    check_sweeps(c, grad, c.expect());
  }
  if (which != "gradient") {
    inv.resize(ps.size());
    parallel_for(ps.size(), [&](std::size_t i) { inv[i] = lp_integral(f, ps[i], LpIntegrand::InverseRegularity, opt); });
    sweep_rows(inv, "inverse-regularity", t, d);
  }
  if (!grad.empty() && !inv.empty()) {
    // Wherever the gradient integral converges, the inverse regularity
    // integral dominates it.
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (grad[i].verdict != Verdict::Convergent) continue;
      const double g = grad[i].values.back(), r = inv[i].values.back();
      c.check(r + 3.0 * (inv[i].errors.back() + grad[i].errors.back()) >= g,
              "p = " + format_double(ps[i]) + ": inverse regularity integral below the gradient integral");
    }
  }
  c.write("", t);
  c.write("_sweep", d);
  Json v = Json::array();
  for (const auto& r : grad) v.push_back(std::string(1, verdict_char(r.verdict)));
  c.summary["verdicts"] = v;
}

inline void cone_split_task(TaskContext& c) {
  const ManifoldMap& base = *c.model.map;
  const int n = base.dim();
  const Vec y = c.p()["y"] ? yaml::vec(c.p()["y"], "y") : zeros(n);
  const Vec z = yaml::vec(c.p()["z"], "z");
  const Mat V = yaml::frame(c.p()["plane"], n, "plane");
  const double r = yaml::get(c.p(), "r", 0.5);
  const auto amps = yaml::numbers(c.p()["amplitudes"], "amplitudes", {0.1, 0.05, 0.025});
  const std::uint64_t pseed = yaml::get<std::uint64_t>(c.p(), "perturbation_seed", c.seed);
  if (y.size() != n || z.size() != n) throw ConfigError("y and z must have the model dimension");
  HomogeneityOptions ho = c.analysis.homogeneity;
  ho.seed = c.seed;
  ho.net_size = yaml::get(c.p(), "net_size", 0);
  ho.coarse_order = yaml::get(c.p(), "coarse_order", 4);
  ho.fine_order = yaml::get(c.p(), "fine_order", 10);

  std::vector<double> all = {0.0};
  all.insert(all.end(), amps.begin(), amps.end());
  std::vector<ConeSplitReport> reps(all.size());
  parallel_for(all.size(), [&](std::size_t i) {
    const ManifoldMap f = all[i] == 0.0 ? base : perturbed_map(base, all[i], pseed);
    reps[i] = cone_splitting_check(f, y, z, V, r, c.analysis.gamma, c.analysis.tau, ho);
  });
  Table t({"amplitude", "dk_y", "d0_z", "dk1", "plane_distance", "below_margin", "radius_clipped"});
  for (std::size_t i = 0; i < all.size(); ++i)
    t.add(all[i], reps[i].dk_y, reps[i].d0_z, reps[i].dk1.defect, reps[i].plane_distance,
          reps[i].below_margin ? "yes" : "no", reps[i].radius_clipped ? "yes" : "no");
  c.write("", t);
  c.summary["exact_dk1"] = reps[0].dk1.defect;
  const double exact_max = yaml::get(c.expect(), "exact_max", 1e-8);
  c.check(reps[0].dk1.defect <= exact_max, "unperturbed D_{k+1} = " + format_double(reps[0].dk1.defect));
  if (yaml::get(c.expect(), "decreasing", true)) {
    // Amplitudes sorted descending must give strictly decreasing defects.
    std::vector<std::size_t> order(amps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i + 1;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return all[a] > all[b]; });
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
      c.check(reps[order[i]].dk1.defect > reps[order[i + 1]].dk1.defect,
              "defect not decreasing at amplitude " + format_double(all[order[i + 1]]));
  }
}

inline void current_suite_task(TaskContext& c) {
  const HypersurfaceModel& m = *c.model.surface;
  const int n = m.ambient_dim();
  const Vec x = c.p()["center"] ? yaml::vec(c.p()["center"], "center") : zeros(n);
  if (x.size() != n) throw ConfigError("center must have the model dimension");
  const auto ex = c.expect();

  // Density ladder r = 2^0 .. 2^-levels.
  const int levels = yaml::get(c.p(), "levels", 6);
  const MassProfile mp = mass_profile(m, x, 0.5, levels);
  Table dt({"r", "density", "error"});
  for (std::size_t j = 0; j < mp.radii.size(); ++j) dt.add(mp.radii[j], mp.values[j], mp.errors[j]);
  c.write("_density", dt);
  c.check(mp.monotone(), "density not monotone");
  if (ex["density"]) {
    const double want = ex["density"].as<double>();
    const double dev = mp.max_relative_deviation(want);
    c.summary["density_deviation"] = dev;
    c.check(dev <= yaml::get(ex, "density_rel_tol", 0.005), "density deviates by " + format_double(dev));
  }

  // |A| at sampled points: closed form against finite differences.
  const std::size_t npts = yaml::get<std::size_t>(c.p(), "shape_points", 100);
  std::vector<Vec> pts;
  HaltonSequence seq(m.sample_dims(), c.seed);
  m.sample_accepted(x, yaml::get(c.p(), "shape_radius", 1.0), npts, seq, 0, [&](const Vec& y, double) {
    if (pts.size() < npts && m.singular_distance(y) > 1e-6) pts.push_back(y);
  });
  Table st({"point", "rho", "A_exact", "A_fd", "H_fd", "A_rho"});
  double worst = 0.0, worst_h = 0.0;
  const auto want_rho = ex["shape_rho"] ? std::optional<double>(ex["shape_rho"].as<double>()) : std::nullopt;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double rho = m.singular_points().empty() ? pts[i].norm() : m.singular_distance(pts[i]);
    const ShapeOperator so = shape_operator_fd(m, pts[i]);
    const auto exact = m.shape_norm_exact(pts[i]);
    const double a_ex = exact ? *exact : std::numeric_limits<double>::quiet_NaN();
    st.add(static_cast<long long>(i), rho, a_ex, so.norm, so.mean, so.norm * rho);
    if (want_rho) worst = std::max(worst, std::abs(so.norm * rho - *want_rho));
    else if (exact) worst = std::max(worst, std::abs(so.norm - a_ex) / std::max(1.0, a_ex));
    worst_h = std::max(worst_h, std::abs(so.mean) / std::max(1.0, so.norm));
  }
  c.write("_shape", st);
  c.summary["shape_points"] = pts.size();
  c.summary["shape_worst"] = worst;
  c.check(worst <= yaml::get(ex, "shape_tol", 1e-3), "|A| check off by " + format_double(worst));
  if (yaml::get(ex, "minimal", false))
    c.check(worst_h <= 1e-3, "mean curvature " + format_double(worst_h));

  // Curvature L^p.
  const auto ps = yaml::numbers(c.p()["p"], "p", {});
  if (!ps.empty()) {
    std::vector<SweepResult> rs(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) rs[i] = lp_A(m, ps[i], c.analysis.sweep);
    Table lt({"integrand", "p", "verdict", "verdict_name", "decay", "rate", "extrapolated", "value_at_min_eps", "error"});
    Table ld({"integrand", "p", "eps", "value", "error"});
    sweep_rows(rs, "A", lt, ld);
    c.write("", lt);
    c.write("_sweep", ld);
    check_sweeps(c, rs, ex);
  }

  // Regularity scales at the sampled points.
  Table rt({"point", "rho", "r_I", "ratio"});
  for (std::size_t i = 0; i < pts.size() && i < 20; ++i) {
    const double rho = m.singular_points().empty() ? pts[i].norm() : m.singular_distance(pts[i]);
    const double ri = current_regularity_scale(m, pts[i], 1, RegularityOptions{1e-6});
    rt.add(static_cast<long long>(i), rho, ri, rho > 0 ? ri / rho : 0.0);
  }
  c.write("_regularity", rt);
}

}  // namespace tasks

inline std::string manifest_text(const Scenario& sc, const RunReport& rep, int threads,
                                 double tolerance) {
  std::ostringstream os;
  os << "strat-lab " << kVersion << "\n";
  os << "scenario " << sc.name << "\n";
  os << "config " << sc.source << "\n";
  os << "config_hash fnv1a64:" << hex64(fnv1a(sc.text)) << "\n";
  os << "seed " << rep.seed << "\n";
  os << "threads " << threads << "\n";
  os << "tolerance " << format_double(tolerance) << "\n";
#ifdef __VERSION__
  os << "compiler " << __VERSION__ << "\n";
#endif
  os << "eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n";
  os << "json " << NLOHMANN_JSON_VERSION_MAJOR << "." << NLOHMANN_JSON_VERSION_MINOR << "."
     << NLOHMANN_JSON_VERSION_PATCH << "\n";
  for (const auto& [alias, id] : sc.models) os << "model " << alias << " " << id << "\n";
  for (const auto& t : rep.tasks) {
    os << "task " << t.name << " " << t.type << " " << t.status;
    for (const auto& f : t.files) os << " " << f;
    os << "\n";
    for (const auto& msg : t.messages) os << "  failure " << msg << "\n";
  }
  os << "result " << (rep.ok() ? "pass" : "fail") << "\n";
  return os.str();
}

/// Runs every task in order, writing tables, summary.json and manifest.txt.
/// Assertion failures are recorded per task; the run continues.
inline RunReport run_scenario(const Scenario& sc, const RunOverrides& ov = {}) {
  RunReport rep;
  rep.seed = ov.seed.value_or(sc.seed);
  rep.output = ov.output.value_or(sc.output);
  const int threads = ov.threads.value_or(sc.threads);
  AnalysisConfig an = sc.analysis;
  if (ov.tolerance) an.tolerance = *ov.tolerance;
  set_threads(threads);
  std::filesystem::create_directories(rep.output);

  Json summary = Json::object();
  summary["scenario"] = sc.name;
  summary["seed"] = rep.seed;
  Json tasks_json = Json::array();
  std::map<std::string, CatalogModel> models;
  try {
    for (const auto& spec : sc.tasks) {
      TaskOutcome out;
      out.name = spec.name;
      out.type = spec.type;
      const auto t0 = std::chrono::steady_clock::now();
      Json tj = Json::object();
      tj["name"] = spec.name;
      tj["type"] = spec.type;
      tj["model"] = sc.model_id(spec.model);
      try {
        auto it = models.find(spec.model);
        if (it == models.end()) it = models.emplace(spec.model, parse_model(sc.model_id(spec.model))).first;
        TaskContext ctx{sc, spec, it->second, an, rep.seed, rep.output, out};
        if (spec.type == "energy-profile") tasks::energy_profile_task(ctx);
        else if (spec.type == "strata") tasks::strata_task(ctx);
        else if (spec.type == "decompose") tasks::decompose_task(ctx);
        else if (spec.type == "tube-fit") tasks::tube_fit_task(ctx);
        else if (spec.type == "lp-sweep") tasks::lp_sweep_task(ctx);
        else if (spec.type == "cone-split") tasks::cone_split_task(ctx);
        else if (spec.type == "current-suite") tasks::current_suite_task(ctx);
        out.status = out.messages.empty() ? "pass" : "fail";
        tj["results"] = ctx.summary;
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        out.status = "error";
        out.messages.push_back(e.what());
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      tj["status"] = out.status;
      tj["messages"] = out.messages;
      tj["files"] = out.files;
      tasks_json.push_back(tj);
      rep.tasks.push_back(std::move(out));
    }
  } catch (...) {
    write_text(rep.output / "manifest.txt", manifest_text(sc, rep, threads, an.tolerance));
    throw;
  }
  summary["tasks"] = tasks_json;
  summary["result"] = rep.ok() ? "pass" : "fail";
  write_json(rep.output / "summary.json", summary);
  write_text(rep.output / "manifest.txt", manifest_text(sc, rep, threads, an.tolerance));
  return rep;
}

}  // namespace stratlab
