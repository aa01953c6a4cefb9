#include "itrack/milp_portfolio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <queue>

#include "itrack/errors.hpp"
#include "json.hpp"

namespace itrack {

namespace {

using json = nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool counts_in_targets(const MilpProblem& p, std::size_t i) { return !p.excluded[i] && std::isfinite(p.beta[i]); }

struct Incumbent {
  bool found = false;
  double value = kInf;
  std::vector<double> x;
  std::vector<char> included;
};

struct Node {
  double bound;
  std::size_t id;
  std::vector<std::pair<std::size_t, char>> fixes;  // (instrument, u value)
  std::shared_ptr<const BoundedSimplex> start;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

struct BranchResult {
  Incumbent incumbent;
  SolverStats stats;
  bool exhausted = false;
  bool timed_out = false;
  bool root_infeasible = false;
};

// Support of an LP point when rounded to indicators, or nullopt if it breaks
// the cardinality cap.
std::optional<std::vector<char>> round_support(const MilpProblem& p, const std::vector<double>& x,
                                               const std::vector<char>& forced_on, std::size_t cap) {
  std::vector<char> inc(p.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inc[i] = forced_on[i] || x[p.w_col(i)] > kInclusionThreshold;
    count += inc[i];
  }
  if (count > cap) return std::nullopt;
  return inc;
}

BranchResult branch_and_bound(const MilpProblem& p, const LinearProgram& lp, std::size_t cap,
                              const SolveOptions& opt) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const std::size_t n = p.size();
  BranchResult res;

  auto root = std::make_shared<BoundedSimplex>(lp, opt.simplex);
  const LpStatus rs = root->solve();
  res.stats.lp_iterations += root->iterations();
  if (rs != LpStatus::optimal) {
    if (rs == LpStatus::infeasible) {
      res.root_infeasible = true;
      res.exhausted = true;
      return res;
    }
    throw ModelingError("root relaxation did not solve (status " + std::to_string(static_cast<int>(rs)) + ")");
  }
  res.stats.root_bound = root->objective();
  std::shared_ptr<const BoundedSimplex> root_const = root;

  auto accept = [&](BoundedSimplex& s, const std::vector<char>& inc) {
    const double v = s.objective();
    if (v < res.incumbent.value - opt.gap_tolerance || !res.incumbent.found) {
      s.refine();
      res.incumbent.found = true;
      res.incumbent.value = s.objective();
      res.incumbent.x = s.primal();
      res.incumbent.included = inc;
    }
  };

  // Rounding incumbent: keep S* and the largest root weights up to the cap.
  {
    const auto x = root->primal();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const bool pa = p.excluded[a] && p.prior[a] > 0.0, pb = p.excluded[b] && p.prior[b] > 0.0;
      if (pa != pb) return pa;
      return x[p.w_col(a)] > x[p.w_col(b)];
    });
    BoundedSimplex seed(*root);
    for (std::size_t k = cap; k < n; ++k) seed.set_column_bounds(p.u_col(order[k]), 0.0, 0.0);
    const LpStatus ss = seed.solve();
    res.stats.lp_iterations += seed.iterations() - root->iterations();
    if (ss == LpStatus::optimal) {
      std::vector<char> off(n, 0);
      if (auto inc = round_support(p, seed.primal(), off, cap)) accept(seed, *inc);
    }
  }

  // Children warm-start from their parent's tableau while memory allows,
  // otherwise from the root's.
  const double tableau_bytes = 8.0 * static_cast<double>(lp.rows()) * static_cast<double>(lp.rows() + lp.cols());
  const auto max_saved = static_cast<std::size_t>(std::max(1.0, 512.0 * 1024 * 1024 / tableau_bytes));
  std::size_t saved = 0;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  std::size_t next_id = 0;
  open.push(Node{res.stats.root_bound, next_id++, {}, nullptr});

  while (!open.empty()) {
    if (opt.node_limit > 0 && res.stats.nodes >= opt.node_limit) break;
    const double elapsed = std::chrono::duration<double>(clock::now() - started).count();
    if (elapsed > opt.time_limit_seconds) {
      res.timed_out = true;
      break;
    }
    Node node = open.top();
    open.pop();
    if (res.incumbent.found && node.bound >= res.incumbent.value - opt.gap_tolerance) continue;
    ++res.stats.nodes;

    std::shared_ptr<BoundedSimplex> s;
    std::size_t base_iters = 0;
    if (node.fixes.empty()) {
      s = root;
      base_iters = root->iterations();
    } else {
      const auto& from = node.start ? node.start : root_const;
      s = std::make_shared<BoundedSimplex>(*from);
      base_iters = from->iterations();
      for (const auto& [i, v] : node.fixes) s->set_column_bounds(p.u_col(i), v, v);
      const LpStatus st = s->solve();
      res.stats.lp_iterations += s->iterations() - base_iters;
      if (st == LpStatus::infeasible) continue;
      if (st != LpStatus::optimal) throw ModelingError("node relaxation did not solve");
    }
    const double value = s->objective();
    if (res.incumbent.found && value >= res.incumbent.value - opt.gap_tolerance) continue;

    const auto x = s->primal();
    std::vector<char> forced_on(n, 0), fixed(n, 0);
    for (const auto& [i, v] : node.fixes) {
      fixed[i] = 1;
      forced_on[i] = v == 1;
    }
    if (auto inc = round_support(p, x, forced_on, cap)) {
      accept(*s, *inc);
      continue;
    }
    std::size_t branch = n;
    double best_frac = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      const double u = x[p.u_col(i)];
      const double frac = std::min(u, 1.0 - u);
      if (frac > best_frac + 1e-12) {
        best_frac = frac;
        branch = i;
      }
    }
    if (branch == n) continue;
    std::shared_ptr<const BoundedSimplex> start;
    if (saved < max_saved) {
      start = s;
      ++saved;
    }
    for (char v : {char{0}, char{1}}) {
      Node child{value, next_id++, node.fixes, start};
      child.fixes.emplace_back(branch, v);
      open.push(std::move(child));
    }
  }

  // Open nodes that cannot beat the incumbent do not count as unexplored.
  double open_min = kInf;
  while (!open.empty()) {
    if (!res.incumbent.found || open.top().bound < res.incumbent.value - opt.gap_tolerance) {
      open_min = std::min(open_min, open.top().bound);
    }
    open.pop();
  }
  res.exhausted = !std::isfinite(open_min);
  const double inc = res.incumbent.found ? res.incumbent.value : kInf;
  res.stats.best_bound = std::min(inc, open_min);
  res.stats.gap = res.incumbent.found ? inc - res.stats.best_bound : kInf;
  return res;
}

// Solve-only feasibility probe with some constraints released.
enum Release : unsigned { kNone = 0, kBeta = 1, kAlpha = 2, kCard = 4 };

std::optional<bool> feasible_without(const MilpProblem& p, unsigned released, const SolveOptions& opt) {
  LinearProgram lp = p.relaxation();
  if (released & kBeta) lp.row_lo[p.beta_row()] = -kInf, lp.row_hi[p.beta_row()] = kInf;
  if (released & kAlpha) lp.row_lo[p.alpha_row()] = -kInf, lp.row_hi[p.alpha_row()] = kInf;
  std::size_t cap = p.n_star;
  if (released & kCard) {
    lp.row_hi[p.cardinality_row()] = kInf;
    cap = p.size();
  }
  const BranchResult r = branch_and_bound(p, lp, cap, opt);
  if (r.incumbent.found) return true;
  if (r.exhausted) return false;
  return std::nullopt;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

std::size_t MilpProblem::excluded_count() const {
  return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), char{1}));
}

void MilpProblem::validate() const {
  const std::size_t n = size();
  if (n == 0) throw ModelingError("portfolio problem has no instruments");
  if (prior.size() != n || current.size() != n || excluded.size() != n || alpha.size() != n || beta.size() != n) {
    throw ModelingError("portfolio problem fields have inconsistent lengths");
  }
  if (!max_weight.empty() && max_weight.size() != n) throw ModelingError("max_weight length mismatch");
  if (!std::is_sorted(ids.begin(), ids.end()) || std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ModelingError("instrument ids must be sorted and unique");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(prior[i] >= 0.0)) throw ModelingError("negative prior weight for '" + ids[i] + "'");
    if (current[i] && !excluded[i] && !(std::isfinite(alpha[i]) && std::isfinite(beta[i]))) {
      throw ModelingError("prediction missing for instrument '" + ids[i] + "'");
    }
    if (excluded[i] && !current[i]) throw ModelingError("excluded instrument '" + ids[i] + "' left the index");
  }
  if (n_star < excluded_count()) {
    throw ModelingError("cardinality cap " + std::to_string(n_star) + " is below the " +
                        std::to_string(excluded_count()) + " excluded instruments");
  }
  if (!(equality_band >= 0.0)) throw ModelingError("equality band must be non-negative");
}

LinearProgram MilpProblem::relaxation() const {
  validate();
  const std::size_t n = size();
  const std::size_t cols = 3 * n + 1;
  const std::size_t rows = 4 * n + 4;
  LinearProgram lp;
  lp.a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  lp.c.assign(cols, 0.0);
  lp.col_lo.assign(cols, 0.0);
  lp.col_hi.assign(cols, kInf);
  lp.row_lo.assign(rows, -kInf);
  lp.row_hi.assign(rows, 0.0);
  auto a = [&](std::size_t r, std::size_t c) -> double& {
    return lp.a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  };

  for (std::size_t i = 0; i < n; ++i) {
    lp.c[z_col(i)] = 1.0 / static_cast<double>(n);
    double cap = max_weight.empty() ? 1.0 : std::min(1.0, max_weight[i]);
    if (!current[i]) cap = 0.0;
    lp.col_hi[w_col(i)] = cap;
    if (excluded[i]) lp.col_lo[w_col(i)] = lp.col_hi[w_col(i)] = prior[i];
    lp.col_hi[u_col(i)] = 1.0;

    a(i, w_col(i)) = 1.0;
    a(i, z_col(i)) = -1.0;
    lp.row_hi[i] = prior[i];
    a(n + i, w_col(i)) = -1.0;
    a(n + i, z_col(i)) = -1.0;
    lp.row_hi[n + i] = -prior[i];
    a(2 * n + i, z_col(i)) = 1.0;
    a(2 * n + i, big_z_col()) = -1.0;

    if (counts_in_targets(*this, i)) {
      a(beta_row(), w_col(i)) = beta[i];
      a(alpha_row(), w_col(i)) = alpha[i];
    }
    a(budget_row(), w_col(i)) = 1.0;
    a(3 * n + 3 + i, w_col(i)) = 1.0;
    a(3 * n + 3 + i, u_col(i)) = -1.0;
    a(cardinality_row(), u_col(i)) = 1.0;
  }
  lp.c[big_z_col()] = 1.0;
  lp.row_lo[beta_row()] = beta_target - equality_band;
  lp.row_hi[beta_row()] = beta_target + equality_band;
  lp.row_lo[alpha_row()] = alpha_target - equality_band;
  lp.row_hi[alpha_row()] = alpha_target + equality_band;
  lp.row_lo[budget_row()] = lp.row_hi[budget_row()] = 1.0;
  lp.row_hi[cardinality_row()] = static_cast<double>(n_star);
  return lp;
}

std::vector<std::string> MilpProblem::row_names() const {
  const std::size_t n = size();
  std::vector<std::string> names(4 * n + 4);
  for (std::size_t i = 0; i < n; ++i) {
    names[i] = "above:" + ids[i];
    names[n + i] = "below:" + ids[i];
    names[2 * n + i] = "max_deviation:" + ids[i];
    names[3 * n + 3 + i] = "indicator:" + ids[i];
  }
  names[beta_row()] = "beta_target";
  names[alpha_row()] = "alpha_target";
  names[budget_row()] = "budget";
  names[cardinality_row()] = "cardinality";
  return names;
}

MilpProblem build_problem(const BuildInputs& in) {
  std::set<std::string> all(in.universe.begin(), in.universe.end());
  for (const auto& [id, w] : in.prior_weights) {
    if (w > 0.0) all.insert(id);
  }
  for (const auto& id : in.exclusions) {
    if (!in.universe.contains(id)) throw ModelingError("excluded instrument '" + id + "' is not in the universe");
  }
  MilpProblem p;
  p.date = in.date;
  p.n_star = in.n_star;
  p.equality_band = in.equality_band;
  for (const auto& id : all) {
    const bool current = in.universe.contains(id);
    const bool excluded = in.exclusions.contains(id);
    const auto pw = in.prior_weights.find(id);
    const double prior = pw == in.prior_weights.end() ? 0.0 : pw->second;
    double alpha = kNaN, beta = kNaN;
    if (const auto it = in.predictions.find(id); it != in.predictions.end() && !excluded) {
      alpha = it->second.alpha;
      beta = it->second.beta;
    } else if (current && !excluded) {
      throw ModelingError("prediction missing for instrument '" + id + "' on " + in.date);
    }
    p.ids.push_back(id);
    p.prior.push_back(prior);
    p.current.push_back(current);
    p.excluded.push_back(excluded);
    p.alpha.push_back(alpha);
    p.beta.push_back(beta);
  }
  if (!in.max_weight.empty()) {
    for (const auto& id : p.ids) {
      const auto it = in.max_weight.find(id);
      p.max_weight.push_back(it == in.max_weight.end() ? 1.0 : it->second);
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (counts_in_targets(p, i)) {
      p.alpha_target += p.prior[i] * p.alpha[i];
      p.beta_target += p.prior[i] * p.beta[i];
    }
  }
  p.validate();
  return p;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::node_limit: return "node_limit";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

std::size_t MilpSolution::support() const {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](double w) { return w > kInclusionThreshold; }));
}

MilpSolution solve(const MilpProblem& problem, const SolveOptions& options) {
  const LinearProgram lp = problem.relaxation();
  BranchResult r = branch_and_bound(problem, lp, problem.n_star, options);
  MilpSolution sol;
  sol.ids = problem.ids;
  sol.stats = r.stats;
  if (!r.incumbent.found) {
    if (!r.exhausted) {
      throw ModelingError("portfolio search on " + problem.date + " hit its " +
                          (r.timed_out ? "time" : "node") + " limit without a feasible portfolio");
    }
    sol.status = SolveStatus::infeasible;
    sol.infeasibility = diagnose_infeasibility(problem, options);
    return sol;
  }
  sol.status = r.exhausted ? SolveStatus::optimal : (r.timed_out ? SolveStatus::time_limit : SolveStatus::node_limit);
  const std::size_t n = problem.size();
  sol.weights.resize(n);
  sol.z.resize(n);
  sol.included = r.incumbent.included;
  sol.big_z = 0.0;
  double zsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = r.incumbent.x[problem.w_col(i)];
    if (problem.excluded[i]) w = problem.prior[i];
    if (!problem.current[i]) w = 0.0;
    sol.weights[i] = w;
    sol.z[i] = std::abs(w - problem.prior[i]);
    sol.big_z = std::max(sol.big_z, sol.z[i]);
    zsum += sol.z[i];
  }
  sol.objective = zsum / static_cast<double>(n) + sol.big_z;
  return sol;
}

MilpSolution full_replication(const MilpProblem& problem) {
  MilpSolution sol;
  sol.status = SolveStatus::optimal;
  sol.ids = problem.ids;
  sol.weights = problem.prior;
  sol.z.assign(problem.size(), 0.0);
  sol.included.resize(problem.size());
  for (std::size_t i = 0; i < problem.size(); ++i) sol.included[i] = problem.prior[i] > 0.0;
  return sol;
}

std::string diagnose_infeasibility(const MilpProblem& problem, const SolveOptions& options) {
  const auto base = feasible_without(problem, kBeta | kAlpha | kCard, options);
  if (base && !*base) return "budget and pinned weights cannot hold together";
  struct Pair {
    unsigned a, b;
    const char* text;
  };
  const std::string cap = "cardinality (N*=" + std::to_string(problem.n_star) + ")";
  const Pair pairs[] = {{kBeta, kCard, "beta_target and "}, {kAlpha, kCard, "alpha_target and "},
                        {kBeta, kAlpha, "beta_target and alpha_target"}};
  const unsigned all = kBeta | kAlpha | kCard;
  for (const auto& pr : pairs) {
    const auto both = feasible_without(problem, all & ~(pr.a | pr.b), options);
    if (!both || *both) continue;
    const auto only_a = feasible_without(problem, all & ~pr.a, options);
    const auto only_b = feasible_without(problem, all & ~pr.b, options);
    if (only_a.value_or(false) && only_b.value_or(false)) {
      std::string text = pr.text;
      if (pr.b == kCard) text += cap;
      return text + " cannot hold together";
    }
  }
  return "beta_target, alpha_target and " + cap + " cannot hold together";
}

SolutionCheck check_solution(const MilpProblem& p, const MilpSolution& s) {
  SolutionCheck c;
  double sum = 0.0, beta = 0.0, alpha = 0.0, zmax = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = s.weights[i];
    sum += w;
    if (counts_in_targets(p, i)) {
      beta += p.beta[i] * w;
      alpha += p.alpha[i] * w;
    }
    if (!s.z.empty()) {
      c.binding = std::max(c.binding, std::abs(s.z[i] - std::abs(w - p.prior[i])));
      zmax = std::max(zmax, s.z[i]);
    }
    if (p.excluded[i]) c.pinned = std::max(c.pinned, std::abs(w - p.prior[i]));
    c.negative = std::max(c.negative, -w);
    c.support += w > kInclusionThreshold;
  }
  if (!s.z.empty()) c.binding = std::max(c.binding, std::abs(s.big_z - zmax));
  c.budget = std::abs(sum - 1.0);
  c.beta = std::max(0.0, std::abs(beta - p.beta_target) - p.equality_band);
  c.alpha = std::max(0.0, std::abs(alpha - p.alpha_target) - p.equality_band);
  return c;
}

void save_problem_json(const MilpProblem& p, const std::filesystem::path& path) {
  json inst = json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    json e{{"id", p.ids[i]},
           {"prior_weight", p.prior[i]},
           {"current", static_cast<bool>(p.current[i])},
           {"excluded", static_cast<bool>(p.excluded[i])},
           {"alpha", number_or_null(p.alpha[i])},
           {"beta", number_or_null(p.beta[i])}};
    if (!p.max_weight.empty()) e["max_weight"] = p.max_weight[i];
    inst.push_back(std::move(e));
  }
  json j{{"date", p.date},
         {"n_star", p.n_star},
         {"alpha_target", p.alpha_target},
         {"beta_target", p.beta_target},
         {"equality_band", p.equality_band},
         {"instruments", std::move(inst)}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

MilpProblem load_problem_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    const json j = json::parse(in);
    MilpProblem p;
    p.date = j.value("date", std::string{});
    p.n_star = j.at("n_star").get<std::size_t>();
    p.alpha_target = j.at("alpha_target").get<double>();
    p.beta_target = j.at("beta_target").get<double>();
    p.equality_band = j.value("equality_band", 0.0);
    bool caps = false;
    for (const auto& e : j.at("instruments")) caps = caps || e.contains("max_weight");
    for (const auto& e : j.at("instruments")) {
      p.ids.push_back(e.at("id").get<std::string>());
      p.prior.push_back(e.at("prior_weight").get<double>());
      p.current.push_back(e.value("current", true));
      p.excluded.push_back(e.value("excluded", false));
      p.alpha.push_back(number_from(e.at("alpha")));
      p.beta.push_back(number_from(e.at("beta")));
      if (caps) p.max_weight.push_back(e.value("max_weight", 1.0));
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ValidationError("malformed problem file '" + path.string() + "': " + e.what());
  }
}

void save_solution_json(const MilpSolution& s, const std::filesystem::path& path) {
  json inst = json::array();
  for (std::size_t i = 0; i < s.ids.size() && i < s.weights.size(); ++i) {
    inst.push_back({{"id", s.ids[i]}, {"weight", s.weights[i]}, {"included", static_cast<bool>(s.included[i])}});
  }
  json j{{"status", to_string(s.status)},
         {"objective", s.objective},
         {"max_deviation", s.big_z},
         {"support", s.support()},
         {"stats",
          {{"nodes", s.stats.nodes},
           {"lp_iterations", s.stats.lp_iterations},
           {"root_bound", s.stats.root_bound},
           {"best_bound", s.stats.best_bound},
           {"gap", number_or_null(s.stats.gap)}}},
         {"weights", std::move(inst)}};
  if (!s.infeasibility.empty()) j["infeasibility"] = s.infeasibility;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace itrack
