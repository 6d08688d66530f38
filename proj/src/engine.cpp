#include "ccd/engine.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <set>

#include "ccd/error.hpp"
#include "ccd/rng.hpp"
#include "json.hpp"

namespace ccd {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_raw(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

// Canonical key of a full option assignment, used to avoid re-measuring.
std::string assignment_key(const std::map<std::string, double>& assignment) {
  std::string key;
  for (const auto& [name, value] : assignment) {
    key += name;
    key += '=';
    key += format_raw(value);
    key += ';';
  }
  return key;
}

double snap_to_domain(const VariableMeta& var, double value) {
  if (!var.is_discrete())
    return std::min(std::max(value, var.domain_min), var.domain_max);
  int best = 0;
  double best_dist = std::abs(value - var.levels[0]);
  for (std::size_t k = 1; k < var.levels.size(); ++k) {
    const double dist = std::abs(value - var.levels[k]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(k);
    }
  }
  return var.levels[best];
}

ordered_json repair_to_json(const Repair& repair, const DiscreteTable& data) {
  ordered_json j;
  ordered_json assign = ordered_json::object();
  for (const auto& [v, level] : repair.assignment)
    assign[data.schema.at(v).name] = data.raw_value(v, level);
  j["assignment"] = std::move(assign);
  j["ite"] = repair.ite;
  return j;
}

ordered_json report_json(const DiagnosisReport& report, const Schema& schema) {
  ordered_json j;
  ordered_json fault;
  fault["targets"] = report.fault.targets;
  fault["percentile"] = report.fault.percentile;
  ordered_json thresholds = ordered_json::object();
  for (std::size_t i = 0; i < report.fault.targets.size(); ++i)
    thresholds[report.fault.targets[i]] = report.thresholds[i];
  fault["thresholds"] = std::move(thresholds);
  fault["faulty_row"] = report.faulty_row;
  j["fault"] = std::move(fault);

  j["graph"] = ordered_json::parse(graph_to_json(report.graph));

  ordered_json paths = ordered_json::array();
  for (const CausalPath& path : report.paths) {
    ordered_json p;
    ordered_json nodes = ordered_json::array();
    for (int v : path.nodes) nodes.push_back(schema.at(v).name);
    p["nodes"] = std::move(nodes);
    p["score"] = path.score;
    paths.push_back(std::move(p));
  }
  j["paths"] = std::move(paths);

  ordered_json roots = ordered_json::array();
  for (int v : report.root_causes) roots.push_back(schema.at(v).name);
  j["root_causes"] = std::move(roots);

  ordered_json repairs = ordered_json::array();
  const std::size_t shown = std::min<std::size_t>(report.repairs.size(), 10);
  for (std::size_t i = 0; i < shown; ++i)
    repairs.push_back(repair_to_json(report.repairs[i], report.model.data));
  j["repairs"] = std::move(repairs);
  j["repairs_evaluated"] = report.repairs.size();

  if (report.repairs.empty()) {
    j["best_repair"] = nullptr;
  } else {
    ordered_json best = repair_to_json(report.repairs.front(), report.model.data);
    best["non_improving"] = report.best_non_improving;
    j["best_repair"] = std::move(best);
  }
  j["flags"] = report.flags;
  j["notes"] = report.graph.notes;
  return j;
}

}  // namespace

DiagnosisReport diagnose(const ObservationTable& table, const FaultSpec& fault,
                         const EngineConfig& cfg) {
  EngineConfig ec = cfg;
  ec.entropic.seed = derive_seed(cfg.seed, 0xd1a9ULL, 1);
  ec.fit.seed = derive_seed(cfg.seed, 0xd1a9ULL, 2);
  ec.counterfactual.seed = derive_seed(cfg.seed, 0xd1a9ULL, 3);

  DiagnosisReport report;
  report.fault = fault;
  report.thresholds = fault_thresholds(table, fault);
  const auto labels = label_faults(table, fault);

  if (fault.faulty_row_index) {
    const int idx = *fault.faulty_row_index;
    if (idx < 0 || idx >= table.rows())
      throw Error(ErrorCode::InvalidArgument, "faulty row index out of range");
    if (!labels[idx])
      throw Error(ErrorCode::NoFaultObserved,
                  "row " + std::to_string(idx) +
                      " is not past the fault thresholds");
    report.faulty_row = idx;
  } else {
    const int t0 = table.schema.index_of(fault.targets.front());
    const Direction dir = table.schema.at(t0).direction;
    int worst = -1;
    for (int r = 0; r < table.rows(); ++r) {
      if (!labels[r]) continue;
      if (worst < 0 ||
          is_worse(table.values(r, t0), table.values(worst, t0), dir))
        worst = r;
    }
    if (worst < 0)
      throw Error(ErrorCode::NoFaultObserved,
                  "no observed row is past the fault thresholds");
    report.faulty_row = worst;
  }

  const DiscreteTable discrete = discretize(table, ec.bins);
  report.outcome = make_outcome_spec(table, discrete, fault);

  const TierKnowledge tiers = TierKnowledge::from_schema(table.schema);
  const Pag pag = discover_pag(discrete, ec.discovery, tiers);
  report.graph = resolve_pag(pag, discrete, ec.entropic);
  report.model = fit_cpts(discrete, report.graph, ec.fit);

  for (int target : report.outcome.targets) {
    auto ranked = rank_paths(report.model, table.schema, target, ec.top_k);
    for (CausalPath& path : ranked) {
      const bool dup =
          std::any_of(report.paths.begin(), report.paths.end(),
                      [&](const CausalPath& p) { return p.nodes == path.nodes; });
      if (!dup) report.paths.push_back(std::move(path));
    }
  }
  std::sort(report.paths.begin(), report.paths.end(),
            [](const CausalPath& a, const CausalPath& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.nodes < b.nodes;
            });

  for (const CausalPath& path : report.paths)
    for (int v : path.nodes)
      if (table.schema.at(v).kind == VarKind::ConfigOption &&
          std::find(report.root_causes.begin(), report.root_causes.end(), v) ==
              report.root_causes.end())
        report.root_causes.push_back(v);

  std::vector<int> factual(discrete.cols());
  for (int i = 0; i < discrete.cols(); ++i)
    factual[i] = discrete.codes(report.faulty_row, i);

  try {
    RepairSet set = generate_repair_set(report.paths, report.model,
                                        report.outcome.targets, ec.repair_cap);
    if (set.capped) report.flags.push_back("repair_set_capped");
    bool sampled = false;
    for (Repair& r : set.candidates) {
      const IteResult res =
          ite(report.model, r.assignment, factual, report.outcome, ec.counterfactual);
      r.ite = res.value;
      r.sampled = res.sampled;
      sampled = sampled || res.sampled;
    }
    if (sampled) report.flags.push_back("counterfactual_sampled");
    sort_repairs(set.candidates, factual);
    report.repairs = std::move(set.candidates);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoIntervenableOption) throw;
    report.flags.push_back("no_intervenable_option");
  }
  report.best_non_improving =
      report.repairs.empty() || report.repairs.front().ite <= 0.0;
  return report;
}

std::string report_to_json(const DiagnosisReport& report, const Schema& schema) {
  return report_json(report, schema).dump(2) + "\n";
}

SubprocessEvaluator::SubprocessEvaluator(std::string command)
    : command_(std::move(command)) {
  if (command_.empty())
    throw Error(ErrorCode::InvalidArgument, "empty evaluator command");
}

std::map<std::string, double> SubprocessEvaluator::measure(
    const std::map<std::string, double>& assignment, int repeat) {
  std::signal(SIGPIPE, SIG_IGN);
  ordered_json req;
  ordered_json assign = ordered_json::object();
  for (const auto& [name, value] : assignment) assign[name] = value;
  req["assignment"] = std::move(assign);
  req["repeat"] = repeat;
  const std::string input = req.dump() + "\n";

  int to_child[2], from_child[2];
  if (pipe(to_child) != 0)
    throw Error(ErrorCode::EvaluatorFailure, "pipe creation failed");
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw Error(ErrorCode::EvaluatorFailure, "pipe creation failed");
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    throw Error(ErrorCode::EvaluatorFailure, "fork failed");
  }
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);

  std::size_t written = 0;
  while (written < input.size()) {
    const ssize_t n =
        write(to_child[1], input.data() + written, input.size() - written);
    if (n <= 0) break;  // child may exit before reading everything
    written += static_cast<std::size_t>(n);
  }
  close(to_child[1]);

  std::string output;
  char buf[4096];
  for (;;) {
    const ssize_t n = read(from_child[0], buf, sizeof(buf));
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  close(from_child[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error(ErrorCode::EvaluatorFailure,
                "evaluator command failed with status " +
                    std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(output);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::EvaluatorFailure, "evaluator reply is not valid JSON");
  }
  if (!reply.is_object() || !reply.contains("events") || !reply.contains("nfps"))
    throw Error(ErrorCode::EvaluatorFailure,
                "evaluator reply must contain 'events' and 'nfps' objects");
  std::map<std::string, double> measured;
  for (const char* section : {"events", "nfps"}) {
    if (!reply[section].is_object())
      throw Error(ErrorCode::EvaluatorFailure,
                  std::string("evaluator '") + section + "' is not an object");
    for (const auto& [name, value] : reply[section].items()) {
      if (!value.is_number())
        throw Error(ErrorCode::EvaluatorFailure,
                    "evaluator value for '" + name + "' is not a number");
      measured[name] = value.get<double>();
    }
  }
  return measured;
}

const char* session_status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::Fixed:
      return "fixed";
    case SessionStatus::BudgetExhausted:
      return "budget_exhausted";
    case SessionStatus::NonImproving:
      return "non_improving";
  }
  return "unknown";
}

RepairSession repair_loop(const ObservationTable& table, const FaultSpec& fault,
                          SystemEvaluator& evaluator, const Budget& budget,
                          const EngineConfig& cfg) {
  if (budget.max_evaluations < 1 || budget.repeats < 1)
    throw Error(ErrorCode::InvalidArgument, "budget must be positive");

  RepairSession session;
  session.table = table;
  FaultSpec frozen = fault;
  frozen.fixed_thresholds = fault_thresholds(table, fault);
  session.report = diagnose(session.table, frozen, cfg);
  frozen.faulty_row_index = session.report.faulty_row;

  const Schema& schema = table.schema;
  const std::vector<int> options = schema.indices_of_kind(VarKind::ConfigOption);
  const int frow = session.report.faulty_row;
  const std::vector<double>& thresholds = *frozen.fixed_thresholds;

  std::set<std::string> tried;
  {
    std::map<std::string, double> base;
    for (int o : options) base[schema.at(o).name] = table.values(frow, o);
    tried.insert(assignment_key(base));
  }

  int evals = 0;
  while (true) {
    const DiscreteTable& disc = session.report.model.data;
    std::map<std::string, double> chosen;
    double chosen_ite = 0.0;
    bool found = false;
    for (const Repair& r : session.report.repairs) {
      std::map<std::string, double> assign;
      for (int o : options) {
        const auto it = r.assignment.find(o);
        assign[schema.at(o).name] = it != r.assignment.end()
                                        ? disc.raw_value(o, it->second)
                                        : session.table.values(frow, o);
      }
      if (tried.count(assignment_key(assign))) continue;
      chosen = std::move(assign);
      chosen_ite = r.ite;
      found = true;
      break;
    }
    if (!found) {
      session.status = SessionStatus::NonImproving;
      break;
    }
    tried.insert(assignment_key(chosen));

    EvaluationRecord rec;
    rec.assignment = chosen;
    rec.ite = chosen_ite;

    std::map<std::string, double> sums;
    bool failed = false;
    for (int k = 0; k < budget.repeats && !failed; ++k) {
      std::map<std::string, double> m;
      try {
        m = evaluator.measure(chosen, k);
      } catch (const Error&) {
        try {
          m = evaluator.measure(chosen, k);
        } catch (const Error&) {
          failed = true;
          break;
        }
      }
      for (const auto& [name, value] : m) sums[name] += value;
    }
    ++evals;
    if (failed) {
      rec.skipped = true;
      session.evaluations.push_back(std::move(rec));
      if (evals >= budget.max_evaluations) {
        session.status = SessionStatus::BudgetExhausted;
        break;
      }
      continue;
    }
    for (auto& [name, value] : sums) value /= budget.repeats;
    rec.measured = sums;

    Eigen::VectorXd row(schema.size());
    for (int i = 0; i < schema.size(); ++i) {
      const VariableMeta& var = schema.at(i);
      double value;
      if (var.kind == VarKind::ConfigOption) {
        value = chosen.at(var.name);
      } else {
        const auto it = sums.find(var.name);
        if (it == sums.end())
          throw Error(ErrorCode::EvaluatorFailure,
                      "evaluator reply misses variable '" + var.name + "'");
        value = it->second;
      }
      row(i) = snap_to_domain(var, value);
    }
    session.table.values.conservativeResize(session.table.rows() + 1,
                                            Eigen::NoChange);
    session.table.values.row(session.table.rows() - 1) = row.transpose();

    bool still_faulty = true;
    for (std::size_t t = 0; t < session.report.outcome.targets.size(); ++t) {
      const int idx = session.report.outcome.targets[t];
      const Direction dir = schema.at(idx).direction;
      rec.gains.push_back(compute_gain(table.values(frow, idx), row(idx), dir));
      if (!is_worse(row(idx), thresholds[t], dir)) still_faulty = false;
    }
    rec.fixed = !still_faulty;
    session.evaluations.push_back(rec);

    if (rec.fixed) {
      session.status = SessionStatus::Fixed;
      break;
    }
    if (evals >= budget.max_evaluations) {
      session.status = SessionStatus::BudgetExhausted;
      break;
    }
    session.report = diagnose(session.table, frozen, cfg);
  }
  return session;
}

std::string session_to_json(const RepairSession& session, const Schema& schema) {
  ordered_json j;
  j["status"] = session_status_name(session.status);
  ordered_json evals = ordered_json::array();
  for (const EvaluationRecord& rec : session.evaluations) {
    ordered_json e;
    ordered_json assign = ordered_json::object();
    for (const auto& [name, value] : rec.assignment) assign[name] = value;
    e["assignment"] = std::move(assign);
    ordered_json measured = ordered_json::object();
    for (const auto& [name, value] : rec.measured) measured[name] = value;
    e["measured"] = std::move(measured);
    e["ite"] = rec.ite;
    e["skipped"] = rec.skipped;
    e["fixed"] = rec.fixed;
    e["gains"] = rec.gains;
    evals.push_back(std::move(e));
  }
  j["evaluations"] = std::move(evals);
  j["evaluations_used"] = session.evaluations.size();
  j["final_report"] = report_json(session.report, schema);
  return j.dump(2) + "\n";
}

BootstrapResult bootstrap_samples(const Schema& schema, int n,
                                  std::uint64_t seed, int bins) {
  if (n <= 0)
    throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  if (bins < 2)
    throw Error(ErrorCode::InvalidArgument, "bins must be at least 2");
  const std::vector<int> options = schema.indices_of_kind(VarKind::ConfigOption);
  if (options.empty())
    throw Error(ErrorCode::NoIntervenableOption, "schema has no config options");

  std::vector<std::vector<double>> values(options.size());
  for (std::size_t i = 0; i < options.size(); ++i) {
    const VariableMeta& var = schema.at(options[i]);
    if (var.is_discrete()) {
      values[i] = var.levels;
    } else {
      const double width = (var.domain_max - var.domain_min) / bins;
      for (int b = 0; b < bins; ++b)
        values[i].push_back(var.domain_min + (b + 0.5) * width);
    }
  }

  double product = 1.0;
  for (const auto& v : values) product *= static_cast<double>(v.size());

  BootstrapResult out;
  const auto emit = [&](const std::vector<int>& idx) {
    std::map<std::string, double> assign;
    for (std::size_t i = 0; i < options.size(); ++i)
      assign[schema.at(options[i]).name] = values[i][idx[i]];
    out.assignments.push_back(std::move(assign));
  };

  if (product <= static_cast<double>(n)) {
    std::vector<int> idx(options.size(), 0);
    bool done = false;
    while (!done) {
      emit(idx);
      done = true;
      for (int i = static_cast<int>(options.size()) - 1; i >= 0; --i) {
        if (++idx[i] < static_cast<int>(values[i].size())) {
          done = false;
          break;
        }
        idx[i] = 0;
      }
    }
    out.exhausted_space = true;
    return out;
  }

  Rng rng(derive_seed(seed, 0xb007ULL));
  std::set<std::vector<int>> seen;
  long long attempts = 1000LL * n + 1000;
  while (static_cast<int>(seen.size()) < n && attempts-- > 0) {
    std::vector<int> idx(options.size());
    for (std::size_t i = 0; i < options.size(); ++i) {
      std::uniform_int_distribution<int> pick(
          0, static_cast<int>(values[i].size()) - 1);
      idx[i] = pick(rng);
    }
    if (seen.insert(idx).second) emit(idx);
  }
  // The grid is larger than n, so a deterministic scan can always fill up.
  if (static_cast<int>(seen.size()) < n) {
    std::vector<int> idx(options.size(), 0);
    bool done = false;
    while (!done && static_cast<int>(seen.size()) < n) {
      if (seen.insert(idx).second) emit(idx);
      done = true;
      for (int i = static_cast<int>(options.size()) - 1; i >= 0; --i) {
        if (++idx[i] < static_cast<int>(values[i].size())) {
          done = false;
          break;
        }
        idx[i] = 0;
      }
    }
  }
  return out;
}

}  // namespace ccd
