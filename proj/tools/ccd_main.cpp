#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ccd/engine.hpp"
#include "ccd/error.hpp"
#include "ccd/rng.hpp"
#include "ccd/simulator.hpp"
#include "json.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ccd::Error(ccd::ErrorCode::InvalidArgument,
                     "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ccd::Error(ccd::ErrorCode::InvalidArgument,
                     "cannot write '" + path + "'");
  out << text;
}

struct CommonOptions {
  std::string schema_path;
  std::string data_path;
  std::string out_path;
  int bins = 10;
  double alpha = 0.05;
  int max_cond = 3;
  bool possible_dsep = false;
  int top_k = 3;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool needs_data = true) {
  cmd->add_option("--schema", opt.schema_path, "schema JSON path")->required();
  if (needs_data)
    cmd->add_option("--data", opt.data_path, "observations CSV path")->required();
  cmd->add_option("--out", opt.out_path, "output path, '-' for stdout");
  cmd->add_option("--bins", opt.bins, "bins per continuous variable");
  cmd->add_option("--alpha", opt.alpha, "independence test level");
  cmd->add_option("--max-cond", opt.max_cond, "largest conditioning set");
  cmd->add_flag("--possible-dsep", opt.possible_dsep,
                "refine the skeleton with possible-d-separating sets");
  cmd->add_option("--k", opt.top_k, "paths kept per target");
  cmd->add_option("--seed", opt.seed, "seed for every stochastic stage");
}

ccd::EngineConfig engine_config(const CommonOptions& opt) {
  ccd::EngineConfig cfg;
  cfg.bins = opt.bins;
  cfg.discovery.ci.alpha = opt.alpha;
  cfg.discovery.max_cond_size = opt.max_cond;
  cfg.discovery.possible_dsep = opt.possible_dsep;
  cfg.top_k = opt.top_k;
  cfg.seed = opt.seed;
  return cfg;
}

ccd::ObservationTable load_table(const CommonOptions& opt) {
  const ccd::Schema schema = ccd::schema_from_json(read_file(opt.schema_path));
  return ccd::load_observations(read_file(opt.data_path), schema);
}

struct SimulateOptions {
  ccd::ScmSpec spec;
  int rows = 2000;
  std::string out_schema, out_data, out_scm;
};

int run_simulate(const SimulateOptions& opt) {
  const ccd::GroundTruthScm scm = ccd::make_scm(opt.spec);
  const ccd::ObservationTable table =
      ccd::sample_observational(scm, opt.rows, opt.spec.seed);
  write_out(opt.out_schema, ccd::schema_to_json(scm.schema));
  write_out(opt.out_data, ccd::observations_to_csv(table));
  if (!opt.out_scm.empty()) write_out(opt.out_scm, ccd::scm_to_json(scm));
  return 0;
}

struct DiscoverOptions {
  CommonOptions common;
  std::string dot_path;
  bool pag_only = false;
};

int run_discover(const DiscoverOptions& opt) {
  const ccd::ObservationTable table = load_table(opt.common);
  const ccd::EngineConfig cfg = engine_config(opt.common);
  const ccd::DiscreteTable discrete = ccd::discretize(table, cfg.bins);
  const ccd::TierKnowledge tiers = ccd::TierKnowledge::from_schema(table.schema);
  const ccd::Pag pag = ccd::discover_pag(discrete, cfg.discovery, tiers);
  if (opt.pag_only) {
    write_out(opt.common.out_path, ccd::graph_to_json(pag));
    if (!opt.dot_path.empty()) write_out(opt.dot_path, ccd::graph_to_dot(pag));
    return 0;
  }
  ccd::EntropicConfig ecfg = cfg.entropic;
  ecfg.seed = ccd::derive_seed(cfg.seed, 0xd1a9ULL, 1);
  const ccd::Admg graph = ccd::resolve_pag(pag, discrete, ecfg);
  write_out(opt.common.out_path, ccd::graph_to_json(graph));
  if (!opt.dot_path.empty()) write_out(opt.dot_path, ccd::graph_to_dot(graph));
  return 0;
}

struct PathsOptions {
  CommonOptions common;
  std::string target;
};

int run_paths(const PathsOptions& opt) {
  const ccd::ObservationTable table = load_table(opt.common);
  const ccd::EngineConfig cfg = engine_config(opt.common);
  const int target = table.schema.index_of(opt.target);
  if (target < 0)
    throw ccd::Error(ccd::ErrorCode::TargetNotInSchema,
                     "target '" + opt.target + "' is not in the schema");
  const ccd::DiscreteTable discrete = ccd::discretize(table, cfg.bins);
  const ccd::TierKnowledge tiers = ccd::TierKnowledge::from_schema(table.schema);
  const ccd::Pag pag = ccd::discover_pag(discrete, cfg.discovery, tiers);
  ccd::EntropicConfig ecfg = cfg.entropic;
  ecfg.seed = ccd::derive_seed(cfg.seed, 0xd1a9ULL, 1);
  const ccd::Admg graph = ccd::resolve_pag(pag, discrete, ecfg);
  ccd::FitConfig fcfg = cfg.fit;
  fcfg.seed = ccd::derive_seed(cfg.seed, 0xd1a9ULL, 2);
  const ccd::FittedModel model = ccd::fit_cpts(discrete, graph, fcfg);
  const auto ranked =
      ccd::rank_paths(model, table.schema, target, cfg.top_k);

  ordered_json doc;
  doc["target"] = opt.target;
  doc["paths"] = ordered_json::array();
  for (const auto& path : ranked) {
    ordered_json p;
    p["nodes"] = ordered_json::array();
    for (int v : path.nodes) p["nodes"].push_back(table.schema.at(v).name);
    p["score"] = path.score;
    doc["paths"].push_back(std::move(p));
  }
  write_out(opt.common.out_path, doc.dump(2) + "\n");
  return 0;
}

struct DiagnoseOptions {
  CommonOptions common;
  std::vector<std::string> targets;
  double percentile = 99.0;
  int row = -1;
  std::string dot_path;
};

int run_diagnose(const DiagnoseOptions& opt) {
  const ccd::ObservationTable table = load_table(opt.common);
  ccd::FaultSpec fault;
  fault.targets = opt.targets;
  fault.percentile = opt.percentile;
  if (opt.row >= 0) fault.faulty_row_index = opt.row;
  const ccd::DiagnosisReport report =
      ccd::diagnose(table, fault, engine_config(opt.common));
  write_out(opt.common.out_path, ccd::report_to_json(report, table.schema));
  if (!opt.dot_path.empty())
    write_out(opt.dot_path, ccd::graph_to_dot(report.graph));
  return 0;
}

struct RepairOptions {
  CommonOptions common;
  std::vector<std::string> targets;
  double percentile = 99.0;
  int row = -1;
  int budget = 25;
  int repeats = 5;
  std::string evaluator_cmd;
  std::string evaluator_scm;
};

int run_repair(const RepairOptions& opt) {
  if (opt.evaluator_cmd.empty() == opt.evaluator_scm.empty())
    throw ccd::Error(ccd::ErrorCode::InvalidArgument,
                     "exactly one of --evaluator-cmd and --evaluator-scm");
  const ccd::ObservationTable table = load_table(opt.common);
  ccd::FaultSpec fault;
  fault.targets = opt.targets;
  fault.percentile = opt.percentile;
  if (opt.row >= 0) fault.faulty_row_index = opt.row;
  ccd::Budget budget;
  budget.max_evaluations = opt.budget;
  budget.repeats = opt.repeats;

  ccd::RepairSession session;
  if (!opt.evaluator_cmd.empty()) {
    ccd::SubprocessEvaluator evaluator(opt.evaluator_cmd);
    session = ccd::repair_loop(table, fault, evaluator, budget,
                               engine_config(opt.common));
  } else {
    ccd::ScmEvaluator evaluator(
        ccd::scm_from_json(read_file(opt.evaluator_scm)));
    session = ccd::repair_loop(table, fault, evaluator, budget,
                               engine_config(opt.common));
  }
  write_out(opt.common.out_path, ccd::session_to_json(session, table.schema));
  return session.status == ccd::SessionStatus::BudgetExhausted ? 4 : 0;
}

struct ScoreOptions {
  std::string scm_path;
  std::string report_path;
  std::string out_path;
  double eps = 0.01;
};

ccd::Admg admg_from_report(const nlohmann::json& graph, const ccd::Schema& schema) {
  ccd::Admg admg(schema);
  for (const auto& edge : graph.at("edges")) {
    const int a = schema.index_of(edge.at("a").get<std::string>());
    const int b = schema.index_of(edge.at("b").get<std::string>());
    if (a < 0 || b < 0)
      throw ccd::Error(ccd::ErrorCode::ParseError,
                       "report graph names a variable outside the schema");
    const std::string ma = edge.at("mark_a").get<std::string>();
    const std::string mb = edge.at("mark_b").get<std::string>();
    if (ma == "arrow" && mb == "arrow")
      admg.add_bidirected(a, b);
    else if (mb == "arrow")
      admg.add_directed(a, b);
    else if (ma == "arrow")
      admg.add_directed(b, a);
    else
      throw ccd::Error(ccd::ErrorCode::ParseError,
                       "report graph has an unresolved edge");
  }
  return admg;
}

int run_score(const ScoreOptions& opt) {
  const ccd::GroundTruthScm scm = ccd::scm_from_json(read_file(opt.scm_path));
  nlohmann::json report;
  try {
    report = nlohmann::json::parse(read_file(opt.report_path));
  } catch (const nlohmann::json::exception& e) {
    throw ccd::Error(ccd::ErrorCode::ParseError,
                     std::string("bad report JSON: ") + e.what());
  }

  const ccd::Admg learned = admg_from_report(report.at("graph"), scm.schema);
  const ccd::GraphScore gscore = ccd::score_graph(learned, scm);

  ordered_json doc;
  doc["graph"]["skeleton_precision"] = gscore.skeleton_precision;
  doc["graph"]["skeleton_recall"] = gscore.skeleton_recall;
  doc["graph"]["skeleton_f1"] = gscore.skeleton_f1;
  doc["graph"]["orientation_accuracy"] = gscore.orientation_accuracy;

  // Diagnosis scoring needs the fault targets and the predicted causes; a
  // graph-only report still gets its graph scored.
  if (report.contains("root_causes") && report.contains("fault")) {
    std::vector<int> predicted;
    for (const auto& name : report.at("root_causes")) {
      const int v = scm.schema.index_of(name.get<std::string>());
      if (v < 0)
        throw ccd::Error(ccd::ErrorCode::ParseError,
                         "root cause outside the schema");
      predicted.push_back(v);
    }
    std::vector<int> targets;
    for (const auto& name : report.at("fault").at("targets")) {
      const int v = scm.schema.index_of(name.get<std::string>());
      if (v < 0)
        throw ccd::Error(ccd::ErrorCode::ParseError,
                         "target outside the schema");
      targets.push_back(v);
    }
    const ccd::DiagnosisScore dscore =
        ccd::score_diagnosis(predicted, scm, targets, opt.eps);
    doc["diagnosis"]["precision"] = dscore.precision;
    doc["diagnosis"]["recall"] = dscore.recall;
    doc["diagnosis"]["jaccard"] = dscore.jaccard;
  }
  write_out(opt.out_path, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"configuration fault diagnosis from observational runs"};
  app.require_subcommand(1);

  SimulateOptions sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "generate a ground-truth system and observations");
  simulate->add_option("--out-schema", sim.out_schema, "schema JSON output")
      ->required();
  simulate->add_option("--out-data", sim.out_data, "observations CSV output")
      ->required();
  simulate->add_option("--out-scm", sim.out_scm, "ground-truth model output");
  simulate->add_option("--rows", sim.rows, "observation count");
  simulate->add_option("--options", sim.spec.options, "config option count");
  simulate->add_option("--events", sim.spec.events, "system event count");
  simulate->add_option("--nfps", sim.spec.nfps, "property count");
  simulate->add_option("--latents", sim.spec.latents, "latent confounder count");
  simulate->add_option("--min-levels", sim.spec.min_levels, "smallest domain");
  simulate->add_option("--max-levels", sim.spec.max_levels, "largest domain");
  simulate->add_option("--nfp-levels", sim.spec.nfp_levels,
                       "property domain size, 0 keeps the shared range");
  simulate->add_option("--density", sim.spec.edge_density, "edge probability");
  simulate->add_option("--max-parents", sim.spec.max_parents,
                       "visible parents per node");
  simulate->add_option("--grid", sim.spec.prob_grid,
                       "probability lattice resolution");
  simulate->add_flag("--full-support", sim.spec.full_support,
                     "every mechanism cell keeps one lattice unit");
  simulate->add_flag("--tail-fault", sim.spec.tail_fault,
                     "shape a rare repairable fault into the first property");
  simulate->add_option("--seed", sim.spec.seed, "generator seed");

  DiscoverOptions disc;
  CLI::App* discover =
      app.add_subcommand("discover", "learn the causal graph from observations");
  add_common(discover, disc.common);
  discover->add_option("--dot", disc.dot_path, "also write graphviz output");
  discover->add_flag("--pag", disc.pag_only,
                     "stop before entropic resolution and emit the PAG");

  PathsOptions paths;
  CLI::App* paths_cmd =
      app.add_subcommand("paths", "rank causal paths into one property");
  add_common(paths_cmd, paths.common);
  paths_cmd->add_option("--target", paths.target, "property name")->required();

  DiagnoseOptions diag;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "find root causes and candidate repairs");
  add_common(diagnose, diag.common);
  diagnose->add_option("--targets", diag.targets, "faulty property names")
      ->required()
      ->delimiter(',');
  diagnose->add_option("--percentile", diag.percentile, "fault tail percentile");
  diagnose->add_option("--row", diag.row, "faulty row index");
  diagnose->add_option("--dot", diag.dot_path, "also write graphviz output");

  RepairOptions rep;
  CLI::App* repair =
      app.add_subcommand("repair", "iterate repairs against an evaluator");
  add_common(repair, rep.common);
  repair->add_option("--targets", rep.targets, "faulty property names")
      ->required()
      ->delimiter(',');
  repair->add_option("--percentile", rep.percentile, "fault tail percentile");
  repair->add_option("--row", rep.row, "faulty row index");
  repair->add_option("--budget", rep.budget, "evaluation budget");
  repair->add_option("--repeats", rep.repeats, "measurements per evaluation");
  repair->add_option("--evaluator-cmd", rep.evaluator_cmd,
                     "shell command implementing the evaluator protocol");
  repair->add_option("--evaluator-scm", rep.evaluator_scm,
                     "ground-truth model JSON used as the evaluator");

  ScoreOptions score;
  CLI::App* score_cmd =
      app.add_subcommand("score", "score a report against the ground truth");
  score_cmd->add_option("--scm", score.scm_path, "ground-truth model JSON")
      ->required();
  score_cmd->add_option("--report", score.report_path, "diagnosis report JSON")
      ->required();
  score_cmd->add_option("--eps", score.eps, "oracle effect cutoff");
  score_cmd->add_option("--out", score.out_path, "output path, '-' for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (discover->parsed()) return run_discover(disc);
    if (paths_cmd->parsed()) return run_paths(paths);
    if (diagnose->parsed()) return run_diagnose(diag);
    if (repair->parsed()) return run_repair(rep);
    if (score_cmd->parsed()) return run_score(score);
  } catch (const ccd::Error& e) {
    std::cerr << "error [" << ccd::error_code_name(e.code()) << "]: "
              << e.what() << "\n";
    return e.code() == ccd::ErrorCode::NoFaultObserved ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
