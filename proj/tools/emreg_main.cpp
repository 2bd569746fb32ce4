// emreg: robust global registration of fragment graphs from the command line.

#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>

#include "emreg/gradient_check.hpp"
#include "emreg/io.hpp"
#include "emreg/mixture_em.hpp"
#include "emreg/synthetic.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kParse = 3,
  kValidate = 4,
  kSolver = 5,
  kIo = 6,
  kNotConverged = 7,
  kCheckFailed = 8,
};

struct SolveArgs {
  std::string in;
  std::string mode = "cauchy";
  std::string gaussian_theta = "squared";
  emreg::Hyperparams params;
  std::string out_poses;
  std::string out_report;
  std::string out_csv;
  bool require_converged = false;
};

struct SimulateArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

struct EvalArgs {
  std::string poses;
  std::string graph;
  std::string report;
};

struct CheckGradArgs {
  std::uint64_t seed = 1;
  std::size_t blocks = 1000;
};

emreg::ProblemGraph load_valid_graph(const std::string& path) {
  emreg::ProblemGraph graph = emreg::parse_graph(emreg::read_file(path));
  if (auto violations = emreg::validate(graph); !violations.empty()) {
    throw emreg::ValidationError(std::move(violations));
  }
  return graph;
}

int run_solve(SolveArgs& args) {
  args.params.mode = args.mode == "gaussian" ? emreg::ErrorModel::gaussian : emreg::ErrorModel::cauchy;
  args.params.gaussian_theta =
      args.gaussian_theta == "literal" ? emreg::GaussianTheta::literal : emreg::GaussianTheta::squared;
  try {
    emreg::check_hyperparams(args.params);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  const emreg::ProblemGraph graph = load_valid_graph(args.in);
  const emreg::EmResult result = emreg::run_em(graph, args.params);
  const emreg::RunReport report = emreg::make_report(graph, args.params, result);

  if (!args.out_poses.empty()) emreg::write_file(args.out_poses, emreg::write_poses(result.poses));
  if (!args.out_report.empty()) emreg::write_file(args.out_report, emreg::write_report(report));
  if (!args.out_csv.empty()) {
    emreg::write_file(args.out_csv, emreg::write_trajectory_csv(result.poses));
  }

  std::size_t inliers = 0;
  for (const auto& l : report.loops) inliers += l.inlier ? 1 : 0;
  std::cout << "fragments " << graph.num_fragments << "\n"
            << "loops " << graph.loops.size() << "\n"
            << "inlier_loops " << inliers << "\n"
            << "em_iterations " << result.trace.iterations.size() << "\n"
            << "converged " << (result.trace.converged ? 1 : 0) << "\n"
            << "theta " << emreg::format_number(result.posterior.theta) << "\n";
  if (report.metrics) {
    std::cout << "mean_translation_error "
              << emreg::format_number(report.metrics->mean_translation_error) << "\n"
              << "precision " << emreg::format_number(report.metrics->precision) << "\n"
              << "recall " << emreg::format_number(report.metrics->recall) << "\n";
  }
  if (args.require_converged && !result.trace.converged) {
    std::cerr << "error: EM did not converge within " << args.params.max_em_iters << " iterations\n";
    return kNotConverged;
  }
  return kOk;
}

int run_simulate(const SimulateArgs& args, bool seed_given) {
  emreg::ScenarioConfig config;
  if (!args.config.empty()) config = emreg::parse_scenario_config(emreg::read_file(args.config));
  if (seed_given) config.seed = args.seed;
  emreg::ProblemGraph graph;
  try {
    graph = emreg::generate(config);
  } catch (const emreg::ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  emreg::write_file(args.out, emreg::write_graph(graph));
  std::size_t inliers = 0;
  for (const auto& l : graph.loops) inliers += l.oracle_inlier.value_or(false) ? 1 : 0;
  std::cout << "fragments " << graph.num_fragments << "\n"
            << "loops " << graph.loops.size() << "\n"
            << "true_loops " << inliers << "\n";
  return kOk;
}

int run_eval(const EvalArgs& args) {
  const emreg::ProblemGraph graph = load_valid_graph(args.graph);
  const std::vector<emreg::Pose> poses = emreg::parse_poses(emreg::read_file(args.poses));
  if (poses.size() != graph.num_fragments) {
    throw emreg::ValidationError(
        {{emreg::ViolationKind::pose_count_mismatch, poses.size(), graph.num_fragments}});
  }
  std::map<std::pair<std::size_t, std::size_t>, bool> predicted;
  for (const auto& rec : emreg::parse_report_loops(emreg::read_file(args.report))) {
    predicted[{rec.i, rec.j}] = rec.inlier;
  }
  std::vector<bool> labels;
  for (const auto& loop : graph.loops) {
    const auto it = predicted.find({loop.i, loop.j});
    if (it == predicted.end()) {
      std::cerr << "error: report has no label for loop " << loop.i << " - " << loop.j << "\n";
      return kValidate;
    }
    labels.push_back(it->second);
  }
  emreg::EvalResult eval;
  try {
    eval = emreg::evaluate(poses, graph, labels);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidate;
  }
  std::cout << "mean_translation_error " << emreg::format_number(eval.mean_translation_error) << "\n"
            << "precision " << emreg::format_number(eval.precision) << "\n"
            << "recall " << emreg::format_number(eval.recall) << "\n"
            << "true_positives " << eval.true_positives << "\n"
            << "false_positives " << eval.false_positives << "\n"
            << "true_negatives " << eval.true_negatives << "\n"
            << "false_negatives " << eval.false_negatives << "\n";
  return kOk;
}

int run_check_grad(const CheckGradArgs& args) {
  bool ok = true;
  for (const auto kernel : {emreg::Kernel::cauchy_log, emreg::Kernel::squared}) {
    const auto r = emreg::check_gradients(kernel, args.blocks, args.seed);
    const char* name = kernel == emreg::Kernel::cauchy_log ? "cauchy_log" : "squared";
    std::cout << name << " blocks " << r.blocks << " max_relative_error "
              << emreg::format_number(r.max_relative_error) << " failures " << r.failures << "\n";
    ok = ok && r.failures == 0;
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust EM registration of point-cloud fragment graphs"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Estimate poses and loop labels for a graph file");
  solve_cmd->add_option("--in", solve.in, "Input graph file")->required();
  solve_cmd->add_option("--mode", solve.mode, "Error model")
      ->check(CLI::IsMember({"cauchy", "gaussian"}));
  solve_cmd->add_option("--sigma", solve.params.sigma, "Cauchy scale (m)");
  solve_cmd->add_option("--p-hat", solve.params.p_hat, "Posterior of a median-quality loop");
  solve_cmd->add_option("--epsilon", solve.params.epsilon, "Residual bound for gaussian mode (m)");
  solve_cmd->add_option("--gaussian-theta", solve.gaussian_theta,
                        "Gaussian Theta calibration: squared (eps^4) or literal (eps^2)")
      ->check(CLI::IsMember({"squared", "literal"}));
  solve_cmd->add_flag("--freeze-theta", solve.params.freeze_theta,
                      "Keep the Theta learned at the initial poses");
  solve_cmd->add_option("--max-em-iters", solve.params.max_em_iters, "EM iteration cap");
  solve_cmd->add_option("--em-tol", solve.params.em_tol, "Relative objective change to stop EM");
  solve_cmd->add_option("--threshold", solve.params.inlier_threshold, "Inlier posterior threshold");
  solve_cmd->add_option("--out-poses", solve.out_poses, "Write POSE records here");
  solve_cmd->add_option("--out-report", solve.out_report, "Write the run report here");
  solve_cmd->add_option("--out-csv", solve.out_csv, "Write id,tx,ty,tz rows here");
  solve_cmd->add_flag("--require-converged", solve.require_converged,
                      "Fail when EM stops at the iteration cap");

  SimulateArgs simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic scenario graph");
  sim_cmd->add_option("--config", simulate.config, "Scenario config (JSON)");
  auto* seed_opt = sim_cmd->add_option("--seed", simulate.seed, "RNG seed (overrides the config)");
  sim_cmd->add_option("--out", simulate.out, "Output graph file")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score poses and loop labels against ground truth");
  eval_cmd->add_option("--poses", eval.poses, "POSE file")->required();
  eval_cmd->add_option("--graph", eval.graph, "Graph file with GT and LABEL records")->required();
  eval_cmd->add_option("--labels-from-report", eval.report, "Run report with loop labels")
      ->required();

  CheckGradArgs grad;
  auto* grad_cmd = app.add_subcommand("check-grad", "Finite-difference check of block gradients");
  grad_cmd->add_option("--seed", grad.seed, "RNG seed");
  grad_cmd->add_option("--blocks", grad.blocks, "Random blocks per kernel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (solve_cmd->parsed()) return run_solve(solve);
    if (sim_cmd->parsed()) return run_simulate(simulate, seed_opt->count() > 0);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (grad_cmd->parsed()) return run_check_grad(grad);
  } catch (const emreg::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const emreg::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidate;
  } catch (const emreg::AlignmentError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kSolver;
  } catch (const emreg::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kSolver;
  } catch (const emreg::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
