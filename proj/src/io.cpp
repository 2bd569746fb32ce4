#include "emreg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <utility>

#include <json.hpp>

namespace emreg {
namespace {

std::string parse_message(std::size_t line, const std::string& reason) {
  std::ostringstream os;
  os << "line " << line << ": " << reason;
  return os.str();
}

std::vector<std::string_view> tokenize(std::string_view line) {
  if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    if (end > pos) out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

class LineReader {
 public:
  explicit LineReader(std::size_t line) : line_(line) {}

  [[nodiscard]] std::size_t index(std::string_view tok, const char* what) const {
    std::size_t v = 0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) fail(std::string("expected a non-negative integer for ") + what +
                                              ", got '" + std::string(tok) + "'");
    return v;
  }

  [[nodiscard]] double number(std::string_view tok) const {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) fail("expected a number, got '" + std::string(tok) + "'");
    return v;
  }

  [[nodiscard]] Vec3 vec3(std::span<const std::string_view> toks) const {
    return {number(toks[0]), number(toks[1]), number(toks[2])};
  }

  [[nodiscard]] Pose pose(std::span<const std::string_view> toks) const {
    const Vec3 t = vec3(toks.subspan(0, 3));
    const Eigen::Quaterniond q(number(toks[3]), number(toks[4]), number(toks[5]), number(toks[6]));
    if (!t.allFinite() || !q.coeffs().allFinite()) fail("pose has non-finite components");
    if (q.norm() < 1e-12) fail("pose quaternion has zero norm");
    return {q, t};
  }

  void expect_count(std::span<const std::string_view> toks, std::size_t n) const {
    if (toks.size() != n) {
      std::ostringstream os;
      os << "'" << toks[0] << "' record takes " << n - 1 << " fields, got " << toks.size() - 1;
      fail(os.str());
    }
  }

  [[noreturn]] void fail(const std::string& reason) const { throw ParseError(line_, reason); }

 private:
  std::size_t line_;
};

struct PendingBlock {
  std::size_t header_line = 0;
  std::size_t declared = 0;
  std::size_t remaining = 0;
  std::vector<FeatureMatch>* matches = nullptr;
};

void append_pose(std::string& out, std::string_view tag, std::size_t id, const Pose& pose) {
  const auto& t = pose.translation();
  const auto& q = pose.rotation();
  out += tag;
  out += ' ';
  out += std::to_string(id);
  for (double v : {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()}) {
    out += ' ';
    out += format_number(v);
  }
  out += '\n';
}

void append_match(std::string& out, const FeatureMatch& m) {
  out += 'M';
  for (double v : {m.p.x(), m.p.y(), m.p.z(), m.q.x(), m.q.y(), m.q.z()}) {
    out += ' ';
    out += format_number(v);
  }
  out += '\n';
}

std::vector<Pose> collect_poses(std::map<std::size_t, std::pair<Pose, std::size_t>>& records,
                                std::size_t n, const char* tag) {
  if (records.size() != n) {
    std::ostringstream os;
    os << tag << " records cover " << records.size() << " of " << n << " fragments";
    throw ParseError(records.begin()->second.second, os.str());
  }
  std::vector<Pose> out;
  out.reserve(n);
  for (auto& [id, rec] : records) out.push_back(rec.first);
  return out;
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& reason)
    : std::runtime_error(parse_message(line, reason)), line_(line), reason_(reason) {}

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return {buf, ptr};
}

const char* to_string(ErrorModel mode) { return mode == ErrorModel::cauchy ? "cauchy" : "gaussian"; }

const char* to_string(GaussianTheta reading) {
  return reading == GaussianTheta::squared ? "squared" : "literal";
}

ProblemGraph parse_graph(std::string_view text) {
  ProblemGraph graph;
  bool have_header = false;
  std::map<std::size_t, std::pair<Pose, std::size_t>> init;
  std::map<std::size_t, std::pair<Pose, std::size_t>> gt;
  struct LabelRecord {
    std::size_t i, j, line;
    bool value;
  };
  std::vector<LabelRecord> labels;
  // Points into the most recently pushed constraint only.
  PendingBlock pending;

  const auto lines = split_lines(text);
  std::size_t lineno = 0;
  for (const auto raw : lines) {
    ++lineno;
    const auto toks = tokenize(raw);
    if (toks.empty()) continue;
    const LineReader rd(lineno);
    const std::string_view kind = toks[0];

    if (kind == "M") {
      if (pending.remaining == 0) rd.fail("'M' record outside an ODOM or LOOP block");
      rd.expect_count(toks, 7);
      const std::span<const std::string_view> fields(toks.data() + 1, 6);
      pending.matches->push_back({rd.vec3(fields.subspan(0, 3)), rd.vec3(fields.subspan(3, 3))});
      --pending.remaining;
      continue;
    }
    if (pending.remaining > 0) {
      std::ostringstream os;
      os << "expected " << pending.remaining << " more 'M' records for the block at line "
         << pending.header_line << ", got '" << kind << "'";
      rd.fail(os.str());
    }

    if (!have_header) {
      if (kind != "PCG") rd.fail("file must start with a 'PCG 1 <N>' header");
      rd.expect_count(toks, 3);
      if (rd.index(toks[1], "format version") != 1) rd.fail("unsupported format version");
      graph.num_fragments = rd.index(toks[2], "fragment count");
      have_header = true;
      continue;
    }

    if (kind == "PCG") {
      rd.fail("duplicate header");
    } else if (kind == "INIT" || kind == "GT") {
      rd.expect_count(toks, 9);
      const std::size_t id = rd.index(toks[1], "fragment id");
      if (id >= graph.num_fragments) rd.fail("fragment id out of range");
      auto& target = kind == "INIT" ? init : gt;
      const std::span<const std::string_view> fields(toks.data() + 2, 7);
      if (!target.emplace(id, std::make_pair(rd.pose(fields), lineno)).second) {
        rd.fail("duplicate " + std::string(kind) + " record for fragment " + std::to_string(id));
      }
    } else if (kind == "ODOM") {
      rd.expect_count(toks, 3);
      OdometryConstraint odom;
      odom.i = rd.index(toks[1], "fragment index");
      const std::size_t k = rd.index(toks[2], "match count");
      odom.matches.reserve(std::min<std::size_t>(k, 1u << 16));
      graph.odometry.push_back(std::move(odom));
      pending = {lineno, k, k, &graph.odometry.back().matches};
    } else if (kind == "LOOP") {
      rd.expect_count(toks, 4);
      LoopClosureConstraint loop;
      loop.i = rd.index(toks[1], "fragment index");
      loop.j = rd.index(toks[2], "fragment index");
      const std::size_t k = rd.index(toks[3], "match count");
      loop.matches.reserve(std::min<std::size_t>(k, 1u << 16));
      graph.loops.push_back(std::move(loop));
      pending = {lineno, k, k, &graph.loops.back().matches};
    } else if (kind == "LABEL") {
      rd.expect_count(toks, 4);
      const std::size_t i = rd.index(toks[1], "fragment index");
      const std::size_t j = rd.index(toks[2], "fragment index");
      const std::size_t v = rd.index(toks[3], "label");
      if (v > 1) rd.fail("label must be 0 or 1");
      labels.push_back({i, j, lineno, v == 1});
    } else {
      rd.fail("unknown record '" + std::string(kind) + "'");
    }
  }

  if (!have_header) throw ParseError(std::max<std::size_t>(lineno, 1), "missing 'PCG 1 <N>' header");
  if (pending.remaining > 0) {
    std::ostringstream os;
    os << "block declares " << pending.declared << " matches but the file ends after "
       << pending.matches->size();
    throw ParseError(pending.header_line, os.str());
  }

  for (const auto& label : labels) {
    auto it = std::find_if(graph.loops.begin(), graph.loops.end(),
                           [&](const auto& l) { return l.i == label.i && l.j == label.j; });
    if (it == graph.loops.end()) {
      throw ParseError(label.line, "LABEL for an undeclared loop " + std::to_string(label.i) +
                                       " - " + std::to_string(label.j));
    }
    if (it->oracle_inlier) throw ParseError(label.line, "duplicate LABEL record");
    it->oracle_inlier = label.value;
  }
  if (!init.empty()) graph.initial_poses = collect_poses(init, graph.num_fragments, "INIT");
  if (!gt.empty()) graph.ground_truth = collect_poses(gt, graph.num_fragments, "GT");

  std::stable_sort(graph.odometry.begin(), graph.odometry.end(),
                   [](const auto& a, const auto& b) { return a.i < b.i; });
  std::stable_sort(graph.loops.begin(), graph.loops.end(), [](const auto& a, const auto& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  return graph;
}

std::string write_graph(const ProblemGraph& graph) {
  std::string out = "PCG 1 " + std::to_string(graph.num_fragments) + "\n";
  if (graph.initial_poses) {
    for (std::size_t k = 0; k < graph.initial_poses->size(); ++k) {
      append_pose(out, "INIT", k, (*graph.initial_poses)[k]);
    }
  }
  if (graph.ground_truth) {
    for (std::size_t k = 0; k < graph.ground_truth->size(); ++k) {
      append_pose(out, "GT", k, (*graph.ground_truth)[k]);
    }
  }
  for (const auto& odom : graph.odometry) {
    out += "ODOM " + std::to_string(odom.i) + " " + std::to_string(odom.matches.size()) + "\n";
    for (const auto& m : odom.matches) append_match(out, m);
  }
  for (const auto& loop : graph.loops) {
    out += "LOOP " + std::to_string(loop.i) + " " + std::to_string(loop.j) + " " +
           std::to_string(loop.matches.size()) + "\n";
    for (const auto& m : loop.matches) append_match(out, m);
  }
  for (const auto& loop : graph.loops) {
    if (loop.oracle_inlier) {
      out += "LABEL " + std::to_string(loop.i) + " " + std::to_string(loop.j) + " " +
             (*loop.oracle_inlier ? "1" : "0") + "\n";
    }
  }
  return out;
}

std::string write_poses(std::span<const Pose> poses) {
  std::string out;
  for (std::size_t k = 0; k < poses.size(); ++k) append_pose(out, "POSE", k, poses[k]);
  return out;
}

std::vector<Pose> parse_poses(std::string_view text) {
  std::map<std::size_t, Pose> records;
  std::size_t lineno = 0;
  for (const auto raw : split_lines(text)) {
    ++lineno;
    const auto toks = tokenize(raw);
    if (toks.empty()) continue;
    const LineReader rd(lineno);
    if (toks[0] != "POSE") rd.fail("expected a POSE record");
    rd.expect_count(toks, 9);
    const std::size_t id = rd.index(toks[1], "pose id");
    if (id != records.size()) rd.fail("pose ids must be consecutive from 0");
    records.emplace(id, rd.pose(std::span<const std::string_view>(toks.data() + 2, 7)));
  }
  std::vector<Pose> out;
  out.reserve(records.size());
  for (auto& [id, p] : records) out.push_back(p);
  return out;
}

std::string write_trajectory_csv(std::span<const Pose> poses) {
  std::string out = "id,tx,ty,tz\n";
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto& t = poses[k].translation();
    out += std::to_string(k) + "," + format_number(t.x()) + "," + format_number(t.y()) + "," +
           format_number(t.z()) + "\n";
  }
  return out;
}

RunReport make_report(const ProblemGraph& graph, const Hyperparams& params,
                      const EmResult& result) {
  RunReport report;
  report.params = params;
  report.num_fragments = graph.num_fragments;
  report.trace = result.trace;
  report.final_theta = result.posterior.theta;
  const auto labels = classify_loops(result.posterior, params.inlier_threshold);
  for (std::size_t k = 0; k < graph.loops.size(); ++k) {
    report.loops.push_back({graph.loops[k].i, graph.loops[k].j, result.posterior.loop_errors[k],
                            result.posterior.posteriors[k], labels[k]});
  }
  if (graph.ground_truth && graph.num_fragments > 5 &&
      (graph.loops.empty() || graph.has_oracle_labels())) {
    report.metrics = evaluate(result.poses, graph, labels);
  }
  return report;
}

std::string write_report(const RunReport& r) {
  std::ostringstream os;
  const auto num = [](double v) { return format_number(v); };
  os << "# emreg run report\n";
  os << "mode " << to_string(r.params.mode) << "\n";
  os << "sigma " << num(r.params.sigma) << "\n";
  os << "p_hat " << num(r.params.p_hat) << "\n";
  os << "epsilon " << num(r.params.epsilon) << "\n";
  os << "gaussian_theta " << to_string(r.params.gaussian_theta) << "\n";
  os << "freeze_theta " << (r.params.freeze_theta ? 1 : 0) << "\n";
  os << "threshold " << num(r.params.inlier_threshold) << "\n";
  os << "max_em_iters " << r.params.max_em_iters << "\n";
  os << "em_tol " << num(r.params.em_tol) << "\n";
  os << "fragments " << r.num_fragments << "\n";
  os << "loops " << r.loops.size() << "\n";
  os << "em_iterations " << r.trace.iterations.size() << "\n";
  os << "converged " << (r.trace.converged ? 1 : 0) << "\n";
  os << "theta_final " << num(r.final_theta) << "\n";
  os << "inliers_final "
     << std::count_if(r.loops.begin(), r.loops.end(), [](const auto& l) { return l.inlier; })
     << "\n";

  os << "\n[em_trace]\n";
  os << "iter theta objective_before objective_after inliers max_pose_update solver_iterations "
        "accepted_steps termination\n";
  for (std::size_t k = 0; k < r.trace.iterations.size(); ++k) {
    const auto& it = r.trace.iterations[k];
    os << k << ' ' << num(it.theta) << ' ' << num(it.objective_before) << ' '
       << num(it.objective_after) << ' ' << it.inliers << ' ' << num(it.max_pose_update) << ' '
       << it.solver.iterations << ' ' << it.solver.accepted_steps << ' '
       << to_string(it.solver.termination) << "\n";
  }

  os << "\n[loops]\n";
  os << "i j error posterior label\n";
  for (const auto& l : r.loops) {
    os << l.i << ' ' << l.j << ' ' << num(l.error) << ' ' << num(l.posterior) << ' '
       << (l.inlier ? 1 : 0) << "\n";
  }

  if (r.metrics) {
    os << "\n[metrics]\n";
    os << "mean_translation_error " << num(r.metrics->mean_translation_error) << "\n";
    os << "precision " << num(r.metrics->precision) << "\n";
    os << "recall " << num(r.metrics->recall) << "\n";
    os << "true_positives " << r.metrics->true_positives << "\n";
    os << "false_positives " << r.metrics->false_positives << "\n";
    os << "true_negatives " << r.metrics->true_negatives << "\n";
    os << "false_negatives " << r.metrics->false_negatives << "\n";
  }
  return os.str();
}

std::vector<LoopRecord> parse_report_loops(std::string_view text) {
  std::vector<LoopRecord> out;
  bool in_loops = false;
  bool header_seen = false;
  bool found = false;
  std::size_t lineno = 0;
  for (const auto raw : split_lines(text)) {
    ++lineno;
    const auto toks = tokenize(raw);
    if (toks.empty()) continue;
    if (toks[0].starts_with('[')) {
      in_loops = toks[0] == "[loops]";
      found = found || in_loops;
      header_seen = false;
      continue;
    }
    if (!in_loops) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const LineReader rd(lineno);
    rd.expect_count(toks, 5);
    LoopRecord rec;
    rec.i = rd.index(toks[0], "fragment index");
    rec.j = rd.index(toks[1], "fragment index");
    rec.error = rd.number(toks[2]);
    rec.posterior = rd.number(toks[3]);
    const std::size_t label = rd.index(toks[4], "label");
    if (label > 1) rd.fail("label must be 0 or 1");
    rec.inlier = label == 1;
    out.push_back(rec);
  }
  if (!found) throw ParseError(std::max<std::size_t>(lineno, 1), "report has no [loops] section");
  return out;
}

ScenarioConfig parse_scenario_config(std::string_view json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("scenario config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(0, "scenario config must be a JSON object");

  ScenarioConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_fragments") c.num_fragments = value.get<std::size_t>();
      else if (key == "shape") {
        const auto s = value.get<std::string>();
        if (s == "line") c.shape = TrajectoryShape::line;
        else if (s == "circle") c.shape = TrajectoryShape::circle;
        else if (s == "figure-eight" || s == "figure_eight") c.shape = TrajectoryShape::figure_eight;
        else throw ParseError(0, "unknown trajectory shape '" + s + "'");
      }
      else if (key == "laps") c.laps = value.get<std::size_t>();
      else if (key == "lap_offset") c.lap_offset = value.get<double>();
      else if (key == "spacing") c.spacing = value.get<double>();
      else if (key == "fragment_extent") c.fragment_extent = value.get<double>();
      else if (key == "height_amplitude") c.height_amplitude = value.get<double>();
      else if (key == "height_waves") c.height_waves = value.get<double>();
      else if (key == "matches_per_constraint") c.matches_per_constraint = value.get<std::size_t>();
      else if (key == "loops_per_keyframe") c.loops_per_keyframe = value.get<std::size_t>();
      else if (key == "keyframe_stride") c.keyframe_stride = value.get<std::size_t>();
      else if (key == "match_noise") c.match_noise = value.get<double>();
      else if (key == "outlier_match_fraction") c.outlier_match_fraction = value.get<double>();
      else if (key == "outlier_displacement") c.outlier_displacement = value.get<double>();
      else if (key == "outlier_loop_fraction") c.outlier_loop_fraction = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ParseError(0, "unknown scenario config key '" + key + "'");
    }
  } catch (const json::type_error& e) {
    throw ParseError(0, std::string("scenario config has a field of the wrong type: ") + e.what());
  }
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace emreg
