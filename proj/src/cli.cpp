#include "lightyolo/cli.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lightyolo/builtin_models.hpp"
#include "lightyolo/cost.hpp"
#include "lightyolo/dataset.hpp"
#include "lightyolo/detection.hpp"
#include "lightyolo/error.hpp"
#include "lightyolo/toy_train.hpp"

namespace lightyolo::cli {
namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double parse_number(std::string_view text, std::string_view term) {
  const std::string s(text);
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::kInvalidArgument, "bad number '" + s + "' in --assert term '" + std::string(term) + "'");
  }
  return v;
}

struct Options {
  std::string model = "builtin:baseline";
  std::string model_a = "builtin:baseline";
  std::string model_b = "builtin:fostc3net";
  std::optional<int> nc;
  int64_t imgsz = 640;
  bool json = false;
  uint64_t seed = 0;
  std::string loss = "wiou_v3";
  double alpha = WiouState{}.alpha;
  double delta = WiouState{}.delta;
  double momentum = WiouState{}.momentum;
  double conf = kDefaultConfThresh;
  double nms_iou = kDefaultNmsIou;
  std::string labels;
  std::string preds;
  int steps = 1000;
  double lr = 0.01;
  int trials = 1000;
  std::vector<std::string> asserts;
};

ModelGraph load_graph(const std::string& model, const std::optional<int>& nc) {
  ModelConfig cfg = load_model_config(model);
  if (nc) {
    if (*nc < 1) throw Error(ErrorKind::kInvalidArgument, "--nc must be >= 1");
    cfg.nc = *nc;
  }
  return build_graph(cfg);
}

WiouState focusing_state(const Options& o) {
  if (!(o.alpha > 1.0)) throw Error(ErrorKind::kInvalidArgument, "--alpha must be > 1");
  if (!(o.delta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "--delta must be > 0");
  if (!(o.momentum > 0.0 && o.momentum <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "--momentum must be in (0, 1]");
  WiouState s;
  s.alpha = o.alpha;
  s.delta = o.delta;
  s.momentum = o.momentum;
  return s;
}

LossKind loss_kind(const std::string& name) {
  const auto kind = loss_from_name(name);
  if (!kind) throw Error(ErrorKind::kInvalidArgument, "unknown --loss '" + name + "'");
  return *kind;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  const ModelGraph graph = load_graph(o.model, o.nc);
  const CostReport report = count_model(graph, o.imgsz, o.imgsz);
  if (o.json) {
    out << report_to_json(report).dump(2) << '\n';
  } else {
    out << render_report(report);
  }
  return kExitOk;
}

int cmd_diff(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<Band> bands;
  for (const std::string& a : o.asserts) {
    for (Band& b : parse_bands(a)) bands.push_back(std::move(b));
  }
  const CostReport a = count_model(load_graph(o.model_a, o.nc), o.imgsz, o.imgsz);
  const CostReport b = count_model(load_graph(o.model_b, o.nc), o.imgsz, o.imgsz);
  const CostDiff diff = diff_reports(a, b);

  bool all_ok = true;
  json checks = json::array();
  std::string lines;
  for (const Band& band : bands) {
    const double value = band.metric == "params" ? diff.params_change_pct() : diff.gflops_change_pct();
    const bool ok = band.contains(value);
    all_ok = all_ok && ok;
    checks.push_back({{"metric", band.metric},
                      {"value_pct", value},
                      {"target_pct", band.target_pct},
                      {"tolerance_pp", band.tolerance_pp},
                      {"pass", ok}});
    lines += fmt::format("{} {}: {:+.2f}% (band {:+.2f}% +- {:.2f})\n", ok ? "PASS" : "FAIL", band.metric, value,
                         band.target_pct, band.tolerance_pp);
  }
  if (o.json) {
    json j = diff_to_json(diff);
    if (!bands.empty()) j["asserts"] = checks;
    out << j.dump(2) << '\n';
    if (!all_ok) err << lines;
  } else {
    out << render_diff(diff) << lines;
  }
  return all_ok ? kExitOk : kExitBand;
}

int cmd_forward(const Options& o, std::ostream& out) {
  const ModelGraph graph = load_graph(o.model, o.nc);
  const auto start = Clock::now();
  Rng rng(o.seed);
  Tensor input(Shape{1, kImageChannels, o.imgsz, o.imgsz});
  for (float& v : input.data()) v = static_cast<float>(rng.uniform());
  const GraphWeights weights = init_graph_weights(graph, o.seed);
  const std::vector<Tensor> maps = forward_graph(graph, weights, input);
  const std::vector<int> strides = detect_strides(graph);
  const std::vector<Detection> dets =
      nms(decode(maps, graph.anchors, strides, graph.nc, o.conf), o.nms_iou);
  const double elapsed = ms_since(start);

  if (o.json) {
    json j;
    j["input"] = {1, kImageChannels, o.imgsz, o.imgsz};
    j["maps"] = json::array();
    for (const Tensor& m : maps) {
      double sum = 0.0;
      for (float v : m.data()) sum += v;
      j["maps"].push_back({{"shape", {m.n(), m.c(), m.h(), m.w()}}, {"sum", sum}});
    }
    j["strides"] = strides;
    j["detections"] = dets.size();
    j["elapsed_ms"] = elapsed;
    out << j.dump(2) << '\n';
  } else {
    for (size_t i = 0; i < maps.size(); ++i) {
      out << fmt::format("scale {} stride {}: {}\n", i, strides[i], maps[i].shape().str());
    }
    out << fmt::format("detections after nms: {}\nelapsed {:.1f} ms\n", dets.size(), elapsed);
  }
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  constexpr double kLimit = 1e-4;
  if (o.trials < 1) throw Error(ErrorKind::kInvalidArgument, "--trials must be >= 1");
  const auto start = Clock::now();
  const GradCheckReport r = grad_check(loss_kind(o.loss), o.trials, kDefaultFdStep, o.seed, focusing_state(o));
  const double elapsed = ms_since(start);
  const bool ok = r.max_rel_err < kLimit;
  if (o.json) {
    out << json{{"loss", o.loss},
                {"trials", r.trials},
                {"max_rel_err", r.max_rel_err},
                {"mean_rel_err", r.mean_rel_err},
                {"worst_trial", r.worst_trial},
                {"pass", ok},
                {"elapsed_ms", elapsed}}
               .dump(2)
        << '\n';
  } else {
    out << fmt::format("{} trials={} max_rel_err={:.3e} mean_rel_err={:.3e} worst_trial={} {}\n", o.loss, r.trials,
                       r.max_rel_err, r.mean_rel_err, r.worst_trial, ok ? "ok" : "FAIL");
  }
  return ok ? kExitOk : kExitBand;
}

int cmd_toytrain(const Options& o, std::ostream& out, std::ostream& err) {
  constexpr int kBoxes = 100;
  constexpr double kOutlierFraction = 0.1;
  if (o.steps < 1) throw Error(ErrorKind::kInvalidArgument, "--steps must be >= 1");
  if (!(o.lr > 0.0)) throw Error(ErrorKind::kInvalidArgument, "--lr must be > 0");
  ToyTrainConfig cfg;
  cfg.kind = loss_kind(o.loss);
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  cfg.state = focusing_state(o);
  const BoxMixture mix = make_easy_outlier_mixture(kBoxes, kOutlierFraction, o.seed);
  const ToyTrainResult result = toy_train(mix.targets, mix.init, cfg);
  const GainSplit split = split_gains(result, mix.outlier);
  if (o.json) {
    json rows = json::array();
    for (const TrajectoryRow& r : result.rows) {
      rows.push_back({{"step", r.step}, {"mean_iou", r.mean_iou}, {"mean_loss", r.mean_loss}, {"mean_r", r.mean_r}});
    }
    out << json{{"loss", o.loss},
                {"rows", rows},
                {"outlier_mean_r", split.outlier_mean_gain},
                {"moderate_mean_r", split.moderate_mean_gain},
                {"outliers", split.outliers},
                {"moderates", split.moderates},
                {"final_mean", result.state.mean}}
               .dump(2)
        << '\n';
  } else {
    write_trajectory_csv(out, result);
    err << fmt::format("outlier mean r {:.4f} ({} boxes), moderate mean r {:.4f} ({} boxes)\n",
                       split.outlier_mean_gain, split.outliers, split.moderate_mean_gain, split.moderates);
  }
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.labels.empty() || o.preds.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "eval needs --labels DIR and --preds DIR");
  }
  const int nc = o.nc.value_or(4);
  const Dataset ds = load_dataset(o.labels, o.preds);
  const Metrics m = evaluate(ds.preds, ds.gts, nc);
  if (o.json) {
    json classes = json::array();
    for (const ClassAp& c : m.classes) {
      classes.push_back({{"class", c.class_id}, {"num_gt", c.num_gt}, {"num_pred", c.num_pred}, {"ap", c.ap}});
    }
    json curve = json::array();
    for (const PrPoint& p : m.pr_curve) curve.push_back({p.confidence, p.precision, p.recall});
    out << json{{"images", ds.gts.size()},
                {"precision", m.precision},
                {"recall", m.recall},
                {"map50", m.map50},
                {"map50_95", m.map50_95},
                {"thresholds", m.thresholds},
                {"map", m.map},
                {"classes", classes},
                {"best_f1",
                 {{"f1", m.best_f1},
                  {"confidence", m.best_f1_point.confidence},
                  {"precision", m.best_f1_point.precision},
                  {"recall", m.best_f1_point.recall}}},
                {"pr_curve", curve}}
               .dump(2)
        << '\n';
  } else {
    out << fmt::format("images {}  gts {}  preds {}\n", ds.gts.size(), m.num_gts, m.num_preds);
    out << fmt::format("P {:.4f}  R {:.4f}  mAP@.5 {:.4f}  mAP@.5-.95 {:.4f}\n", m.precision, m.recall, m.map50,
                       m.map50_95);
    out << fmt::format("max F1 {:.4f} at conf {:.4f} (P {:.4f}, R {:.4f})\n", m.best_f1, m.best_f1_point.confidence,
                       m.best_f1_point.precision, m.best_f1_point.recall);
    for (const ClassAp& c : m.classes) {
      if (c.ap.empty()) {
        out << fmt::format("class {}: no ground truth\n", c.class_id);
      } else {
        out << fmt::format("class {}: gt {} pred {} AP@.5 {:.4f}\n", c.class_id, c.num_gt, c.num_pred, c.ap.front());
      }
    }
  }
  return kExitOk;
}

}  // namespace

bool Band::contains(double value_pct) const { return std::abs(value_pct - target_pct) <= tolerance_pp; }

std::vector<Band> parse_bands(std::string_view spec) {
  std::vector<Band> bands;
  std::string normalized(spec);
  for (char& c : normalized) {
    if (c == ',') c = ' ';
  }
  std::istringstream ss(normalized);
  std::string term;
  while (ss >> term) {
    const size_t colon = term.find(':');
    const size_t pct = term.find('%');
    if (colon == std::string::npos || pct == std::string::npos || pct < colon) {
      throw Error(ErrorKind::kInvalidArgument, "--assert term '" + term + "' is not metric:target%±tol");
    }
    Band b;
    b.metric = term.substr(0, colon);
    if (b.metric != "params" && b.metric != "gflops") {
      throw Error(ErrorKind::kInvalidArgument, "--assert metric must be params or gflops, got '" + b.metric + "'");
    }
    b.target_pct = parse_number(std::string_view(term).substr(colon + 1, pct - colon - 1), term);
    std::string_view rest = std::string_view(term).substr(pct + 1);
    if (rest.starts_with("±")) {
      rest.remove_prefix(std::string_view("±").size());
    } else if (rest.starts_with("+-")) {
      rest.remove_prefix(2);
    } else {
      throw Error(ErrorKind::kInvalidArgument, "--assert term '" + term + "' lacks a ±tol part");
    }
    b.tolerance_pp = parse_number(rest, term);
    if (b.tolerance_pp < 0) throw Error(ErrorKind::kInvalidArgument, "--assert tolerance must be >= 0");
    bands.push_back(std::move(b));
  }
  if (bands.empty()) throw Error(ErrorKind::kInvalidArgument, "--assert given without terms");
  return bands;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection-architecture workbench: cost analysis, forward runs, box losses, evaluation.", "lightyolo"};
  app.require_subcommand(1);
  Options o;

  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", o.model, "Model file or builtin:NAME")->capture_default_str();
  };
  auto add_nc = [&](CLI::App* sub) { sub->add_option("--nc", o.nc, "Number of classes (overrides the model)"); };
  auto add_json = [&](CLI::App* sub) { sub->add_flag("--json", o.json, "Machine-readable output"); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "RNG seed")->capture_default_str(); };
  auto add_focusing = [&](CLI::App* sub) {
    sub->add_option("--loss", o.loss, "iou, ciou, wiou_v1, wiou_v2 or wiou_v3")
        ->check(CLI::IsMember({"iou", "ciou", "wiou_v1", "wiou_v2", "wiou_v3"}))
        ->capture_default_str();
    sub->add_option("--alpha", o.alpha, "Focusing alpha")->capture_default_str();
    sub->add_option("--delta", o.delta, "Focusing delta")->capture_default_str();
    sub->add_option("--momentum", o.momentum, "EMA momentum of the mean IoU loss")->capture_default_str();
  };

  CLI::App* analyze = app.add_subcommand("analyze", "Per-layer parameter and MAC report");
  add_model(analyze);
  add_nc(analyze);
  add_json(analyze);

  CLI::App* diff = app.add_subcommand("diff", "Compare the cost of two models");
  diff->add_option("--a", o.model_a, "Reference model")->capture_default_str();
  diff->add_option("--b", o.model_b, "Candidate model")->capture_default_str();
  add_nc(diff);
  add_json(diff);
  diff->add_option("--assert", o.asserts, "Bands such as params:-26.61%±4 gflops:-13.09%±4");

  CLI::App* forward = app.add_subcommand("forward", "Run a seeded forward pass and decode");
  add_model(forward);
  add_nc(forward);
  add_json(forward);
  add_seed(forward);
  forward->add_option("--conf", o.conf, "Score threshold")->capture_default_str();
  forward->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold")->capture_default_str();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Closed-form vs finite-difference box-loss gradients");
  add_focusing(gradcheck);
  add_json(gradcheck);
  add_seed(gradcheck);
  gradcheck->add_option("--trials", o.trials, "Random box pairs")->capture_default_str();

  CLI::App* toytrain = app.add_subcommand("toytrain", "Gradient descent on the easy/outlier box mixture");
  add_focusing(toytrain);
  add_json(toytrain);
  add_seed(toytrain);
  toytrain->add_option("--steps", o.steps, "Iterations")->capture_default_str();
  toytrain->add_option("--lr", o.lr, "Learning rate")->capture_default_str();

  CLI::App* eval = app.add_subcommand("eval", "Precision, recall and mAP over label/prediction directories");
  eval->add_option("--labels", o.labels, "Directory of <stem>.txt label files")->required();
  eval->add_option("--preds", o.preds, "Directory of <stem>.txt prediction files")->required();
  add_nc(eval);
  add_json(eval);

  // --imgsz defaults differ per command.
  int64_t analyze_imgsz = 640;
  int64_t forward_imgsz = 64;
  analyze->add_option("--imgsz", analyze_imgsz, "Square input size, a multiple of 32")->capture_default_str();
  diff->add_option("--imgsz", analyze_imgsz, "Square input size, a multiple of 32")->capture_default_str();
  forward->add_option("--imgsz", forward_imgsz, "Square input size, a multiple of 32")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (analyze->parsed()) {
      o.imgsz = analyze_imgsz;
      return cmd_analyze(o, out);
    }
    if (diff->parsed()) {
      o.imgsz = analyze_imgsz;
      return cmd_diff(o, out, err);
    }
    if (forward->parsed()) {
      o.imgsz = forward_imgsz;
      return cmd_forward(o, out);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(o, out);
    if (toytrain->parsed()) return cmd_toytrain(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace lightyolo::cli
