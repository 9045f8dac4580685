// Batch experiment runner: every subcommand reads a JSON config, runs one
// module pipeline, writes its artifacts atomically and prints a one-line
// summary. Reruns with identical configs produce byte-identical artifacts;
// timestamps live in the .meta.json sidecars only.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmpcnn/constructions.hpp"
#include "hmpcnn/io.hpp"
#include "hmpcnn/risk_bounds.hpp"
#include "hmpcnn/training.hpp"

using nlohmann::json;
using namespace hmpcnn;

namespace {

constexpr const char* kToolVersion = "hmpcnn 0.1.0";

struct CliError {
  int exit_code;
  std::string kind;
  std::string message;
  std::string field;
};

[[noreturn]] void fail_config(const std::string& message, const std::string& field = "") {
  throw CliError{1, "config", message, field};
}

[[noreturn]] void fail_io(const std::string& message) { throw CliError{2, "io", message}; }

template <class T>
T req(const json& j, const char* field) {
  if (!j.contains(field)) fail_config(std::string("missing required key: ") + field, field);
  try {
    return j.at(field).get<T>();
  } catch (const std::exception& e) {
    fail_config(std::string("bad value for key '") + field + "': " + e.what(), field);
  }
}

template <class T>
T opt(const json& j, const char* field, T def) {
  if (!j.contains(field)) return def;
  try {
    return j.at(field).get<T>();
  } catch (const std::exception& e) {
    fail_config(std::string("bad value for key '") + field + "': " + e.what(), field);
  }
}

struct Context {
  json config;
  std::uint64_t config_hash = 0;
  std::filesystem::path out_root;
  int threads = 0;
  bool seed_override = false;
  std::uint64_t seed = 0;

  std::string out_path(const std::string& rel) const {
    return (out_root / rel).string();
  }

  std::uint64_t pick_seed(const char* field) const {
    if (seed_override) return seed;
    return req<std::uint64_t>(config, field);
  }

  json stamp() const {
    json j;
    j["config_hash"] = io::hex64(config_hash);
    j["tool_version"] = kToolVersion;
    return j;
  }

  void write_artifact(const std::string& rel, const std::string& contents) const {
    const std::string path = out_path(rel);
    io::atomic_write_text(path, contents);
    json meta;
    meta["config_hash"] = io::hex64(config_hash);
    meta["tool_version"] = kToolVersion;
    meta["written_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    io::atomic_write_text(path + ".meta.json", meta.dump(2) + "\n");
  }

  void write_json(const std::string& rel, json j) const {
    write_artifact(rel, j.dump(2) + "\n");
  }
};

std::string require_file(const Context& ctx, const std::string& rel) {
  const std::string path = ctx.out_path(rel);
  if (!std::filesystem::exists(path)) fail_io("missing input artifact, expected at: " + path);
  return path;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.level = req<int>(j, "level");
  spec.family = node_family_from_string(req<std::string>(j, "family"));
  spec.d1 = opt<int>(j, "d1", 0);
  spec.d2 = opt<int>(j, "d2", 0);
  spec.constant_value = opt<double>(j, "constant_value", 0.5);
  return spec;
}

ScheduleConstants schedule_constants_from_json(const json& j) {
  ScheduleConstants c;
  c.c1 = opt<double>(j, "c1", 1.0);
  c.c2 = opt<double>(j, "c2", 1.0);
  c.c3 = opt<double>(j, "c3", 1.0);
  c.c4 = opt<int>(j, "c4", 8);
  c.c5 = opt<int>(j, "c5", 8);
  return c;
}

TrainConfig train_config_from_json(const json& j, int threads) {
  TrainConfig cfg;
  cfg.optimizer = optimizer_from_string(opt<std::string>(j, "optimizer", "adam"));
  cfg.step_size = opt<double>(j, "step_size", 0.01);
  cfg.step_decay = opt<double>(j, "step_decay", 0.0);
  cfg.momentum = opt<double>(j, "momentum", 0.9);
  cfg.epochs = opt<int>(j, "epochs", 200);
  cfg.batch_size = opt<int>(j, "batch_size", 0);
  cfg.restarts = opt<int>(j, "restarts", 1);
  cfg.init_scale = opt<double>(j, "init_scale", 0.5);
  cfg.seed = opt<std::uint64_t>(j, "seed", 0);
  cfg.float_width = opt<int>(j, "float_width", 64);
  cfg.grad_check = opt<bool>(j, "grad_check", false);
  cfg.threads = threads;
  return cfg;
}

json risk_report_to_json(const RiskReport& r) {
  json j;
  j["r01"] = r.r01;
  j["r_star"] = r.r_star;
  j["excess01"] = r.excess01;
  j["rphi"] = r.rphi;
  j["rphi_star"] = r.rphi_star;
  j["excessphi"] = r.excessphi;
  j["se01"] = r.se01;
  j["se_star"] = r.se_star;
  j["se_excess01"] = r.se_excess01;
  j["se_rphi"] = r.se_rphi;
  j["se_rphi_star"] = r.se_rphi_star;
  j["se_excessphi"] = r.se_excessphi;
  j["n_mc"] = r.n_mc;
  j["seed"] = r.seed;
  return j;
}

json check_to_json(const ComparisonCheck& c) {
  json j;
  j["lhs"] = c.lhs;
  j["rhs"] = c.rhs;
  j["slack"] = c.slack;
  j["slack_tol"] = c.slack_tol;
  j["holds"] = c.holds;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_gen_model(const Context& ctx) {
  const ModelSpec spec = model_spec_from_json(ctx.config);
  const std::uint64_t seed = ctx.pick_seed("seed");
  HmpModel model = make_model(spec, seed);
  const double gamma = opt<double>(ctx.config, "sharpen_gamma", 0.0);
  if (gamma >= 1.0) model = sharpen_margin(model, gamma);

  const int audit_pairs = opt<int>(ctx.config, "audit_pairs", 10000);
  double worst_ratio = 0.0;
  for (int idx = 0; idx < model.node_count(); ++idx) {
    rng::Stream st(seed, rng::Tag::audit, static_cast<std::uint64_t>(idx));
    worst_ratio = std::max(
        worst_ratio, lipschitz_audit(model.nodes()[idx], -2.0, 2.0, audit_pairs, st));
  }

  const std::string out_model = opt<std::string>(ctx.config, "out_model", "model.json");
  ctx.write_artifact(out_model, io::model_to_json(model));

  json summary = ctx.stamp();
  summary["seed"] = seed;
  summary["c_cert"] = model.lipschitz();
  summary["audit_worst_ratio"] = worst_ratio;
  summary["model_id"] = io::hex64(io::model_id(model));
  summary["nodes"] = model.node_count();
  ctx.write_json(opt<std::string>(ctx.config, "out_summary", out_model + ".summary.json"),
                 summary);
  std::cout << "gen-model: level " << model.level() << ", " << model.node_count()
            << " nodes, c_cert " << model.lipschitz() << ", audit " << worst_ratio << " -> "
            << out_model << "\n";
  return 0;
}

int cmd_sample(const Context& ctx) {
  const HmpModel model = io::load_model(require_file(ctx, req<std::string>(ctx.config, "model")));
  const int n = req<int>(ctx.config, "n");
  const std::uint64_t seed = ctx.pick_seed("seed");
  const std::string law_s = opt<std::string>(ctx.config, "law", "uniform");
  if (law_s != "uniform" && law_s != "texture") fail_config("law must be uniform|texture", "law");
  const PixelLaw law = law_s == "uniform" ? PixelLaw::uniform : PixelLaw::smooth_texture;
  Dataset ds = sample_dataset(model, n, seed, law, ctx.threads);
  ds.model_id = io::model_id(model);
  const std::string out_data = opt<std::string>(ctx.config, "out_data", "data.bin");
  {
    // save_dataset writes atomically through the same tmp+rename path
    io::save_dataset(ds, ctx.out_path(out_data));
    json meta;
    meta["config_hash"] = io::hex64(ctx.config_hash);
    meta["tool_version"] = kToolVersion;
    meta["written_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    io::atomic_write_text(ctx.out_path(out_data) + ".meta.json", meta.dump(2) + "\n");
  }
  const std::string csv = opt<std::string>(ctx.config, "out_csv", "");
  if (!csv.empty()) io::export_dataset_csv(ds, ctx.out_path(csv));
  int positives = 0;
  for (const auto& s : ds.samples) positives += s.label == +1;
  std::cout << "sample: n " << n << ", positives " << positives << ", seed " << seed << " -> "
            << out_data << "\n";
  return 0;
}

Schedule schedule_from_ctx(const Context& ctx, const json& j, int n, int d1, int d2) {
  (void)ctx;
  const double p = opt<double>(j, "p", 1.0);
  const int level = req<int>(j, "level");
  const double scale = opt<double>(j, "scale", 1.0);
  return architecture_schedule(n, p, level, d1, d2, schedule_constants_from_json(j), scale);
}

int cmd_train(const Context& ctx) {
  const Dataset ds = io::load_dataset(require_file(ctx, req<std::string>(ctx.config, "data")));
  if (!ctx.config.contains("schedule")) fail_config("missing required key: schedule", "schedule");
  const Schedule sched = schedule_from_ctx(ctx, ctx.config.at("schedule"), ds.size(), ds.d1, ds.d2);
  TrainConfig cfg = train_config_from_json(
      ctx.config.contains("train") ? ctx.config.at("train") : json::object(), ctx.threads);
  if (ctx.seed_override) cfg.seed = ctx.seed;
  const TrainResult res = train(sched.cnn, sched.fnn, sched.beta, ds, cfg);

  const std::string out_weights = opt<std::string>(ctx.config, "out_weights", "weights.bin");
  io::save_predictor(res.predictor, ctx.out_path(out_weights));

  json report = ctx.stamp();
  report["seed"] = cfg.seed;
  report["best_phi_risk"] = res.report.best_phi_risk;
  report["chosen_restart"] = res.report.chosen_restart;
  report["diverged_restarts"] = res.report.diverged_restarts;
  report["beta"] = sched.beta.beta;
  report["scale"] = sched.scale;
  report["blocks_per_level"] = sched.blocks_per_level;
  report["conv_layers"] = sched.cnn.layers();
  report["head_layers"] = sched.fnn.layers();
  json finals = json::array();
  for (const auto& t : res.report.restarts) {
    finals.push_back(json{{"best_loss", t.best_loss}, {"diverged", t.diverged}});
  }
  report["restarts"] = std::move(finals);
  if (res.report.grad_check.checked > 0) {
    report["grad_check"] = {{"checked", res.report.grad_check.checked},
                            {"kinks_skipped", res.report.grad_check.kinks_skipped},
                            {"max_rel_err", res.report.grad_check.max_rel_err}};
  }
  ctx.write_json(opt<std::string>(ctx.config, "out_report", "train_report.json"), report);

  io::CsvWriter losses({"restart", "epoch", "loss"});
  for (std::size_t r = 0; r < res.report.restarts.size(); ++r) {
    const auto& curve = res.report.restarts[r].losses;
    for (std::size_t e = 0; e < curve.size(); ++e) {
      losses.add_row({std::to_string(r), std::to_string(e), io::format_double(curve[e])});
    }
  }
  ctx.write_artifact(opt<std::string>(ctx.config, "out_losses", "losses.csv"), losses.text());
  std::cout << "train: best phi-risk " << res.report.best_phi_risk << ", restart "
            << res.report.chosen_restart << " -> " << out_weights << "\n";
  return 0;
}

int cmd_eval_risk(const Context& ctx) {
  const HmpModel model = io::load_model(require_file(ctx, req<std::string>(ctx.config, "model")));
  const Predictor pred =
      io::load_predictor(require_file(ctx, req<std::string>(ctx.config, "weights")));
  const std::int64_t mc = req<std::int64_t>(ctx.config, "mc");
  const std::uint64_t seed = ctx.pick_seed("seed");

  const RiskReport trained = mc_risks([&](const ImageGrid& x) { return pred.classify(x); },
                                      [&](const ImageGrid& x) { return pred(x); }, model, mc,
                                      seed, ctx.threads);
  const RiskReport bayes = mc_risks(
      [&](const ImageGrid& x) { return bayes_classify(eval_max_pool(model, x)); },
      [&](const ImageGrid& x) { return logit(eval_max_pool(model, x), kDefaultLogitClamp); },
      model, mc, seed, ctx.threads);

  json out = ctx.stamp();
  out["seed"] = seed;
  out["trained"] = risk_report_to_json(trained);
  out["bayes"] = risk_report_to_json(bayes);
  out["sqrt_comparison"] = check_to_json(sqrt_comparison_check(trained));
  out["linear_comparison"] = check_to_json(linear_comparison_check(trained));
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "risk.json");
  ctx.write_json(out_report, out);
  std::cout << "eval-risk: excess01 " << trained.excess01 << " (se " << trained.se_excess01
            << ") -> " << out_report << "\n";
  return 0;
}

int cmd_rate_sweep(const Context& ctx) {
  if (!ctx.config.contains("model")) fail_config("missing required key: model", "model");
  const ModelSpec spec = model_spec_from_json(ctx.config.at("model"));
  const std::uint64_t model_seed = req<std::uint64_t>(ctx.config.at("model"), "seed");
  HmpModel model = make_model(spec, model_seed);
  const double gamma = opt<double>(ctx.config, "sharpen_gamma", 0.0);
  if (gamma >= 1.0) model = sharpen_margin(model, gamma);

  const std::vector<int> n_grid = req<std::vector<int>>(ctx.config, "n_grid");
  const int reps = req<int>(ctx.config, "repetitions");
  const std::int64_t mc = opt<std::int64_t>(ctx.config, "mc", 20000);
  const std::uint64_t seed = ctx.pick_seed("seed");
  if (!ctx.config.contains("schedule")) fail_config("missing required key: schedule", "schedule");
  const json& sched_j = ctx.config.at("schedule");
  const json train_j = ctx.config.contains("train") ? ctx.config.at("train") : json::object();

  io::CsvWriter csv({"n", "rep", "excess01", "excessphi", "stderr01", "stderrphi"});
  std::vector<std::vector<double>> excess01(n_grid.size()), excessphi(n_grid.size());

  for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
    for (int rep = 0; rep < reps; ++rep) {
      const std::uint64_t run_id = static_cast<std::uint64_t>(ni) * 1000 + rep;
      const std::uint64_t data_seed = rng::Stream::derive(seed, 101, run_id);
      const Dataset ds = sample_dataset(model, n_grid[ni], data_seed, PixelLaw::uniform,
                                        ctx.threads);
      const Schedule sched = schedule_from_ctx(ctx, sched_j, n_grid[ni], model.d1(), model.d2());
      TrainConfig cfg = train_config_from_json(train_j, ctx.threads);
      cfg.seed = rng::Stream::derive(seed, 102, run_id);
      const TrainResult res = train(sched.cnn, sched.fnn, sched.beta, ds, cfg);
      const std::uint64_t mc_seed = rng::Stream::derive(seed, 103, run_id);
      const RiskReport r = mc_risks([&](const ImageGrid& x) { return res.predictor.classify(x); },
                                    [&](const ImageGrid& x) { return res.predictor(x); }, model,
                                    mc, mc_seed, ctx.threads);
      excess01[ni].push_back(r.excess01);
      excessphi[ni].push_back(r.excessphi);
      csv.add_row({std::to_string(n_grid[ni]), std::to_string(rep),
                   io::format_double(r.excess01), io::format_double(r.excessphi),
                   io::format_double(r.se_excess01), io::format_double(r.se_excessphi)});
    }
  }
  ctx.write_artifact(opt<std::string>(ctx.config, "out_csv", "sweep.csv"), csv.text());

  std::vector<double> ns(n_grid.begin(), n_grid.end());
  const SlopeFit fit = fit_rate_slope(ns, excess01, rng::Stream::derive(seed, 104, 0));
  json out = ctx.stamp();
  out["seed"] = seed;
  out["model_id"] = io::hex64(io::model_id(model));
  out["sharpen_gamma"] = gamma;
  out["slope"] = fit.slope;
  out["slope_ci"] = {fit.ci_lo, fit.ci_hi};
  out["excluded_points"] = fit.excluded;
  const double p = opt<double>(sched_j, "p", 1.0);
  out["theoretical_exponent_plain"] = -rate_exponent(p, RateVariant::plain);
  out["theoretical_exponent_margin"] = -rate_exponent(p, RateVariant::margin);
  out["scale"] = opt<double>(sched_j, "scale", 1.0);
  json per_n = json::array();
  for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
    double m01 = 0.0, mphi = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      m01 += excess01[ni][rep];
      mphi += excessphi[ni][rep];
    }
    per_n.push_back(json{{"n", n_grid[ni]},
                         {"mean_excess01", m01 / reps},
                         {"mean_excessphi", mphi / reps}});
  }
  out["per_n"] = std::move(per_n);
  const std::string out_summary = opt<std::string>(ctx.config, "out_summary", "sweep_summary.json");
  ctx.write_json(out_summary, out);
  std::cout << "rate-sweep: slope " << fit.slope << " (95% CI " << fit.ci_lo << ".." << fit.ci_hi
            << ") -> " << out_summary << "\n";
  return 0;
}

int cmd_lemma7(const Context& ctx) {
  const std::vector<int> ks = opt<std::vector<int>>(ctx.config, "K", {6, 12, 24, 48});
  const int grid_points = opt<int>(ctx.config, "grid_points", 10000);
  const int eval_points = opt<int>(ctx.config, "eval_points", 20001);

  io::CsvWriter csv({"K", "max_net_vs_direct", "max_interp_err", "bound_margin", "loss_gap"});
  std::vector<double> logk, loggap, logbound;
  double worst_dev = 0.0;
  for (int K : ks) {
    const HatBasis b = make_hat_basis(K);
    double dev = 0.0, bound_margin = 1e300;
    for (int i = 0; i < grid_points; ++i) {
      const double z = -1.0 + 3.0 * i / (grid_points - 1);
      const double net = link_eval_network(b, z);
      dev = std::max(dev, std::abs(net - link_eval_direct(b, z)));
      bound_margin = std::min(bound_margin, std::log(K + 1.0) - std::abs(net));
    }
    double interp = 0.0;
    for (int k = 1; k <= K - 1; ++k) {
      const double z = static_cast<double>(k) / K;
      interp = std::max(interp,
                        std::abs(link_eval_network(b, z) - std::log(z / (1.0 - z))));
    }
    std::vector<double> etas(eval_points);
    for (int i = 0; i < eval_points; ++i) etas[i] = static_cast<double>(i) / (eval_points - 1);
    const double gap = link_loss_gap(b, etas, etas);
    worst_dev = std::max(worst_dev, dev);
    csv.add_row({std::to_string(K), io::format_double(dev), io::format_double(interp),
                 io::format_double(bound_margin), io::format_double(gap)});
    logk.push_back(std::log(static_cast<double>(K)));
    loggap.push_back(std::log(gap));
    logbound.push_back(std::log(std::log(static_cast<double>(K)) / K));
  }
  ctx.write_artifact(opt<std::string>(ctx.config, "out_csv", "link_report.csv"), csv.text());

  auto slope = [](const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
  };
  json out = ctx.stamp();
  out["max_network_vs_direct"] = worst_dev;
  if (ks.size() >= 2) {
    out["gap_slope_vs_logK"] = slope(logk, loggap);
    out["gap_slope_vs_log_bound_shape"] = slope(logbound, loggap);
    std::vector<double> cfit;
    for (std::size_t i = 0; i < ks.size(); ++i) cfit.push_back(std::exp(loggap[i] - logbound[i]));
    const auto [mn, mx] = std::minmax_element(cfit.begin(), cfit.end());
    out["cfit_spread"] = *mx / *mn;
  }
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "link_report.json");
  ctx.write_json(out_report, out);
  std::cout << "lemma7: max network-vs-direct deviation " << worst_dev << " -> " << out_report
            << "\n";
  return 0;
}

int cmd_compile_cnn(const Context& ctx) {
  const int level = req<int>(ctx.config, "level");
  const int d1 = req<int>(ctx.config, "d1");
  const int d2 = req<int>(ctx.config, "d2");
  const int hidden = req<int>(ctx.config, "hidden_layers");
  const int width = req<int>(ctx.config, "width");
  const std::uint64_t seed = ctx.pick_seed("seed");
  const int images = opt<int>(ctx.config, "images", 100);

  const NodeNetTree tree = random_node_tree(level, hidden, width, seed);
  const CompiledCnn c = compile_hmp_to_cnn(tree, d1, d2);

  double worst = 0.0;
  for (int i = 0; i < images; ++i) {
    rng::Stream st(seed, rng::Tag::risk_draw, static_cast<std::uint64_t>(i));
    const ImageGrid img = ImageGrid::random_uniform(d1, d2, st);
    worst = std::max(worst, std::abs(cnn_forward(c.arch, c.weights, img) -
                                     eval_node_tree_max_pool(tree, img)));
  }

  // store through the predictor container with a pass-through head
  Predictor p;
  p.cnn_arch = c.arch;
  p.cnn = c.weights;
  p.fnn_arch.widths = {2};
  p.fnn = zero_fnn_weights(p.fnn_arch);
  p.fnn.layers[0].w = {1.0, -1.0};
  p.fnn.out = {1.0, -1.0};
  p.beta.beta = 1e300;
  const std::string out_weights = opt<std::string>(ctx.config, "out_weights", "compiled.bin");
  io::save_predictor(p, ctx.out_path(out_weights));

  json out = ctx.stamp();
  out["seed"] = seed;
  out["layers"] = c.arch.layers();
  out["channels"] = c.arch.channels[0];
  out["filter_sizes"] = c.arch.filter_sizes;
  out["expected_layers"] = compiled_layer_count(level, hidden);
  out["expected_channels"] = compiled_channel_count(level, width);
  out["images_checked"] = images;
  out["max_abs_deviation"] = worst;
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "compile_report.json");
  ctx.write_json(out_report, out);
  std::cout << "compile-cnn: " << c.arch.layers() << " layers, max deviation " << worst << " -> "
            << out_weights << "\n";
  return 0;
}

int cmd_check_bounds(const Context& ctx) {
  const std::vector<double> eps_list =
      opt<std::vector<double>>(ctx.config, "eps_list", {0.5, 0.25, 0.125, 0.0625});
  const int l1 = opt<int>(ctx.config, "l1", 4);
  const int l2 = opt<int>(ctx.config, "l2", 3);
  const int d1 = opt<int>(ctx.config, "d1", 8);
  const int d2 = opt<int>(ctx.config, "d2", 8);
  const double c1 = opt<double>(ctx.config, "c1", 2.0);
  const double c10 = opt<double>(ctx.config, "c10", 1.0);
  const int n = opt<int>(ctx.config, "n", 1024);
  const std::uint64_t seed = ctx.pick_seed("seed");
  const int budget = opt<int>(ctx.config, "cover_budget", 128);
  const int n_points = opt<int>(ctx.config, "cover_points", 12);

  // sampled family: fixed small architecture, random weights per index
  CnnArchitecture ca{d1, d2, {3, 3}, {2, 2}};
  FnnArchitecture fa{{4}};
  const TruncationBound beta{c1 * std::log(static_cast<double>(n))};
  const FunctionSampler sampler = [&](int index) -> RealFn {
    const Predictor p = init_predictor(ca, fa, beta, 1.2, seed,
                                       index + 1000000);  // distinct from training restarts
    return [p](const ImageGrid& x) { return p(x); };
  };
  std::vector<ImageGrid> points;
  for (int i = 0; i < n_points; ++i) {
    rng::Stream st(seed, rng::Tag::cover_sample, static_cast<std::uint64_t>(i));
    points.push_back(ImageGrid::random_uniform(d1, d2, st));
  }
  const std::vector<int> counts = empirical_cover_profile(sampler, points, eps_list, budget, seed);

  io::CsvWriter csv({"eps", "log_bound", "empirical_cover_count"});
  json rows = json::array();
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double bound = covering_bound(eps_list[i], l1, l2, d1, d2, c1, c10, n);
    csv.add_row({io::format_double(eps_list[i]), io::format_double(bound),
                 std::to_string(counts[i])});
    rows.push_back(json{{"eps", eps_list[i]}, {"log_bound", bound}, {"count", counts[i]}});
  }
  ctx.write_artifact(opt<std::string>(ctx.config, "out_csv", "bounds.csv"), csv.text());
  json out = ctx.stamp();
  out["seed"] = seed;
  out["rows"] = std::move(rows);
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "bounds.json");
  ctx.write_json(out_report, out);
  std::cout << "check-bounds: " << eps_list.size() << " eps values -> " << out_report << "\n";
  return 0;
}

int cmd_check_lemma1(const Context& ctx) {
  if (!ctx.config.contains("models")) fail_config("missing required key: models", "models");
  const std::int64_t mc = opt<std::int64_t>(ctx.config, "mc", 100000);
  const std::uint64_t seed = ctx.pick_seed("seed");

  json results = json::array();
  bool all_hold = true;
  int idx = 0;
  for (const auto& mj : ctx.config.at("models")) {
    HmpModel model = [&]() {
      if (mj.is_string()) return io::load_model(require_file(ctx, mj.get<std::string>()));
      return make_model(model_spec_from_json(mj), req<std::uint64_t>(mj, "seed"));
    }();
    const double gamma = mj.is_object() ? opt<double>(mj, "sharpen_gamma", 0.0) : 0.0;
    if (gamma >= 1.0) model = sharpen_margin(model, gamma);

    struct Pair {
      std::string name;
      ClassifierFn cls;
      RealFn fn;
    };
    std::vector<Pair> pairs;
    pairs.push_back({"bayes",
                     [&model](const ImageGrid& x) { return bayes_classify(eval_max_pool(model, x)); },
                     [&model](const ImageGrid& x) {
                       return logit(eval_max_pool(model, x), kDefaultLogitClamp);
                     }});
    pairs.push_back({"constant_plus",
                     [](const ImageGrid&) { return +1; },
                     [](const ImageGrid&) { return 1.0; }});
    pairs.push_back({"zero", [](const ImageGrid&) { return +1; },
                     [](const ImageGrid&) { return 0.0; }});
    if (mj.is_object() && mj.contains("weights")) {
      const Predictor p =
          io::load_predictor(require_file(ctx, mj.at("weights").get<std::string>()));
      pairs.push_back({"trained", [p](const ImageGrid& x) { return p.classify(x); },
                       [p](const ImageGrid& x) { return p(x); }});
    }
    for (const auto& pr : pairs) {
      const RiskReport r = mc_risks(pr.cls, pr.fn, model, mc, seed, ctx.threads);
      const ComparisonCheck zs = sqrt_comparison_check(r);
      const ComparisonCheck ls = linear_comparison_check(r);
      all_hold = all_hold && zs.holds && ls.holds;
      json row;
      row["model_index"] = idx;
      row["pair"] = pr.name;
      row["report"] = risk_report_to_json(r);
      row["sqrt_comparison"] = check_to_json(zs);
      row["linear_comparison"] = check_to_json(ls);
      results.push_back(std::move(row));
    }
    ++idx;
  }
  json out = ctx.stamp();
  out["seed"] = seed;
  out["all_hold"] = all_hold;
  out["results"] = std::move(results);
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "comparison.json");
  ctx.write_json(out_report, out);
  std::cout << "check-lemma1: all inequalities hold: " << (all_hold ? "yes" : "no") << " -> "
            << out_report << "\n";
  return all_hold ? 0 : 3;
}

int cmd_check_lemma8(const Context& ctx) {
  const std::vector<int> levels = opt<std::vector<int>>(ctx.config, "levels", {1, 2});
  const int triples = opt<int>(ctx.config, "triples", 1000);
  const int grid_pts = opt<int>(ctx.config, "grid_points", 21);
  const double max_shift = opt<double>(ctx.config, "max_shift", 0.15);
  const std::uint64_t seed = ctx.pick_seed("seed");

  io::CsvWriter csv({"level", "triple", "gap", "bound", "sup_dist"});
  int violations = 0;
  double worst_margin = 1e300;
  for (int level : levels) {
    const int d = 2 * (1 << level);
    for (int t = 0; t < triples; ++t) {
      const std::uint64_t run = static_cast<std::uint64_t>(level) * 1000000 + t;
      const HmpModel model =
          make_model({level, NodeFamily::affine_clamped, d, d, 0.5},
                     rng::Stream::derive(seed, 201, run));
      const HmpModel pert = perturb_model(model, max_shift, rng::Stream::derive(seed, 202, run));
      rng::Stream st(rng::Stream::derive(seed, 203, run), rng::Tag::generic, 0);
      const ImageGrid img = ImageGrid::random_uniform(d, d, st);
      const GapAndBound gb = perturbation_gap_and_bound(model, pert, img, grid_pts);
      if (gb.gap > gb.bound + 1e-9) ++violations;
      worst_margin = std::min(worst_margin, gb.bound + 1e-9 - gb.gap);
      csv.add_row({std::to_string(level), std::to_string(t), io::format_double(gb.gap),
                   io::format_double(gb.bound), io::format_double(gb.sup_dist)});
    }
  }
  ctx.write_artifact(opt<std::string>(ctx.config, "out_csv", "perturbation.csv"), csv.text());
  json out = ctx.stamp();
  out["seed"] = seed;
  out["violations"] = violations;
  out["worst_margin"] = worst_margin;
  const std::string out_report = opt<std::string>(ctx.config, "out_report", "perturbation.json");
  ctx.write_json(out_report, out);
  std::cout << "check-lemma8: " << violations << " violations over "
            << levels.size() * static_cast<std::size_t>(triples) << " triples -> " << out_report
            << "\n";
  return violations == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic image-classification theory workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  int threads = 0;
  bool have_seed = false;

  const std::vector<std::string> names = {"gen-model",  "sample",       "train",
                                          "eval-risk",  "rate-sweep",   "lemma7",
                                          "compile-cnn", "check-bounds", "check-lemma1",
                                          "check-lemma8"};
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory (default: HMPCNN_OUT_ROOT or .)");
    sub->add_option("--seed", seed_override, "override the config's top-level seed")
        ->each([&](const std::string&) { have_seed = true; });
    sub->add_option("--threads", threads, "worker threads (0 = auto)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    std::string text;
    try {
      text = io::read_text(config_path);
    } catch (const std::exception& e) {
      fail_io(std::string("cannot read config: ") + e.what());
    }
    try {
      ctx.config = json::parse(text);
    } catch (const std::exception& e) {
      fail_config(std::string("config is not valid JSON: ") + e.what());
    }
    ctx.config_hash = io::fnv1a64(ctx.config.dump());
    if (!out_dir.empty()) {
      ctx.out_root = out_dir;
    } else if (const char* env = std::getenv("HMPCNN_OUT_ROOT")) {
      ctx.out_root = env;
    } else {
      ctx.out_root = ".";
    }
    ctx.threads = threads;
    ctx.seed_override = have_seed;
    ctx.seed = seed_override;

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-model") return cmd_gen_model(ctx);
    if (name == "sample") return cmd_sample(ctx);
    if (name == "train") return cmd_train(ctx);
    if (name == "eval-risk") return cmd_eval_risk(ctx);
    if (name == "rate-sweep") return cmd_rate_sweep(ctx);
    if (name == "lemma7") return cmd_lemma7(ctx);
    if (name == "compile-cnn") return cmd_compile_cnn(ctx);
    if (name == "check-bounds") return cmd_check_bounds(ctx);
    if (name == "check-lemma1") return cmd_check_lemma1(ctx);
    if (name == "check-lemma8") return cmd_check_lemma8(ctx);
    return 1;
  } catch (const CliError& e) {
    json err;
    err["error"] = {{"kind", e.kind}, {"message", e.message}};
    if (!e.field.empty()) err["error"]["field"] = e.field;
    std::cerr << err.dump() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"kind", "runtime"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
}
