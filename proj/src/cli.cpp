#include "ternia/cli.hpp"

#include "ternia/dataset.hpp"
#include "ternia/forward.hpp"
#include "ternia/gauss.hpp"
#include "ternia/ptq.hpp"
#include "ternia/qat.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <iostream>
#include <sstream>

namespace ternia::cli {

using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

json make_report(const std::string& command, json config, json metrics, std::uint64_t seed) {
  json r;
  r["schema_version"] = kReportSchema;
  r["command"] = command;
  r["version"] = kVersion;
  r["seed"] = seed;
  r["config"] = std::move(config);
  r["metrics"] = std::move(metrics);
  return r;
}

std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  auto p = out;
  p.replace_extension();
  p += suffix;
  return p;
}

Dataset load_dataset_for(const std::filesystem::path& path, const Shape& sample_shape) {
  Dataset d = load_csv(path);
  if (d.features.cols() != shape_size(sample_shape)) {
    throw std::runtime_error(path.string() + ": " + std::to_string(d.features.cols()) + " feature columns, model expects " +
                             shape_string(sample_shape));
  }
  return d.with_sample_shape(sample_shape);
}

void emit(const StagedFiles& files, const std::optional<std::filesystem::path>& out_path, const json& report,
          std::ostream& out) {
  StagedFiles all = files;
  if (out_path) {
    all.add(*out_path, report.dump(2) + "\n");
  } else {
    out << report.dump(2) << "\n";
  }
  all.commit();
}

json mass_json(const gauss::MassPerBin& m) {
  return {{"negative", m.negative}, {"zero", m.zero}, {"positive", m.positive}};
}

// ---------------------------------------------------------------- theory

struct TheoryArgs {
  double lambda = 3.0;
  std::size_t mc_samples = 1'000'000;
  std::optional<std::filesystem::path> out;
};

int run_theory(const TheoryArgs& a, std::uint64_t seed, std::ostream& out) {
  if (!(a.lambda > 0.5) || !std::isfinite(a.lambda)) throw UsageError("--lambda must be a finite value > 0.5");
  if (a.mc_samples < 2) throw UsageError("--mc-samples must be >= 2");
  const gauss::TheoryReport r = gauss::theory_report(a.lambda, a.mc_samples, seed);
  json m;
  m["lambda"] = r.lambda;
  m["a_star_numeric"] = r.a_star_numeric;
  m["q_star_numeric"] = r.q_star_numeric;
  m["paper_a"] = r.closed_form_a;
  m["paper_a_gap"] = r.closed_form_gap;
  m["q_at_paper_a"] = r.q_at_closed_form_a;
  m["thresholds"] = {{"a_star", r.a_star_numeric},
                     {"paper_a", r.closed_form_a},
                     {"tquant", r.tquant_threshold},
                     {"naive", r.naive_threshold},
                     {"mquant_step", r.mquant_step_threshold}};
  m["expected_error"] = {{"a_star", r.error_at_a_star},
                         {"paper_a", r.error_at_closed_form_a},
                         {"tquant", r.error_at_tquant},
                         {"naive", r.error_at_naive},
                         {"mquant_step", r.error_at_mquant_step}};
  m["decomposition_error"] = r.decomposition_error;
  m["decomposition_error_at_a_star"] = r.decomposition_error_at_a_star;
  m["mc_error"] = r.mc_at_a_star.mean;
  m["mc_stderr"] = r.mc_at_a_star.std_error;
  m["mc_samples"] = r.mc_at_a_star.samples;
  m["pdf_at_paper_a"] = r.pdf_at_closed_form_a;
  m["cdf_at_paper_a"] = r.cdf_at_closed_form_a;
  m["polynomial_residual"] = r.polynomial_residual;
  m["polynomial_system_residual"] = r.polynomial_system_residual;
  m["mass_per_bin"] = {{"truncated", mass_json(r.mass_at_closed_form_a)},
                       {"untruncated", mass_json(r.mass_at_closed_form_a_untruncated)},
                       {"equal_mass_target", 1.0 / 3.0}};
  json cfg{{"lambda", a.lambda}, {"mc_samples", a.mc_samples}};
  emit({}, a.out, make_report("theory", cfg, m, seed), out);
  return kOk;
}

// ---------------------------------------------------------------- quantize

struct QuantizeArgs {
  std::filesystem::path model;
  std::string op = "tquant";
  int order = 1;
  std::filesystem::path out;
  std::optional<std::filesystem::path> residuals;
  std::optional<std::filesystem::path> report;
};

std::string residual_csv(const ModelGraph& model, const QuantizedModel& q) {
  std::ostringstream os;
  os << "layer,kind,term,lambda_max,residual_max_abs,residual_mse,contraction\n";
  for (const auto& [index, stack] : q.weights) {
    const RowMatrixXd w = model.layers[index].weights.matrix().cast<double>();
    RowMatrixXd residual = w;
    for (int t = 0; t < stack.order(); ++t) {
      const Vector<double> lambda = ternary_scale(residual);
      residual -= stack.terms[static_cast<std::size_t>(t)].dequantize().cast<double>();
      const Vector<double> after = ternary_scale(residual);
      double contraction = 0.0;
      for (Index r = 0; r < lambda.size(); ++r) {
        if (lambda[r] > 0.0) contraction = std::max(contraction, after[r] / lambda[r]);
      }
      os << index << ',' << to_string(model.layers[index].kind) << ',' << t << ',' << fmt(lambda.maxCoeff()) << ','
         << fmt(residual.cwiseAbs().maxCoeff()) << ',' << fmt(residual.squaredNorm() / static_cast<double>(residual.size()))
         << ',' << fmt(contraction) << '\n';
    }
  }
  return os.str();
}

int run_quantize(const QuantizeArgs& a, std::uint64_t seed, std::ostream&) {
  if (a.order < 1) throw UsageError("--order must be >= 1");
  const Operator op = operator_from_string(a.op);
  const ModelGraph model = load_model(a.model);
  const QuantizedModel q = quantize_model(model, op, a.order);
  StagedFiles files = quantized_model_files(q, a.out);
  const auto residual_path = a.residuals.value_or(sibling(a.out, ".residuals.csv"));
  files.add(residual_path, residual_csv(model, q));

  const auto rows = analyze(model, q.graph, &q);
  json layers = json::array();
  for (const auto& r : rows) {
    layers.push_back({{"layer", r.layer}, {"max_abs_error", r.max_abs_error}, {"mse", r.mse}});
  }
  json cfg{{"model", a.model.string()}, {"op", a.op}, {"order", a.order}, {"out", a.out.string()}};
  const json report = make_report("quantize", cfg, {{"layers", layers}}, seed);
  if (a.report) files.add(*a.report, report.dump(2) + "\n");
  files.commit();
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::filesystem::path model;
  std::filesystem::path data;
  int abits = 0;
  std::string act_op = "tquant";
  std::string act_range = "bn";
  double bn_mult = 3.0;
  std::optional<std::filesystem::path> out;
};

/// Hook quantizing ReLU outputs: ranges from the preceding batchnorm ("bn") or from the
/// per-channel max magnitude seen on `batch` in a float pass ("max").
LayerHook activation_hook(const ModelGraph& model, const Tensor& batch, int bits, Operator op, const std::string& mode,
                          double bn_mult) {
  std::map<std::size_t, std::vector<float>> ranges;
  if (mode == "bn") {
    for (std::size_t i = 1; i < model.layers.size(); ++i) {
      const Layer& prev = model.layers[i - 1];
      if (model.layers[i].kind != LayerKind::relu || prev.kind != LayerKind::batchnorm) continue;
      const Vector<float> r = act_range_from_bn(prev.gamma.flat(), prev.beta.flat(), static_cast<float>(bn_mult));
      ranges[i] = std::vector<float>(r.data(), r.data() + r.size());
    }
  } else if (mode == "max") {
    const auto outs = forward_all(model, batch);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (model.layers[i].kind != LayerKind::relu) continue;
      const Tensor& y = outs[i];
      const Index channels = y.dim(1);
      const Index plane = y.size() / (y.dim(0) * channels);
      std::vector<float> r(static_cast<std::size_t>(channels), 0.0f);
      for (Index b = 0; b < y.dim(0); ++b) {
        for (Index c = 0; c < channels; ++c) {
          for (Index k = 0; k < plane; ++k) {
            r[static_cast<std::size_t>(c)] = std::max(r[static_cast<std::size_t>(c)], std::abs(y[(b * channels + c) * plane + k]));
          }
        }
      }
      ranges[i] = std::move(r);
    }
  } else {
    throw UsageError("--act-range must be bn or max");
  }
  return [ranges = std::move(ranges), bits, op](std::size_t layer, Tensor& y) {
    const auto it = ranges.find(layer);
    if (it != ranges.end()) fake_quantize_activations(y, bits, it->second, op);
  };
}

int run_eval(const EvalArgs& a, std::uint64_t seed, std::ostream& out) {
  if (a.abits != 0 && a.abits != 2 && a.abits != 4 && a.abits != 8) throw UsageError("--abits must be 0, 2, 4 or 8");
  const Operator act_op = operator_from_string(a.act_op);
  const bool quantized = is_quantized_manifest(a.model);
  const ModelGraph model = quantized ? load_quantized_model(a.model).graph : load_model(a.model);
  const Dataset data = load_dataset_for(a.data, model.input);
  LayerHook hook;
  if (a.abits > 0) hook = activation_hook(model, data.features, a.abits, act_op, a.act_range, a.bn_mult);
  const Tensor logits = forward(model, data.features, hook);
  const double acc = accuracy(logits, data.labels);
  json cfg{{"model", a.model.string()}, {"data", a.data.string()}, {"quantized_weights", quantized},
           {"abits", a.abits}, {"act_op", a.act_op}, {"act_range", a.act_range}, {"bn_mult", a.bn_mult}};
  emit({}, a.out, make_report("eval", cfg, {{"accuracy", acc}, {"samples", data.size()}}, seed), out);
  return kOk;
}

// ---------------------------------------------------------------- ptq

struct PtqArgs {
  std::filesystem::path model;
  std::filesystem::path calib;
  std::string op = "tquant";
  int iters = 1500;
  double lr = 1e-2;
  double reg_weight = 1.0;
  Index max_rows = 4096;
  std::optional<std::filesystem::path> test;
  std::filesystem::path out;
  std::optional<std::filesystem::path> trajectory;
  std::optional<std::filesystem::path> report;
};

int run_ptq(const PtqArgs& a, std::uint64_t seed, std::ostream&) {
  if (a.iters < 1) throw UsageError("--iters must be >= 1");
  const Operator op = operator_from_string(a.op);
  const ModelGraph model = load_model(a.model);
  const Dataset calib = load_dataset_for(a.calib, model.input);
  PtqConfig cfg;
  cfg.iterations = a.iters;
  cfg.learning_rate = a.lr;
  cfg.reg_weight = a.reg_weight;
  cfg.max_rows = a.max_rows;
  cfg.seed = seed;
  const PtqResult res = ptq_quantize_model(model, calib, op, cfg);

  StagedFiles files = quantized_model_files(res.model, a.out);
  std::ostringstream traj;
  traj << "layer,iteration,reconstruction,regularizer,beta\n";
  json layers = json::array();
  for (const auto& l : res.layers) {
    for (const auto& p : l.points) {
      traj << l.layer << ',' << p.iteration << ',' << fmt(p.reconstruction) << ',' << fmt(p.regularizer) << ','
           << fmt(p.beta) << '\n';
    }
    layers.push_back({{"layer", l.layer}, {"nearest_loss", l.nearest_loss}, {"final_loss", l.final_loss},
                      {"kept_nearest", l.kept_nearest}});
  }
  files.add(a.trajectory.value_or(sibling(a.out, ".trajectory.csv")), traj.str());

  json metrics{{"layers", layers}};
  if (a.test) {
    const Dataset test = load_dataset_for(*a.test, model.input);
    metrics["accuracy"] = accuracy(forward(res.model.graph, test.features), test.labels);
    metrics["float_accuracy"] = accuracy(forward(model, test.features), test.labels);
  }
  json cfg_json{{"model", a.model.string()}, {"calib", a.calib.string()}, {"op", a.op}, {"iters", a.iters},
                {"lr", a.lr}, {"reg_weight", a.reg_weight}, {"max_rows", a.max_rows}, {"out", a.out.string()}};
  const json report = make_report("ptq", cfg_json, metrics, seed);
  files.add(a.report.value_or(sibling(a.out, ".report.json")), report.dump(2) + "\n");
  files.commit();
  return kOk;
}

// ---------------------------------------------------------------- qat

struct QatArgs {
  std::string arch = "mlp:16,16";
  std::filesystem::path data;
  std::filesystem::path test;
  int epochs = 30;
  int seeds = 5;
  int wbits = 2;
  int abits = 4;
  std::string op = "tquant";
  double lr = 0.05;
  double momentum = 0.9;
  Index batch = 32;
  std::filesystem::path out;
  std::optional<std::filesystem::path> save_model;
};

int run_qat(const QatArgs& a, std::uint64_t seed, std::ostream&) {
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  if (a.wbits != 2) throw UsageError("--wbits must be 2");
  QatConfig cfg;
  try {
    cfg.hidden = parse_arch(a.arch);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.batch_size = a.batch;
  cfg.weight_bits = a.wbits;
  cfg.act_bits = a.abits;
  cfg.op = a.op == "none" ? std::nullopt : std::optional<Operator>(operator_from_string(a.op));
  cfg.seeds.clear();
  for (int i = 0; i < a.seeds; ++i) cfg.seeds.push_back(seed + static_cast<std::uint64_t>(i));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const Dataset train = load_csv(a.data);
  const Dataset test = load_csv(a.test);
  std::vector<TrainedMlp> models;
  const RunSummary summary = ste_train(train, test, cfg, &models);

  json per_seed = json::array();
  for (const auto& s : summary.seeds) {
    per_seed.push_back({{"seed", s.seed}, {"accuracy", s.accuracy}, {"train_accuracy", s.train_accuracy},
                        {"final_loss", s.final_loss}, {"diverged", s.diverged}, {"epoch_accuracy", s.epoch_accuracy}});
  }
  json metrics{{"mean_accuracy", summary.mean}, {"std_accuracy", summary.std}, {"diverged", summary.diverged},
               {"seeds", per_seed}};
  json ranges = json::array();
  for (float r : models.front().net.act_range) ranges.push_back(r);
  metrics["activation_ranges_first_seed"] = ranges;

  json cfg_json{{"arch", format_arch(cfg.hidden)}, {"data", a.data.string()}, {"test", a.test.string()},
                {"epochs", a.epochs}, {"seeds", a.seeds}, {"wbits", a.wbits}, {"abits", a.abits}, {"op", a.op},
                {"lr", a.lr}, {"momentum", a.momentum}, {"batch", a.batch}};
  StagedFiles files;
  if (a.save_model) {
    const ModelGraph g = to_model_graph(models.front().net);
    if (cfg.op) {
      files.merge(quantized_model_files(quantize_model(g, *cfg.op, 1), *a.save_model));
    } else {
      files.merge(model_files(g, *a.save_model));
    }
  }
  files.add(a.out, make_report("qat", cfg_json, metrics, seed).dump(2) + "\n");
  files.commit();
  return kOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::filesystem::path model;
  std::filesystem::path quantized;
  std::optional<std::filesystem::path> out;
};

int run_analyze(const AnalyzeArgs& a, std::uint64_t, std::ostream& out) {
  const ModelGraph reference = load_model(a.model);
  std::optional<QuantizedModel> q;
  ModelGraph approx;
  if (is_quantized_manifest(a.quantized)) {
    q = load_quantized_model(a.quantized);
    approx = q->graph;
  } else {
    approx = load_model(a.quantized);
  }
  const std::string csv = analyze_csv(analyze(reference, approx, q ? &*q : nullptr));
  if (a.out) {
    StagedFiles files;
    files.add(*a.out, csv);
    files.commit();
  } else {
    out << csv;
  }
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string kind = "gauss";
  Index n = 1000;
  Index dim = 2;
  int classes = 4;
  double separation = 3.0;
  double noise = 0.1;
  Index test_n = 0;
  std::filesystem::path out;
  std::optional<std::filesystem::path> test_out;
};

int run_synth(const SynthArgs& a, std::uint64_t seed, std::ostream&) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  if (a.test_n < 0 || (a.test_n > 0) != a.test_out.has_value()) {
    throw UsageError("--test-n and --test-out go together");
  }
  const Index total = a.n + a.test_n;
  Dataset d;
  if (a.kind == "gauss") {
    if (a.classes < 2 || a.dim < 1) throw UsageError("gauss needs --classes >= 2 and --dim >= 1");
    d = gaussian_mixture(total, a.dim, a.classes, a.separation, seed);
  } else if (a.kind == "spirals") {
    d = two_spirals(total, a.noise, seed);
  } else if (a.kind == "linear") {
    std::vector<double> w(static_cast<std::size_t>(a.dim), 1.0);
    d = linear_separable(total, w, a.noise, seed);
  } else {
    throw UsageError("--kind must be gauss, spirals or linear");
  }
  // Both splits come from one draw so they share the same class centers.
  std::vector<Index> train_rows, test_rows;
  for (Index i = 0; i < total; ++i) (i < a.n ? train_rows : test_rows).push_back(i);
  StagedFiles files;
  files.add(a.out, to_csv(d.subset(train_rows)));
  if (a.test_out) files.add(*a.test_out, to_csv(d.subset(test_rows)));
  files.commit();
  return kOk;
}

}  // namespace

std::vector<LayerComparison> analyze(const ModelGraph& reference, const ModelGraph& approx,
                                     const QuantizedModel* quantized) {
  if (reference.layers.size() != approx.layers.size()) throw ModelError("analyze: models have different layer counts");
  std::vector<LayerComparison> rows;
  for (std::size_t i : reference.weight_layers()) {
    const Layer& a = reference.layers[i];
    const Layer& b = approx.layers[i];
    if (a.kind != b.kind || a.weights.shape() != b.weights.shape()) {
      throw ModelError("analyze: " + a.describe(i) + " does not match " + b.describe(i));
    }
    LayerComparison row;
    row.layer = i;
    row.kind = std::string(to_string(a.kind));
    const RowMatrixXd w = a.weights.matrix().cast<double>();
    const RowMatrixXd diff = (b.weights.matrix().cast<double>() - w).cwiseAbs();
    row.max_abs_error = diff.maxCoeff();
    row.mse = diff.squaredNorm() / static_cast<double>(diff.size());
    const Vector<double> lambda = ternary_scale(w);
    for (Index r = 0; r < w.rows(); ++r) {
      if (lambda[r] > 0.0) row.max_error_over_lambda = std::max(row.max_error_over_lambda, diff.row(r).maxCoeff() / lambda[r]);
    }
    if (quantized) {
      const auto it = quantized->weights.find(i);
      if (it != quantized->weights.end()) {
        row.order = it->second.order();
        const CodeMatrix& codes = it->second.terms.front().codes;
        row.count_neg = (codes.array() == -1).count();
        row.count_zero = (codes.array() == 0).count();
        row.count_pos = (codes.array() == 1).count();
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string analyze_csv(const std::vector<LayerComparison>& rows) {
  std::ostringstream os;
  os << "layer,kind,order,max_abs_error,mse,max_error_over_lambda,count_neg,count_zero,count_pos,zero_fraction\n";
  for (const auto& r : rows) {
    const auto total = r.count_neg + r.count_zero + r.count_pos;
    os << r.layer << ',' << r.kind << ',' << r.order << ',' << fmt(r.max_abs_error) << ',' << fmt(r.mse) << ','
       << fmt(r.max_error_over_lambda) << ',' << r.count_neg << ',' << r.count_zero << ',' << r.count_pos << ','
       << fmt(total > 0 ? static_cast<double>(r.count_zero) / static_cast<double>(total) : 0.0) << '\n';
  }
  return os.str();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ternary quantization toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every stochastic path (default 0)");

  TheoryArgs theory;
  auto* c_theory = app.add_subcommand("theory", "Gaussian-prior expected-error analysis of ternary thresholds");
  c_theory->add_option("--lambda", theory.lambda, "Support bound in standard deviations")->capture_default_str();
  c_theory->add_option("--mc-samples", theory.mc_samples, "Monte-Carlo samples")->capture_default_str();
  c_theory->add_option("--out", theory.out, "Report JSON (stdout if omitted)");

  QuantizeArgs quant;
  auto* c_quant = app.add_subcommand("quantize", "Data-free ternary expansion of every weight layer");
  c_quant->add_option("--model", quant.model, "Float model manifest")->required();
  c_quant->add_option("--op", quant.op, "naive | tquant | mquant")->capture_default_str();
  c_quant->add_option("--order", quant.order, "Expansion order")->capture_default_str();
  c_quant->add_option("--out", quant.out, "Quantized container manifest")->required();
  c_quant->add_option("--residuals", quant.residuals, "Per-layer residual CSV (default <out>.residuals.csv)");
  c_quant->add_option("--report", quant.report, "Report JSON");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Accuracy of a float or quantized model");
  c_eval->add_option("--model", eval.model, "Model or quantized container manifest")->required();
  c_eval->add_option("--data", eval.data, "Dataset CSV")->required();
  c_eval->add_option("--abits", eval.abits, "Activation bits (0 = float)")->capture_default_str();
  c_eval->add_option("--act-op", eval.act_op, "Operator for 2-bit activations")->capture_default_str();
  c_eval->add_option("--act-range", eval.act_range, "bn | max")->capture_default_str();
  c_eval->add_option("--bn-mult", eval.bn_mult, "Range multiplier on batchnorm gamma")->capture_default_str();
  c_eval->add_option("--out", eval.out, "Report JSON (stdout if omitted)");

  PtqArgs ptq;
  auto* c_ptq = app.add_subcommand("ptq", "Post-training ternary quantization with learned rounding");
  c_ptq->add_option("--model", ptq.model, "Float model manifest")->required();
  c_ptq->add_option("--calib", ptq.calib, "Calibration CSV")->required();
  c_ptq->add_option("--op", ptq.op, "naive | tquant | mquant")->capture_default_str();
  c_ptq->add_option("--iters", ptq.iters, "Iterations per layer")->capture_default_str();
  c_ptq->add_option("--lr", ptq.lr, "Adam learning rate")->capture_default_str();
  c_ptq->add_option("--reg-weight", ptq.reg_weight, "Rounding regularizer weight")->capture_default_str();
  c_ptq->add_option("--max-rows", ptq.max_rows, "Calibration rows per layer (0 = all)")->capture_default_str();
  c_ptq->add_option("--test", ptq.test, "Held-out CSV for accuracy");
  c_ptq->add_option("--out", ptq.out, "Quantized container manifest")->required();
  c_ptq->add_option("--trajectory", ptq.trajectory, "Loss trajectory CSV (default <out>.trajectory.csv)");
  c_ptq->add_option("--report", ptq.report, "Report JSON (default <out>.report.json)");

  QatArgs qat;
  auto* c_qat = app.add_subcommand("qat", "Straight-through quantization-aware training");
  c_qat->add_option("--arch", qat.arch, "mlp:W1,W2,...")->capture_default_str();
  c_qat->add_option("--data", qat.data, "Training CSV")->required();
  c_qat->add_option("--test", qat.test, "Held-out CSV")->required();
  c_qat->add_option("--epochs", qat.epochs, "Epochs")->capture_default_str();
  c_qat->add_option("--seeds", qat.seeds, "Number of seeds (seed, seed+1, ...)")->capture_default_str();
  c_qat->add_option("--wbits", qat.wbits, "Weight bits")->capture_default_str();
  c_qat->add_option("--abits", qat.abits, "Activation bits (0 = float)")->capture_default_str();
  c_qat->add_option("--op", qat.op, "naive | tquant | mquant | none")->capture_default_str();
  c_qat->add_option("--lr", qat.lr, "SGD learning rate")->capture_default_str();
  c_qat->add_option("--momentum", qat.momentum, "SGD momentum")->capture_default_str();
  c_qat->add_option("--batch", qat.batch, "Batch size")->capture_default_str();
  c_qat->add_option("--out", qat.out, "Summary JSON")->required();
  c_qat->add_option("--save-model", qat.save_model, "Write the first seed's model manifest");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Per-layer error table of a quantized model");
  c_an->add_option("--model", an.model, "Float reference manifest")->required();
  c_an->add_option("--quantized", an.quantized, "Quantized container or float manifest")->required();
  c_an->add_option("--out", an.out, "CSV (stdout if omitted)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dataset CSV");
  c_synth->add_option("--kind", synth.kind, "gauss | spirals | linear")->capture_default_str();
  c_synth->add_option("--n", synth.n, "Samples")->capture_default_str();
  c_synth->add_option("--dim", synth.dim, "Feature dimension (gauss, linear)")->capture_default_str();
  c_synth->add_option("--classes", synth.classes, "Classes (gauss)")->capture_default_str();
  c_synth->add_option("--separation", synth.separation, "Center distance (gauss)")->capture_default_str();
  c_synth->add_option("--noise", synth.noise, "Noise (spirals) / margin (linear)")->capture_default_str();
  c_synth->add_option("--test-n", synth.test_n, "Held-out samples from the same draw")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Dataset CSV")->required();
  c_synth->add_option("--test-out", synth.test_out, "Held-out CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (c_theory->parsed()) return run_theory(theory, seed, out);
    if (c_quant->parsed()) return run_quantize(quant, seed, out);
    if (c_eval->parsed()) return run_eval(eval, seed, out);
    if (c_ptq->parsed()) return run_ptq(ptq, seed, out);
    if (c_qat->parsed()) return run_qat(qat, seed, out);
    if (c_an->parsed()) return run_analyze(an, seed, out);
    if (c_synth->parsed()) return run_synth(synth, seed, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  err << "no subcommand\n";
  return kUsageError;
}

}  // namespace ternia::cli
