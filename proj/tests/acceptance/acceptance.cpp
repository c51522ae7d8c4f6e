// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include "ternia/cli.hpp"
#include "ternia/dataset.hpp"
#include "ternia/forward.hpp"
#include "ternia/gauss.hpp"
#include "ternia/ptq.hpp"
#include "ternia/qat.hpp"
#include "ternia/quant.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <unistd.h>
#include <string>

using namespace ternia;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Independent normal helpers for the oracles (erf-based, not the library's).
double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

RowMatrixXd random_rows(Index rows, Index cols, int kind, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  RowMatrixXd w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) {
    const double g = normal(rng), u = uniform(rng);
    switch (kind % 3) {
      case 0: w.data()[i] = g; break;
      case 1: w.data()[i] = u; break;
      default: w.data()[i] = u < 0.8 && u > -0.8 ? 0.3 * g : 2.0 * u; break;  // mixture with heavy edges
    }
  }
  return w;
}

// ---------------------------------------------------------------------------

Outcome tquant_max_error() {
  std::mt19937_64 rng(101);
  double worst = 0.0;  // max over rows of max|w - w'| / lambda
  for (int row = 0; row < 100; ++row) {
    const RowMatrixXd w = random_rows(1, 1024, row, rng);
    const double lambda = ternary_scale(w)[0];
    const double err = (quantize(w, Operator::tquant).dequantize() - w).cwiseAbs().maxCoeff();
    worst = std::max(worst, err / lambda);
  }
  // Tightness: a dense grid on [-lambda, lambda] that contains the endpoints.
  const double lambda = 1.7;
  RowMatrixXd grid(1, 20001);
  for (Index i = 0; i < grid.cols(); ++i) grid(0, i) = -lambda + 2.0 * lambda * static_cast<double>(i) / 20000.0;
  grid(0, grid.cols() - 1) = lambda;
  const double grid_err = (quantize(grid, Operator::tquant).dequantize() - grid).cwiseAbs().maxCoeff();
  const bool bound = worst <= 1.0 / 3.0 + 1e-6;
  const bool tight = grid_err >= lambda / 3.0 - 1e-3 && grid_err <= lambda / 3.0 + 1e-6;
  return {bound && tight, "worst err/lambda over 100 rows " + num(worst, 9) + " (<= 1/3+1e-6), grid max err " +
                              num(grid_err, 9) + " vs lambda/3 " + num(lambda / 3.0, 9)};
}

Outcome mquant_scale() {
  const double expected = 5.0 / (7.0 * std::sqrt(2.0));
  std::mt19937_64 rng(202);
  double worst_rel = 0.0;
  for (int row = 0; row < 20; ++row) {
    const RowMatrixXd w = random_rows(1, 256, row, rng);
    const double lambda = ternary_scale(w)[0];
    const double step = quantize(w, Operator::mquant).scale[0];
    worst_rel = std::max(worst_rel, std::abs(step - lambda * expected) / (lambda * expected));
  }
  // Histogram report: unit-Gaussian samples, lambda fixed at 3 sigma.
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrixXd g(1, 200000);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = std::clamp(normal(rng), -3.0, 3.0);
  const Vector<double> step = Vector<double>::Constant(1, 3.0 * expected);
  const CodeMatrix codes = quantize_with_step(g, step).codes;
  const double n = static_cast<double>(codes.size());
  const double neg = static_cast<double>((codes.array() == -1).count()) / n;
  const double zero = static_cast<double>((codes.array() == 0).count()) / n;
  const double pos = static_cast<double>((codes.array() == 1).count()) / n;
  return {worst_rel <= 1e-9 && std::abs(expected - 0.50507627227610535) < 1e-15,
          "max rel step error " + num(worst_rel, 3) + "; histogram at lambda=3: -1 " + num(neg, 4) + ", 0 " +
              num(zero, 4) + " (vs 1/3), +1 " + num(pos, 4)};
}

Outcome closed_forms_vs_quadrature() {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto quad = [&](auto f, double lo, double hi) { return ts.integrate(f, lo, hi, 1e-14); };
  double worst = 0.0;
  int cases = 0;
  for (double a : {0.1, 0.3, 0.5051, 1.0, 2.0}) {
    const double mass_c = quad([](double w) { return pdf(w); }, -a, a);
    const double var_c = quad([](double w) { return w * w * pdf(w); }, -a, a) / mass_c;
    worst = std::max(worst, std::abs(gauss::trunc_var_central(a) - var_c));
    ++cases;
    for (double lambda : {2.0, 3.0, 4.0, 6.0}) {
      if (a >= lambda) continue;
      const double mass = quad([](double w) { return pdf(w); }, a, lambda);
      const double mean = quad([](double w) { return w * pdf(w); }, a, lambda) / mass;
      const double second = quad([](double w) { return w * w * pdf(w); }, a, lambda) / mass;
      worst = std::max(worst, std::abs(gauss::trunc_var_tail(a, lambda) - (second - mean * mean)));
      ++cases;
    }
  }
  return {worst <= 1e-8, std::to_string(cases) + " cases, max abs diff " + num(worst, 3) + " (<= 1e-8)"};
}

// Expected squared error of the ternary quantizer under N(0,1) truncated to (-lambda, lambda),
// from the analytic partial moments of the normal density.
double analytic_error(double a, double lambda) {
  auto m0 = [](double l, double u) { return cdf(u) - cdf(l); };
  auto m1 = [](double l, double u) { return pdf(l) - pdf(u); };
  auto m2 = [&](double l, double u) { return m0(l, u) - (u * pdf(u) - l * pdf(l)); };
  const double q = m1(a, lambda) / m0(a, lambda);
  const double tail = m2(a, lambda) - 2.0 * q * m1(a, lambda) + q * q * m0(a, lambda);
  return (m2(-a, a) + 2.0 * tail) / m0(-lambda, lambda);
}

Outcome theorem_numerics() {
  const double lambda = 3.0;
  const gauss::ThresholdMinimum found = gauss::argmin_threshold(lambda);
  double best_a = 0.0, best_e = std::numeric_limits<double>::infinity();
  for (long i = 1; i < 300000; ++i) {
    const double a = 1e-5 * static_cast<double>(i);
    const double e = analytic_error(a, lambda);
    if (e < best_e) {
      best_e = e;
      best_a = a;
    }
  }
  auto err_at = [&](double a) { return gauss::expected_error({a, gauss::optimal_level(a, lambda), lambda}); };
  const double closed = 5.0 / (7.0 * std::sqrt(2.0));
  const double e_star = found.error, e_closed = err_at(closed), e_naive = err_at(lambda / 2.0),
               e_tquant = err_at(lambda / 3.0);
  const bool match = std::abs(found.a - best_a) <= 1e-4;
  const bool order = e_star <= e_closed && e_closed <= e_naive && e_closed <= e_tquant;
  return {match && order, "a* " + num(found.a, 10) + " vs grid oracle " + num(best_a, 7) + "; E(a*) " + num(e_star, 8) +
                              " <= E(5/(7sqrt2)) " + num(e_closed, 8) + " <= E(lambda/2) " + num(e_naive, 8) +
                              ", E(lambda/3) " + num(e_tquant, 8) + "; |a* - 5/(7sqrt2)| = " +
                              num(std::abs(found.a - closed), 6)};
}

Outcome polynomial_system() {
  const double phi = 2.0 * std::sqrt(2.0) / 7.0;
  const double target = 5.0 / (7.0 * std::sqrt(2.0));
  const double direct = 0.25 * (std::sqrt(std::max(0.0, 49.0 * phi * phi - 8.0)) + 5.0 * phi);
  const double lib = gauss::polynomial_root_a(phi);
  const double gap = std::max(std::abs(direct - target), std::abs(lib - target));
  return {gap <= 1e-12, "a(phi=2sqrt2/7): direct " + num(direct, 17) + ", library " + num(lib, 17) + ", target " +
                            num(target, 17) + ", max gap " + num(gap, 3)};
}

Outcome expansion_contraction() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<Index> rows_d(4, 32), cols_d(16, 256);
  const double limit[3] = {0.5, 1.0 / 3.0 + 1e-6, 0.495 + 1e-6};
  double worst[3] = {0.0, 0.0, 0.0};
  double order4 = 0.0;  // max over rows of residual / (lambda / 81) after 4 tquant terms
  for (int t = 0; t < 50; ++t) {
    const RowMatrixXd w = random_rows(rows_d(rng), cols_d(rng), t, rng);
    const Vector<double> lambda = ternary_scale(w);
    for (std::size_t k = 0; k < kAllOperators.size(); ++k) {
      const auto terms = expand(w, kAllOperators[k], 4);
      RowMatrixXd residual = w;
      for (const auto& term : terms) {
        const Vector<double> before = ternary_scale(residual);
        residual -= term.dequantize();
        const Vector<double> after = ternary_scale(residual);
        for (Index r = 0; r < w.rows(); ++r) {
          if (before[r] > 0.0) worst[k] = std::max(worst[k], after[r] / before[r]);
        }
      }
      if (kAllOperators[k] == Operator::tquant) {
        const Vector<double> final_max = ternary_scale(residual);
        for (Index r = 0; r < w.rows(); ++r) order4 = std::max(order4, final_max[r] / (lambda[r] / 81.0));
      }
    }
  }
  const bool pass = worst[0] <= limit[0] && worst[1] <= limit[1] && worst[2] <= limit[2] && order4 <= 1.0 + 1e-9;
  return {pass, "worst contraction naive " + num(worst[0], 8) + ", tquant " + num(worst[1], 8) + ", mquant " +
                    num(worst[2], 8) + "; order-4 tquant residual / (lambda/81) " + num(order4, 8)};
}

Outcome naive_collapse() {
  // One tensor of 10 000 weights with a single symmetric lambda; fixed seed chosen in advance.
  std::mt19937_64 rng(0);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Tensor w(Shape{1, 10000});
  for (float& v : w.data()) v = normal(rng);
  auto zero_fraction = [&](Operator op) {
    const TernaryTensor q = quantize(w, op);
    return static_cast<double>((q.codes().flat().array() == 0).count()) / 10000.0;
  };
  const double naive = zero_fraction(Operator::naive), tq = zero_fraction(Operator::tquant);
  const double lambda = w.matrix().cwiseAbs().maxCoeff();
  return {naive > 0.90 && tq < 0.80, "lambda " + num(lambda, 5) + "; zero-code fraction naive " + num(naive, 4) +
                                         " (> 0.90), tquant " + num(tq, 4) + " (< 0.80)"};
}

struct Split {
  Dataset train, test;
};

Split gaussian_split(std::uint64_t seed) {
  const Dataset all = gaussian_mixture(3000, 8, 4, 2.0, seed);
  std::vector<Index> a, b;
  for (Index i = 0; i < all.size(); ++i) (i < 2000 ? a : b).push_back(i);
  return {all.subset(a), all.subset(b)};
}

Outcome ptq_trend() {
  std::map<Operator, double> mean;
  std::string per_seed;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const Split data = gaussian_split(seed);
    QatConfig fp;
    fp.hidden = {32, 32};
    fp.epochs = 20;
    fp.op = std::nullopt;
    fp.act_bits = 0;
    fp.seeds = {seed};
    std::vector<TrainedMlp> models;
    ste_train(data.train, data.test, fp, &models);
    const ModelGraph model = to_model_graph(models.front().net);
    PtqConfig cfg;
    cfg.iterations = 500;
    cfg.seed = seed;
    per_seed += " seed " + std::to_string(seed) + ":";
    for (Operator op : kAllOperators) {
      const PtqResult res = ptq_quantize_model(model, data.train, op, cfg);
      const double acc = accuracy(forward(res.model.graph, data.test.features), data.test.labels);
      mean[op] += acc / 3.0;
      per_seed += " " + std::string(to_string(op)) + "=" + num(acc, 4);
    }
  }
  const double n = mean[Operator::naive], t = mean[Operator::tquant], m = mean[Operator::mquant];
  return {m >= t && t >= n && t - n >= 0.02,
          "mean accuracy naive " + num(n, 4) + ", tquant " + num(t, 4) + ", mquant " + num(m, 4) + ";" + per_seed};
}

Outcome qat_trend() {
  const Split data = gaussian_split(7);
  std::map<std::string, RunSummary> runs;
  for (const char* name : {"naive", "tquant", "mquant"}) {
    QatConfig cfg;
    cfg.hidden = {32, 32};
    cfg.epochs = 20;
    cfg.weight_bits = 2;
    cfg.act_bits = 4;
    cfg.op = operator_from_string(name);
    cfg.seeds = {0, 1, 2, 3, 4};
    runs[name] = ste_train(data.train, data.test, cfg);
  }
  const RunSummary& n = runs["naive"];
  const RunSummary& t = runs["tquant"];
  const RunSummary& m = runs["mquant"];
  const bool pass = t.mean - n.mean >= 0.05 && t.std <= n.std && n.diverged == 0 && t.diverged == 0;
  return {pass, "W2/A4, 5 seeds: naive " + num(n.mean, 4) + " +- " + num(n.std, 3) + ", tquant " + num(t.mean, 4) +
                    " +- " + num(t.std, 3) + " (mquant " + num(m.mean, 4) + " +- " + num(m.std, 3) + ")"};
}

Outcome ste_gradient_check() {
  std::mt19937_64 rng(1010);
  const Index inputs = 6, classes = 3, n = 20;
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrixXd x(n, inputs);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);

  double worst = 0.0;
  for (Operator op : kAllOperators) {
    Mlp<double> net = Mlp<double>::init(inputs, {}, classes, rng);
    const MlpGradients<double> g = ste_gradients(net, x, y, ForwardOptions{op, 0, false, 0.9});
    // Unquantized loss as a function of the weights the quantized forward actually used.
    Mlp<double> fp = net;
    fp.weights[0] = forward_weights(net.weights[0], std::optional<Operator>(op));
    const ForwardOptions plain{std::nullopt, 0, false, 0.9};
    auto loss = [&](const Mlp<double>& m) {
      Mlp<double> copy = m;
      return softmax_cross_entropy<double>(mlp_forward(copy, x, plain), y, nullptr);
    };
    const double h = 1e-6;
    double num_max = 0.0, diff_max = 0.0;
    for (Index i = 0; i < fp.weights[0].size(); ++i) {
      Mlp<double> up = fp, down = fp;
      up.weights[0].data()[i] += h;
      down.weights[0].data()[i] -= h;
      const double fd = (loss(up) - loss(down)) / (2.0 * h);
      num_max = std::max(num_max, std::abs(fd));
      diff_max = std::max(diff_max, std::abs(fd - g.weights[0].data()[i]));
    }
    worst = std::max(worst, diff_max / num_max);
  }
  return {worst <= 1e-4, "max relative |STE - finite difference| over naive/tquant/mquant " + num(worst, 3)};
}

Outcome cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("ternia_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& name) { return (dir / name).string(); };

  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"synth", {"--seed", "3", "synth", "--kind", "gauss", "--n", "400", "--test-n", "200", "--dim", "6",
                 "--classes", "4", "--out", p("train.csv"), "--test-out", p("test.csv")}},
      {"qat", {"--seed", "3", "qat", "--arch", "mlp:16", "--data", p("train.csv"), "--test", p("test.csv"),
               "--epochs", "5", "--seeds", "2", "--op", "none", "--abits", "0", "--out", p("qat.json"),
               "--save-model", p("float.json")}},
      {"quantize", {"--seed", "3", "quantize", "--model", p("float.json"), "--op", "tquant", "--order", "2", "--out",
                    p("q.json"), "--report", p("quantize_report.json")}},
      {"eval", {"--seed", "3", "eval", "--model", p("q.json"), "--data", p("test.csv"), "--abits", "4",
                "--act-range", "max", "--out", p("eval.json")}},
      {"ptq", {"--seed", "3", "ptq", "--model", p("float.json"), "--calib", p("train.csv"), "--test", p("test.csv"),
               "--op", "mquant", "--iters", "100", "--out", p("ptq.json")}},
      {"analyze", {"--seed", "3", "analyze", "--model", p("float.json"), "--quantized", p("q.json"), "--out",
                   p("analyze.csv")}},
      {"theory", {"--seed", "3", "theory", "--lambda", "3", "--mc-samples", "100000", "--out", p("theory.json")}},
  };

  auto snapshot = [&](std::string& stdout_text) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      files[entry.path().filename().string()] = ss.str();
    }
    files["<stdout>"] = stdout_text;
    return files;
  };

  std::vector<std::string> failed;
  for (const auto& [name, args] : commands) {
    std::map<std::string, std::string> runs[2];
    for (int r = 0; r < 2; ++r) {
      std::ostringstream out, err;
      const int code = cli::dispatch(args, out, err);
      std::string text = out.str();
      runs[r] = snapshot(text);
      if (code != 0) failed.push_back(name + " exit " + std::to_string(code) + ": " + err.str());
    }
    if (runs[0] != runs[1]) failed.push_back(name + " outputs differ");
  }
  fs::remove_all(dir);
  std::string detail = std::to_string(commands.size()) + " subcommands run twice";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds, 0 = none
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "tquant max-error bound", 1.0, tquant_max_error},
      {2, "mquant effective step", 0.0, mquant_scale},
      {3, "truncated variances vs quadrature", 5.0, closed_forms_vs_quadrature},
      {4, "threshold argmin and error ordering", 30.0, theorem_numerics},
      {5, "polynomial system self-consistency", 0.0, polynomial_system},
      {6, "expansion contraction", 0.0, expansion_contraction},
      {7, "naive-operator collapse", 1.0, naive_collapse},
      {8, "ptq accuracy trend", 300.0, ptq_trend},
      {9, "qat accuracy and variance trend", 300.0, qat_trend},
      {10, "ste gradient check", 0.0, ste_gradient_check},
      {11, "cli determinism", 0.0, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit > 0.0 && secs > c.time_limit) {
      o.pass = false;
      o.detail += "; exceeded time limit " + num(c.time_limit, 3) + " s";
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%d] %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
