#include "helpers.hpp"

#include "ternia/dataset.hpp"
#include "ternia/forward.hpp"
#include "ternia/model.hpp"

#include <doctest.h>

using namespace ternia;

namespace {

Tensor t(Shape shape, std::vector<float> v) { return Tensor(std::move(shape), std::move(v)); }

Tensor randn(Shape shape, std::mt19937_64& rng, float sd = 1.0f) {
  std::normal_distribution<float> n(0.0f, sd);
  Tensor out(std::move(shape));
  for (float& v : out.data()) v = n(rng);
  return out;
}

// Small conv net with every layer kind, used for round-trip and forward tests.
ModelGraph conv_net(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelGraph g;
  g.input = {2, 6, 6};
  g.layers.push_back(make_conv2d(randn({3, 2, 3, 3}, rng, 0.4f), randn({3}, rng), 1, 1));
  g.layers.push_back(make_batchnorm(randn({3}, rng), randn({3}, rng), randn({3}, rng), t({3}, {1.0f, 0.5f, 2.0f})));
  g.layers.push_back(make_relu());
  g.layers.push_back(make_conv2d(randn({3, 3, 3, 3}, rng, 0.3f), randn({3}, rng), 1, 1));
  g.layers.push_back(make_add(2));
  g.layers.push_back(make_avgpool(2, 2));
  g.layers.push_back(make_flatten());
  g.layers.push_back(make_dense(randn({4, 27}, rng, 0.2f), randn({4}, rng)));
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("tensor shape and data length must agree") {
  CHECK_THROWS_AS(t({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{0, 3}), std::invalid_argument);
  const Tensor x = t({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  CHECK(x.rows() == 2);
  CHECK(x.cols() == 6);
  CHECK(x.matrix()(1, 0) == 6.0f);
  CHECK_THROWS(x.reshaped({5, 2}));
  CHECK(x.reshaped({3, 4}).matrix()(2, 3) == 11.0f);
}

TEST_CASE("row_minmax returns exact per-row extrema") {
  auto a = row_minmax(t({1, 3}, {0.2f, -0.5f, 0.1f}));
  REQUIRE(a.size() == 1);
  CHECK(a[0] == std::pair{-0.5f, 0.2f});
  auto b = row_minmax(t({2, 2}, {1, 1, -2, 3}));
  CHECK(b[0] == std::pair{1.0f, 1.0f});
  CHECK(b[1] == std::pair{-2.0f, 3.0f});
  CHECK(row_minmax(t({1, 2}, {0.7f, 0.7f}))[0] == std::pair{0.7f, 0.7f});
  CHECK_THROWS(row_minmax(t({3}, {1, 2, 3})));
}

TEST_CASE("row_minmax on conv weights uses the output channel as the row") {
  Tensor w(Shape{2, 1, 2, 2});
  for (Index i = 0; i < 8; ++i) w[i] = static_cast<float>(i);
  const auto mm = row_minmax(w);
  CHECK(mm[0] == std::pair{0.0f, 3.0f});
  CHECK(mm[1] == std::pair{4.0f, 7.0f});
}

TEST_CASE("accuracy counts argmax hits with lowest-index ties") {
  const std::vector<int> l01{0, 1};
  CHECK(accuracy(t({2, 2}, {2, 1, 0, 3}), l01) == 1.0);
  const std::vector<int> l1{1};
  CHECK(accuracy(t({1, 2}, {2, 1}), l1) == 0.0);
  const std::vector<int> l0{0};
  CHECK(accuracy(t({1, 2}, {1, 1}), l0) == 1.0);
  CHECK_THROWS(accuracy(t({1, 2}, {1, 1}), l01));
}

TEST_CASE("forward: identity dense, relu and unit batchnorm") {
  ModelGraph g;
  g.input = {2};
  g.layers.push_back(make_dense(t({2, 2}, {1, 0, 0, 1}), t({2}, {0, 0})));
  CHECK(forward(g, t({1, 2}, {3, 4})) == t({1, 2}, {3, 4}));

  ModelGraph r;
  r.input = {2};
  r.layers.push_back(make_relu());
  CHECK(forward(r, t({1, 2}, {-1, 2})) == t({1, 2}, {0, 2}));

  ModelGraph bn;
  bn.input = {3};
  bn.layers.push_back(make_batchnorm(t({3}, {1, 1, 1}), t({3}, {0, 0, 0}), t({3}, {0, 0, 0}), t({3}, {1, 1, 1})));
  const Tensor x = t({2, 3}, {0.5f, -2.0f, 7.0f, 1.0f, 3.0f, -4.0f});
  const Tensor y = forward(bn, x);
  for (Index i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-4));
}

TEST_CASE("forward rejects a batch of the wrong shape") {
  ModelGraph g;
  g.input = {2};
  g.layers.push_back(make_dense(t({1, 2}, {0.5f, -0.5f}), t({1}, {0})));
  CHECK_THROWS(forward(g, t({1, 3}, {1, 2, 3})));
}

TEST_CASE("conv via im2col matches a direct convolution loop") {
  std::mt19937_64 rng(5);
  const Tensor x = randn({2, 2, 5, 5}, rng);
  const Tensor w = randn({3, 2, 3, 3}, rng);
  const Tensor b = randn({3}, rng);
  const Index stride = 2, pad = 1;
  const Tensor y = apply_layer(make_conv2d(w, b, stride, pad), x);
  const Index oh = (5 + 2 * pad - 3) / stride + 1;
  REQUIRE(y.shape() == Shape{2, 3, oh, oh});
  for (Index n = 0; n < 2; ++n) {
    for (Index o = 0; o < 3; ++o) {
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < oh; ++ox) {
          double acc = b[o];
          for (Index c = 0; c < 2; ++c) {
            for (Index ky = 0; ky < 3; ++ky) {
              for (Index kx = 0; kx < 3; ++kx) {
                const Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= 5 || ix >= 5) continue;
                acc += static_cast<double>(w[((o * 2 + c) * 3 + ky) * 3 + kx]) * x[((n * 2 + c) * 5 + iy) * 5 + ix];
              }
            }
          }
          CHECK(y[((n * 3 + o) * oh + oy) * oh + ox] == doctest::Approx(acc).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("property: linear-only graphs are homogeneous") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    ModelGraph g;
    g.input = {2, 4, 4};
    g.layers.push_back(make_conv2d(randn({3, 2, 3, 3}, rng), Tensor(Shape{3}), 1, 1));
    g.layers.push_back(make_avgpool(0));
    g.layers.push_back(make_flatten());
    g.layers.push_back(make_dense(randn({2, 3}, rng), Tensor(Shape{2})));
    const Tensor x = randn({3, 2, 4, 4}, rng);
    const float alpha = 0.25f + static_cast<float>(trial);
    Tensor ax = x;
    ax.flat() *= alpha;
    const Tensor y = forward(g, x), ay = forward(g, ax);
    for (Index i = 0; i < y.size(); ++i) {
      CHECK(ay[i] == doctest::Approx(alpha * y[i]).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("forward is bit-identical across runs") {
  const ModelGraph g = conv_net(1);
  std::mt19937_64 rng(2);
  const Tensor x = randn({4, 2, 6, 6}, rng);
  CHECK(forward(g, x) == forward(g, x));
  CHECK(forward(g, x).shape() == Shape{4, 4});
}

TEST_CASE("one-layer manifest loads with the declared shapes") {
  test::TempDir dir("model");
  write_file_bytes(dir / "w.bin", encode_f32_blob(std::vector<float>{0.5f, -0.5f}));
  write_file_bytes(dir / "b.bin", encode_f32_blob(std::vector<float>{0.0f}));
  test::spit(dir / "m.json",
             R"({"layers":[{"kind":"dense","in":2,"out":1,"weights":"w.bin","bias":"b.bin"}]})");
  const ModelGraph g = load_model(dir / "m.json");
  REQUIRE(g.layers.size() == 1);
  CHECK(g.layers[0].weights.shape() == Shape{1, 2});
  CHECK(g.layers[0].weights == t({1, 2}, {0.5f, -0.5f}));
}

TEST_CASE("load errors name the offending layer") {
  test::TempDir dir("model_err");
  write_file_bytes(dir / "w.bin", encode_f32_blob(std::vector<float>{1, 2, 3}));
  write_file_bytes(dir / "b.bin", encode_f32_blob(std::vector<float>{0.0f}));
  test::spit(dir / "m.json",
             R"({"layers":[{"kind":"dense","in":2,"out":1,"weights":"w.bin","bias":"b.bin"}]})");
  auto message = [&] {
    try {
      load_model(dir / "m.json");
    } catch (const ModelError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string shape_msg = message();
  CHECK(shape_msg.find("layer 0") != std::string::npos);
  CHECK(shape_msg.find("shape mismatch") != std::string::npos);

  write_file_bytes(dir / "w.bin", encode_f32_blob(std::vector<float>{1, std::nanf("")}));
  CHECK(message().find("layer 0") != std::string::npos);

  std::filesystem::remove(dir / "w.bin");
  CHECK(message().find("layer 0") != std::string::npos);

  test::spit(dir / "m.json", R"({"input":[2],"layers":[{"kind":"relu"},{"kind":"add","from":3}]})");
  CHECK(message().find("layer 1") != std::string::npos);
}

TEST_CASE("save then load reproduces parameter blobs byte for byte") {
  test::TempDir dir("roundtrip");
  const ModelGraph g = conv_net(3);
  save_model(g, dir / "a.json");
  const ModelGraph back = load_model(dir / "a.json");
  save_model(back, dir / "b.json");
  std::size_t blobs = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("a_", 0) != 0) continue;
    ++blobs;
    CHECK(test::slurp(entry.path()) == test::slurp(dir / ("b_" + name.substr(2))));
  }
  CHECK(blobs == 10);
  CHECK(test::slurp(dir / "a.json").size() == test::slurp(dir / "b.json").size());
  CHECK(forward(back, Tensor(Shape{1, 2, 6, 6})) == forward(g, Tensor(Shape{1, 2, 6, 6})));
}

TEST_CASE("csv parsing: header skip, ragged rows and labels") {
  const Dataset d = parse_csv("a,b,label\n0.5,1,0\n-2,3.25,2\n");
  CHECK(d.size() == 2);
  CHECK(d.features.shape() == Shape{2, 2});
  CHECK(d.labels == std::vector<int>{0, 2});
  CHECK(d.num_classes() == 3);
  CHECK_THROWS(parse_csv("1,2,0\n1,0\n"));
  CHECK_THROWS(parse_csv("1,2,x\n"));
  CHECK_THROWS(parse_csv("1,2,-1\n"));
  const Dataset again = parse_csv(to_csv(d));
  CHECK(again.features == d.features);
  CHECK(again.labels == d.labels);
}

TEST_CASE("synthetic generators are seeded and balanced") {
  const Dataset a = gaussian_mixture(400, 5, 4, 3.0, 11), b = gaussian_mixture(400, 5, 4, 3.0, 11);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  for (int c = 0; c < 4; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 100);
  CHECK_FALSE(gaussian_mixture(400, 5, 4, 3.0, 12).features == a.features);
  const Dataset s = two_spirals(200, 0.05, 1);
  CHECK(s.num_classes() == 2);
  const std::vector<double> w{1.0, -1.0};
  const Dataset l = linear_separable(300, w, 0.2, 4);
  for (Index i = 0; i < l.size(); ++i) {
    const double side = (l.features.matrix()(i, 0) - l.features.matrix()(i, 1)) / std::sqrt(2.0);
    CHECK(std::abs(side) >= 0.2 - 1e-6);
    CHECK((side > 0) == (l.labels[static_cast<std::size_t>(i)] == 1));
  }
}
