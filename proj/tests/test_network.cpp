#include <cmath>
#include <vector>

#include "doctest.h"
#include "mgcd/langevin.hpp"
#include "mgcd/network.hpp"
#include "support/oracles.hpp"

using namespace mgcd;

namespace {

template <typename T>
TensorT<T> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  TensorT<T> t(n, c, h, w);
  for (T& v : t.data) v = static_cast<T>(rng.normal() * scale);
  return t;
}

std::vector<Shape3> conv_shapes(const NetworkSpec& spec) {
  std::vector<Shape3> out;
  const auto chain = spec.shape_chain();
  for (size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::conv) out.push_back(chain[i + 1]);
  return out;
}

}  // namespace

TEST_CASE("preset_spec: grid3 on 3x64x64 ends at 256x16x16 before the scalar head") {
  const auto spec = preset_spec(3, 3, 64, 64);
  const auto shapes = conv_shapes(spec);
  REQUIRE(shapes.size() == 3);
  CHECK(shapes[0] == Shape3{96, 32, 32});
  CHECK(shapes[1] == Shape3{128, 16, 16});
  CHECK(shapes[2] == Shape3{256, 16, 16});
  const auto chain = spec.shape_chain();
  CHECK(chain.back() == Shape3{1, 1, 1});
}

TEST_CASE("preset_spec: grid1 on 3x4x4 chain is 96/128/256 at 2x2") {
  const auto spec = preset_spec(1, 3, 4, 4);
  const auto shapes = conv_shapes(spec);
  REQUIRE(shapes.size() == 3);
  CHECK(shapes[0] == Shape3{96, 2, 2});
  CHECK(shapes[1] == Shape3{128, 2, 2});
  CHECK(shapes[2] == Shape3{256, 2, 2});
}

TEST_CASE("preset_spec: grid2 has four conv blocks ending at 512 channels") {
  const auto spec = preset_spec(2, 3, 16, 16);
  const auto shapes = conv_shapes(spec);
  REQUIRE(shapes.size() == 4);
  CHECK(shapes[0] == Shape3{96, 8, 8});
  CHECK(shapes[3] == Shape3{512, 8, 8});
}

TEST_CASE("preset_spec: channel scale 0.25 gives 24-32-64") {
  const auto spec = preset_spec(1, 3, 16, 16, 0.25);
  const auto shapes = conv_shapes(spec);
  CHECK(shapes[0].c == 24);
  CHECK(shapes[1].c == 32);
  CHECK(shapes[2].c == 64);
}

TEST_CASE("preset_spec: input too small for the stack is rejected") {
  CHECK_THROWS_AS(preset_spec(3, 3, 1, 1), ShapeError);
  CHECK_THROWS_AS(preset_spec(0, 3, 64, 64), ConfigError);
  // a custom spec without padding can run out of pixels mid-stack
  NetworkSpec spec;
  spec.in_c = 1;
  spec.in_h = 4;
  spec.in_w = 4;
  spec.layers = {LayerDesc::make_conv(2, 3, 1, 0), LayerDesc::make_conv(2, 3, 1, 0),
                 LayerDesc::make_conv(2, 3, 1, 0), LayerDesc::make_fc(1)};
  CHECK_THROWS_AS(spec.validate(), ShapeError);
}

TEST_CASE("init_params: deterministic, zero biases, weight scale near 0.01") {
  const auto spec = preset_spec(1, 3, 16, 16, 0.5);
  const auto a = init_params<float>(spec, 42);
  const auto b = init_params<float>(spec, 42);
  REQUIRE(a.layers.size() == b.layers.size());
  for (size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].weight.data == b.layers[i].weight.data);
    for (float v : a.layers[i].bias.data) CHECK(v == 0.0f);
  }
  for (const auto& l : a.layers) {
    if (l.weight.size() < 1000) continue;
    double s2 = 0;
    for (float v : l.weight.data) s2 += static_cast<double>(v) * v;
    const double std = std::sqrt(s2 / l.weight.size());
    CHECK(std > 0.008);
    CHECK(std < 0.012);
  }
}

TEST_CASE("score: all-zero weights score the final bias for every input") {
  Rng rng(1);
  const auto spec = preset_spec(1, 1, 8, 8, 0.1);
  auto params = init_params<float>(spec, 5);
  for (auto& l : params.layers)
    for (float& v : l.weight.data) v = 0.0f;
  params.layers.back().bias.data[0] = 0.625f;
  const auto x = random_tensor<float>(3, 1, 8, 8, rng);
  for (float s : score(spec, params, x, BnMode::train)) CHECK(s == doctest::Approx(0.625f));
}

TEST_CASE("score: duplicated inputs score equally in eval-statistics mode") {
  Rng rng(2);
  const auto spec = preset_spec(1, 1, 8, 8, 0.2);
  auto params = init_params<float>(spec, 9);
  auto one = random_tensor<float>(1, 1, 8, 8, rng);
  TensorT<float> dup(3, 1, 8, 8);
  for (int i = 0; i < 3; ++i)
    std::copy(one.data.begin(), one.data.end(), dup.data.begin() + i * 64);
  const auto s = score(spec, params, dup, BnMode::eval);
  CHECK(s[0] == s[1]);
  CHECK(s[1] == s[2]);
}

TEST_CASE("score: hand-built conv + fc network matches arithmetic done by hand") {
  // input [[1,2],[3,4]], 2x2 conv weight [[1,0],[0,1]] bias 0.5 -> 1+4+0.5 = 5.5
  // fc weight 2, bias -1 -> 10
  NetworkSpec spec;
  spec.in_c = 1;
  spec.in_h = 2;
  spec.in_w = 2;
  spec.layers = {LayerDesc::make_conv(1, 2, 1, 0), LayerDesc::make_fc(1)};
  spec.validate();
  ParamSet params;
  params.layers.resize(2);
  params.layers[0].weight = Tensor(1, 1, 2, 2);
  params.layers[0].weight.data = {1, 0, 0, 1};
  params.layers[0].bias = Tensor(1, 1, 1, 1, 0.5f);
  params.layers[1].weight = Tensor(1, 1, 1, 1, 2.0f);
  params.layers[1].bias = Tensor(1, 1, 1, 1, -1.0f);

  Tensor x(1, 1, 2, 2);
  x.data = {1, 2, 3, 4};
  const auto s = score(spec, params, x);
  CHECK(s[0] == doctest::Approx(10.0f));
}

TEST_CASE("energy: f == 0 with sigma 1 on twelve ones gives 6") {
  NetworkSpec spec;
  spec.in_c = 3;
  spec.in_h = 2;
  spec.in_w = 2;
  spec.layers = {LayerDesc::make_fc(1)};
  ParamSet params;
  params.layers.resize(1);
  params.layers[0].weight = Tensor(1, 12, 1, 1, 0.0f);
  params.layers[0].bias = Tensor(1, 1, 1, 1, 0.0f);
  const auto ref = ReferenceDistribution::gaussian(1.0);
  const auto e = energy(spec, params, ref, Tensor(1, 3, 2, 2, 1.0f));
  CHECK(e[0] == doctest::Approx(6.0f));
}

TEST_CASE("energy: zero image costs -f(0); energy + score is the quadratic term") {
  Rng rng(3);
  const auto spec = preset_spec(1, 1, 8, 8, 0.1);
  auto params = init_params<float>(spec, 11);
  const auto ref = ReferenceDistribution::gaussian(0.7);

  const Tensor zero(2, 1, 8, 8, 0.0f);
  const auto e0 = energy(spec, params, ref, zero);
  const auto f0 = score(spec, params, zero);
  CHECK(e0[0] == doctest::Approx(-f0[0]));

  const auto y = random_tensor<float>(2, 1, 8, 8, rng);
  const auto e = energy(spec, params, ref, y);
  const auto f = score(spec, params, y);
  for (int i = 0; i < 2; ++i) {
    double q = 0;
    for (int j = 0; j < 64; ++j) q += static_cast<double>(y.data[i * 64 + j]) * y.data[i * 64 + j];
    q /= 2.0 * 0.7 * 0.7;
    CHECK(e[i] + f[i] == doctest::Approx(q).epsilon(1e-5));
  }
}

TEST_CASE("energy: uniform reference drops the quadratic term") {
  const auto spec = preset_spec(1, 1, 8, 8, 0.1);
  auto params = init_params<float>(spec, 13);
  const auto ref = ReferenceDistribution::uniform(-1, 1);
  Rng rng(5);
  const auto y = random_tensor<float>(2, 1, 8, 8, rng);
  const auto e = energy(spec, params, ref, y);
  const auto f = score(spec, params, y);
  CHECK(e[0] == doctest::Approx(-f[0]));
  CHECK(e[1] == doctest::Approx(-f[1]));
}

TEST_CASE("grad_input: zero network reduces to Y / sigma^2") {
  const auto spec = preset_spec(1, 1, 8, 8, 0.1);
  auto params = init_params<float>(spec, 17);
  for (auto& l : params.layers)
    for (float& v : l.weight.data) v = 0.0f;
  Rng rng(7);
  const auto y = random_tensor<float>(2, 1, 8, 8, rng);
  const auto ref = ReferenceDistribution::gaussian(2.0);
  const auto g = grad_input(spec, params, ref, y, BnMode::eval);
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(g.data[i] == doctest::Approx(y.data[i] / 4.0f).epsilon(1e-5));
}

TEST_CASE("grad_input: matches finite differences of the energy (double)") {
  Rng rng(19);
  const auto spec = preset_spec(1, 2, 8, 8, 0.15);
  const auto ref = ReferenceDistribution::gaussian(1.0);
  auto params_f = init_params<float>(spec, 23);
  for (auto& l : params_f.layers)
    for (float& v : l.weight.data) v *= 30.0f;
  auto params = params_f.cast<double>();
  auto y = random_tensor<double>(2, 2, 8, 8, rng);

  auto energy_sum = [&]() -> oracle::Probe {
    ParamSetT<double> p = params;
    ForwardOpts opts;
    opts.bn_mode = BnMode::train;
    auto g = score_graph(spec, p, y, opts);
    double s = 0;
    for (double v : g.tape.value(g.output).data) s += v;
    s = -s;  // -f part of the energy
    const double inv2s2 = 1.0 / (2.0 * ref.sigma * ref.sigma);
    for (double v : y.data) s += inv2s2 * v * v;
    return {s, relu_sign_hash(spec, g)};
  };
  const auto numeric = oracle::finite_diff_masked(y, energy_sum);
  CHECK(numeric.excluded < y.size() / 5);
  ParamSetT<double> p = params;
  const auto analytic = grad_input(spec, p, ref, y, BnMode::train);
  CHECK(oracle::grad_mismatch(analytic, numeric) < 1.0);
}

TEST_CASE("grad_input: zero-noise descent reaches an auto-encoder fixed point") {
  // at a stationary point of the energy, Y/sigma^2 equals df/dY
  const auto spec = preset_spec(1, 1, 4, 4, 0.1);
  auto params = init_params<double>(spec, 29);
  const auto ref = ReferenceDistribution::gaussian(1.0);
  Rng rng(31);
  TensorT<double> y = random_tensor<double>(1, 1, 4, 4, rng, 0.5);

  LangevinConfig cfg;
  cfg.steps = 4000;
  cfg.step_size = 0.1;
  cfg.zero_noise = true;
  cfg.stats_mode = BnMode::eval;
  y = run_chain(spec, params, ref, y, cfg, rng);

  const auto g = grad_input(spec, params, ref, y, BnMode::eval);
  CHECK(g.max_abs() < 1e-3);

  // the score gradient alone: df/dY = Y/sigma^2 - dE/dY
  ForwardOpts opts;
  opts.bn_mode = BnMode::eval;
  opts.input_needs_grad = true;
  auto graph = score_graph(spec, params, y, opts);
  TensorT<double> seed(1, 1, 1, 1, 1.0);
  graph.tape.backward(graph.output, std::move(seed));
  const auto& df = graph.tape.grad_of(graph.input);
  for (size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.data[i] - df.data[i]) < 1e-3);
}

TEST_CASE("grad_params: identical observed and synthesized batches cancel") {
  Rng rng(37);
  const auto spec = preset_spec(1, 1, 8, 8, 0.2);
  auto params = init_params<float>(spec, 41);
  const auto y = random_tensor<float>(4, 1, 8, 8, rng);
  const auto g = grad_params(spec, params, y, y, BnMode::eval);
  CHECK(g.l1_norm() == 0.0f);
}

TEST_CASE("grad_params: one-parameter linear score gives mean difference") {
  NetworkSpec spec;
  spec.in_c = 1;
  spec.in_h = 1;
  spec.in_w = 1;
  spec.layers = {LayerDesc::make_conv(1, 1, 1, 0)};
  spec.validate();
  ParamSet params;
  params.layers.resize(1);
  params.layers[0].weight = Tensor(1, 1, 1, 1, 0.3f);
  params.layers[0].bias = Tensor(1, 1, 1, 1, 0.0f);

  Tensor obs(3, 1, 1, 1);
  obs.data = {1.0f, 2.0f, 3.0f};  // mean 2
  Tensor syn(2, 1, 1, 1);
  syn.data = {0.5f, 1.0f};  // mean 0.75
  const auto g = grad_params(spec, params, obs, syn);
  CHECK(g.layers[0].weight.data[0] == doctest::Approx(1.25f));
  CHECK(g.layers[0].bias.data[0] == doctest::Approx(0.0f));
}

TEST_CASE("grad_params: matches finite differences of the mean score gap") {
  Rng rng(43);
  NetworkSpec spec;
  spec.in_c = 1;
  spec.in_h = 6;
  spec.in_w = 6;
  spec.layers = {LayerDesc::make_conv(3, 3, 2, 1), LayerDesc::make_bn(), LayerDesc::make_relu(),
                 LayerDesc::make_fc(1)};
  auto params = init_params<double>(spec, 47);
  for (auto& l : params.layers)
    for (double& v : l.weight.data) v *= 40.0;
  auto obs = random_tensor<double>(3, 1, 6, 6, rng);
  auto syn = random_tensor<double>(4, 1, 6, 6, rng);

  auto gap = [&]() -> oracle::Probe {
    ParamSetT<double> p = params;
    ForwardOpts opts;
    opts.bn_mode = BnMode::train;
    auto go = score_graph(spec, p, obs, opts);
    auto gs = score_graph(spec, p, syn, opts);
    double a = 0, b = 0;
    for (double v : go.tape.value(go.output).data) a += v;
    for (double v : gs.tape.value(gs.output).data) b += v;
    return {a / obs.n - b / syn.n,
            relu_sign_hash(spec, go) * 31 + relu_sign_hash(spec, gs)};
  };

  ParamSetT<double> p = params;
  const auto analytic = grad_params(spec, p, obs, syn, BnMode::train);
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    auto& lp = params.layers[li];
    if (spec.layers[li].kind == LayerKind::conv ||
        spec.layers[li].kind == LayerKind::fully_connected) {
      CHECK(oracle::grad_mismatch(analytic.layers[li].weight,
                                  oracle::finite_diff_masked(lp.weight, gap, 1e-4)) < 1.0);
      CHECK(oracle::grad_mismatch(analytic.layers[li].bias,
                                  oracle::finite_diff_masked(lp.bias, gap, 1e-4)) < 1.0);
    } else if (spec.layers[li].kind == LayerKind::batchnorm) {
      CHECK(oracle::grad_mismatch(analytic.layers[li].gamma,
                                  oracle::finite_diff_masked(lp.gamma, gap, 1e-4)) < 1.0);
      CHECK(oracle::grad_mismatch(analytic.layers[li].beta,
                                  oracle::finite_diff_masked(lp.beta, gap, 1e-4)) < 1.0);
    }
  }
}

TEST_CASE("translating the final bias shifts scores and nothing else") {
  Rng rng(53);
  const auto spec = preset_spec(1, 1, 8, 8, 0.2);
  auto params = init_params<float>(spec, 59);
  const auto y = random_tensor<float>(3, 1, 8, 8, rng);
  const auto obs = random_tensor<float>(3, 1, 8, 8, rng);
  const auto ref = ReferenceDistribution::gaussian(1.0);

  const auto s0 = score(spec, params, y);
  const auto gi0 = grad_input(spec, params, ref, y, BnMode::eval);
  const auto gp0 = grad_params(spec, params, obs, y, BnMode::eval);

  const float c = 2.5f;
  params.layers.back().bias.data[0] += c;
  const auto s1 = score(spec, params, y);
  const auto gi1 = grad_input(spec, params, ref, y, BnMode::eval);
  const auto gp1 = grad_params(spec, params, obs, y, BnMode::eval);

  for (size_t i = 0; i < s0.size(); ++i) CHECK(s1[i] == doctest::Approx(s0[i] + c));
  CHECK(gi0.data == gi1.data);  // bit-exact: the bias never enters dE/dY
  for (size_t li = 0; li < gp0.layers.size(); ++li) {
    CHECK(gp0.layers[li].weight.data == gp1.layers[li].weight.data);
    CHECK(gp0.layers[li].bias.data == gp1.layers[li].bias.data);
  }
}

TEST_CASE("score rejects shape mismatches and empty batches") {
  const auto spec = preset_spec(1, 3, 16, 16, 0.25);
  auto params = init_params<float>(spec, 61);
  CHECK_THROWS_AS(score(spec, params, Tensor(1, 3, 8, 8, 0.0f)), ShapeError);
  CHECK_THROWS_AS(grad_params(spec, params, Tensor(0, 3, 16, 16), Tensor(1, 3, 16, 16, 0.0f)),
                  ShapeError);
}
