#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include "support.hpp"
#include "umafd/errors.hpp"
#include "umafd/kernels.hpp"
#include "umafd/params.hpp"

using namespace umafd;
using testing::gradient_check;
using testing::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.row_size() == 3);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Var x(Tensor({1}, std::vector<double>{3.0}), true);
  const Var y = ops::mul(x, x);  // x^2
  backward(ops::add(y, x));      // x^2 + x
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("elementwise and reduction ops match central differences") {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::mul(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::mean(ops::sub(v[0], ops::scale(v[1], 2.5))); }, {a, b}) < 1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::mul(ops::leaky_relu(v[0], 0.1), v[1])); }, {a, b}) <
        1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::mul(ops::relu(v[0]), v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::mul(ops::softmax_rows(v[0]), v[1])); }, {a, b}) <
        1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::row_norms(v[0], 0.0)); }, {a}) < 1e-7);
  CHECK(gradient_check([](const auto& v) { return ops::dot(v[0], v[1]); }, {a, b}) < 1e-7);
}

TEST_CASE("linear, pooling and mixing ops match central differences") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 5}, rng), w = random_tensor({3, 5}, rng), bias = random_tensor({3}, rng);
  CHECK(gradient_check([](const auto& v) { return ops::sum(ops::mul(ops::linear(v[0], v[1], v[2]),
                                                                   ops::linear(v[0], v[1], v[2]))); },
                       {x, w, bias}) < 1e-7);

  const Tensor fm = random_tensor({2, 3, 2, 3, 3}, rng);
  const Tensor probe = random_tensor({2, 3}, rng);
  CHECK(gradient_check([&](const auto& v) { return ops::dot(ops::global_avg_pool(v[0]), ops::constant(probe)); },
                       {fm}) < 1e-7);
  CHECK(gradient_check([&](const auto& v) { return ops::dot(ops::global_max_pool(v[0]), ops::constant(probe)); },
                       {fm}) < 1e-7);

  const Tensor r = random_tensor({2, 3, 2, 2, 2}, rng), d = random_tensor({2, 3, 2, 2, 2}, rng);
  const Tensor c = random_tensor({2, 2}, rng, 0.1, 0.9);
  const Tensor w2 = random_tensor({2, 3, 2, 2, 2}, rng);
  CHECK(gradient_check([&](const auto& v) { return ops::dot(ops::convex_mix(v[0], v[1], v[2]), ops::constant(w2)); },
                       {r, d, c}) < 1e-7);
  CHECK(gradient_check([&](const auto& v) {
          return ops::sum(ops::mul(ops::concat_rows(v[0], v[1]), ops::concat_rows(v[1], v[0])));
        },
                       {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}) < 1e-7);
}

TEST_CASE("conv3d op matches central differences") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 2, 3, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  Tensor probe;
  auto f = [&](const std::vector<Var>& v) {
    const Var y = ops::conv3d(v[0], v[1], v[2], {1, 2, 2});
    if (probe.empty()) {
      std::mt19937_64 prng(9);
      probe = random_tensor(y.shape(), prng);
    }
    return ops::dot(y, ops::constant(probe));
  };
  CHECK(gradient_check(f, {x, w, b}) < 1e-7);
}

TEST_CASE("grl flips and scales the derivative only") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({4}, rng);
  Var v(x, true);
  const Var y = ops::grl(v, 0.7);
  CHECK(y.value().vec() == x.vec());
  backward(ops::sum(y));
  const Tensor g = v.grad();
  for (double e : g.values()) CHECK(e == -0.7);
  CHECK_THROWS_AS(ops::grl(v, 0.0), ConfigError);
}

namespace {

struct ConvCase {
  kernels::Conv3dGeometry g;
  std::vector<double> x, w, b, dy;
};

ConvCase make_case(std::size_t ci, std::size_t co, std::array<std::size_t, 3> dims, std::array<std::size_t, 3> stride,
                   std::uint64_t seed) {
  ConvCase c;
  c.g.in_channels = ci;
  c.g.out_channels = co;
  c.g.in_dims = dims;
  c.g.stride = stride;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& e : v) e = u(rng);
  };
  fill(c.x, ci * c.g.in_volume());
  fill(c.w, c.g.weight_size());
  fill(c.b, co);
  fill(c.dy, co * c.g.out_volume());
  return c;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("parallel conv kernels agree with the serial reference") {
  const std::vector<std::tuple<std::size_t, std::size_t, std::array<std::size_t, 3>, std::array<std::size_t, 3>>>
      cases{{3, 4, {4, 16, 16}, {1, 2, 2}},
            {4, 8, {4, 8, 8}, {1, 2, 2}},
            {2, 5, {3, 7, 9}, {1, 1, 1}},
            {3, 2, {5, 6, 5}, {2, 3, 2}},
            {1, 1, {1, 1, 1}, {1, 1, 1}}};
  std::uint64_t seed = 10;
  for (const auto& [ci, co, dims, stride] : cases) {
    const ConvCase c = make_case(ci, co, dims, stride, seed++);
    const std::size_t ny = co * c.g.out_volume();
    std::vector<double> y_ref(ny), y_par(ny);
    kernels::conv3d_forward_reference(c.g, c.x, c.w, c.b, y_ref);
    kernels::conv3d_forward(c.g, c.x, c.w, c.b, y_par);
    CHECK(max_abs_diff(y_ref, y_par) < 1e-12);

    std::vector<double> dx_ref(c.x.size()), dx_par(c.x.size(), 99.0);
    std::vector<double> dw_ref(c.w.size()), dw_par(c.w.size());
    std::vector<double> db_ref(co), db_par(co);
    kernels::conv3d_backward_reference(c.g, c.x, c.w, c.dy, dx_ref, dw_ref, db_ref);
    kernels::conv3d_backward(c.g, c.x, c.w, c.dy, dx_par, dw_par, db_par);
    CHECK(max_abs_diff(dx_ref, dx_par) < 1e-12);
    CHECK(max_abs_diff(dw_ref, dw_par) < 1e-11);
    CHECK(max_abs_diff(db_ref, db_par) < 1e-12);
  }
}

TEST_CASE("im2col and col2im are adjoint") {
  const ConvCase c = make_case(2, 1, {3, 5, 6}, {1, 2, 2}, 77);
  std::vector<double> col(c.g.patch_size() * c.g.out_volume());
  kernels::im2col(c.g, c.x, col);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> probe(col.size());
  for (double& v : probe) v = u(rng);
  std::vector<double> back(c.x.size());
  kernels::col2im(c.g, probe, back);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < col.size(); ++i) lhs += col[i] * probe[i];
  for (std::size_t i = 0; i < back.size(); ++i) rhs += back[i] * c.x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("parallel conv results do not depend on the thread count") {
  const ConvCase c = make_case(4, 8, {4, 16, 16}, {1, 2, 2}, 31);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> y(8 * c.g.out_volume()), dx(c.x.size()), dw(c.w.size()), db(8);
    kernels::conv3d_forward(c.g, c.x, c.w, c.b, y);
    kernels::conv3d_backward(c.g, c.x, c.w, c.dy, dx, dw, db);
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    return y;
  };
  const auto one = run(1);
  const auto four = run(4);
  omp_set_num_threads(omp_get_num_procs());
  CHECK(one == four);
}

TEST_CASE("momentum optimizer two-step closed form") {
  ParameterSet params;
  const Var p = params.add("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  const std::vector<double> g{0.3, -1.1, 2.0};
  const double lr = 0.01, m = 0.9;
  SgdMomentum opt(m);
  for (int step = 0; step < 2; ++step) {
    params.zero_grad();
    p.node()->accumulate(g);
    opt.step(params, lr);
  }
  const std::vector<double> start{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs((p.value()[i] - start[i]) - (-lr * g[i] * (2.0 + m))) < 1e-12);
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  ParameterSet params;
  std::mt19937_64 rng(6);
  const Var p = params.add("p", random_tensor({5}, rng));
  const auto before = p.value().vec();
  SgdMomentum opt(0.9);
  p.node()->accumulate(std::vector<double>(5, 3.0));
  opt.step(params, 0.0);
  CHECK(p.value().vec() == before);
}

TEST_CASE("parameter blobs round-trip") {
  testing::TempDir dir("blob");
  std::mt19937_64 rng(8);
  ParameterSet a;
  a.add("x", random_tensor({2, 3}, rng));
  a.add("y", random_tensor({4}, rng));
  std::vector<Tensor> vel{random_tensor({2, 3}, rng), random_tensor({4}, rng)};
  save_blob(dir / "p.bin", a, &vel);

  ParameterSet b;
  b.add("x", Tensor({2, 3}));
  b.add("y", Tensor({4}));
  std::vector<Tensor> vel_b;
  load_blob(dir / "p.bin", b, &vel_b);
  CHECK(a.checksum() == b.checksum());
  REQUIRE(vel_b.size() == 2);
  CHECK(vel_b[1].vec() == vel[1].vec());

  ParameterSet c;
  c.add("x", Tensor({2, 3}));
  c.add("z", Tensor({1}));
  CHECK_THROWS_AS(load_blob(dir / "p.bin", c, nullptr), FileError);
  load_blob(dir / "p.bin", c, nullptr, true);
  CHECK(c.get("x").value().vec() == a.get("x").value().vec());
  CHECK_THROWS_AS(load_blob(dir / "missing.bin", c, nullptr), FileError);
}
