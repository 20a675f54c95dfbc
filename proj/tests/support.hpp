#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "umafd/autograd.hpp"
#include "umafd/config.hpp"
#include "umafd/ops.hpp"
#include "umafd/tensor.hpp"

namespace testing {

using umafd::Shape;
using umafd::Tensor;
using umafd::Var;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// ||analytic - numeric|| / max(||numeric||, ||analytic||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  if (scale < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Worst relative error between backward() and central differences over every input.
inline double gradient_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  std::vector<Var> live;
  for (const auto& t : inputs) live.emplace_back(t, true);
  umafd::backward(f(live));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor g = live[k].grad();
    std::vector<double> analytic(g.values().begin(), g.values().end());
    std::vector<double> numeric(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var> xs;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          xs.emplace_back(std::move(t), false);
        }
        return f(xs).value().item();
      };
      numeric[i] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("umafd_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Small, fast run configuration for pipeline tests.
inline umafd::RunConfig tiny_config(std::uint64_t seed = 7) {
  umafd::RunConfig c;
  c.set_seed(seed);
  c.synth.n_train_pairs = 6;
  c.synth.n_test_depth = 4;
  c.synth.frames = 8;
  c.synth.height = 16;
  c.synth.width = 16;
  c.synth.noise_level = 0.1;
  c.backbone.stage1_channels = 2;
  c.backbone.embedding_dim = 8;
  c.train.epochs = 2;
  c.train.base_lr = 0.01;
  c.train.weight_mode = umafd::WeightMode::Fixed;
  return c;
}

}  // namespace testing
