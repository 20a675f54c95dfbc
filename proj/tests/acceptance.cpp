// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "umafd/errors.hpp"
#include "umafd/heads.hpp"
#include "umafd/idm.hpp"
#include "umafd/losses.hpp"
#include "umafd/metrics.hpp"
#include "umafd/protocols.hpp"
#include "umafd/xbm.hpp"

using namespace umafd;
using testing::gradient_check;
using testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Tensor normalised_rows(Tensor t) {
  const std::size_t n = t.shape()[0], k = t.shape()[1];
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += t[r * k + j];
    for (std::size_t j = 0; j < k; ++j) t[r * k + j] /= s;
  }
  return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_certification() {
  Clock clock;
  std::mt19937_64 rng(101);
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  std::size_t checked = 0;
  auto record = [&](double err) {
    worst = std::max(worst, err);
    ++checked;
  };
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<int> y(n);
    for (int& v : y) v = int(rng() & 1U);
    record(gradient_check([&](const auto& x) { return cls_loss(x[0], y); }, {random_tensor({n, 1}, rng, -4, 4)}));
  }
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 1 + rng() % 6;
    // keep scores clear of the thresholds, where the pseudo labels would flip
    Tensor l({n, 1});
    const double edge = std::log(0.7 / 0.3);
    std::uniform_real_distribution<double> u(-4, 4);
    for (double& v : l.values()) {
      do v = u(rng);
      while (std::abs(std::abs(v) - edge) < 0.05);
    }
    record(gradient_check([](const auto& x) { return pseudo_loss(x[0], 0.7); }, {l}));
  }
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 2 * (1 + rng() % 3);
    std::vector<int> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = k < n / 2;
    record(gradient_check([&](const auto& x) { return modality_loss(x[0], y); }, {random_tensor({n, 1}, rng, -4, 4)}));
  }
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 1 + rng() % 3;
    const Shape s{n, 2, 2, 3, 2};
    record(gradient_check([](const auto& x) { return bridge_loss(x[0], x[1], x[2], x[3]); },
                          {random_tensor(s, rng), random_tensor(s, rng), random_tensor(s, rng),
                           normalised_rows(random_tensor({n, 2}, rng, 0.05, 1.0))}));
  }
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 2 + rng() % 3, d = 3;
    std::vector<std::optional<int>> labels(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == 0 || rng() % 4) labels[k] = int(rng() & 1U);
    }
    std::vector<XbmEntry> mem;
    for (int k = 0; k < 6; ++k) {
      const Tensor v = random_tensor({d}, rng);
      mem.push_back({{v.values().begin(), v.values().end()}, k % 2});
    }
    record(gradient_check([&](const auto& x) { return xbm_triplet_loss(x[0], labels, mem, 0.3); },
                          {random_tensor({n, d}, rng)}));
  }
  const double t = clock.seconds();
  return {worst <= kTol && t < 60.0 && checked == 100,
          std::to_string(checked) + " instances, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f", t) + " s"};
}

Outcome grl_exactness() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double lambda = 0.1 + 2.0 * double(rng() % 1000) / 1000.0;
    const Tensor w = random_tensor({3, 4}, rng), proj = random_tensor({2, 4}, rng), pb = random_tensor({2}, rng);
    const double a = random_tensor({1}, rng)[0], c = random_tensor({1}, rng, 0.5, 2)[0];
    // a random smooth scalar function of x (3, 4)
    auto f = [&](const Var& x) {
      const Var quad = ops::scale(ops::sum(ops::mul(x, x)), a);
      const Var soft = ops::sum(ops::mul(ops::softmax_rows(ops::scale(x, c)), ops::constant(w)));
      const Var norms = ops::mean(ops::row_norms(ops::add(x, ops::constant(w)), 1e-3));
      const Var lin = ops::sum(ops::mul(ops::linear(x, ops::constant(proj), ops::constant(pb)),
                                        ops::linear(x, ops::constant(proj), ops::constant(pb))));
      return ops::add(ops::add(quad, soft), ops::add(norms, ops::scale(lin, 0.1)));
    };
    const Tensor x0 = random_tensor({3, 4}, rng);
    const Var plain(x0, true), reversed(x0, true);
    backward(f(plain));
    backward(f(ops::grl(reversed, lambda)));
    const Tensor g = plain.grad(), gr = reversed.grad();
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(gr[i] + lambda * g[i]));
  }
  return {worst <= 1e-12, "10 functions, max |grad(f o grl) + lambda grad f| = " + fmt("%.1e", worst)};
}

Outcome idm_algebra() {
  std::mt19937_64 rng(103);
  ParameterSet ps;
  IdmBlock idm(4, ps, rng);
  double sum_err = 0.0, mix_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Shape s{1, 4, 2, 3, 2};
    const Tensor r = random_tensor(s, rng, -3, 3), d = random_tensor(s, rng, -3, 3);
    const auto out = idm.forward(ops::constant(r), ops::constant(d));
    const Tensor& a = out.coeffs.value();
    sum_err = std::max(sum_err, std::abs(a[0] + a[1] - 1.0));
    for (std::size_t i = 0; i < r.size(); ++i) {
      mix_err = std::max(mix_err, std::abs(out.mixed.value()[i] - a[0] * r[i] - a[1] * d[i]));
    }
  }
  const Tensor f = random_tensor({2, 3, 2, 2, 2}, rng);
  const double zero = bridge_loss(ops::constant(f), ops::constant(f), ops::constant(f),
                                  ops::constant(Tensor({2, 2}, {0.3, 0.7, 0.9, 0.1})))
                          .value()
                          .item();
  const double three = bridge_loss(ops::constant(Tensor({1, 1, 1, 1, 2}, {2.0, 0.0})),
                                   ops::constant(Tensor({1, 1, 1, 1, 2}, {0.0, -4.0})),
                                   ops::constant(Tensor({1, 1, 1, 1, 2})), ops::constant(Tensor({1, 2}, {0.5, 0.5})))
                           .value()
                           .item();
  const bool ok = sum_err < 1e-6 && mix_err < 1e-6 && zero == 0.0 && std::abs(three - 3.0) <= 1e-9;
  return {ok, "coeff sum err " + fmt("%.1e", sum_err) + ", mixture err " + fmt("%.1e", mix_err) + ", zero case " +
                  fmt("%g", zero) + ", substitution " + fmt("%.12f", three)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(104);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 80;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 41) / 40.0;
      y[i] = int(rng() & 1U);
    }
    y[0] = 1;
    y[1] = 0;
    const auto m = metrics(s, y);
    const auto o = testing::metric_oracle(s, y);
    for (double e : {m.accuracy - o.acc, m.precision - o.prec, m.recall - o.rec, m.f1 - o.f1, m.auc - o.auc}) {
      worst = std::max(worst, std::abs(e));
    }
  }
  const double ties = auc(std::vector<double>(8, 0.4), std::vector<int>{1, 0, 0, 1, 1, 0, 1, 0});
  const double pairs = auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 0, 1, 0});
  return {worst <= 1e-9 && ties == 0.5 && pairs == 0.75,
          "200 sets, worst diff " + fmt("%.1e", worst) + ", all-ties auc " + fmt("%g", ties) + ", fixture " + fmt("%g", pairs)};
}

Outcome triplet_and_memory() {
  std::mt19937_64 rng(105);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng() % 4, d = 1 + rng() % 5, m = 1 + rng() % 10;
    std::vector<XbmEntry> mem;
    for (std::size_t k = 0; k < m; ++k) {
      const Tensor v = random_tensor({d}, rng);
      mem.push_back({{v.values().begin(), v.values().end()}, int(rng() % 2)});
    }
    std::vector<std::optional<int>> labels(n);
    for (auto& l : labels) {
      if (rng() % 5) l = int(rng() % 2);
    }
    const Tensor emb = random_tensor({n, d}, rng);
    const double got = xbm_triplet_loss(ops::constant(emb), labels, mem, 0.3).value().item();
    worst = std::max(worst, std::abs(got - testing::exhaustive_triplet(emb, labels, mem, 0.3)));
  }

  bool fifo = true;
  for (int seq = 0; seq < 10 && fifo; ++seq) {
    const std::size_t cap = 1 + rng() % 20;
    XbmMemory mem(cap);
    std::deque<XbmEntry> oracle;
    for (std::size_t op = 0; op < 1000; ++op) {
      if (rng() % 50 == 0) {
        mem.clear();
        oracle.clear();
      } else {
        const XbmEntry e{{double(rng() % 100)}, int(rng() % 2), data::Modality::Depth, op};
        mem.push(e);
        oracle.push_back(e);
        if (oracle.size() > cap) oracle.pop_front();
      }
      fifo = fifo && mem.snapshot() == std::vector<XbmEntry>(oracle.begin(), oracle.end());
    }
  }

  // the source of a memory entry gets nothing back from a later loss
  const Var earlier(random_tensor({1, 4}, rng), true);
  XbmMemory mem(4);
  mem.push(XbmEntry{{earlier.value().values().begin(), earlier.value().values().end()}, 1});
  mem.push(XbmEntry{{0.0, 0.0, 0.0, 0.0}, 0});
  const Var now(random_tensor({1, 4}, rng), true);
  const std::vector<std::optional<int>> lab{1};
  backward(xbm_triplet_loss(now, lab, mem.snapshot(), 10.0));
  const Tensor g = earlier.grad(), gn = now.grad();
  bool zero_grad = true, now_grad = false;
  for (double v : g.values()) zero_grad = zero_grad && v == 0.0;
  for (double v : gn.values()) now_grad = now_grad || v != 0.0;

  return {worst <= 1e-6 && fifo && zero_grad && now_grad,
          "50 memories, worst diff " + fmt("%.1e", worst) + ", FIFO " + (fifo ? "ok" : "broken") + ", memory gradient " +
              (zero_grad ? "zero" : "non-zero")};
}

Outcome pseudo_partition() {
  bool ok = true;
  std::size_t points = 0;
  for (double tau : {0.55, 0.7, 0.8, 0.99}) {
    std::vector<double> grid;
    for (int i = 0; i <= 2000; ++i) grid.push_back(i / 2000.0);
    grid.push_back(tau);
    grid.push_back(1.0 - tau);
    const auto pl = pseudo_labels(grid, tau);
    for (std::size_t i = 0; i < grid.size(); ++i, ++points) {
      const bool pos = grid[i] >= tau, neg = grid[i] <= 1.0 - tau;
      ok = ok && pl.mask[i] == (pos || neg);
      if (pos) ok = ok && pl.labels[i] == 1;
      if (neg) ok = ok && pl.labels[i] == 0;
    }
  }
  bool rejected = false;
  try {
    pseudo_labels(std::vector<double>{0.5}, 0.5);
  } catch (const ConfigError&) {
    rejected = true;
  }
  return {ok && rejected, std::to_string(points) + " grid points over 4 thresholds, tau=0.5 " +
                              (rejected ? "rejected" : "accepted")};
}

Outcome schedule_and_optimizer() {
  const TrainConfig tc;
  const double lr0 = lr_schedule(0, tc), lr60 = lr_schedule(60, tc);
  ParameterSet ps;
  const Var w = ps.add("w", Tensor({3}, {0.5, -1.0, 2.0}));
  const Tensor c({3}, {0.3, -0.7, 1.1});
  SgdMomentum opt(0.9);
  const double lr = 0.05;
  const Tensor start = w.value();
  for (int k = 0; k < 2; ++k) {
    ps.zero_grad();
    backward(ops::sum(ops::mul(w, ops::constant(c))));
    opt.step(ps, lr);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs((w.value()[i] - start[i]) + lr * c[i] * 2.9));
  return {lr0 == 1e-4 && lr60 == 1e-5 && worst <= 1e-12,
          "lr(0)=" + fmt("%g", lr0) + ", lr(60)=" + fmt("%g", lr60) + ", two-step error " + fmt("%.1e", worst)};
}

Outcome determinism() {
  omp_set_num_threads(1);
  testing::TempDir dir("accept_det");
  RunConfig cfg = testing::tiny_config(8);
  cfg.synth.n_train_pairs = 10;
  cfg.train.epochs = 1;
  cfg.train.weight_mode = WeightMode::Adaptive;
  const auto records = synth::generate(cfg.synth, dir / "data");
  auto run = [&](const std::string& name) {
    data::ClipSource src(cfg.dims());
    std::vector<std::string> trace;
    FitOptions fo;
    fo.out_dir = dir / name;
    fo.on_step = [&](std::size_t s, const StepResult& r) { trace.push_back(format_log_row(s, r)); };
    const auto fr = fit(records, src, cfg, fo);
    return std::make_pair(trace, fr.checksum);
  };
  const auto a = run("a"), b = run("b");
  omp_set_num_threads(omp_get_num_procs());
  return {a.first.size() == 10 && a.first == b.first && a.second == b.second,
          std::to_string(a.first.size()) + "-step traces " + (a.first == b.first ? "identical" : "differ") +
              ", checksums " + hex64(a.second) + " / " + hex64(b.second)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunConfig reproduction_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.set_seed(seed);
  cfg.synth.n_train_pairs = 200;
  cfg.synth.n_test_depth = 80;
  cfg.synth.height = cfg.synth.width = 64;
  cfg.synth.frames = 8;
  cfg.synth.noise_level = 0.1;
  cfg.backbone.stage1_channels = 4;
  cfg.backbone.embedding_dim = 64;
  cfg.train.epochs = 30;
  cfg.train.lr_decay_epoch = 40;
  cfg.train.base_lr = 0.005;
  cfg.train.weight_mode = WeightMode::Fixed;
  cfg.train.enabled = {true, false, true, false, false};
  cfg.train.lambdas = {1.0, 0.1, 0.1, 0.1, 0.01};
  return cfg;
}

Outcome reproduction() {
  Clock clock;
  testing::TempDir dir("accept_repro");
  std::vector<double> base, uma, sup;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunConfig cfg = reproduction_config(seed);
    const fs::path root = dir / ("s" + std::to_string(seed));
    const auto records = synth::generate(cfg.synth, root / "data");
    data::ClipSource src(cfg.dims());
    auto acc = [&](Protocol p) {
      return 100.0 * run_protocol(p, records, src, cfg, root / std::string(to_string(p))).metrics.accuracy;
    };
    base.push_back(acc(Protocol::Baseline));
    uma.push_back(acc(Protocol::Umafd));
    sup.push_back(acc(Protocol::SupervisedTarget));
    std::cout << "      seed " << seed << ": baseline " << fmt("%.2f", base.back()) << ", umafd " << fmt("%.2f", uma.back())
              << ", supervised-target " << fmt("%.2f", sup.back()) << " (" << fmt("%.0f", clock.seconds()) << " s)"
              << std::endl;
  }
  const double mb = median(base), mu = median(uma), ms = median(sup), t = clock.seconds();
  return {mu >= mb + 5.0 && ms >= mu && t <= 1200.0,
          "median accuracy baseline " + fmt("%.2f", mb) + ", umafd " + fmt("%.2f", mu) + ", supervised-target " +
              fmt("%.2f", ms) + ", " + fmt("%.0f", t) + " s"};
}

Outcome ablation_harness() {
  testing::TempDir dir("accept_abl");
  const RunConfig cfg = testing::tiny_config(21);
  const auto records = synth::generate(cfg.synth, dir / "data");
  data::ClipSource src(cfg.dims());
  const auto rows = ablation(records, src, cfg, dir / "abl");

  const std::array<std::array<bool, kLossTerms>, kAblationStages> ladder{{
      {true, false, false, false, false},
      {true, false, true, false, false},
      {true, true, true, false, false},
      {true, true, true, true, false},
      {true, true, true, true, true},
      {true, true, true, true, true},
  }};
  bool structure = rows.size() == kAblationStages, enables = true, chained = true;
  std::ifstream csv(dir / "abl" / "ablation.csv");
  std::string line;
  std::getline(csv, line);
  for (std::size_t i = 0; structure && i < kAblationStages; ++i) {
    structure = rows[i].stage == kStageIds[i] && std::getline(csv, line) && line.rfind(kStageIds[i], 0) == 0;
    std::ifstream in(dir / "abl" / kStageIds[i] / "ckpt_final.meta.json");
    const auto meta = nlohmann::json::parse(in);
    const RunConfig echoed = parse_run_config(meta["config"].get<std::string>());
    enables = enables && echoed.train.enabled == ladder[i] &&
              echoed.train.weight_mode == (i == 5 ? WeightMode::Adaptive : WeightMode::Fixed);
    if (i == 0) {
      chained = chained && !meta.contains("init_from");
    } else {
      std::ifstream pin(dir / "abl" / kStageIds[i - 1] / "ckpt_final.meta.json");
      const auto prev = nlohmann::json::parse(pin);
      chained = chained && meta.value("init_from", std::string()) == rows[i - 1].result.checkpoint.string() &&
                meta.value("init_checksum", std::string()) == prev["checksum"].get<std::string>();
    }
  }
  structure = structure && !std::getline(csv, line);

  data::ClipSource src2(cfg.dims());
  const auto base = run_protocol(Protocol::Baseline, records, src2, cfg, dir / "baseline");
  const auto& v1 = rows.at(0).result.metrics;
  const bool same = base.scores == rows[0].result.scores && base.metrics.accuracy == v1.accuracy &&
                    base.metrics.precision == v1.precision && base.metrics.recall == v1.recall &&
                    base.metrics.f1 == v1.f1 && base.metrics.auc == v1.auc;
  return {structure && enables && chained && same,
          std::string("rows ") + (structure ? "V-01..V-06" : "wrong") + ", enable sets " + (enables ? "ok" : "wrong") +
              ", chaining " + (chained ? "ok" : "broken") + ", V-01 vs baseline " + (same ? "bit-identical" : "differs")};
}

Outcome protocol_audits() {
  testing::TempDir dir("accept_audit");
  const RunConfig cfg = testing::tiny_config(22);
  const auto records = synth::generate(cfg.synth, dir / "data");
  data::ClipSource b(cfg.dims()), u(cfg.dims());
  run_protocol(Protocol::Baseline, records, b, cfg, dir / "b");
  run_protocol(Protocol::Umafd, records, u, cfg, dir / "u");
  return {b.depth_train_tensor_reads() == 0 && u.depth_train_label_reads() == 0 && u.depth_train_tensor_reads() > 0,
          "baseline depth-train tensor reads " + std::to_string(b.depth_train_tensor_reads()) +
              ", umafd depth-train label reads " + std::to_string(u.depth_train_label_reads()) +
              " (tensor reads " + std::to_string(u.depth_train_tensor_reads()) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient certification", gradient_certification},
      {"GRL exactness", grl_exactness},
      {"IDM algebra", idm_algebra},
      {"metric oracle equivalence", metric_oracles},
      {"triplet / XBM", triplet_and_memory},
      {"pseudo-labeling", pseudo_partition},
      {"schedule / optimizer", schedule_and_optimizer},
      {"determinism", determinism},
      {"end-to-end directional reproduction", reproduction},
      {"ablation harness", ablation_harness},
      {"protocol audits", protocol_audits},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << (id < 10 ? " " : "") << id << ' ' << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << ran - failed << '/' << ran << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
