// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mrinet/architectures.hpp"
#include "mrinet/atomic_file.hpp"
#include "mrinet/blocks.hpp"
#include "mrinet/checkpoint.hpp"
#include "mrinet/gradcheck.hpp"
#include "mrinet/kernels.hpp"
#include "mrinet/parallel.hpp"
#include "mrinet/training.hpp"
#include "support/gradient_suite.hpp"
#include "support/oracles.hpp"
#include "support/random_tensor.hpp"
#include "support/synthetic_data.hpp"
#include "support/temp_dir.hpp"

using namespace mrinet;
namespace fs = std::filesystem;
using testing_support::pick;
using testing_support::random_tensor;
using testing_support::TempDir;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs_diff(const Tensor<double> &a, const Tensor<double> &b) {
  if (a.shape() != b.shape())
    return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::uint64_t checksum(const ParameterSet<float> &p, bool head) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto &[name, e] : p.entries()) {
    if ((name.rfind("head.", 0) == 0) != head)
      continue;
    for (float f : e.value.data()) {
      h ^= std::bit_cast<std::uint32_t>(f);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T> void randomize(ParameterSet<T> &params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto &[name, e] : params.entries()) {
    const bool positive = name.ends_with("moving_variance") || name.ends_with("gamma");
    for (auto &v : e.value.data())
      v = static_cast<T>(positive ? rng.uniform(0.5, 1.5) : rng.uniform(-0.5, 0.5));
  }
}

DatasetIndex tiny_index(const fs::path &root, std::size_t per_class, std::size_t size = 32) {
  testing_support::make_dataset(root, {per_class, per_class, per_class, per_class, per_class},
                                size);
  return scan_dataset(root).index;
}

TrainConfig tiny_config(const std::string &model) {
  TrainConfig c;
  c.model = model;
  c.input_height = c.input_width = 32;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 17;
  c.augment = true;
  c.adam.learning_rate = 1e-3;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  std::map<std::string, std::size_t> probes;
  double worst = 0;
  for (auto &c : testing_support::kernel_gradient_cases()) {
    auto r = finite_difference_check(c.f, c.point, 1e-5, 100, 5);
    o.require(r.passed, c.kernel + "/" + c.name + fmt::format(" err {:.3g}", r.max_relative_error));
    probes[c.kernel] += r.probes;
    worst = std::max(worst, r.max_relative_error);
  }
  for (const auto &[k, n] : probes)
    o.require(n >= 100, k + fmt::format(" only {} probes", n));

  // Both composite blocks, input and weight gradients, in train and infer mode.
  auto block_check = [&](const std::string &label, const NetworkGraph &g,
                         const std::vector<std::string> &slots) {
    auto params = init_parameters<double>(g, 1);
    randomize(params, 2);
    Rng rng(3);
    Shape in = g.input_shape();
    in.insert(in.begin(), 2);
    const auto x = random_tensor(in, rng);
    for (Mode mode : {Mode::train, Mode::infer}) {
      auto loss = [&](const std::string &bind) {
        return [&, bind, mode](Tape<double> &t, Var v) {
          RunOptions opt;
          opt.mode = mode;
          std::map<std::string, Var> bound;
          Var input = v;
          if (!bind.empty()) {
            bound[bind] = v;
            input = t.constant(x);
          }
          auto run = run_graph(t, g, params, input, opt, bound);
          Rng proj(77);
          return t.weighted_sum(run.output, random_tensor(t.value(run.output).shape(), proj));
        };
      };
      auto r = finite_difference_check(loss(""), x, 1e-5, 100, 4);
      o.require(r.passed, label + " input");
      worst = std::max(worst, r.max_relative_error);
      probes[label] += r.probes;
      for (const auto &slot : slots) {
        auto rw = finite_difference_check(loss(slot), params.at(slot), 1e-5, 100, 5);
        o.require(rw.passed, label + " " + slot);
        worst = std::max(worst, rw.max_relative_error);
      }
    }
  };
  block_check("residual_bottleneck", residual_bottleneck_graph(bottleneck_spec(3, 2, 6, 2), 5, 5),
              {"block.conv1.kernel", "block.conv2.kernel", "block.conv3_bn.gamma",
               "block.shortcut.kernel"});
  block_check("inverted_residual", inverted_residual_graph({4, 6, 4, 1}, 5, 5),
              {"block.expand.kernel", "block.depthwise.kernel", "block.project.kernel"});

  const double secs = seconds_since(t0);
  o.require(secs < 120.0, fmt::format("runtime {:.1f} s", secs));
  o.detail = fmt::format("{} kernels and 2 blocks, worst relative error {:.3g}, {:.1f} s",
                         probes.size() - 2, worst, secs);
  return o;
}

Outcome oracle_suite() {
  Outcome o;
  Rng rng(2024);
  constexpr int cases = 60;
  double worst = 0;
  auto record = [&](const std::string &k, double d) {
    worst = std::max(worst, d);
    o.require(d <= 1e-12, fmt::format("{} diff {:.3g}", k, d));
  };
  for (int i = 0; i < cases; ++i) {
    std::size_t n = pick(rng, 1, 2), h = pick(rng, 3, 9), w = pick(rng, 3, 9);
    std::size_t ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
    std::size_t k = pick(rng, 1, 3), s = pick(rng, 1, 2);
    bool same = rng.bernoulli(0.5), bias = rng.bernoulli(0.5);
    auto x = random_tensor({n, h, w, ci}, rng);
    auto wt = random_tensor({k, k, ci, co}, rng);
    auto b = random_tensor({co}, rng);
    const Padding pad = same ? Padding::same : Padding::valid;
    record("conv2d", max_abs_diff(conv2d(x, wt, bias ? &b : nullptr, {k, k, ci, co, s, pad, bias}),
                                  oracle::conv2d(x, wt, bias ? &b : nullptr, long(s), same)));

    auto dw = random_tensor({k, k, ci, 1}, rng);
    auto db = random_tensor({ci}, rng);
    record("depthwise_conv2d",
           max_abs_diff(depthwise_conv2d(x, dw, bias ? &db : nullptr, {k, k, ci, ci, s, pad, bias}),
                        oracle::depthwise(x, dw, bias ? &db : nullptr, long(s), same)));

    record("max_pool2d", max_abs_diff(max_pool2d(x, PoolSpec{k, k, s, pad}),
                                      oracle::max_pool(x, long(k), long(s), same)));
    record("global_average_pool", max_abs_diff(global_average_pool(x), oracle::mean_pool(x)));

    std::size_t d = pick(rng, 1, 40), u = pick(rng, 1, 20);
    auto a = random_tensor({n + pick(rng, 0, 6), d}, rng);
    auto m = random_tensor({d, u}, rng);
    auto mb = random_tensor({u}, rng);
    record("dense_affine", max_abs_diff(dense_affine(a, m, mb), oracle::matmul(a, m, mb)));
  }
  o.detail = fmt::format("5 kernels x {} cases, worst |diff| {:.3g}", cases, worst);
  return o;
}

Outcome architecture_audit() {
  Outcome o;
  std::vector<std::size_t> repeats;
  for (const auto &s : resnet50_stages())
    repeats.push_back(s.repeats);
  o.require(repeats == std::vector<std::size_t>{3, 4, 6, 3}, "resnet stage repeats");
  const auto r = model_summary(build_resnet50());
  o.require(r.feature_width == 2048, "resnet feature width");
  o.require(r.backbone_params == 23'587'712, fmt::format("resnet backbone {}", r.backbone_params));
  o.require(r.head_params == 1'314'309, fmt::format("resnet head {}", r.head_params));

  const auto &mst = mobilenet_v2_stages();
  std::size_t blocks = 0;
  for (const auto &s : mst)
    blocks += s.repeats;
  o.require(mst.size() == 7, "mobilenet stage count");
  o.require(blocks == 17, "mobilenet block table");
  const auto m = model_summary(build_mobilenet_v2());
  o.require(m.blocks == 17, "mobilenet built blocks");
  o.require(m.feature_width == 1280, "mobilenet feature width");
  o.require(!m.depth_convention.empty(), "depth convention documented");
  o.require(m.canonical_depth == 53, fmt::format("mobilenet depth {}", m.canonical_depth));
  o.require(model_summary(head_graph({}, 2048)).total_params == 1'314'309, "head for D=2048");
  o.detail = fmt::format("resnet50 backbone {} params, head {}; mobilenetv2 {} blocks, width {}, "
                         "{} convolutions, depth {} by convention",
                         r.backbone_params, r.head_params, m.blocks, m.feature_width,
                         m.conv_layers, m.canonical_depth);
  return o;
}

Outcome split_arithmetic() {
  Outcome o;
  TempDir dir;
  const std::array<std::size_t, 5> counts{5000, 4900, 5100, 4870, 5000};
  testing_support::make_bulk_dataset(dir.path(), counts);
  const auto idx = scan_dataset(dir.path()).index;
  o.require(idx.size() == 24'870, fmt::format("scanned {}", idx.size()));
  const auto [train, val] = stratified_split(idx, 0.8, 7);
  o.require(train.size() == 19'896 && val.size() == 4'974,
            fmt::format("split {}/{}", train.size(), val.size()));
  auto check = [&](const DatasetIndex &all, const DatasetIndex &tr, const DatasetIndex &va,
                   double frac, const std::string &tag) {
    const auto c = all.class_counts(), tc = tr.class_counts();
    for (std::size_t k = 0; k < num_classes; ++k)
      o.require(std::abs(double(tc[k]) - frac * double(c[k])) <= 1.0, tag + " stratification");
    std::vector<Record> u;
    std::set_union(tr.records.begin(), tr.records.end(), va.records.begin(), va.records.end(),
                   std::back_inserter(u));
    std::vector<Record> inter;
    std::set_intersection(tr.records.begin(), tr.records.end(), va.records.begin(),
                          va.records.end(), std::back_inserter(inter));
    o.require(inter.empty(), tag + " disjoint");
    o.require(u == all.records, tag + " union");
  };
  check(idx, train, val, 0.8, "full tree");

  Rng rng(99);
  constexpr std::size_t seeds = 100;
  for (std::size_t s = 0; s < seeds; ++s) {
    DatasetIndex small;
    for (int k = 0; k < 5; ++k)
      for (std::size_t i = 0, n = pick(rng, 1, 40); i < n; ++i)
        small.records.push_back({fmt::format("{}/{:03}.png", class_names[k], i), k});
    std::sort(small.records.begin(), small.records.end());
    const double frac = rng.uniform(0.05, 0.95);
    const auto [tr, va] = stratified_split(small, frac, s);
    check(small, tr, va, frac, fmt::format("seed {}", s));
    o.require(tr.size() == std::size_t(std::llround(frac * double(small.size()))),
              fmt::format("seed {} total", s));
  }
  o.detail = fmt::format("24870 -> {}/{}, property held over {} seeds", train.size(), val.size(),
                         seeds);
  return o;
}

Outcome batch_arithmetic() {
  Outcome o;
  DatasetIndex idx;
  for (std::size_t i = 0; i < 19'896; ++i)
    idx.records.push_back({fmt::format("{}/{:05}.png", class_names[i % 5], i), int(i % 5)});
  ImageSource src(idx, 2, 2);
  BatchOptions opt;
  opt.batch_size = 128;
  opt.seed = 3;
  std::size_t batches = 0, last = 0;
  for (std::uint64_t epoch = 1; epoch <= 3; ++epoch) {
    BatchIterator it(src, opt, epoch);
    batches = it.batch_count();
    std::vector<std::size_t> seen;
    for (std::size_t b = 0; b < it.batch_count(); ++b) {
      const auto p = it.positions(b);
      o.require(p.size() == (b + 1 < it.batch_count() ? 128u : 56u), "batch size");
      last = p.size();
      seen.insert(seen.end(), p.begin(), p.end());
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(idx.size());
    std::iota(all.begin(), all.end(), 0);
    o.require(seen == all, fmt::format("epoch {} coverage", epoch));
  }
  o.require(batches == 156 && last == 56, "batch count");
  o.detail = fmt::format("19896 / 128 -> {} batches, final {}, 3 epochs covered exactly once",
                         batches, last);
  return o;
}

Outcome overfit_sanity() {
  Outcome o;
  TempDir dir;
  const auto idx = tiny_index(dir.path(), 8, 32);
  ImageSource src(idx, 32, 32);
  std::vector<std::string> parts;
  for (const std::string model : {"resnet_mini", "mobilenetv2_mini"}) {
    TrainConfig cfg;
    cfg.model = model;
    cfg.input_height = cfg.input_width = 32;
    cfg.batch_size = 8;
    cfg.epochs = 300;
    cfg.seed = 1;
    cfg.augment = false;
    cfg.adam.learning_rate = 1e-3;
    Trainer t(cfg);
    std::vector<EpochStats> rows;
    const auto t0 = Clock::now();
    while (t.epochs_done() < cfg.epochs) {
      rows.push_back(t.train_epoch(src, src));
      if (rows.back().train_acc >= 0.95 && rows.back().val_acc >= 0.95 && rows.size() >= 10)
        break;
    }
    const double secs = seconds_since(t0);
    o.require(rows.back().train_acc >= 0.95, model + " train accuracy");
    o.require(secs < 300.0, model + " runtime");
    for (std::size_t e = 1; e < std::min<std::size_t>(10, rows.size()); ++e)
      o.require(rows[e].train_loss <= 1.05 * rows[e - 1].train_loss,
                fmt::format("{} loss rose at epoch {}", model, e + 1));
    parts.push_back(fmt::format("{} {:.2f} after {} epochs in {:.1f} s", model,
                                rows.back().train_acc, rows.size(), secs));
  }
  o.detail = parts[0] + "; " + parts[1];
  return o;
}

Outcome determinism() {
  Outcome o;
  const std::size_t saved = num_threads();
  set_num_threads(1);
  TempDir dir;
  const auto idx = tiny_index(dir.path() / "data", 2);
  ImageSource src(idx, 32, 32);
  std::string csv[2], ckpt[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir.path() / "run";
    fs::remove_all(out);
    auto cfg = tiny_config("resnet_mini");
    cfg.output_dir = out.string();
    Trainer t(cfg);
    t.fit(src, src);
    csv[run] = read_file(out / "history.csv");
    ckpt[run] = read_file(out / "final.ckpt");
  }
  o.require(csv[0] == csv[1], "history.csv differs between strict runs");
  o.require(ckpt[0] == ckpt[1], "final.ckpt differs between strict runs");

  const Checkpoint loaded = load_checkpoint(dir.path() / "run" / "final.ckpt");
  save_checkpoint(dir.path() / "again.ckpt", loaded);
  o.require(read_file(dir.path() / "again.ckpt") == ckpt[0], "save/load/save bytes");

  auto cfg = tiny_config("mobilenetv2_mini");
  Trainer full(cfg);
  full.fit(src, src);
  auto one = cfg;
  one.epochs = 1;
  Trainer first(one);
  first.fit(src, src);
  save_checkpoint(dir.path() / "e1.ckpt", first.checkpoint());
  auto rc = cfg;
  rc.resume = (dir.path() / "e1.ckpt").string();
  Trainer resumed(rc);
  resumed.fit(src, src);
  o.require(full.history().to_csv() == resumed.history().to_csv(), "resume history");
  auto a = full.checkpoint(), b = resumed.checkpoint();
  a.config = b.config = nlohmann::json::object();
  o.require(encode_checkpoint(a) == encode_checkpoint(b), "resume weights and moments");
  set_num_threads(saved);
  o.detail = fmt::format("history {} bytes identical, checkpoint {} bytes round-trips, "
                         "resume matches",
                         csv[0].size(), ckpt[0].size());
  return o;
}

Outcome recipe_conformance() {
  Outcome o;
  TempDir dir;
  const auto idx = tiny_index(dir.path(), 1);
  ImageSource src(idx, 32, 32);
  auto cfg = tiny_config("mobilenetv2_mini");
  cfg.epochs = 50;
  cfg.batch_size = 5;
  Trainer t(cfg);
  const auto h = t.fit(src, src);
  o.require(h.rows.size() == 50, fmt::format("{} history rows", h.rows.size()));
  o.require(TrainConfig{}.epochs == 50, "default epochs");

  Tensor<double> uniform({4, 5}, 0.2);
  const double loss = sparse_categorical_crossentropy(uniform, std::vector<int>{0, 1, 3, 4});
  o.require(std::abs(loss - std::log(5.0)) < 1e-6, fmt::format("uniform loss {:.17g}", loss));
  Tape<double> tape;
  const Var z = tape.constant(Tensor<double>({2, 5}, 0.0));
  const double fused = tape.value(tape.softmax_cross_entropy(z, std::vector<int>{2, 4}))[0];
  o.require(std::abs(fused - std::log(5.0)) < 1e-6, "fused uniform loss");

  const AdamConfig adam;
  ParameterSet<double> p;
  p.insert("w", Tensor<double>({1}, 0.0), SlotKind::trainable);
  AdamState<double> st;
  adam_step(p, {{"w", Tensor<double>({1}, 1.0)}}, st, adam);
  const double step = std::abs(p.at("w")[0]);
  o.require(std::abs(step - adam.learning_rate) <= adam.learning_rate * 2 * adam.epsilon,
            fmt::format("first step {:.17g}", step));
  o.detail = fmt::format("50 rows, uniform loss {:.12f} (ln 5 {:.12f}), first Adam step {:.10g}",
                         loss, std::log(5.0), step);
  return o;
}

Outcome frozen_backbone() {
  Outcome o;
  TempDir dir;
  const auto idx = tiny_index(dir.path(), 1);
  ImageSource src(idx, 32, 32);
  for (const std::string model : {"resnet50", "mobilenetv2", "resnet_mini", "mobilenetv2_mini"}) {
    auto cfg = tiny_config(model);
    cfg.backbone_mode = BackboneMode::frozen;
    cfg.epochs = 1;
    cfg.batch_size = 5;
    Trainer t(cfg);
    const auto body = checksum(t.params(), false), head = checksum(t.params(), true);
    t.fit(src, src);
    o.require(checksum(t.params(), false) == body, model + " backbone changed");
    o.require(checksum(t.params(), true) != head, model + " head unchanged");
  }
  o.detail = "backbone checksums unchanged and head checksums changed for 4 models";
  return o;
}

Outcome smoke_performance() {
  Outcome o;
  const NetworkGraph g = build_mobilenet_v2();
  auto params = init_parameters<float>(g, 1);
  Rng rng(5);
  const auto x = random_tensor<float>({8, 50, 50, 3}, rng);
  forward(g, params, x); // warm-up
  const auto t0 = Clock::now();
  const auto y = forward(g, params, x);
  const double secs = seconds_since(t0);
  o.require(y.shape() == Shape{8, 5}, "output shape");
  o.require(secs < 2.0, fmt::format("{:.3f} s", secs));
  o.detail = fmt::format("mobilenetv2 forward, batch 8 at 50x50x3: {:.3f} s", secs);
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", gradient_suite},     {"AC2", oracle_suite},       {"AC3", architecture_audit},
      {"AC4", split_arithmetic},   {"AC5", batch_arithmetic},   {"AC6", overfit_sanity},
      {"AC7", determinism},        {"AC8", recipe_conformance}, {"AC9", frozen_backbone},
      {"AC10", smoke_performance}};
  int failed = 0;
  for (const auto &[id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception &e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    std::string line = fmt::format("{} {} {}", id, o.pass ? "PASS" : "FAIL", o.detail);
    for (const auto &f : o.failures)
      line += " [" + f + "]";
    std::puts(line.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
