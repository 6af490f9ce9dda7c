#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blocktower/common/parallel.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/dataset.hpp"
#include "blocktower/eval/metrics.hpp"
#include "blocktower/eval/occlusion.hpp"
#include "blocktower/eval/report.hpp"
#include "blocktower/eval/transfer.hpp"
#include "blocktower/learn/checkpoint.hpp"
#include "blocktower/learn/layers.hpp"
#include "blocktower/learn/model.hpp"
#include "blocktower/learn/train.hpp"
#include "blocktower/render.hpp"

using namespace blocktower;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- metrics

Verdict metric_anchors() {
  const double a = eval::binomial_ci(0.667, 493);
  const double b = eval::binomial_ci(0.5, 493);
  const bool ok = std::abs(a - 0.0212) <= 0.0005 && std::abs(b - 0.0225) <= 0.0005;
  return {ok, fmt("ci(0.667,493)=%.5f ci(0.5,493)=%.5f", a, b)};
}

Verdict metric_unit_suite() {
  const std::size_t w = 6, px = w * w;
  std::vector<uint8_t> square(px, 0), shifted(px, 0), other(px, 0);
  // 2x2 square and the same square moved one column right: overlap 2 of 6.
  for (std::size_t y = 1; y < 3; ++y)
    for (std::size_t x = 1; x < 3; ++x) {
      square[y * w + x] = 1;
      shifted[y * w + x + 1] = 1;
    }
  for (std::size_t y = 4; y < 6; ++y)
    for (std::size_t x = 0; x < 2; ++x) other[y * w + x] = 1;
  const double identity = eval::example_mask_iou(square.data(), eval::one_hot(square.data(), px).data(), px);
  const double disjoint = eval::example_mask_iou(square.data(), eval::one_hot(other.data(), px).data(), px);
  const double shift = eval::example_mask_iou(square.data(), eval::one_hot(shifted.data(), px).data(), px);

  std::vector<float> uniform(eval::kClasses * px, 1.0f / eval::kClasses);
  const double ll = eval::log_likelihood_sum(square.data(), uniform.data(), px) / static_cast<double>(px);

  const std::vector<double> conf{0.1, 0.4, 0.35, 0.8};
  const std::vector<uint8_t> labels{0, 0, 1, 1};
  const double auc = eval::roc_curve(conf, labels).auc;

  const bool ok = identity == 1.0 && disjoint == 0.0 && std::abs(shift - 1.0 / 3.0) <= 1e-9 &&
                  std::abs(ll - std::log(0.2)) <= 1e-4 && std::abs(ll + 1.6094) <= 1e-4 && auc == 0.75;
  return {ok, fmt("miou identity=%.3f disjoint=%.3f shifted=%.12f ll_uniform=%.5f auc=%.4f", identity, disjoint,
                  shift, ll, auc)};
}

// ---------------------------------------------------------------- physics

// Interval walk over the stack, independent of the library's stability code.
double oracle_margin(const std::vector<double>& xs, double side) {
  const double h = side / 2;
  double margin = 1e300;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double lo = k == 0 ? xs[0] - h : std::max(xs[k - 1], xs[k]) - h;
    const double hi = k == 0 ? xs[0] + h : std::min(xs[k - 1], xs[k]) + h;
    double sum = 0;
    for (std::size_t j = k; j < xs.size(); ++j) sum += xs[j];
    const double com = sum / static_cast<double>(xs.size() - k);
    margin = std::min(margin, hi < lo ? hi - lo : std::min(com - lo, hi - com));
  }
  return margin;
}

Verdict oracle_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const scenegen::GenConfig cfg;
  const double side = cfg.physics.side;
  int counted = 0, agree = 0;
  for (uint64_t i = 0; counted < 2400; ++i) {
    const int n = 2 + static_cast<int>(i % 3);
    const auto s = scenegen::sample_tower(derive_seed(4242, i), n, cfg);
    std::vector<double> xs;
    for (const auto& b : s.scene.blocks) xs.push_back(b.x);
    const double m = oracle_margin(xs, side);
    if (std::abs(m) <= 0.05 * side) continue;
    ++counted;
    agree += s.label_fell == (m < 0);
  }
  const double rate = static_cast<double>(agree) / counted;
  return {rate >= 0.98, fmt("%d/%d towers agree (%.4f) in %.0f s", agree, counted, rate, seconds_since(t0))};
}

// ---------------------------------------------------------------- files

std::map<std::string, std::string> file_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = render::read_file(e.path().string());
  return files;
}

std::string generate(const scenegen::GenConfig& cfg, const fs::path& dir, int jobs) {
  const auto samples = scenegen::generate_balanced(cfg, jobs);
  dataset::write_dataset(samples, cfg, dir.string(), jobs);
  return dir.string();
}

Verdict determinism(const fs::path& work, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  scenegen::GenConfig cfg;
  cfg.master_seed = 31337;
  cfg.count_per_cell = 40;
  generate(cfg, work / "det_a", 1);
  generate(cfg, work / "det_b", std::max(jobs, 3));
  const auto a = file_tree(work / "det_a");
  const auto b = file_tree(work / "det_b");
  const auto manifest = dataset::read_manifest((work / "det_a").string());
  const bool same_tree = a == b && manifest.records.size() == 240;

  const auto records = dataset::load_dataset((work / "det_a").string(), dataset::SplitFilter::kTrain, jobs);
  const auto ex = learn::make_examples(records);
  learn::TrainConfig tc;
  tc.lr_grid = {0.03};
  tc.epochs = 2;
  tc.seed = 8;
  tc.jobs = jobs;
  learn::save_checkpoint((work / "det_a.bin").string(), *learn::train({}, ex, tc, {}).model);
  tc.jobs = std::max(jobs, 3);
  learn::save_checkpoint((work / "det_b.bin").string(), *learn::train({}, ex, tc, {}).model);
  const bool same_ckpt = render::read_file((work / "det_a.bin").string()) == render::read_file((work / "det_b.bin").string());
  fs::remove_all(work / "det_a");
  fs::remove_all(work / "det_b");
  return {same_tree && same_ckpt, fmt("%zu records, %zu files identical=%d, checkpoint identical=%d in %.0f s",
                                      manifest.records.size(), a.size(), same_tree, same_ckpt, seconds_since(t0))};
}

// ---------------------------------------------------------------- gradients

double rel_err(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

std::vector<double> randn(std::size_t n, Pcg32& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Worst relative error of g against central differences of f over all of x.
double fd_error(std::vector<double>& x, const std::vector<double>& g, const std::function<double()>& f) {
  constexpr double h = 1e-3;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    worst = std::max(worst, rel_err(g[i], (up - down) / (2 * h), 1e-8));
  }
  return worst;
}

double conv_layer_error(const learn::ConvShape& s, uint64_t seed) {
  Pcg32 rng(seed);
  auto in = randn(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, rng);
  auto w = randn(s.weight_count(), rng, 0.3);
  auto b = randn(s.out_c, rng);
  const auto r = randn(static_cast<std::size_t>(s.out_c) * s.out_pixels(), rng);
  std::vector<double> col;
  auto f = [&] {
    std::vector<double> out(r.size());
    learn::conv2d_forward(s, in.data(), w.data(), b.data(), out.data(), col);
    return dot(out, r);
  };
  std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0), din(in.size());
  learn::conv2d_backward(s, in.data(), w.data(), r.data(), dw.data(), db.data(), din.data(), col);
  return std::max({fd_error(in, din, f), fd_error(w, dw, f), fd_error(b, db, f)});
}

double upconv_layer_error(uint64_t seed) {
  const learn::ConvShape s{4, 3, 3, 1, 1, 4, 5};
  Pcg32 rng(seed);
  auto in = randn(4 * 4 * 5, rng);
  auto w = randn(3 * 4 * 9, rng, 0.5);
  auto b = randn(3, rng);
  const auto r = randn(3 * 8 * 10, rng);
  std::vector<double> scratch;
  auto f = [&] {
    std::vector<double> out(r.size());
    learn::upconv3x3_forward(s, in.data(), w.data(), b.data(), out.data(), scratch);
    return dot(out, r);
  };
  std::vector<double> dw(w.size(), 0.0), db(3, 0.0), din(in.size());
  learn::upconv3x3_backward(s, in.data(), w.data(), r.data(), dw.data(), db.data(), din.data(), scratch);
  return std::max({fd_error(in, din, f), fd_error(w, dw, f), fd_error(b, db, f)});
}

double elementwise_layer_errors(uint64_t seed) {
  Pcg32 rng(seed);
  double worst = 0;

  auto x = randn(60, rng);
  for (auto& v : x)
    if (std::abs(v) < 0.01) v = 0.5;
  auto r = randn(60, rng);
  auto relu = [&] {
    auto y = x;
    learn::relu_forward(y.data(), y.size());
    return dot(y, r);
  };
  auto y = x;
  learn::relu_forward(y.data(), y.size());
  auto g = r;
  learn::relu_backward(y.data(), g.data(), g.size());
  worst = std::max(worst, fd_error(x, g, relu));

  auto u = randn(2 * 3 * 4, rng);
  const auto ru = randn(2 * 6 * 8, rng);
  auto up = [&] {
    std::vector<double> o(ru.size());
    learn::upsample2x_forward(u.data(), 2, 3, 4, o.data());
    return dot(o, ru);
  };
  std::vector<double> gu(u.size());
  learn::upsample2x_backward(ru.data(), 2, 3, 4, gu.data());
  worst = std::max(worst, fd_error(u, gu, up));

  auto p = randn(4 * 9, rng);
  const auto rp = randn(4, rng);
  auto gap = [&] {
    std::vector<double> o(4);
    learn::global_avg_pool_forward(p.data(), 4, 9, o.data());
    return dot(o, rp);
  };
  std::vector<double> gp(p.size());
  learn::global_avg_pool_backward(rp.data(), 4, 9, gp.data());
  worst = std::max(worst, fd_error(p, gp, gap));

  auto li = randn(7, rng);
  auto lw = randn(3 * 7, rng);
  auto lb = randn(3, rng);
  const auto rl = randn(3, rng);
  auto lin = [&] {
    std::vector<double> o(3);
    learn::linear_forward(li.data(), 7, lw.data(), lb.data(), 3, o.data());
    return dot(o, rl);
  };
  std::vector<double> dw(lw.size(), 0.0), db(3, 0.0), dx(7);
  learn::linear_backward(li.data(), 7, lw.data(), rl.data(), 3, dw.data(), db.data(), dx.data());
  worst = std::max({worst, fd_error(li, dx, lin), fd_error(lw, dw, lin), fd_error(lb, db, lin)});
  return worst;
}

double loss_layer_errors(uint64_t seed) {
  double worst = 0;
  for (bool label : {false, true})
    for (double z0 : {-3.0, -0.2, 0.0, 1.7}) {
      std::vector<double> z{z0};
      double dz = 0;
      learn::bce_with_logit(z[0], label, &dz);
      worst = std::max(worst, fd_error(z, {dz}, [&] {
                         return learn::bce_with_logit(z[0], label, static_cast<double*>(nullptr));
                       }));
    }
  Pcg32 rng(seed);
  const int classes = 5, pixels = 12;
  auto z = randn(classes * pixels, rng, 2.0);
  std::vector<uint8_t> labels(pixels);
  for (auto& l : labels) l = static_cast<uint8_t>(rng.bounded(5));
  std::vector<double> probs(z.size()), dz(z.size());
  learn::softmax_cross_entropy(z.data(), classes, pixels, labels.data(), probs.data(), dz.data(), 1.0);
  worst = std::max(worst, fd_error(z, dz, [&] {
                     std::vector<double> pr(z.size());
                     return learn::softmax_cross_entropy<double>(z.data(), classes, pixels, labels.data(),
                                                                 pr.data(), nullptr, 0.0);
                   }));
  return worst;
}

struct Labels {
  std::vector<std::vector<uint8_t>> masks;
  std::vector<learn::SampleLabel> labels;

  Labels(std::size_t n, std::size_t pixels, uint64_t seed) {
    Pcg32 rng(seed);
    masks.resize(n * learn::kMaskSteps, std::vector<uint8_t>(pixels));
    for (auto& m : masks)
      for (auto& v : m) v = rng.uniform() < 0.7 ? 0 : static_cast<uint8_t>(1 + rng.bounded(4));
    for (std::size_t i = 0; i < n; ++i) {
      learn::SampleLabel l;
      l.fell = i % 2 == 1;
      for (int t = 0; t < learn::kMaskSteps; ++t) l.masks[t] = masks[i * learn::kMaskSteps + t].data();
      labels.push_back(l);
    }
  }
};

// Whole-model check: one entry of every tensor plus random extras, biases
// jittered off zero so no ReLU input sits on its kink, h = 1e-6.
double model_error(const learn::ModelConfig& mc, double lambda, uint64_t seed) {
  auto m = learn::make_model<double>(mc);
  m->init(seed);
  Pcg32 rng(seed + 1);
  for (const auto& s : m->specs())
    if (s.fan_in == 0)
      for (std::size_t i = 0; i < s.size(); ++i) m->params()[s.offset + i] = 0.05 * rng.normal();
  std::vector<double> images(3 * m->image_size());
  for (auto& v : images) v = rng.uniform();
  const Labels lab(3, m->pixels(), seed + 2);
  std::vector<std::size_t> idx;
  for (const auto& s : m->specs()) idx.push_back(s.offset + rng.bounded(static_cast<uint32_t>(s.size())));
  for (int i = 0; i < 20; ++i) idx.push_back(rng.bounded(static_cast<uint32_t>(m->param_count())));

  const learn::LossConfig lc{lambda};
  std::vector<double> grad(m->param_count());
  m->loss(images.data(), lab.labels, lc, grad.data());
  constexpr double h = 1e-6;
  double worst = 0;
  for (std::size_t i : idx) {
    const double keep = m->params()[i];
    m->params()[i] = keep + h;
    const double up = m->loss(images.data(), lab.labels, lc, nullptr);
    m->params()[i] = keep - h;
    const double down = m->loss(images.data(), lab.labels, lc, nullptr);
    m->params()[i] = keep;
    worst = std::max(worst, rel_err(grad[i], (up - down) / (2 * h), 1e-4));
  }
  return worst;
}

Verdict gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errs;
  double conv = 0;
  for (const auto& s : {learn::ConvShape{3, 4, 5, 2, 2, 9, 9}, learn::ConvShape{4, 5, 3, 2, 1, 7, 6},
                        learn::ConvShape{2, 3, 3, 1, 1, 5, 7}})
    conv = std::max(conv, conv_layer_error(s, 17));
  errs.emplace_back("conv", conv);
  errs.emplace_back("upconv", upconv_layer_error(9));
  errs.emplace_back("relu/upsample/gap/linear", elementwise_layer_errors(5));
  errs.emplace_back("bce/softmax-ce", loss_layer_errors(12));

  learn::ModelConfig small;
  small.height = small.width = 16;
  learn::ModelConfig shared = small;
  shared.shared_heads = true;
  errs.emplace_back("mini fall", model_error(small, 0.0, 21));
  errs.emplace_back("mini joint", model_error(small, 1.0, 22));
  errs.emplace_back("mini shared joint", model_error(shared, 1.0, 23));
  errs.emplace_back("mini mask-weighted", model_error(small, 2.5, 24));
  learn::ModelConfig lr = small;
  lr.height = lr.width = 8;
  lr.kind = learn::ModelKind::kLogReg;
  errs.emplace_back("logreg joint", model_error(lr, 1.0, 25));
  lr.kind = learn::ModelKind::kLogRegFactored;
  lr.factor_dim = 6;
  errs.emplace_back("logreg-factored joint", model_error(lr, 1.0, 26));

  bool ok = true;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e < 1e-4;
    detail += fmt("%s=%.1e ", name.c_str(), e);
  }
  return {ok, detail + fmt("in %.0f s", seconds_since(t0))};
}

// ---------------------------------------------------------------- learning

// Full-size dataset and models shared by the learning criteria. The dataset,
// the trained MiniPhysNet and their wall times are cached in the work
// directory so separate invocations reuse them.
struct Lab {
  fs::path work, dir;
  int jobs = 1;
  std::vector<dataset::LoadedRecord> train, test;
  std::array<double, eval::kClasses> class_constant{};
  double generate_s = 0;
  std::unique_ptr<learn::Model<float>> mini, logreg, factored;
  double mini_train_s = 0, logreg_train_s = 0;
  std::optional<eval::EvalReport> mini_report;
};

learn::TrainConfig mini_train_config(int jobs) {
  learn::TrainConfig tc;
  tc.lr_grid = {0.1};
  tc.epochs = 8;
  tc.batch_size = 32;
  tc.seed = 1;
  tc.jobs = jobs;
  return tc;
}

void log_epoch(const char* tag, const learn::LogEntry& e) {
  std::fprintf(stderr, "  %s lr=%g epoch=%d loss=%.4f train=%.4f val=%.4f\n", tag, e.lr, e.epoch, e.loss,
               e.train_acc, e.val_acc);
}

void save_seconds(const fs::path& p, double s) { render::write_file(p.string(), std::to_string(s)); }

double load_seconds(const fs::path& p) { return fs::exists(p) ? std::stod(render::read_file(p.string())) : 0.0; }

Lab& lab(const fs::path& work, int jobs) {
  static std::unique_ptr<Lab> L;
  if (L) return *L;
  L = std::make_unique<Lab>();
  L->work = work;
  L->dir = work / "full";
  L->jobs = jobs;
  if (!fs::exists(L->dir / dataset::kManifestFile)) {
    const auto t0 = std::chrono::steady_clock::now();
    generate(scenegen::GenConfig{}, L->dir, jobs);
    save_seconds(work / "generate.seconds", seconds_since(t0));
  }
  const auto t0 = std::chrono::steady_clock::now();
  L->train = dataset::load_dataset(L->dir.string(), dataset::SplitFilter::kTrain, jobs);
  L->test = dataset::load_dataset(L->dir.string(), dataset::SplitFilter::kTest, jobs);
  L->generate_s = load_seconds(work / "generate.seconds") + seconds_since(t0);
  std::vector<const uint8_t*> finals;
  for (const auto& r : L->train) finals.push_back(r.masks[3].data());
  L->class_constant =
      eval::class_constant_baseline(finals, static_cast<std::size_t>(L->train[0].width) * L->train[0].height);
  return *L;
}

eval::EvalOptions eval_options(const Lab& L) {
  eval::EvalOptions o;
  o.jobs = L.jobs;
  o.class_constant = L.class_constant;
  return o;
}

learn::Model<float>& mini_model(Lab& L) {
  const fs::path ckpt = L.work / "mini.bin";
  if (!L.mini && fs::exists(ckpt)) {
    L.mini = learn::load_checkpoint(ckpt.string());
    L.mini_train_s = load_seconds(L.work / "mini.seconds");
  }
  if (!L.mini) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ex = learn::make_examples(L.train);
    L.mini = learn::train({}, ex, mini_train_config(L.jobs), learn::LossConfig{1.0},
                          [](const learn::LogEntry& e) { log_epoch("mini", e); })
                 .model;
    L.mini_train_s = seconds_since(t0);
    learn::save_checkpoint(ckpt.string(), *L.mini);
    save_seconds(L.work / "mini.seconds", L.mini_train_s);
  }
  return *L.mini;
}

const eval::EvalReport& mini_report(Lab& L) {
  if (!L.mini_report) L.mini_report = eval::evaluate(mini_model(L), L.test, eval_options(L));
  return *L.mini_report;
}

learn::Model<float>& logreg_model(Lab& L) {
  if (!L.logreg) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ex = learn::make_examples(L.train);
    // The unfactored mask map does not fit at 56x56; the fall head is the same
    // pixel logistic regression in both kinds and lambda 0 leaves the masks out.
    learn::ModelConfig mc;
    mc.kind = learn::ModelKind::kLogRegFactored;
    learn::TrainConfig tc;
    tc.lr_grid = {0.01, 0.001};
    tc.epochs = 8;
    tc.jobs = L.jobs;
    L.logreg = learn::train(mc, ex, tc, learn::LossConfig{0.0},
                            [](const learn::LogEntry& e) { log_epoch("logreg", e); })
                   .model;
    L.logreg_train_s = seconds_since(t0);
  }
  return *L.logreg;
}

learn::Model<float>& factored_model(Lab& L) {
  if (!L.factored) {
    const auto ex = learn::make_examples(L.train);
    learn::ModelConfig mc;
    mc.kind = learn::ModelKind::kLogRegFactored;
    learn::TrainConfig tc;
    tc.lr_grid = {0.01};
    tc.epochs = 4;
    tc.jobs = L.jobs;
    L.factored = learn::train(mc, ex, tc, learn::LossConfig{1.0},
                              [](const learn::LogEntry& e) { log_epoch("logreg-factored", e); })
                     .model;
  }
  return *L.factored;
}

double size_accuracy(const eval::EvalReport& r, int n) {
  for (const auto& s : r.per_size)
    if (s.n_blocks == n) return s.accuracy;
  return std::nan("");
}

Verdict learning_signal(Lab& L) {
  mini_model(L);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& rep = mini_report(L);
  const auto lr = eval::evaluate(logreg_model(L), L.test, eval_options(L));
  const double two = size_accuracy(rep, 2);
  const bool split_ok = L.train.size() == 8190 && L.test.size() == 1026;
  const double total_s = L.generate_s + L.mini_train_s + seconds_since(t0);
  const bool ok = split_ok && rep.accuracy >= 0.70 && two >= 0.80 && rep.accuracy - lr.accuracy >= 0.10 &&
                  total_s <= 1800;
  return {ok, fmt("train=%zu test=%zu mini=%.4f 2-block=%.4f logreg=%.4f gap=%.1f pts; data %.0f s, "
                  "mini %.0f s, logreg %.0f s, total %.0f s",
                  L.train.size(), L.test.size(), rep.accuracy, two, lr.accuracy, 100 * (rep.accuracy - lr.accuracy),
                  L.generate_s, L.mini_train_s, L.logreg_train_s, total_s)};
}

Verdict mask_ordering(Lab& L) {
  const auto& rep = mini_report(L);
  auto opts = eval_options(L);
  const auto fac = eval::evaluate(factored_model(L), L.test, opts);
  const double cc = rep.baselines->class_constant_ll;
  const double t0 = rep.baselines->mask_t0_miou;
  const bool ok = rep.ll_per_px > cc && rep.ll_per_px > fac.ll_per_px && t0 >= 0.5;
  return {ok, fmt("ll_per_px mini=%.4f class-constant=%.4f logreg-factored=%.4f; mask@t0 miou=%.4f (mini %.4f)",
                  rep.ll_per_px, cc, fac.ll_per_px, t0, rep.miou)};
}

Verdict transfer(Lab& L) {
  const auto t0 = std::chrono::steady_clock::now();
  eval::TransferConfig cfg;
  cfg.train_sizes = {2, 3};
  cfg.train = mini_train_config(L.jobs);
  cfg.loss.lambda_mask = 1.0;
  const auto held = eval::transfer_protocol(L.train, L.test, cfg, eval_options(L));
  const auto full = eval::evaluate_by_size(mini_model(L), L.test, {2, 3, 4}, eval_options(L));
  double held4 = std::nan(""), full4 = std::nan("");
  for (const auto& s : held.sizes)
    if (s.n_blocks == 4 && s.held_out) held4 = s.report.accuracy;
  for (const auto& s : full)
    if (s.n_blocks == 4) full4 = s.report.accuracy;
  const bool ok = held4 >= 0.60 && full4 - held4 <= 0.15;
  return {ok, fmt("size-4 accuracy trained on {2,3}=%.4f, on all sizes=%.4f, degradation=%.1f pts in %.0f s",
                  held4, full4, 100 * (full4 - held4), seconds_since(t0))};
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

Verdict occlusion(Lab& L) {
  const auto t0 = std::chrono::steady_clock::now();
  auto& model = mini_model(L);
  constexpr std::size_t kImages = 60;
  const std::size_t stride = L.test.size() / kImages;
  std::vector<double> inside, outside;
  std::size_t used = 0;
  for (std::size_t k = 0; k < kImages; ++k) {
    const auto& r = L.test[k * stride];
    const auto hm = eval::occlusion_heatmap(model, r.image.data(), L.jobs);
    const auto in_box = eval::cells_inside_foreground_box(r.masks[0].data(), r.width, r.height);
    for (std::size_t c = 0; c < hm.delta.size(); ++c) (in_box[c] ? inside : outside).push_back(std::abs(hm.delta[c]));
    ++used;
  }
  const double mi = median(inside), mo = median(outside);
  return {used >= 50 && mi > mo, fmt("%zu images, median |dp| inside=%.5f outside=%.5f (%zu/%zu cells) in %.0f s",
                                     used, mi, mo, inside.size(), outside.size(), seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work_dir;
  std::vector<std::string> only;
  int jobs = 0;
  bool keep = false;
  app.add_option("--work-dir", work_dir, "scratch directory (default: a fresh temporary directory)");
  app.add_option("--only", only, "run only the named criteria");
  app.add_option("--jobs", jobs)->check(CLI::NonNegativeNumber);
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);
  jobs = resolve_jobs(jobs);

  fs::path work = work_dir;
  if (work.empty()) {
    std::random_device rd;
    work = fs::temp_directory_path() / ("bt-acceptance-" + std::to_string(rd()));
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"metric-anchors", metric_anchors},
      {"metric-unit-suite", metric_unit_suite},
      {"oracle-agreement", oracle_agreement},
      {"determinism", [&] { return determinism(work, jobs); }},
      {"gradient-checks", gradient_checks},
      {"learning-signal", [&] { return learning_signal(lab(work, jobs)); }},
      {"mask-ordering", [&] { return mask_ordering(lab(work, jobs)); }},
      {"transfer", [&] { return transfer(lab(work, jobs)); }},
      {"occlusion", [&] { return occlusion(lab(work, jobs)); }},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  if (!keep && work_dir.empty()) fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
