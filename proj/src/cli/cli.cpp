#include <atomic>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "blocktower/cli.hpp"
#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/dataset.hpp"
#include "blocktower/eval/metrics.hpp"
#include "blocktower/eval/occlusion.hpp"
#include "blocktower/eval/report.hpp"
#include "blocktower/eval/transfer.hpp"
#include "blocktower/learn/checkpoint.hpp"
#include "blocktower/learn/train.hpp"
#include "blocktower/render.hpp"
#include "blocktower/scene_gen.hpp"
#include "blocktower/service/trial_service.hpp"

namespace blocktower::cli {
namespace {

using nlohmann::ordered_json;

struct TrainFlags {
  std::string model = "mini";
  int epochs = 10;
  std::vector<double> lr_grid{0.1, 0.03, 0.01};
  double lambda_mask = 1.0;
  double momentum = 0.9;
  int batch_size = 32;
  uint64_t seed = 1;
  bool shared_heads = false;
  int factor_dim = 128;

  void add(CLI::App* app) {
    app->add_option("--model", model, "mini, logreg or logreg-factored")->capture_default_str();
    app->add_option("--epochs", epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--lr-grid", lr_grid, "comma-separated learning rates")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--lambda-mask", lambda_mask)->capture_default_str();
    app->add_option("--momentum", momentum)->capture_default_str();
    app->add_option("--batch-size", batch_size)->capture_default_str();
    app->add_option("--seed", seed, "initialisation and shuffling seed")->capture_default_str();
    app->add_flag("--shared-heads", shared_heads, "share the first mask-head stages across steps");
    app->add_option("--factor-dim", factor_dim)->capture_default_str();
  }

  learn::TrainConfig train_config(int jobs) const {
    learn::TrainConfig c;
    c.lr_grid = lr_grid;
    c.momentum = momentum;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.seed = seed;
    c.jobs = jobs;
    c.validate();
    return c;
  }

  learn::ModelConfig model_config(int height, int width) const {
    learn::ModelConfig c;
    c.kind = learn::parse_model_kind(model);
    c.height = height;
    c.width = width;
    c.shared_heads = shared_heads;
    c.factor_dim = factor_dim;
    c.validate();
    return c;
  }

  learn::LossConfig loss_config() const {
    learn::LossConfig c;
    c.lambda_mask = lambda_mask;
    c.validate();
    return c;
  }

  ordered_json to_json() const {
    return {{"model", model},         {"epochs", epochs},         {"lr_grid", lr_grid},
            {"lambda_mask", lambda_mask}, {"momentum", momentum},  {"batch_size", batch_size},
            {"seed", seed},           {"shared_heads", shared_heads}, {"factor_dim", factor_dim}};
  }
};

void print_config(std::ostream& out, const std::string& command, ordered_json cfg) {
  ordered_json j;
  j["command"] = command;
  j["config"] = std::move(cfg);
  out << j.dump() << std::endl;
}

std::pair<int, int> image_size(std::span<const dataset::LoadedRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyTrainSet, "no records");
  const int h = records.front().height, w = records.front().width;
  for (const auto& r : records)
    if (r.height != h || r.width != w)
      throw Error(ErrorCode::kShapeMismatch, "record " + r.record.id + " has a different image size");
  return {h, w};
}

std::array<double, eval::kClasses> fit_class_constant(std::span<const dataset::LoadedRecord> train) {
  std::vector<const uint8_t*> masks;
  std::size_t pixels = 0;
  for (const auto& r : train)
    if (!r.masks[3].empty()) {
      masks.push_back(r.masks[3].data());
      pixels = r.masks[3].size();
    }
  if (masks.empty()) throw Error(ErrorCode::kEmptyTrainSet, "no training masks for the class-constant baseline");
  return eval::class_constant_baseline(masks, pixels);
}

void write_json(const std::string& path, const ordered_json& j) {
  render::write_file(path, j.dump(2) + "\n");
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<int> count_per_cell, std::optional<uint64_t> seed, int jobs,
                 std::ostream& out) {
  scenegen::GenConfig cfg = config_path.empty() ? scenegen::GenConfig{} : scenegen::load_gen_config(config_path);
  if (count_per_cell) cfg.count_per_cell = *count_per_cell;
  if (seed) cfg.master_seed = *seed;
  cfg.validate();
  ordered_json c;
  c["out"] = out_dir;
  c["jobs"] = jobs;
  c["gen"] = scenegen::gen_config_to_json(cfg);
  print_config(out, "generate", c);
  const auto samples = scenegen::generate_balanced(cfg, jobs);
  const auto manifest = dataset::write_dataset(samples, cfg, out_dir, jobs);
  std::size_t n_test = 0;
  for (const auto& r : manifest.records) n_test += r.split == dataset::Split::kTest;
  out << ordered_json{{"records", manifest.records.size()},
                      {"train", manifest.records.size() - n_test},
                      {"test", n_test}}
                .dump()
      << std::endl;
  return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& out_path, const std::string& log_path,
              const TrainFlags& f, int jobs, std::ostream& out, std::ostream& err) {
  const auto tc = f.train_config(jobs);
  const auto lc = f.loss_config();
  learn::parse_model_kind(f.model);
  ordered_json c = f.to_json();
  c["dataset"] = dataset_dir;
  c["out"] = out_path;
  c["jobs"] = jobs;
  print_config(out, "train", c);

  const auto records = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTrain, jobs);
  const auto [h, w] = image_size(records);
  const auto mc = f.model_config(h, w);
  const auto examples = learn::make_examples(records);
  ordered_json log = ordered_json::array();
  auto result = learn::train(mc, examples, tc, lc, [&](const learn::LogEntry& e) {
    const auto j = learn::log_entry_to_json(e);
    err << j.dump() << std::endl;
    log.push_back(j);
  });
  learn::save_checkpoint(out_path, *result.model);
  ordered_json summary;
  summary["selected_lr"] = result.selected_lr;
  summary["selected_epoch"] = result.selected_epoch;
  summary["selected_val_acc"] = result.selected_val_acc;
  summary["train_count"] = examples.size();
  if (!log_path.empty()) {
    ordered_json j = summary;
    j["config"] = c;
    j["log"] = log;
    write_json(log_path, j);
  }
  out << summary.dump() << std::endl;
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dataset_dir, const std::string& out_path,
             const std::string& knn, int knn_k, int jobs, std::ostream& out) {
  eval::EvalOptions opts;
  opts.jobs = jobs;
  opts.knn = eval::parse_knn_features(knn);
  opts.knn_k = knn_k;
  ordered_json c{{"model", model_path}, {"dataset", dataset_dir}, {"out", out_path},
                 {"knn", knn},          {"knn_k", knn_k},         {"jobs", jobs}};
  print_config(out, "eval", c);
  const auto model = learn::load_checkpoint(model_path);
  const auto train = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTrain, jobs);
  const auto test = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTest, jobs);
  opts.class_constant = fit_class_constant(train);
  opts.knn_train = train;
  const auto report = eval::evaluate(*model, test, opts);
  write_json(out_path, eval::report_to_json(report));
  out << ordered_json{{"count", report.count}, {"accuracy", report.accuracy}, {"miou", report.miou},
                      {"ll_per_px", report.ll_per_px}}
             .dump()
      << std::endl;
  return 0;
}

int cmd_occlude(const std::string& model_path, const std::string& dataset_dir, const std::string& id,
                const std::string& prefix, int jobs, std::ostream& out) {
  print_config(out, "occlude",
               {{"model", model_path}, {"dataset", dataset_dir}, {"id", id}, {"out", prefix}, {"jobs", jobs}});
  const auto model = learn::load_checkpoint(model_path);
  const auto manifest = dataset::read_manifest(dataset_dir);
  const dataset::DatasetRecord* rec = nullptr;
  for (const auto& r : manifest.records)
    if (r.id == id) rec = &r;
  if (rec == nullptr) throw Error(ErrorCode::kInvalidArgument, "no record " + id + " in " + dataset_dir);
  const auto img = render::read_ppm((std::filesystem::path(dataset_dir) / rec->image_path).string());
  if (img.width != model->config().width || img.height != model->config().height)
    throw Error(ErrorCode::kShapeMismatch, "image size does not match the model");
  const auto planar = dataset::image_to_planar(img);
  const auto hm = eval::occlusion_heatmap(*model, planar.data(), jobs);
  auto exp = eval::export_heatmap(hm);
  exp.sidecar["id"] = id;
  render::write_file(prefix + ".pgm", exp.pgm);
  write_json(prefix + ".json", exp.sidecar);
  out << ordered_json{{"base_prob", hm.base_prob}, {"pgm", prefix + ".pgm"}, {"sidecar", prefix + ".json"}}.dump()
      << std::endl;
  return 0;
}

int cmd_transfer(const std::string& dataset_dir, const std::vector<int>& sizes, const std::string& out_path,
                 const TrainFlags& f, int jobs, std::ostream& out, std::ostream& err) {
  eval::TransferConfig cfg;
  cfg.train_sizes = std::set<int>(sizes.begin(), sizes.end());
  cfg.train = f.train_config(jobs);
  cfg.loss = f.loss_config();
  ordered_json c = f.to_json();
  c["dataset"] = dataset_dir;
  c["train_sizes"] = cfg.train_sizes;
  c["out"] = out_path;
  c["jobs"] = jobs;
  print_config(out, "transfer", c);
  const auto train = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTrain, jobs);
  const auto test = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTest, jobs);
  const auto [h, w] = image_size(train);
  cfg.model = f.model_config(h, w);
  eval::EvalOptions opts;
  opts.jobs = jobs;
  opts.class_constant = fit_class_constant(train);
  err << "training on sizes " << ordered_json(cfg.train_sizes).dump() << std::endl;
  const auto result = eval::transfer_protocol(train, test, cfg, opts);
  write_json(out_path, eval::transfer_to_json(result));
  ordered_json summary = ordered_json::array();
  for (const auto& s : result.sizes)
    summary.push_back({{"n_blocks", s.n_blocks}, {"held_out", s.held_out}, {"accuracy", s.report.accuracy}});
  out << summary.dump() << std::endl;
  return 0;
}

int cmd_verify(const std::string& dataset_dir, int jobs, std::ostream& out, std::ostream& err) {
  print_config(out, "verify", {{"dataset", dataset_dir}, {"jobs", jobs}});
  const auto report = dataset::verify_dataset(dataset_dir, jobs);
  for (const auto& p : report.problems) err << p << "\n";
  out << ordered_json{{"records_checked", report.records_checked}, {"problems", report.problems.size()}}.dump()
      << std::endl;
  if (!report.ok()) throw Error(ErrorCode::kConsistencyFailure, "dataset verification failed");
  return 0;
}

int cmd_serve(const std::string& host, int port, const std::string& model_path, const std::string& dataset_dir,
              const std::string& sessions_dir, const std::string& ui_dir, int jobs, std::ostream& out) {
  print_config(out, "serve",
               {{"host", host}, {"port", port}, {"model", model_path}, {"dataset", dataset_dir},
                {"sessions", sessions_dir}, {"ui", ui_dir}, {"jobs", jobs}});
  const auto model = learn::load_checkpoint(model_path);
  std::vector<dataset::DatasetRecord> records;
  std::vector<double> probs;
  {
    const auto test = dataset::load_dataset(dataset_dir, dataset::SplitFilter::kTest, jobs);
    const auto examples = learn::make_examples(test);
    const auto p = learn::predict_fall(*model, examples, jobs);
    for (std::size_t i = 0; i < test.size(); ++i) {
      records.push_back(test[i].record);
      probs.push_back(p[i]);
    }
  }
  service::TrialService svc(dataset_dir, std::move(records), std::move(probs), sessions_dir);
  service::HttpServer server(svc, ui_dir);
  const int bound = server.bind(host, port);
  out << ordered_json{{"listening", "http://" + host + ":" + std::to_string(bound) + "/"},
                      {"sessions_loaded", svc.session_count()}}
             .dump()
      << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block tower stability laboratory", "blocktower"};
  app.require_subcommand(1);
  int jobs_flag = 0;
  app.add_option("--jobs", jobs_flag, "worker threads (default $BLOCKTOWER_JOBS or all cores)")
      ->check(CLI::PositiveNumber);

  std::string dataset_dir, out_path, model_path, config_path, log_path, id, host = "127.0.0.1",
              sessions_dir, ui_dir, knn = "none";
  std::optional<int> count_per_cell;
  std::optional<uint64_t> seed;
  int knn_k = 10;
  int port = 8080;
  std::vector<int> sizes;
  TrainFlags train_flags;
  TrainFlags transfer_flags;

  auto* gen = app.add_subcommand("generate", "simulate and render a balanced dataset");
  gen->add_option("--config", config_path, "generator config JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--count-per-cell", count_per_cell, "examples per (size, label) cell");
  gen->add_option("--seed", seed, "master seed override");

  auto* tr = app.add_subcommand("train", "train a model with learning-rate selection");
  tr->add_option("--dataset", dataset_dir)->required();
  tr->add_option("--out", out_path, "checkpoint path")->required();
  tr->add_option("--log", log_path, "write the training log as JSON");
  train_flags.add(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--model", model_path, "checkpoint")->required();
  ev->add_option("--dataset", dataset_dir)->required();
  ev->add_option("--out", out_path, "report path")->required();
  ev->add_option("--knn", knn, "kNN baseline features: none, raw or trunk")->capture_default_str();
  ev->add_option("--knn-k", knn_k)->capture_default_str();

  auto* oc = app.add_subcommand("occlude", "occlusion heatmap for one record");
  oc->add_option("--model", model_path)->required();
  oc->add_option("--dataset", dataset_dir)->required();
  oc->add_option("--id", id)->required();
  oc->add_option("--out", out_path, "output prefix")->required();

  auto* tf = app.add_subcommand("transfer", "train on some tower sizes, test on all");
  tf->add_option("--dataset", dataset_dir)->required();
  tf->add_option("--train-sizes", sizes)->delimiter(',')->required();
  tf->add_option("--out", out_path)->required();
  transfer_flags.add(tf);

  auto* ve = app.add_subcommand("verify", "check a dataset on disk");
  ve->add_option("--dataset", dataset_dir)->required();

  auto* sv = app.add_subcommand("serve", "run the trial service");
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port)->capture_default_str();
  sv->add_option("--model", model_path)->required();
  sv->add_option("--dataset", dataset_dir)->required();
  sv->add_option("--sessions", sessions_dir)->required();
  sv->add_option("--ui", ui_dir, "static UI directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub != nullptr ? sub->help() : app.help());
    return 1;
  }

  try {
    const int jobs = resolve_jobs(jobs_flag);
    if (*gen) return cmd_generate(config_path, out_path, count_per_cell, seed, jobs, out);
    if (*tr) return cmd_train(dataset_dir, out_path, log_path, train_flags, jobs, out, err);
    if (*ev) return cmd_eval(model_path, dataset_dir, out_path, knn, knn_k, jobs, out);
    if (*oc) return cmd_occlude(model_path, dataset_dir, id, out_path, jobs, out);
    if (*tf) return cmd_transfer(dataset_dir, sizes, out_path, transfer_flags, jobs, out, err);
    if (*ve) return cmd_verify(dataset_dir, jobs, out, err);
    if (*sv) return cmd_serve(host, port, model_path, dataset_dir, sessions_dir, ui_dir, jobs, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace blocktower::cli
