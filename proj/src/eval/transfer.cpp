#include "blocktower/common/error.hpp"
#include "blocktower/eval/transfer.hpp"

namespace blocktower::eval {

std::vector<SizeTransfer> evaluate_by_size(const learn::Model<float>& model,
                                           std::span<const dataset::LoadedRecord> test_records,
                                           const std::set<int>& train_sizes,
                                           const EvalOptions& opts) {
  std::vector<SizeTransfer> out;
  for (int n = 2; n <= 4; ++n) {
    std::vector<dataset::LoadedRecord> subset;
    for (const auto& r : test_records)
      if (r.record.n_blocks == n) subset.push_back(r);
    if (subset.empty()) continue;
    EvalOptions o = opts;
    o.held_out_sizes.clear();
    if (!train_sizes.contains(n)) o.held_out_sizes.insert(n);
    SizeTransfer s;
    s.n_blocks = n;
    s.held_out = !train_sizes.contains(n);
    s.report = evaluate(model, subset, o);
    out.push_back(std::move(s));
  }
  return out;
}

TransferResult transfer_protocol(std::span<const dataset::LoadedRecord> train_records,
                                 std::span<const dataset::LoadedRecord> test_records,
                                 const TransferConfig& cfg, const EvalOptions& opts) {
  if (cfg.train_sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "train sizes are empty");
  for (int n : cfg.train_sizes)
    if (n < 2 || n > 4) throw Error(ErrorCode::kInvalidArgument, "train sizes must lie in {2, 3, 4}");

  std::vector<dataset::LoadedRecord> selected;
  for (const auto& r : train_records)
    if (cfg.train_sizes.contains(r.record.n_blocks)) selected.push_back(r);
  const std::vector<learn::TrainExample> examples = learn::make_examples(selected);
  learn::TrainResult tr = learn::train(cfg.model, examples, cfg.train, cfg.loss);

  TransferResult res;
  res.train_sizes = cfg.train_sizes;
  res.train_count = selected.size();
  res.selected_lr = tr.selected_lr;
  res.selected_epoch = tr.selected_epoch;
  res.log = std::move(tr.log);
  res.model = std::move(tr.model);
  res.sizes = evaluate_by_size(*res.model, test_records, cfg.train_sizes, opts);
  return res;
}

nlohmann::ordered_json transfer_to_json(const TransferResult& r) {
  nlohmann::ordered_json j;
  j["train_sizes"] = r.train_sizes;
  j["train_count"] = r.train_count;
  j["selected_lr"] = r.selected_lr;
  j["selected_epoch"] = r.selected_epoch;
  j["sizes"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sizes) {
    nlohmann::ordered_json e;
    e["n_blocks"] = s.n_blocks;
    e["held_out"] = s.held_out;
    e["accuracy"] = s.report.accuracy;
    e["accuracy_ci"] = s.report.accuracy_ci;
    e["miou"] = s.report.mask_count ? nlohmann::ordered_json(s.report.miou) : nlohmann::ordered_json(nullptr);
    e["ll_per_px"] = s.report.mask_count ? nlohmann::ordered_json(s.report.ll_per_px) : nlohmann::ordered_json(nullptr);
    e["report"] = report_to_json(s.report);
    j["sizes"].push_back(e);
  }
  j["training_log"] = nlohmann::ordered_json::array();
  for (const auto& e : r.log) j["training_log"].push_back(learn::log_entry_to_json(e));
  return j;
}

}  // namespace blocktower::eval
