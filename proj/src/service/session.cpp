#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include "blocktower/common/error.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/eval/metrics.hpp"
#include "blocktower/render.hpp"
#include "blocktower/service/session.hpp"

namespace blocktower::service {
namespace fs = std::filesystem;

std::string_view phase_name(Phase p) { return p == Phase::kTraining ? "training" : "test"; }

std::string_view state_name(SessionState s) {
  switch (s) {
    case SessionState::kInTraining: return "in-training";
    case SessionState::kInTest: return "in-test";
    case SessionState::kComplete: return "complete";
  }
  return "unknown";
}

SessionState Session::state() const {
  if (complete()) return SessionState::kComplete;
  return responses.size() < training_plan.size() ? SessionState::kInTraining : SessionState::kInTest;
}

const std::string& Session::record_at(int trial_index) const {
  const auto i = static_cast<std::size_t>(trial_index);
  return i < training_plan.size() ? training_plan[i] : test_plan.at(i - training_plan.size());
}

Phase Session::phase_at(int trial_index) const {
  return static_cast<std::size_t>(trial_index) < training_plan.size() ? Phase::kTraining : Phase::kTest;
}

nlohmann::ordered_json session_to_json(const Session& s) {
  nlohmann::ordered_json j;
  j["session_id"] = s.id;
  j["subject_label"] = s.subject_label;
  j["seed"] = s.seed;
  j["state"] = state_name(s.state());
  j["training_plan"] = s.training_plan;
  j["test_plan"] = s.test_plan;
  j["composition"] = s.composition;
  j["responses"] = nlohmann::ordered_json::array();
  for (const auto& r : s.responses) {
    nlohmann::ordered_json e;
    e["trial_index"] = r.trial_index;
    e["record_id"] = r.record_id;
    e["phase"] = phase_name(r.phase);
    e["prediction"] = r.predicted_fall ? "fall" : "stay";
    e["correct"] = r.correct;
    e["timestamp"] = r.timestamp;
    j["responses"].push_back(e);
  }
  return j;
}

Session session_from_json(const nlohmann::json& j, const std::string& source) {
  try {
    Session s;
    s.id = j.at("session_id").get<std::string>();
    s.subject_label = j.at("subject_label").get<std::string>();
    s.seed = j.at("seed").get<uint64_t>();
    s.training_plan = j.at("training_plan").get<std::vector<std::string>>();
    s.test_plan = j.at("test_plan").get<std::vector<std::string>>();
    s.composition = j.at("composition");
    for (const auto& e : j.at("responses")) {
      Response r;
      r.trial_index = e.at("trial_index").get<int>();
      r.record_id = e.at("record_id").get<std::string>();
      r.phase = e.at("phase").get<std::string>() == "training" ? Phase::kTraining : Phase::kTest;
      r.predicted_fall = e.at("prediction").get<std::string>() == "fall";
      r.correct = e.at("correct").get<bool>();
      r.timestamp = e.at("timestamp").get<std::string>();
      s.responses.push_back(r);
    }
    if (s.responses.size() > s.training_plan.size() + s.test_plan.size())
      throw Error(ErrorCode::kCorruptFile, "more responses than trials");
    for (std::size_t i = 0; i < s.responses.size(); ++i)
      if (s.responses[i].trial_index != static_cast<int>(i) ||
          s.responses[i].record_id != s.record_at(static_cast<int>(i)))
        throw Error(ErrorCode::kCorruptFile, "responses do not follow the plan");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, source + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptFile, source + ": " + e.what());
  }
}

namespace {

void shuffle(std::vector<std::string>& v, Pcg32& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.bounded(static_cast<uint32_t>(i))]);
}

// Splits `total` over the three sizes as evenly as possible, extra to the
// smaller towers first.
std::array<int, 3> spread(int total) {
  std::array<int, 3> out{total / 3, total / 3, total / 3};
  for (int i = 0; i < total % 3; ++i) ++out[i];
  return out;
}

}  // namespace

Plans draw_plans(std::span<const RecordInfo> records, uint64_t seed) {
  if (records.size() < static_cast<std::size_t>(kTotalTrials))
    throw Error(ErrorCode::kInvalidArgument, "need at least " + std::to_string(kTotalTrials) +
                                                 " test records, have " + std::to_string(records.size()));
  Pcg32 rng(seed);
  // cells[label][size - 2]
  std::array<std::array<std::vector<std::string>, 3>, 2> cells;
  for (const auto& r : records)
    if (r.n_blocks >= 2 && r.n_blocks <= 4) cells[r.fell ? 1 : 0][r.n_blocks - 2].push_back(r.id);

  const auto train_split = spread(kTrainingTrials / 2);
  const auto test_split = spread(kTestTrials / 2);
  bool stratified = true;
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < 3; ++k)
      if (cells[l][k].size() < static_cast<std::size_t>(train_split[k] + test_split[k])) stratified = false;

  Plans p;
  nlohmann::ordered_json comp;
  comp["stratified"] = stratified;
  if (stratified) {
    for (int l = 0; l < 2; ++l) {
      for (int k = 0; k < 3; ++k) {
        std::vector<std::string> cell = cells[l][k];
        shuffle(cell, rng);
        p.training.insert(p.training.end(), cell.begin(), cell.begin() + train_split[k]);
        p.test.insert(p.test.end(), cell.begin() + train_split[k],
                      cell.begin() + train_split[k] + test_split[k]);
      }
    }
  } else {
    std::vector<std::string> all;
    for (const auto& r : records) all.push_back(r.id);
    shuffle(all, rng);
    p.training.assign(all.begin(), all.begin() + kTrainingTrials);
    p.test.assign(all.begin() + kTrainingTrials, all.begin() + kTotalTrials);
  }
  shuffle(p.training, rng);
  shuffle(p.test, rng);

  std::map<std::string, const RecordInfo*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  for (const auto& [name, plan] : {std::pair{"training", &p.training}, std::pair{"test", &p.test}}) {
    nlohmann::ordered_json c;
    for (int n = 2; n <= 4; ++n) {
      int fell = 0, stay = 0;
      for (const auto& id : *plan)
        if (by_id[id]->n_blocks == n) (by_id[id]->fell ? fell : stay)++;
      c[std::to_string(n)] = {{"fall", fell}, {"stay", stay}};
    }
    comp[name] = c;
  }
  p.composition = comp;
  return p;
}

namespace {

nlohmann::ordered_json roc_json(const eval::RocCurve& roc) {
  nlohmann::ordered_json j;
  j["auc"] = roc.auc;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : roc.points) j["points"].push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
  return j;
}

nlohmann::ordered_json accuracy_json(std::size_t correct, std::size_t n) {
  const double acc = static_cast<double>(correct) / static_cast<double>(n);
  return {{"count", n}, {"accuracy", acc}, {"accuracy_ci", eval::binomial_ci(acc, n)}};
}

}  // namespace

nlohmann::ordered_json session_results(const Session& s,
                                       const std::map<std::string, RecordInfo>& records) {
  std::vector<double> subject;
  std::vector<double> model;
  std::vector<uint8_t> truth;
  std::array<std::size_t, 5> n_size{}, subj_size{}, model_size{};
  std::size_t subj_ok = 0, model_ok = 0, train_ok = 0, n_train = 0;
  for (const auto& r : s.responses) {
    if (r.phase == Phase::kTraining) {
      ++n_train;
      train_ok += r.correct ? 1 : 0;
      continue;
    }
    const RecordInfo& info = records.at(r.record_id);
    subject.push_back(r.predicted_fall ? 1.0 : 0.0);
    model.push_back(info.model_p_fall);
    truth.push_back(info.fell ? 1 : 0);
    const bool m_ok = (info.model_p_fall >= 0.5) == info.fell;
    subj_ok += r.correct ? 1 : 0;
    model_ok += m_ok ? 1 : 0;
    if (info.n_blocks >= 2 && info.n_blocks <= 4) {
      ++n_size[info.n_blocks];
      subj_size[info.n_blocks] += r.correct ? 1 : 0;
      model_size[info.n_blocks] += m_ok ? 1 : 0;
    }
  }
  nlohmann::ordered_json j;
  j["session_id"] = s.id;
  j["subject_label"] = s.subject_label;
  j["n_test"] = subject.size();
  const auto overall = accuracy_json(subj_ok, subject.size());
  j["accuracy"] = overall["accuracy"];
  j["accuracy_ci"] = overall["accuracy_ci"];
  j["per_size"] = nlohmann::ordered_json::array();
  for (int n = 2; n <= 4; ++n)
    if (n_size[n] > 0) {
      auto e = accuracy_json(subj_size[n], n_size[n]);
      e["n_blocks"] = n;
      j["per_size"].push_back(e);
    }
  j["training_accuracy"] = n_train ? static_cast<double>(train_ok) / static_cast<double>(n_train) : 0.0;

  nlohmann::ordered_json m = accuracy_json(model_ok, model.size());
  m["per_size"] = nlohmann::ordered_json::array();
  for (int n = 2; n <= 4; ++n)
    if (n_size[n] > 0) {
      auto e = accuracy_json(model_size[n], n_size[n]);
      e["n_blocks"] = n;
      m["per_size"].push_back(e);
    }
  m["confidences"] = model;
  j["model"] = m;

  try {
    j["pearson_subject_model"] = eval::pearson(subject, model);
  } catch (const Error&) {
    j["pearson_subject_model"] = nullptr;  // constant answers or confidences
  }
  try {
    j["model_roc"] = roc_json(eval::roc_curve(model, truth));
  } catch (const Error&) {
    j["model_roc"] = nullptr;
  }
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pos += truth[i];
    if (subject[i] > 0.5) (truth[i] ? tp : fp)++;
  }
  const std::size_t neg = truth.size() - pos;
  j["subject_point"] = {{"fpr", neg ? static_cast<double>(fp) / neg : 0.0},
                        {"tpr", pos ? static_cast<double>(tp) / pos : 0.0}};
  return j;
}

nlohmann::ordered_json aggregate_results(std::span<const Session* const> complete,
                                         const std::map<std::string, RecordInfo>& records) {
  std::map<std::string, std::pair<int, int>> votes;  // id -> (fall votes, total)
  for (const Session* s : complete)
    for (const auto& r : s->responses)
      if (r.phase == Phase::kTest) {
        auto& v = votes[r.record_id];
        v.first += r.predicted_fall ? 1 : 0;
        v.second += 1;
      }
  nlohmann::ordered_json j;
  j["sessions"] = complete.size();
  j["records"] = nlohmann::ordered_json::array();
  std::vector<double> human;
  std::vector<double> model;
  std::vector<uint8_t> truth;
  for (const auto& [id, v] : votes) {
    const RecordInfo& info = records.at(id);
    const double frac = static_cast<double>(v.first) / v.second;
    human.push_back(frac);
    model.push_back(info.model_p_fall);
    truth.push_back(info.fell ? 1 : 0);
    j["records"].push_back({{"id", id},
                            {"n_blocks", info.n_blocks},
                            {"fell", info.fell},
                            {"fall_votes", v.first},
                            {"responses", v.second},
                            {"fall_fraction", frac},
                            {"model_p_fall", info.model_p_fall}});
  }
  try {
    j["pearson_human_model"] = eval::pearson(human, model);
  } catch (const Error&) {
    j["pearson_human_model"] = nullptr;
  }
  try {
    j["human_roc"] = roc_json(eval::roc_curve(human, truth));
    j["model_roc"] = roc_json(eval::roc_curve(model, truth));
  } catch (const Error&) {
    j["human_roc"] = nullptr;
    j["model_roc"] = nullptr;
  }
  return j;
}

void save_session(const std::string& dir, const Session& s) {
  const fs::path final_path = fs::path(dir) / (s.id + ".json");
  const fs::path tmp = fs::path(dir) / (s.id + ".json.tmp");
  const std::string text = session_to_json(s).dump(2) + "\n";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
  std::size_t off = 0;
  while (off < text.size()) {
    const ssize_t n = ::write(fd, text.data() + off, text.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error(ErrorCode::kIoFailure, "short write to " + tmp.string());
    }
    off += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw Error(ErrorCode::kIoFailure, "fsync failed for " + tmp.string());
  std::error_code ec;
  fs::rename(tmp, final_path, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::vector<Session> load_sessions(const std::string& dir) {
  std::vector<Session> out;
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string text = render::read_file(f.string());
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::kCorruptFile, f.string() + ": invalid JSON");
    out.push_back(session_from_json(j, f.string()));
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

}  // namespace blocktower::service
