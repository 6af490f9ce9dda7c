#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace blocktower::service {

inline constexpr int kTrainingTrials = 50;
inline constexpr int kTestTrials = 100;
inline constexpr int kTotalTrials = kTrainingTrials + kTestTrials;

enum class Phase { kTraining, kTest };
std::string_view phase_name(Phase p);

enum class SessionState { kInTraining, kInTest, kComplete };
std::string_view state_name(SessionState s);

// What the service knows about a test-split record.
struct RecordInfo {
  std::string id;
  int n_blocks = 0;
  bool fell = false;
  double model_p_fall = 0.0;
};

struct Response {
  int trial_index = 0;
  std::string record_id;
  Phase phase = Phase::kTraining;
  bool predicted_fall = false;
  bool correct = false;
  std::string timestamp;  // UTC, ISO 8601
};

struct Session {
  std::string id;
  std::string subject_label;
  uint64_t seed = 0;
  std::vector<std::string> training_plan;
  std::vector<std::string> test_plan;
  nlohmann::ordered_json composition;  // counts per (phase, size, label)
  std::vector<Response> responses;

  SessionState state() const;
  bool complete() const { return responses.size() == training_plan.size() + test_plan.size(); }
  // Index into the concatenated plan of the next unanswered trial.
  int pending_index() const { return static_cast<int>(responses.size()); }
  const std::string& record_at(int trial_index) const;
  Phase phase_at(int trial_index) const;
};

nlohmann::ordered_json session_to_json(const Session& s);
// Throws Error(kCorruptFile) naming `source`.
Session session_from_json(const nlohmann::json& j, const std::string& source);

struct Plans {
  std::vector<std::string> training;
  std::vector<std::string> test;
  nlohmann::ordered_json composition;
};

// Draws disjoint training (50) and test (100) plans from `records` without
// replacement. Each plan is balanced between fell and stay and spread as
// evenly as possible over tower sizes (17/17/16 and 9/8/8 per label); if a
// stratum is too small the plan is drawn uniformly instead. Plan order is
// shuffled. Throws Error(kInvalidArgument) with fewer than 150 records.
Plans draw_plans(std::span<const RecordInfo> records, uint64_t seed);

// Test-phase summary for a complete session.
nlohmann::ordered_json session_results(const Session& s,
                                       const std::map<std::string, RecordInfo>& records);

// Vote fractions over complete sessions' test phases.
nlohmann::ordered_json aggregate_results(std::span<const Session* const> complete,
                                         const std::map<std::string, RecordInfo>& records);

// Writes <dir>/<id>.json through a temporary file, fsync and rename.
void save_session(const std::string& dir, const Session& s);
std::vector<Session> load_sessions(const std::string& dir);

std::string utc_timestamp();

}  // namespace blocktower::service
