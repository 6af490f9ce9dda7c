#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/dataset.hpp"
#include "blocktower/service/session.hpp"

namespace blocktower::service {

// An API failure with its HTTP status and error name.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string name, const std::string& message)
      : std::runtime_error(message), status_(status), name_(std::move(name)) {}

  int status() const noexcept { return status_; }
  const std::string& name() const noexcept { return name_; }

 private:
  int status_;
  std::string name_;
};

struct ImageReply {
  std::string bytes;
  std::string content_type;
};

// Protocol state for all sessions. Handlers throw ServiceError; every
// accepted response is on disk before the handler returns.
class TrialService {
 public:
  // `records` are the test-split records, `model_p_fall` the model's fall
  // probability for each. Existing sessions in `sessions_dir` are reloaded.
  TrialService(std::string dataset_dir, std::vector<dataset::DatasetRecord> records,
               std::vector<double> model_p_fall, std::string sessions_dir);

  nlohmann::ordered_json create_session(const nlohmann::json& body);
  nlohmann::ordered_json status(const std::string& id) const;
  nlohmann::ordered_json current_trial(const std::string& id) const;
  nlohmann::ordered_json respond(const std::string& id, const nlohmann::json& body);
  nlohmann::ordered_json results(const std::string& id) const;
  nlohmann::ordered_json aggregate() const;
  // frame is "0" or "4"; format "png" or "ppm". The outcome frame is only
  // served once the record has been answered in some training phase.
  ImageReply image(const std::string& record_id, const std::string& frame,
                   const std::string& format) const;

  std::size_t session_count() const;

 private:
  struct Entry {
    mutable std::mutex mu;
    Session session;
  };

  Entry& entry(const std::string& id) const;
  std::string new_session_id() const;
  nlohmann::ordered_json trial_view(const Session& s) const;

  std::string dataset_dir_;
  std::string sessions_dir_;
  std::vector<RecordInfo> infos_;
  std::map<std::string, RecordInfo> info_by_id_;
  std::map<std::string, dataset::DatasetRecord> record_by_id_;

  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
  mutable std::mutex revealed_mu_;
  std::map<std::string, bool> revealed_;  // records answered in a training phase
};

// HTTP front end. Static files come from `ui_dir` when non-empty, otherwise a
// built-in page is served at /.
class HttpServer {
 public:
  HttpServer(TrialService& service, std::string ui_dir);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port; returns the bound port or throws kIoFailure.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace blocktower::service
