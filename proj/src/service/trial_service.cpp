#include <filesystem>
#include <random>

#include <httplib.h>

#include "blocktower/common/error.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/render.hpp"
#include "blocktower/service/trial_service.hpp"

namespace blocktower::service {
namespace fs = std::filesystem;

namespace {

std::string image_url(const std::string& record_id, int frame) {
  return "/api/image/" + record_id + "/" + std::to_string(frame);
}

uint64_t fresh_seed() {
  std::random_device rd;
  const uint64_t s = (static_cast<uint64_t>(rd()) << 32) | rd();
  return s & ((uint64_t{1} << 53) - 1);  // stays exact in JSON numbers
}

}  // namespace

TrialService::TrialService(std::string dataset_dir, std::vector<dataset::DatasetRecord> records,
                           std::vector<double> model_p_fall, std::string sessions_dir)
    : dataset_dir_(std::move(dataset_dir)), sessions_dir_(std::move(sessions_dir)) {
  if (records.size() != model_p_fall.size())
    throw Error(ErrorCode::kShapeMismatch, "one model confidence per record required");
  for (std::size_t i = 0; i < records.size(); ++i) {
    RecordInfo info{records[i].id, records[i].n_blocks, records[i].fell, model_p_fall[i]};
    infos_.push_back(info);
    info_by_id_[info.id] = info;
    record_by_id_[records[i].id] = std::move(records[i]);
  }
  std::error_code ec;
  fs::create_directories(sessions_dir_, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + sessions_dir_ + ": " + ec.message());
  for (auto& s : load_sessions(sessions_dir_)) {
    for (const auto& id : s.training_plan)
      if (!info_by_id_.count(id))
        throw Error(ErrorCode::kCorruptFile, "session " + s.id + " refers to unknown record " + id);
    for (const auto& id : s.test_plan)
      if (!info_by_id_.count(id))
        throw Error(ErrorCode::kCorruptFile, "session " + s.id + " refers to unknown record " + id);
    for (const auto& r : s.responses)
      if (r.phase == Phase::kTraining) revealed_[r.record_id] = true;
    auto e = std::make_unique<Entry>();
    e->session = std::move(s);
    const std::string id = e->session.id;
    sessions_[id] = std::move(e);
  }
}

std::size_t TrialService::session_count() const {
  std::shared_lock lock(map_mu_);
  return sessions_.size();
}

TrialService::Entry& TrialService::entry(const std::string& id) const {
  std::shared_lock lock(map_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "UnknownSession", "no session " + id);
  return *it->second;
}

std::string TrialService::new_session_id() const {
  std::random_device rd;
  for (;;) {
    const uint64_t v = (static_cast<uint64_t>(rd()) << 32) | rd();
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    if (!sessions_.count(buf)) return buf;
  }
}

nlohmann::ordered_json TrialService::create_session(const nlohmann::json& body) {
  if (!body.is_object()) throw ServiceError(400, "BadRequest", "body must be a JSON object");
  Session s;
  if (body.contains("subject_label")) {
    if (!body["subject_label"].is_string())
      throw ServiceError(400, "BadRequest", "subject_label must be a string");
    s.subject_label = body["subject_label"].get<std::string>();
  }
  if (body.contains("seed") && !body["seed"].is_null()) {
    const auto& seed = body["seed"];
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<int64_t>() >= 0))
      throw ServiceError(400, "BadRequest", "seed must be a non-negative integer");
    s.seed = body["seed"].get<uint64_t>();
  } else {
    s.seed = fresh_seed();
  }
  if (infos_.size() < static_cast<std::size_t>(kTotalTrials))
    throw ServiceError(409, "InsufficientDataset",
                       "the test split has " + std::to_string(infos_.size()) + " records, " +
                           std::to_string(kTotalTrials) + " are needed");
  Plans plans = draw_plans(infos_, s.seed);
  s.training_plan = std::move(plans.training);
  s.test_plan = std::move(plans.test);
  s.composition = std::move(plans.composition);

  std::unique_lock lock(map_mu_);
  s.id = new_session_id();
  save_session(sessions_dir_, s);
  auto e = std::make_unique<Entry>();
  e->session = s;
  sessions_[s.id] = std::move(e);

  nlohmann::ordered_json j;
  j["session_id"] = s.id;
  j["seed"] = s.seed;
  j["n_training"] = s.training_plan.size();
  j["n_test"] = s.test_plan.size();
  j["composition"] = s.composition;
  return j;
}

nlohmann::ordered_json TrialService::status(const std::string& id) const {
  Entry& e = entry(id);
  std::lock_guard lock(e.mu);
  const Session& s = e.session;
  nlohmann::ordered_json j;
  j["session_id"] = s.id;
  j["subject_label"] = s.subject_label;
  j["seed"] = s.seed;
  j["state"] = state_name(s.state());
  j["n_training"] = s.training_plan.size();
  j["n_test"] = s.test_plan.size();
  j["answered"] = s.responses.size();
  return j;
}

nlohmann::ordered_json TrialService::trial_view(const Session& s) const {
  const int index = s.pending_index();
  const Phase phase = s.phase_at(index);
  const int n_train = static_cast<int>(s.training_plan.size());
  const std::string& rid = s.record_at(index);
  nlohmann::ordered_json j;
  j["session_id"] = s.id;
  j["trial_index"] = index;
  j["phase"] = phase_name(phase);
  j["phase_index"] = phase == Phase::kTraining ? index : index - n_train;
  j["phase_length"] = phase == Phase::kTraining ? s.training_plan.size() : s.test_plan.size();
  j["record_id"] = rid;
  j["image"] = image_url(rid, 0);
  return j;
}

nlohmann::ordered_json TrialService::current_trial(const std::string& id) const {
  Entry& e = entry(id);
  std::lock_guard lock(e.mu);
  if (e.session.complete()) throw ServiceError(410, "SessionComplete", "all trials answered");
  return trial_view(e.session);
}

nlohmann::ordered_json TrialService::respond(const std::string& id, const nlohmann::json& body) {
  Entry& e = entry(id);
  std::lock_guard lock(e.mu);
  Session& s = e.session;
  if (s.complete()) throw ServiceError(409, "NoPendingTrial", "all trials already answered");
  if (!body.is_object() || !body.contains("prediction") || !body["prediction"].is_string())
    throw ServiceError(400, "BadPrediction", "prediction must be \"fall\" or \"stay\"");
  const std::string pred = body["prediction"].get<std::string>();
  if (pred != "fall" && pred != "stay")
    throw ServiceError(400, "BadPrediction", "prediction must be \"fall\" or \"stay\", got \"" + pred + "\"");
  const int index = s.pending_index();
  if (body.contains("trial_index")) {
    // A client repeating an answer for a trial already recorded.
    if (!body["trial_index"].is_number_integer() || body["trial_index"].get<int>() != index)
      throw ServiceError(409, "NoPendingTrial", "trial_index does not match the pending trial " +
                                                    std::to_string(index));
  }
  Response r;
  r.trial_index = index;
  r.record_id = s.record_at(index);
  r.phase = s.phase_at(index);
  r.predicted_fall = pred == "fall";
  r.correct = r.predicted_fall == info_by_id_.at(r.record_id).fell;
  r.timestamp = utc_timestamp();

  s.responses.push_back(r);
  try {
    save_session(sessions_dir_, s);
  } catch (...) {
    s.responses.pop_back();
    throw;
  }
  if (r.phase == Phase::kTest) return nlohmann::ordered_json::object();
  {
    std::lock_guard rl(revealed_mu_);
    revealed_[r.record_id] = true;
  }
  nlohmann::ordered_json j;
  j["trial_index"] = index;
  j["correct"] = r.correct;
  j["outcome"] = info_by_id_.at(r.record_id).fell ? "fall" : "stay";
  j["outcome_image"] = image_url(r.record_id, 4);
  return j;
}

nlohmann::ordered_json TrialService::results(const std::string& id) const {
  Entry& e = entry(id);
  std::lock_guard lock(e.mu);
  if (!e.session.complete())
    throw ServiceError(409, "SessionIncomplete",
                       std::to_string(e.session.responses.size()) + " of " +
                           std::to_string(kTotalTrials) + " trials answered");
  return session_results(e.session, info_by_id_);
}

nlohmann::ordered_json TrialService::aggregate() const {
  std::vector<Session> copies;
  {
    std::shared_lock lock(map_mu_);
    for (const auto& [id, e] : sessions_) {
      std::lock_guard l(e->mu);
      if (e->session.complete()) copies.push_back(e->session);
    }
  }
  if (copies.empty()) throw ServiceError(404, "NoCompleteSessions", "no session is complete yet");
  std::vector<const Session*> ptrs;
  for (const auto& s : copies) ptrs.push_back(&s);
  return aggregate_results(ptrs, info_by_id_);
}

ImageReply TrialService::image(const std::string& record_id, const std::string& frame,
                               const std::string& format) const {
  const auto it = record_by_id_.find(record_id);
  if (it == record_by_id_.end()) throw ServiceError(404, "UnknownRecord", "no record " + record_id);
  if (format != "png" && format != "ppm")
    throw ServiceError(400, "BadFormat", "format must be png or ppm");
  std::string rel;
  if (frame == "0") {
    rel = it->second.image_path;
  } else if (frame == "4") {
    std::lock_guard lock(revealed_mu_);
    if (!revealed_.count(record_id))
      throw ServiceError(403, "OutcomeHidden", "outcome image not available for " + record_id);
    rel = it->second.outcome_image_path;
  } else {
    throw ServiceError(404, "UnknownFrame", "frame must be 0 or 4");
  }
  if (rel.empty()) throw ServiceError(404, "UnknownFrame", "record has no such frame");
  const std::string path = (fs::path(dataset_dir_) / rel).string();
  if (format == "ppm") return {render::read_file(path), "image/x-portable-pixmap"};
  return {render::encode_png(render::read_ppm(path)), "image/png"};
}

namespace {

const char* kBuiltinPage = R"HTML(<!doctype html>
<html><head><meta charset="utf-8"><title>Block towers</title>
<style>
body{font-family:sans-serif;max-width:760px;margin:2em auto}
img{width:320px;height:320px;image-rendering:pixelated;border:1px solid #ccc}
button{font-size:1.2em;margin:.5em}
#banner{color:#a00}
</style></head><body>
<h1>Will the tower fall?</h1>
<div id="start">Label <input id="label"> <button id="go">Start</button></div>
<div id="trial" hidden>
<p id="progress"></p>
<img id="img"> <img id="outcome" hidden>
<p><button data-p="fall">Fall</button><button data-p="stay">Stay</button></p>
<p id="feedback"></p>
</div>
<pre id="results"></pre>
<p id="banner"></p>
<script>
let sid = new URLSearchParams(location.search).get('session');
const $ = id => document.getElementById(id);
async function api(method, path, body) {
  const r = await fetch(path, {method, headers: {'Content-Type': 'application/json'},
                               body: body ? JSON.stringify(body) : undefined});
  const j = await r.json();
  if (!r.ok) { const e = new Error(j.message); e.status = r.status; throw e; }
  return j;
}
async function next() {
  try {
    const t = await api('GET', `/api/session/${sid}/trial`);
    $('trial').hidden = false;
    $('progress').textContent = `${t.phase}: trial ${t.phase_index + 1} of ${t.phase_length}`;
    $('img').src = t.image;
    $('banner').textContent = '';
  } catch (e) {
    if (e.status === 410) { $('trial').hidden = true; show(); }
    else $('banner').textContent = 'Connection problem, retrying: ' + e.message, setTimeout(next, 2000);
  }
}
async function show() {
  $('results').textContent = JSON.stringify(await api('GET', `/api/session/${sid}/results`), null, 2);
}
async function answer(p) {
  try {
    const f = await api('POST', `/api/session/${sid}/response`, {prediction: p});
    if ('correct' in f) {
      $('feedback').textContent = f.correct ? 'Correct' : 'Incorrect';
      $('outcome').src = f.outcome_image; $('outcome').hidden = false;
    } else { $('feedback').textContent = ''; $('outcome').hidden = true; }
    next();
  } catch (e) { $('banner').textContent = 'Could not send answer: ' + e.message; }
}
document.querySelectorAll('button[data-p]').forEach(b => b.onclick = () => answer(b.dataset.p));
$('go').onclick = async () => {
  const s = await api('POST', '/api/session', {subject_label: $('label').value});
  sid = s.session_id; history.replaceState(null, '', '?session=' + sid);
  $('start').hidden = true; next();
};
if (sid) { $('start').hidden = true; next(); }
</script></body></html>
)HTML";

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& name, const std::string& msg) {
  nlohmann::ordered_json j;
  j["error"] = name;
  j["message"] = msg;
  send_json(res, status, j);
}

// Runs a handler, mapping failures onto the error body.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.name(), e.what());
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::kMissingFile ? 404 : 500;
    send_error(res, status, std::string(error_code_name(e.code())), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "InternalError", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw ServiceError(400, "BadRequest", "body is not valid JSON");
  return j;
}

}  // namespace

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(TrialService& svc, std::string ui_dir) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  s.Post("/api/session", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, svc.create_session(parse_body(req))); });
  });
  s.Get(R"(/api/session/([^/]+)/trial)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.current_trial(req.matches[1])); });
  });
  s.Post(R"(/api/session/([^/]+)/response)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.respond(req.matches[1], parse_body(req))); });
  });
  s.Get(R"(/api/session/([^/]+)/results)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.results(req.matches[1])); });
  });
  s.Get(R"(/api/session/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.status(req.matches[1])); });
  });
  s.Get("/api/aggregate", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.aggregate()); });
  });
  s.Get(R"(/api/image/([^/]+)/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
      ImageReply img = svc.image(req.matches[1], req.matches[2], format);
      res.status = 200;
      res.set_content(std::move(img.bytes), img.content_type);
    });
  });
  if (!ui_dir.empty()) {
    if (!s.set_mount_point("/", ui_dir))
      throw Error(ErrorCode::kMissingFile, "UI directory " + ui_dir + " not found");
  } else {
    s.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kBuiltinPage, "text/html; charset=utf-8");
    });
  }
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, "NotFound", "no such resource");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIoFailure, "cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace blocktower::service
