#pragma once

// One speaker, one corpus, one scene. Every mutation is on disk
// (write-then-rename) before it is acknowledged. Corpus and agent mutations
// serialize on a single mutex; training works on a copy of the corpus in one
// background thread and never holds the mutex while it trains.
//
// Layout under the data root:
//   manifest.json, clips/, markers/   corpus
//   scene.json                        scene, including the agent position
//   turns.jsonl                       talking-mode turns, one JSON per line
//   heads.ftmh                        latest trained heads
//   datasets/<head>/                  bundles of the latest run or export

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "voxworld/agent.hpp"
#include "voxworld/binio.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/dataset.hpp"
#include "voxworld/error.hpp"
#include "voxworld/features.hpp"
#include "voxworld/model.hpp"
#include "voxworld/pipeline.hpp"
#include "voxworld/world.hpp"

namespace voxworld {

inline nlohmann::json error_json(const Error& e) {
  return {{"code", to_string(e.code())}, {"message", e.message()}, {"detail_path", e.path()}};
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMarkers:
    case ErrorCode::InsufficientData:
      return 422;
    case ErrorCode::UnknownClip:
    case ErrorCode::UnknownTurn:
    case ErrorCode::UnknownJob:
    case ErrorCode::UnknownObject:
    case ErrorCode::MissingHead:
      return 404;
    case ErrorCode::UntrainedHeads:
    case ErrorCode::JobRunning:
      return 409;
    case ErrorCode::IoFailure:
    case ErrorCode::NumericalDivergence:
      return 500;
    default:
      return 400;
  }
}

/// Per-head accuracies, head-table order.
inline nlohmann::json accuracy_table(const HeadSet& set) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& h : set.heads) {
    rows.push_back({{"head", h.head.name},
                    {"classes", h.head.class_count},
                    {"train_accuracy", h.train_accuracy},
                    {"test_accuracy", h.test_accuracy}});
  }
  return rows;
}

struct ServiceConfig {
  std::optional<FeatureConfig> features;  // unset: the stored corpus decides
  TrainConfig training;
};

enum class JobState : std::uint8_t { Running, Failed, Done };

struct TrainingJob {
  std::uint64_t id = 0;
  JobState state = JobState::Running;
  std::optional<Error> failure;
  nlohmann::json metrics;
};

inline nlohmann::json job_json(const TrainingJob& j) {
  static constexpr const char* kStates[] = {"running", "failed", "done"};
  nlohmann::json out = {{"job_id", j.id}, {"state", kStates[static_cast<int>(j.state)]}};
  if (j.failure) out["error"] = error_json(*j.failure);
  if (j.state == JobState::Done) out["heads"] = j.metrics;
  return out;
}

class Session {
 public:
  /// Opens `root`, creating an empty corpus there if it holds none. An
  /// explicit `scene` replaces the stored one.
  explicit Session(std::filesystem::path root, ServiceConfig cfg = {},
                   std::optional<Scene> scene = std::nullopt)
      : root_(std::move(root)), train_cfg_(cfg.training) {
    train_cfg_.validate();
    if (std::filesystem::exists(root_ / "manifest.json")) {
      corpus_ = load_corpus(root_);
      if (cfg.features && !(*cfg.features == corpus_.config())) {
        throw Error(ErrorCode::ConfigMismatch,
                    "feature config differs from the one the corpus was built with",
                    (root_ / "manifest.json").string());
      }
    } else {
      corpus_ = Corpus(cfg.features.value_or(FeatureConfig{}));
      save_manifest(corpus_, root_);
    }

    if (!scene && std::filesystem::exists(root_ / "scene.json")) {
      scene = nlohmann::json::parse(binio::read_text(root_ / "scene.json")).get<Scene>();
    }
    agent_.emplace(scene.value_or(preliminary_world()));
    agent_->rebuild(corpus_);
    save_scene();

    if (std::filesystem::exists(root_ / "turns.jsonl")) {
      std::istringstream in(binio::read_text(root_ / "turns.jsonl"));
      std::vector<AgentTurn> turns;
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) turns.push_back(parse_turn(nlohmann::json::parse(line)));
      }
      agent_->restore_turns(std::move(turns));
    }

    if (std::filesystem::exists(heads_path())) {
      auto set = load_heads(heads_path());
      if (set.feature_hash != config_hash(corpus_.config())) {
        throw Error(ErrorCode::ConfigHashMismatch, "stored heads were trained under another feature config",
                    heads_path().string());
      }
      heads_ = std::move(set);
    }
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Waits for a running training job.
  ~Session() {
    if (worker_.joinable()) worker_.join();
  }

  const std::filesystem::path& root() const { return root_; }

  std::string add_recording(std::span<const std::uint8_t> wav) {
    auto clip = decode_wav(wav);
    std::lock_guard lock(mu_);
    const auto id = corpus_.add_clip(std::move(clip));
    save_clip_file(corpus_, root_, id);
    save_manifest(corpus_, root_);
    return id;
  }

  /// Body: {clip_id, markers, role?}. Returns the utterance id.
  std::string add_utterance(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("markers")) {
      throw Error(ErrorCode::InvalidMarkers, "body needs a markers object", "markers");
    }
    auto markers_json = body.at("markers");
    if (body.contains("clip_id")) {
      if (!markers_json.is_object()) throw Error(ErrorCode::InvalidMarkers, "markers must be an object", "markers");
      markers_json["clip_id"] = body.at("clip_id");
    }
    const auto markers = parse_markers(markers_json);
    std::optional<ChainRole> role;
    if (body.contains("role") && !body.at("role").is_null()) {
      if (!body.at("role").is_string()) throw Error(ErrorCode::InvalidArgument, "role must be a string", "role");
      role = parse_chain_role(body.at("role").get<std::string>());
    }
    std::lock_guard lock(mu_);
    if (!corpus_.has_clip(markers.clip_id)) {
      throw Error(ErrorCode::UnknownClip, "no clip " + markers.clip_id, "clip_id");
    }
    const auto id = agent_->register_training_phrase(corpus_, markers, role);
    save_record_file(root_, corpus_.record(id));
    save_manifest(corpus_, root_);
    save_scene();
    return id;
  }

  nlohmann::json readiness() const {
    std::lock_guard lock(mu_);
    return readiness_json(corpus_);
  }

  nlohmann::json utterances() const {
    std::lock_guard lock(mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : corpus_.records()) out.push_back(record_json(r));
    return out;
  }

  /// Starts a training job on a snapshot of the corpus.
  std::uint64_t start_training() {
    std::lock_guard lock(mu_);
    if (running_) {
      throw Error(ErrorCode::JobRunning, "training job " + std::to_string(*running_) + " is running",
                  "job_id");
    }
    if (corpus_.records().empty()) {
      throw Error(ErrorCode::InsufficientData, "corpus has no utterances", "utterances");
    }
    if (worker_.joinable()) worker_.join();  // previous job already finished
    const auto id = ++job_counter_;
    jobs_[id] = TrainingJob{id, JobState::Running, std::nullopt, nullptr};
    running_ = id;
    std::vector<std::string> pending;
    for (const auto& r : corpus_.records()) {
      if (r.pending) pending.push_back(r.id);
    }
    worker_ = std::thread([this, id, snapshot = corpus_, pending = std::move(pending)] {
      run_job(id, snapshot, pending);
    });
    return id;
  }

  TrainingJob job(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, "no job " + std::to_string(id), "job_id");
    return it->second;
  }

  std::optional<std::uint64_t> running_job() const {
    std::lock_guard lock(mu_);
    return running_;
  }

  /// Blocks until no job runs.
  void wait_for_training() {
    std::thread finished;
    {
      std::lock_guard lock(mu_);
      if (!worker_.joinable()) return;
      finished = std::move(worker_);
    }
    finished.join();
  }

  bool trained() const {
    std::lock_guard lock(mu_);
    return heads_.has_value();
  }

  std::optional<nlohmann::json> head_metrics() const {
    std::lock_guard lock(mu_);
    if (!heads_) return std::nullopt;
    return accuracy_table(*heads_);
  }

  nlohmann::json talk(std::span<const std::uint8_t> wav, std::optional<std::uint32_t> point) {
    std::unique_lock lock(mu_);
    if (!heads_) throw Error(ErrorCode::UntrainedHeads, "no trained heads yet", "heads");
    lock.unlock();
    auto clip = decode_wav(wav);
    lock.lock();
    const auto turn = agent_->handle_turn(*heads_, corpus_, std::move(clip), point);
    save_clip_file(corpus_, root_, turn.message.clip_id);
    save_manifest(corpus_, root_);
    save_turns();
    save_scene();
    return turn_json(turn);
  }

  /// Body: {turn_id, markers}. The markers' clip is the turn's clip.
  nlohmann::json correct(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("turn_id") || !body.at("turn_id").is_number_unsigned()) {
      throw Error(ErrorCode::InvalidArgument, "body needs a numeric turn_id", "turn_id");
    }
    if (!body.contains("markers") || !body.at("markers").is_object()) {
      throw Error(ErrorCode::InvalidMarkers, "body needs a markers object", "markers");
    }
    const auto turn_id = body.at("turn_id").get<std::uint64_t>();
    std::lock_guard lock(mu_);
    const auto& turn = agent_->turn(turn_id);
    auto markers_json = body.at("markers");
    markers_json["clip_id"] = turn.message.clip_id;
    const auto pending = agent_->apply_correction(corpus_, {turn_id, parse_markers(markers_json)});
    save_record_file(root_, corpus_.record(pending.utterance_id));
    if (pending.superseded) save_record_file(root_, corpus_.record(*pending.superseded));
    save_manifest(corpus_, root_);
    return {{"turn_id", turn_id},
            {"utterance_id", pending.utterance_id},
            {"superseded", pending.superseded ? nlohmann::json(*pending.superseded) : nlohmann::json(nullptr)},
            {"pending", true}};
  }

  nlohmann::json turns() const {
    std::lock_guard lock(mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : agent_->turns()) out.push_back(turn_json(t));
    return out;
  }

  nlohmann::json world() const {
    std::lock_guard lock(mu_);
    return agent_->scene();
  }

  binio::Bytes clip_wav(const std::string& id) const {
    std::lock_guard lock(mu_);
    return encode_wav_f32(corpus_.clip(id));
  }

  nlohmann::json viz(const std::string& id) const {
    AudioClip clip;
    FeatureConfig cfg;
    {
      std::lock_guard lock(mu_);
      clip = corpus_.clip(id);
      cfg = corpus_.config();
    }
    return plot_json(visualization_bundle(clip, cfg));
  }

  /// Builds one head's bundle from the live corpus into datasets/<head>/.
  nlohmann::json export_dataset(const std::string& head_name) {
    const auto& spec = head_by_name(head_name);
    std::lock_guard lock(mu_);
    const auto bundle = build_dataset(corpus_, spec);
    const auto dir = root_ / "datasets" / std::string(spec.name);
    export_bundle(bundle, dir);
    return {{"head", spec.name},
            {"dir", dir.string()},
            {"width", bundle.train_data.cols()},
            {"train_rows", bundle.train_data.rows()},
            {"test_rows", bundle.test_data.rows()}};
  }

  nlohmann::json config() const {
    std::lock_guard lock(mu_);
    return {{"feature_config", corpus_.config()}, {"train_config", train_cfg_}};
  }

 private:
  std::filesystem::path heads_path() const { return root_ / "heads.ftmh"; }

  void save_scene() const {
    binio::write_text_atomic(root_ / "scene.json", nlohmann::json(agent_->scene()).dump(2));
  }

  void save_turns() const {
    std::string text;
    for (const auto& t : agent_->turns()) text += turn_json(t).dump() + "\n";
    binio::write_text_atomic(root_ / "turns.jsonl", text);
  }

  void run_job(std::uint64_t id, const Corpus& snapshot, const std::vector<std::string>& pending) {
    std::optional<TrainingRun> run;
    std::optional<Error> failure;
    try {
      run = train_all(snapshot, train_cfg_);
    } catch (const Error& e) {
      failure = e;
    } catch (const std::exception& e) {
      failure = Error(ErrorCode::IoFailure, e.what(), "train");
    }
    std::lock_guard lock(mu_);
    auto& job = jobs_[id];
    running_.reset();
    if (run) {
      try {
        save_heads(run->heads, heads_path());
        export_all(*run, root_ / "datasets");
        for (const auto& uid : corpus_.mark_pending_consumed(pending)) {
          save_record_file(root_, corpus_.record(uid));
        }
        heads_ = std::move(run->heads);
        job.state = JobState::Done;
        job.metrics = accuracy_table(*heads_);
        return;
      } catch (const Error& e) {
        failure = e;
      }
    }
    job.state = JobState::Failed;
    job.failure = failure;
  }

  std::filesystem::path root_;
  TrainConfig train_cfg_;
  mutable std::mutex mu_;
  Corpus corpus_;
  std::optional<Agent> agent_;
  std::optional<HeadSet> heads_;
  std::map<std::uint64_t, TrainingJob> jobs_;
  std::optional<std::uint64_t> running_;
  std::uint64_t job_counter_ = 0;
  std::thread worker_;
};

namespace service_detail {

inline nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("body is not JSON: ") + e.what(), "body");
  }
}

inline void send(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline std::uint64_t parse_u64(const std::string& s, const char* field) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidArgument, std::string(field) + " must be a non-negative integer", field);
  }
  return v;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send(res, error_json(e), http_status(e.code()));
    } catch (const nlohmann::json::exception& e) {
      send(res, error_json(Error(ErrorCode::InvalidArgument, e.what(), "body")), 400);
    } catch (const std::exception& e) {
      send(res, error_json(Error(ErrorCode::IoFailure, e.what(), "")), 500);
    }
  };
}

inline std::span<const std::uint8_t> bytes_of(const std::string& body) {
  return {reinterpret_cast<const std::uint8_t*>(body.data()), body.size()};
}

}  // namespace service_detail

/// Routes:
///   POST /recordings            WAV body -> {clip_id}
///   POST /utterances            {clip_id, markers, role?} -> {utterance_id}
///   GET  /utterances            every record with status and pending flag
///   GET  /readiness             per-pattern repetition counts
///   POST /train                 -> 202 {job_id}
///   GET  /train/{job_id}        job status, per-head accuracies when done
///   POST /talk?point=<object>   WAV body -> AgentTurn
///   GET  /turns                 every turn so far
///   POST /corrections           {turn_id, markers} -> pending utterance
///   GET  /world                 scene
///   GET  /clips/{clip_id}       WAV bytes
///   GET  /viz/{clip_id}         plot data
///   POST /datasets/{head}       export one head's bundle
///   GET  /config                feature and training config
inline void bind_routes(httplib::Server& srv, Session& s) {
  using service_detail::bytes_of;
  using service_detail::guarded;
  using service_detail::parse_body;
  using service_detail::send;
  using Req = httplib::Request;
  using Res = httplib::Response;

  srv.Post("/recordings", guarded([&s](const Req& req, Res& res) {
             send(res, {{"clip_id", s.add_recording(bytes_of(req.body))}});
           }));
  srv.Post("/utterances", guarded([&s](const Req& req, Res& res) {
             send(res, {{"utterance_id", s.add_utterance(parse_body(req))}});
           }));
  srv.Get("/utterances", guarded([&s](const Req&, Res& res) { send(res, s.utterances()); }));
  srv.Get("/readiness", guarded([&s](const Req&, Res& res) { send(res, s.readiness()); }));
  srv.Post("/train", guarded([&s](const Req&, Res& res) { send(res, {{"job_id", s.start_training()}}, 202); }));
  srv.Get(R"(/train/(\d+))", guarded([&s](const Req& req, Res& res) {
            send(res, job_json(s.job(service_detail::parse_u64(req.matches[1], "job_id"))));
          }));
  srv.Post("/talk", guarded([&s](const Req& req, Res& res) {
             std::optional<std::uint32_t> point;
             if (req.has_param("point")) {
               const auto v = service_detail::parse_u64(req.get_param_value("point"), "point");
               if (v > UINT32_MAX) throw Error(ErrorCode::InvalidArgument, "point out of range", "point");
               point = static_cast<std::uint32_t>(v);
             }
             send(res, s.talk(bytes_of(req.body), point));
           }));
  srv.Get("/turns", guarded([&s](const Req&, Res& res) { send(res, s.turns()); }));
  srv.Post("/corrections", guarded([&s](const Req& req, Res& res) { send(res, s.correct(parse_body(req))); }));
  srv.Get("/world", guarded([&s](const Req&, Res& res) { send(res, s.world()); }));
  srv.Get(R"(/clips/([A-Za-z0-9_-]+))", guarded([&s](const Req& req, Res& res) {
            const auto wav = s.clip_wav(req.matches[1]);
            res.set_content(std::string(wav.begin(), wav.end()), "audio/wav");
          }));
  srv.Get(R"(/viz/([A-Za-z0-9_-]+))", guarded([&s](const Req& req, Res& res) { send(res, s.viz(req.matches[1])); }));
  srv.Post(R"(/datasets/([a-z_]+))", guarded([&s](const Req& req, Res& res) {
             send(res, s.export_dataset(req.matches[1]));
           }));
  srv.Get("/config", guarded([&s](const Req&, Res& res) { send(res, s.config()); }));
}

}  // namespace voxworld
