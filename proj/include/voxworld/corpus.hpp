#pragma once

// The vocal corpus: recorded clips plus their Vocal Markers, repetition
// bookkeeping, and the on-disk layout
//
//   root/manifest.json            schema, feature config + hash, head table, ids
//   root/clips/<clip_id>.wav      float32 mono
//   root/markers/<utt_id>.json    TaggedUtterance fields plus record status

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxworld/audio.hpp"
#include "voxworld/binio.hpp"
#include "voxworld/error.hpp"
#include "voxworld/features.hpp"
#include "voxworld/markers.hpp"

namespace voxworld {

inline constexpr int kCorpusSchemaVersion = 1;
inline constexpr std::size_t kDefaultReadinessThreshold = 5;

enum class RecordStatus : std::uint8_t { Active, Superseded };

struct UtteranceRecord {
  std::string id;
  TaggedUtterance markers;
  RecordStatus status = RecordStatus::Active;
  bool pending = false;                     // correction not yet seen by training
  std::optional<std::uint64_t> source_turn;  // set for corrections
  std::string role;                         // dialogue role override, empty = derive

  bool active() const { return status == RecordStatus::Active; }
  bool operator==(const UtteranceRecord&) const = default;
};

struct PatternReadiness {
  std::size_t repetitions = 0;
  bool ready = false;
  bool operator==(const PatternReadiness&) const = default;
};

/// Starts empty. Single writer; const access is safe to share across threads.
class Corpus {
 public:
  explicit Corpus(FeatureConfig cfg = {},
                  std::size_t readiness_threshold = kDefaultReadinessThreshold)
      : cfg_(std::move(cfg)), threshold_(readiness_threshold) {
    cfg_.validate();
  }

  const FeatureConfig& config() const { return cfg_; }
  std::size_t readiness_threshold() const { return threshold_; }

  std::string add_clip(AudioClip clip) {
    if (clip.samples.empty()) throw Error(ErrorCode::EmptyClip, "clip has no samples", "samples");
    if (clip.sample_rate == 0) {
      throw Error(ErrorCode::InvalidArgument, "sample rate must be positive", "sample_rate");
    }
    for (float& v : clip.samples) v = std::isfinite(v) ? std::clamp(v, -1.0f, 1.0f) : 0.0f;
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip-%06zu", ++clip_counter_);
    clip.source_id = buf;
    clips_.emplace(buf, std::move(clip));
    return buf;
  }

  bool has_clip(const std::string& id) const { return clips_.contains(id); }

  const AudioClip& clip(const std::string& id) const {
    auto it = clips_.find(id);
    if (it == clips_.end()) throw Error(ErrorCode::UnknownClip, "no clip " + id, id);
    return it->second;
  }

  const std::map<std::string, AudioClip>& clips() const { return clips_; }

  /// Frame count the clip has under the corpus feature config.
  std::size_t frames_of(const std::string& clip_id) const {
    const auto& c = clip(clip_id);
    std::size_t n = c.samples.size();
    if (c.sample_rate != cfg_.sample_rate) {
      n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg_.sample_rate /
                                                   c.sample_rate)));
    }
    return frame_count(n, cfg_.frame_size, cfg_.hop_size);
  }

  std::string add_utterance(const TaggedUtterance& markers, std::string role = {},
                            std::optional<std::uint64_t> source_turn = std::nullopt) {
    if (!has_clip(markers.clip_id)) {
      throw Error(ErrorCode::UnknownClip, "no clip " + markers.clip_id, "clip_id");
    }
    validate_markers(markers, frames_of(markers.clip_id));
    char buf[32];
    std::snprintf(buf, sizeof buf, "utt-%06zu", ++utterance_counter_);
    UtteranceRecord rec;
    rec.id = buf;
    rec.markers = markers;
    rec.pending = source_turn.has_value();
    rec.source_turn = source_turn;
    rec.role = std::move(role);
    records_.push_back(std::move(rec));
    return buf;
  }

  const std::vector<UtteranceRecord>& records() const { return records_; }

  const UtteranceRecord& record(const std::string& id) const {
    for (const auto& r : records_) {
      if (r.id == id) return r;
    }
    throw Error(ErrorCode::InvalidArgument, "no utterance " + id, id);
  }

  void supersede(const std::string& id) {
    for (auto& r : records_) {
      if (r.id == id) {
        r.status = RecordStatus::Superseded;
        r.pending = false;
        return;
      }
    }
    throw Error(ErrorCode::InvalidArgument, "no utterance " + id, id);
  }

  std::size_t pending_count() const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.pending; }));
  }

  /// Called when a training run has consumed the corpus; returns the ids
  /// whose pending flag was cleared.
  std::vector<std::string> mark_pending_consumed() {
    std::vector<std::string> ids;
    for (auto& r : records_) {
      if (r.pending) {
        r.pending = false;
        ids.push_back(r.id);
      }
    }
    return ids;
  }

  /// Same, limited to `ids`; a run trained on a snapshot consumes only what
  /// the snapshot held.
  std::vector<std::string> mark_pending_consumed(const std::vector<std::string>& ids) {
    std::vector<std::string> cleared;
    for (auto& r : records_) {
      if (r.pending && std::find(ids.begin(), ids.end(), r.id) != ids.end()) {
        r.pending = false;
        cleared.push_back(r.id);
      }
    }
    return cleared;
  }

  std::size_t repetitions(std::uint32_t pattern) const {
    return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const auto& r) {
      return r.active() && r.markers.phrase_pattern_id == pattern;
    }));
  }

  std::array<PatternReadiness, kPatternClasses> readiness() const {
    std::array<PatternReadiness, kPatternClasses> out{};
    for (const auto& r : records_) {
      if (r.active()) ++out[r.markers.phrase_pattern_id].repetitions;
    }
    for (auto& p : out) p.ready = p.repetitions >= threshold_;
    return out;
  }

  bool operator==(const Corpus&) const = default;

 private:
  friend Corpus load_corpus(const std::filesystem::path& root);
  friend nlohmann::json manifest_json(const Corpus& c);

  FeatureConfig cfg_;
  std::size_t threshold_;
  std::map<std::string, AudioClip> clips_;
  std::vector<UtteranceRecord> records_;
  std::size_t clip_counter_ = 0;
  std::size_t utterance_counter_ = 0;
};

inline nlohmann::json readiness_json(const Corpus& c) {
  nlohmann::json patterns = nlohmann::json::array();
  const auto r = c.readiness();
  for (std::size_t p = 0; p < r.size(); ++p) {
    patterns.push_back(
        {{"phrase_pattern_id", p}, {"repetitions", r[p].repetitions}, {"ready", r[p].ready}});
  }
  return {{"threshold", c.readiness_threshold()}, {"patterns", patterns}};
}

inline nlohmann::json head_table_json() {
  nlohmann::json heads = nlohmann::json::array();
  auto add = [&](const HeadSpec& h) {
    heads.push_back({{"name", h.name},
                     {"class_count", h.class_count},
                     {"granularity", h.granularity == Granularity::PerWord ? "word" : "utterance"},
                     {"active", h.active}});
  };
  for (const auto& h : kHeadTable) add(h);
  add(kEmotionHead);
  return heads;
}

inline nlohmann::json manifest_json(const Corpus& c) {
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& [id, _] : c.clips_) clips.push_back(id);
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& r : c.records_) utts.push_back(r.id);
  return {{"schema_version", kCorpusSchemaVersion},
          {"feature_config", c.cfg_},
          {"feature_config_hash", to_hex(config_hash(c.cfg_))},
          {"readiness_threshold", c.threshold_},
          {"head_table", head_table_json()},
          {"clip_counter", c.clip_counter_},
          {"utterance_counter", c.utterance_counter_},
          {"clips", clips},
          {"utterances", utts}};
}

inline nlohmann::json record_json(const UtteranceRecord& r) {
  nlohmann::json j = r.markers;
  j["utterance_id"] = r.id;
  j["status"] = r.active() ? "active" : "superseded";
  j["pending"] = r.pending;
  j["source_turn"] = r.source_turn ? nlohmann::json(*r.source_turn) : nlohmann::json(nullptr);
  j["role"] = r.role;
  return j;
}

inline UtteranceRecord parse_record(const nlohmann::json& j) {
  UtteranceRecord r;
  r.markers = parse_markers(j);
  r.id = j.at("utterance_id").get<std::string>();
  r.status = j.value("status", "active") == "superseded" ? RecordStatus::Superseded
                                                         : RecordStatus::Active;
  r.pending = j.value("pending", false);
  if (j.contains("source_turn") && !j.at("source_turn").is_null()) {
    r.source_turn = j.at("source_turn").get<std::uint64_t>();
  }
  r.role = j.value("role", "");
  return r;
}

namespace corpus_detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::IoFailure, "missing " + path.string(), path.string());
  }
  const auto text = binio::read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports "line L, column C" in its message.
    throw Error(ErrorCode::SchemaVersionMismatch, path.filename().string() + ": " + e.what(),
                path.string());
  }
}

}  // namespace corpus_detail

/// Individual writers, each atomic. The manifest lists what is committed, so
/// it goes last.
inline void save_clip_file(const Corpus& c, const std::filesystem::path& root,
                           const std::string& clip_id) {
  binio::write_file_atomic(root / "clips" / (clip_id + ".wav"), encode_wav_f32(c.clip(clip_id)));
}

inline void save_record_file(const std::filesystem::path& root, const UtteranceRecord& r) {
  binio::write_text_atomic(root / "markers" / (r.id + ".json"), record_json(r).dump(2));
}

inline void save_manifest(const Corpus& c, const std::filesystem::path& root) {
  binio::write_text_atomic(root / "manifest.json", manifest_json(c).dump(2));
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& root) {
  for (const auto& [id, _] : c.clips()) save_clip_file(c, root, id);
  for (const auto& r : c.records()) save_record_file(root, r);
  save_manifest(c, root);
}

inline Corpus load_corpus(const std::filesystem::path& root) {
  const auto manifest = corpus_detail::parse_json_file(root / "manifest.json");
  try {
    if (!manifest.is_object() || manifest.value("schema_version", -1) != kCorpusSchemaVersion) {
      throw Error(ErrorCode::SchemaVersionMismatch,
                  "expected schema_version " + std::to_string(kCorpusSchemaVersion),
                  "manifest.json:schema_version");
    }
    Corpus c(manifest.at("feature_config").get<FeatureConfig>(),
             manifest.at("readiness_threshold").get<std::size_t>());
    if (manifest.at("feature_config_hash").get<std::string>() != to_hex(config_hash(c.cfg_))) {
      throw Error(ErrorCode::SchemaVersionMismatch, "feature config hash does not match config",
                  "manifest.json:feature_config_hash");
    }
    c.clip_counter_ = manifest.at("clip_counter").get<std::size_t>();
    c.utterance_counter_ = manifest.at("utterance_counter").get<std::size_t>();
    for (const auto& id_json : manifest.at("clips")) {
      const auto id = id_json.get<std::string>();
      const auto path = root / "clips" / (id + ".wav");
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::IoFailure, "missing clip file", path.string());
      }
      c.clips_.emplace(id, decode_wav(binio::read_file(path), id));
    }
    for (const auto& id_json : manifest.at("utterances")) {
      const auto id = id_json.get<std::string>();
      const auto rec = parse_record(corpus_detail::parse_json_file(root / "markers" / (id + ".json")));
      if (rec.id != id) {
        throw Error(ErrorCode::SchemaVersionMismatch, "marker file names a different id",
                    "markers/" + id + ".json");
      }
      c.records_.push_back(rec);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaVersionMismatch, std::string("manifest.json: ") + e.what(),
                "manifest.json");
  }
}

}  // namespace voxworld
