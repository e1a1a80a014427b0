#pragma once

// The conversational agent. Training-mode phrases register a dialogue role
// per phrase pattern (the name -> question -> answer -> command chain);
// talking-mode turns classify the player's clip and dispatch on the
// recognised pattern's role:
//
//   role              pointed?   action
//   what-question     yes        Reply(answer clip of the pointed object)
//   what/other quest. no         Reply(answer clip paired with the pattern)
//   where-question    -          ReplyAndPoint(paired clip) or PointAt, audio object
//   command           -          NavigateTo(audio object)
//   property question -          ReplyAndPoint(clip naming the scene value)
//   yes/no question   -          Reply(yes clip | no clip)
//   statements        -          PointAt(referent)
//   low confidence    -          AskClarification

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/error.hpp"
#include "voxworld/features.hpp"
#include "voxworld/markers.hpp"
#include "voxworld/model.hpp"
#include "voxworld/world.hpp"

namespace voxworld {

inline constexpr double kDefaultClarifyThreshold = 0.5;

enum class ChainRole : std::uint8_t {
  NameStatement,
  HereStatement,
  PropertyStatement,
  Answer,
  Positive,
  Negative,
  WhatQuestion,
  WhereQuestion,
  PropertyQuestion,
  YesNoQuestion,
  Question,
  Command,
};

inline constexpr std::array<std::string_view, 12> kChainRoleNames = {
    "name_statement", "here_statement", "property_statement", "answer",
    "positive",       "negative",       "what_question",      "where_question",
    "property_question", "yes_no_question", "question",       "command"};

inline std::string_view to_string(ChainRole r) { return kChainRoleNames[static_cast<std::size_t>(r)]; }

inline ChainRole parse_chain_role(std::string_view s) {
  for (std::size_t i = 0; i < kChainRoleNames.size(); ++i) {
    if (kChainRoleNames[i] == s) return static_cast<ChainRole>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown chain role '" + std::string(s) + "'", "role");
}

inline bool is_statement(ChainRole r) { return r <= ChainRole::Negative; }

namespace agent_detail {

inline const WordSpan* first_word(const TaggedUtterance& u, WordFunction f) {
  for (const auto& w : u.words) {
    if (w.function == f) return &w;
  }
  return nullptr;
}

}  // namespace agent_detail

/// Role implied by the markers alone.
inline ChainRole deduce_role(const TaggedUtterance& u) {
  using agent_detail::first_word;
  switch (u.phrase_intonation) {
    case Intonation::Command:
      return ChainRole::Command;
    case Intonation::Question:
      if (first_word(u, WordFunction::ObjectProperty)) return ChainRole::YesNoQuestion;
      if (first_word(u, WordFunction::PropertyName)) return ChainRole::PropertyQuestion;
      if (first_word(u, WordFunction::Object)) return ChainRole::WhereQuestion;
      if (first_word(u, WordFunction::Pointer)) return ChainRole::WhatQuestion;
      return ChainRole::Question;
    case Intonation::Statement:
    case Intonation::Story:
      break;
  }
  if (u.word_count == 1 && u.words[0].function == WordFunction::Positive) return ChainRole::Positive;
  if (u.word_count == 1 && u.words[0].function == WordFunction::Negative) return ChainRole::Negative;
  if (first_word(u, WordFunction::ObjectProperty)) return ChainRole::PropertyStatement;
  if (first_word(u, WordFunction::Object)) return ChainRole::NameStatement;
  return ChainRole::Answer;
}

struct PatternEntry {
  ChainRole role;
  std::optional<PropertyKind> property;        // property questions, yes/no questions
  std::optional<std::uint32_t> property_vocab;  // the value a yes/no question asks about
  bool operator==(const PatternEntry&) const = default;
};

/// What the agent has been taught: a role per pattern, question -> answer
/// pattern pairs, and the clips it may replay. Object-specific answer clips
/// live on the scene objects.
struct ChainRegistry {
  std::map<std::uint32_t, PatternEntry> patterns;
  std::map<std::uint32_t, std::uint32_t> answer_pattern;   // question -> statement pattern
  std::map<std::uint32_t, std::string> fallback_clips;     // pattern -> first clip
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::string> property_clips;  // (vocab, object)
  std::optional<std::uint32_t> name_pattern;
  std::optional<std::uint32_t> last_question;

  /// Records one training phrase. The first registration of a pattern fixes
  /// its role; a statement that follows a question becomes that question's
  /// answer unless the question is already paired.
  void add(const TaggedUtterance& u, ChainRole role, Scene& scene) {
    using agent_detail::first_word;
    const auto pattern = u.phrase_pattern_id;
    if (!patterns.contains(pattern)) {
      PatternEntry e{role, std::nullopt, std::nullopt};
      if (role == ChainRole::PropertyQuestion) {
        if (const auto* w = first_word(u, WordFunction::PropertyName)) {
          e.property = scene.property_named_by(w->vocab_id);
        }
      } else if (role == ChainRole::YesNoQuestion) {
        if (const auto* w = first_word(u, WordFunction::ObjectProperty)) {
          e.property_vocab = w->vocab_id;
          e.property = scene.property_of_value(w->vocab_id);
        }
      }
      patterns.emplace(pattern, e);
    }
    if (!is_statement(role)) {
      last_question = role == ChainRole::Command ? std::nullopt : std::optional(pattern);
      return;
    }
    if (role == ChainRole::NameStatement && !name_pattern) name_pattern = pattern;
    if (auto* obj = scene.find(u.object_id)) obj->answer_clips.emplace(pattern, u.clip_id);
    fallback_clips.emplace(pattern, u.clip_id);
    if (role == ChainRole::PropertyStatement) {
      if (const auto* w = first_word(u, WordFunction::ObjectProperty)) {
        property_clips.emplace(std::pair{w->vocab_id, u.object_id}, u.clip_id);
      }
    }
    if (last_question) {
      answer_pattern.emplace(*last_question, pattern);
      last_question.reset();
    }
  }

  std::optional<std::string> answer_clip(const Scene& scene, std::uint32_t pattern,
                                         std::uint32_t object) const {
    if (const auto* o = scene.find(object)) {
      if (auto it = o->answer_clips.find(pattern); it != o->answer_clips.end()) return it->second;
    }
    if (auto it = fallback_clips.find(pattern); it != fallback_clips.end()) return it->second;
    return std::nullopt;
  }

  std::optional<std::string> property_clip(std::uint32_t vocab, std::uint32_t object) const {
    if (auto it = property_clips.find({vocab, object}); it != property_clips.end()) return it->second;
    for (const auto& [key, clip] : property_clips) {
      if (key.first == vocab) return clip;
    }
    return std::nullopt;
  }

  std::optional<std::string> polarity_clip(const Scene& scene, ChainRole polarity,
                                           std::uint32_t object) const {
    for (const auto& [pattern, entry] : patterns) {
      if (entry.role == polarity) return answer_clip(scene, pattern, object);
    }
    return std::nullopt;
  }

  bool operator==(const ChainRegistry&) const = default;
};

enum class ActionKind : std::uint8_t { Reply, PointAt, NavigateTo, ReplyAndPoint, AskClarification };

inline constexpr std::array<std::string_view, 5> kActionNames = {
    "Reply", "PointAt", "NavigateTo", "ReplyAndPoint", "AskClarification"};

inline std::string_view to_string(ActionKind k) { return kActionNames[static_cast<std::size_t>(k)]; }

struct AgentAction {
  ActionKind kind = ActionKind::AskClarification;
  std::optional<std::string> clip_id;
  std::optional<std::uint32_t> object_id;
  std::vector<Point> path;  // NavigateTo only

  bool operator==(const AgentAction&) const = default;
};

/// The tags the agent acted on.
struct ResolvedTags {
  std::uint32_t object_id = 0;
  std::uint32_t phrase_pattern_id = 0;
  Intonation phrase_intonation = Intonation::Statement;
  double confidence = 0.0;
  std::optional<ChainRole> role;
  bool operator==(const ResolvedTags&) const = default;
};

struct Decision {
  AgentAction action;
  ResolvedTags tags;
};

/// Pure dispatch: same prediction, pointing, scene and registry give the same
/// decision.
inline Decision dispatch(const Prediction& pred, std::optional<std::uint32_t> pointed,
                         const Scene& scene, const ChainRegistry& reg,
                         double threshold = kDefaultClarifyThreshold) {
  Decision d;
  d.tags.phrase_pattern_id = pred.argmax(HeadKind::PhrasePattern);
  d.tags.phrase_intonation = static_cast<Intonation>(pred.argmax(HeadKind::PhraseIntonation));
  d.tags.confidence = pred.confidence(HeadKind::PhrasePattern);
  const auto audio_object = pred.argmax(HeadKind::Object);
  d.tags.object_id = audio_object;

  auto clarify = [&] {
    d.action = {ActionKind::AskClarification, std::nullopt, std::nullopt, {}};
    return d;
  };
  if (d.tags.confidence < threshold) return clarify();

  std::optional<ChainRole> role;
  if (auto it = reg.patterns.find(d.tags.phrase_pattern_id); it != reg.patterns.end()) {
    role = it->second.role;
  } else if (d.tags.phrase_intonation == Intonation::Command) {
    role = ChainRole::Command;
  } else if (d.tags.phrase_intonation == Intonation::Question) {
    role = ChainRole::Question;
  } else {
    return clarify();
  }
  d.tags.role = role;

  const std::uint32_t referent = pointed.value_or(audio_object);
  auto reply = [&](ActionKind kind, std::optional<std::string> clip, std::uint32_t object) {
    if (!clip || !scene.find(object)) return clarify();
    d.tags.object_id = object;
    d.action = {kind, std::move(clip),
                kind == ActionKind::Reply ? std::nullopt : std::optional(object), {}};
    return d;
  };
  auto point = [&](ActionKind kind, std::uint32_t object) {
    if (!scene.find(object)) return clarify();
    d.tags.object_id = object;
    d.action = {kind, std::nullopt, object, {}};
    return d;
  };
  auto paired_answer = [&](std::uint32_t object) -> std::optional<std::string> {
    auto it = reg.answer_pattern.find(d.tags.phrase_pattern_id);
    std::optional<std::uint32_t> answer;
    if (it != reg.answer_pattern.end()) answer = it->second;
    else if (*role == ChainRole::WhatQuestion) answer = reg.name_pattern;
    if (!answer) return std::nullopt;
    return reg.answer_clip(scene, *answer, object);
  };

  switch (*role) {
    case ChainRole::WhatQuestion:
    case ChainRole::Question:
      return reply(ActionKind::Reply, paired_answer(referent), referent);
    case ChainRole::WhereQuestion: {
      if (!scene.find(audio_object)) return clarify();
      if (auto clip = paired_answer(audio_object)) {
        return reply(ActionKind::ReplyAndPoint, clip, audio_object);
      }
      return point(ActionKind::PointAt, audio_object);
    }
    case ChainRole::Command:
      return point(ActionKind::NavigateTo, audio_object);
    case ChainRole::PropertyQuestion: {
      const auto& entry = reg.patterns.at(d.tags.phrase_pattern_id);
      const auto* obj = scene.find(referent);
      if (!obj || !entry.property) return clarify();
      const auto& vocab = scene.vocabulary(*entry.property).values;
      auto it = vocab.find(obj->property(*entry.property));
      if (it == vocab.end()) return clarify();
      return reply(ActionKind::ReplyAndPoint, reg.property_clip(it->second, referent), referent);
    }
    case ChainRole::YesNoQuestion: {
      const auto& entry = reg.patterns.at(d.tags.phrase_pattern_id);
      const auto* obj = scene.find(referent);
      if (!obj) return clarify();
      bool matches = false;
      if (entry.property && entry.property_vocab) {
        const auto asked = scene.vocabulary(*entry.property).value_for(*entry.property_vocab);
        matches = asked && *asked == obj->property(*entry.property);
      }
      const auto polarity = matches ? ChainRole::Positive : ChainRole::Negative;
      return reply(ActionKind::Reply, reg.polarity_clip(scene, polarity, referent), referent);
    }
    case ChainRole::NameStatement:
    case ChainRole::HereStatement:
    case ChainRole::PropertyStatement:
    case ChainRole::Answer:
    case ChainRole::Positive:
    case ChainRole::Negative:
      return point(ActionKind::PointAt, referent);
  }
  return clarify();
}

struct PlayerMessage {
  std::string clip_id;
  std::optional<std::uint32_t> pointed_object;
  bool operator==(const PlayerMessage&) const = default;
};

struct AgentTurn {
  std::uint64_t turn_id = 0;
  PlayerMessage message;
  Prediction prediction;
  AgentAction action;
  ResolvedTags resolved_tags;
};

struct Correction {
  std::uint64_t turn_id = 0;
  TaggedUtterance corrected;
};

struct PendingCorrection {
  std::uint64_t turn_id = 0;
  std::string utterance_id;
  std::optional<std::string> superseded;
};

inline nlohmann::json action_json(const AgentAction& a) {
  nlohmann::json j = {{"kind", to_string(a.kind)}};
  j["clip_id"] = a.clip_id ? nlohmann::json(*a.clip_id) : nlohmann::json(nullptr);
  j["object_id"] = a.object_id ? nlohmann::json(*a.object_id) : nlohmann::json(nullptr);
  nlohmann::json path = nlohmann::json::array();
  for (const auto& p : a.path) path.push_back({p.x, p.y});
  j["path"] = path;
  return j;
}

inline nlohmann::json turn_json(const AgentTurn& t) {
  nlohmann::json pred = nlohmann::json::object();
  for (std::size_t i = 0; i < kHeadTable.size(); ++i) {
    pred[std::string(kHeadTable[i].name)] = t.prediction.probs[i];
  }
  const auto& r = t.resolved_tags;
  return {{"turn_id", t.turn_id},
          {"message",
           {{"clip_id", t.message.clip_id},
            {"pointed_object", t.message.pointed_object ? nlohmann::json(*t.message.pointed_object)
                                                        : nlohmann::json(nullptr)}}},
          {"prediction", pred},
          {"action", action_json(t.action)},
          {"resolved_tags",
           {{"object_id", r.object_id},
            {"phrase_pattern_id", r.phrase_pattern_id},
            {"phrase_intonation", to_string(r.phrase_intonation)},
            {"confidence", r.confidence},
            {"role", r.role ? nlohmann::json(to_string(*r.role)) : nlohmann::json(nullptr)}}}};
}

inline AgentTurn parse_turn(const nlohmann::json& j) {
  AgentTurn t;
  t.turn_id = j.at("turn_id").get<std::uint64_t>();
  const auto& m = j.at("message");
  t.message.clip_id = m.at("clip_id").get<std::string>();
  if (!m.at("pointed_object").is_null()) t.message.pointed_object = m.at("pointed_object").get<std::uint32_t>();
  for (std::size_t i = 0; i < kHeadTable.size(); ++i) {
    t.prediction.probs[i] = j.at("prediction").at(std::string(kHeadTable[i].name)).get<std::vector<double>>();
  }
  const auto& a = j.at("action");
  const auto kind = a.at("kind").get<std::string>();
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (kActionNames[i] == kind) t.action.kind = static_cast<ActionKind>(i);
  }
  if (!a.at("clip_id").is_null()) t.action.clip_id = a.at("clip_id").get<std::string>();
  if (!a.at("object_id").is_null()) t.action.object_id = a.at("object_id").get<std::uint32_t>();
  for (const auto& p : a.at("path")) t.action.path.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  const auto& r = j.at("resolved_tags");
  t.resolved_tags.object_id = r.at("object_id").get<std::uint32_t>();
  t.resolved_tags.phrase_pattern_id = r.at("phrase_pattern_id").get<std::uint32_t>();
  t.resolved_tags.phrase_intonation = markers_detail::parse_enum<Intonation>(
      r.at("phrase_intonation"), kIntonationNames, "resolved_tags.phrase_intonation");
  t.resolved_tags.confidence = r.at("confidence").get<double>();
  if (!r.at("role").is_null()) t.resolved_tags.role = parse_chain_role(r.at("role").get<std::string>());
  return t;
}

/// Scene, chain registry and the append-only turn log. One writer at a time.
class Agent {
 public:
  explicit Agent(Scene scene, double clarify_threshold = kDefaultClarifyThreshold)
      : scene_(std::move(scene)), threshold_(clarify_threshold) {
    scene_.validate();
  }

  const Scene& scene() const { return scene_; }
  const ChainRegistry& registry() const { return registry_; }
  const std::vector<AgentTurn>& turns() const { return turns_; }
  double clarify_threshold() const { return threshold_; }

  /// Stores a training-mode phrase and registers its chain role. `role`
  /// overrides the role deduced from the markers.
  std::string register_training_phrase(Corpus& corpus, const TaggedUtterance& markers,
                                       std::optional<ChainRole> role = std::nullopt) {
    validate_markers(markers);
    if (!scene_.find(markers.object_id)) {
      throw Error(ErrorCode::UnknownObject,
                  "object " + std::to_string(markers.object_id) + " is not in the scene",
                  "object_id");
    }
    const auto resolved = role.value_or(deduce_role(markers));
    const auto id = corpus.add_utterance(markers, role ? std::string(to_string(*role)) : "");
    registry_.add(markers, resolved, scene_);
    return id;
  }

  std::string register_training_phrase(Corpus& corpus, AudioClip clip, TaggedUtterance markers,
                                       std::optional<ChainRole> role = std::nullopt) {
    auto probe = markers;
    if (probe.clip_id.empty()) probe.clip_id = "unassigned";
    validate_markers(probe);
    if (!scene_.find(markers.object_id)) {
      throw Error(ErrorCode::UnknownObject,
                  "object " + std::to_string(markers.object_id) + " is not in the scene",
                  "object_id");
    }
    markers.clip_id = corpus.add_clip(std::move(clip));
    return register_training_phrase(corpus, markers, role);
  }

  /// Rebuilds the registry from the corpus' training phrases (corrections
  /// excluded), in recording order.
  void rebuild(const Corpus& corpus) {
    registry_ = {};
    for (auto& o : scene_.objects) o.answer_clips.clear();
    for (const auto& r : corpus.records()) {
      if (!r.active() || r.source_turn) continue;
      if (!scene_.find(r.markers.object_id)) continue;
      const auto role = r.role.empty() ? deduce_role(r.markers) : parse_chain_role(r.role);
      registry_.add(r.markers, role, scene_);
    }
  }

  void restore_turns(std::vector<AgentTurn> turns) {
    turns_ = std::move(turns);
    next_turn_ = turns_.empty() ? 1 : turns_.back().turn_id + 1;
  }

  /// One talking-mode exchange. The clip must already be in the corpus.
  AgentTurn handle_turn(const HeadSet& heads, const Corpus& corpus, const PlayerMessage& message) {
    check_turn(heads, message.pointed_object);
    const FeatureExtractor fx(corpus.config());
    const auto grid = clip_grid(corpus.clip(message.clip_id), fx);
    AgentTurn turn;
    turn.turn_id = next_turn_;
    turn.message = message;
    turn.prediction = predict(heads, grid, config_hash(corpus.config()));
    auto decision = dispatch(turn.prediction, message.pointed_object, scene_, registry_, threshold_);
    if (decision.action.kind == ActionKind::NavigateTo) {
      decision.action.path = navigate(scene_, *decision.action.object_id);
    }
    turn.action = std::move(decision.action);
    turn.resolved_tags = decision.tags;
    turns_.push_back(turn);
    ++next_turn_;
    return turn;
  }

  AgentTurn handle_turn(const HeadSet& heads, Corpus& corpus, AudioClip audio,
                        std::optional<std::uint32_t> pointed) {
    check_turn(heads, pointed);
    const auto id = corpus.add_clip(std::move(audio));
    return handle_turn(heads, static_cast<const Corpus&>(corpus), PlayerMessage{id, pointed});
  }

  const AgentTurn& turn(std::uint64_t id) const {
    for (const auto& t : turns_) {
      if (t.turn_id == id) return t;
    }
    throw Error(ErrorCode::UnknownTurn, "no turn " + std::to_string(id), "turn_id");
  }

  /// Files the corrected tags for a turn's audio as a pending training
  /// utterance. A later correction of the same turn supersedes the earlier
  /// one. Models are untouched until the next training run.
  PendingCorrection apply_correction(Corpus& corpus, Correction correction) const {
    const auto& t = turn(correction.turn_id);
    correction.corrected.clip_id = t.message.clip_id;
    validate_markers(correction.corrected, corpus.frames_of(t.message.clip_id));
    PendingCorrection out{correction.turn_id, {}, std::nullopt};
    for (const auto& r : corpus.records()) {
      if (r.active() && r.source_turn == correction.turn_id) out.superseded = r.id;
    }
    out.utterance_id = corpus.add_utterance(correction.corrected, {}, correction.turn_id);
    if (out.superseded) corpus.supersede(*out.superseded);
    return out;
  }

 private:
  // Runs before the clip is stored, so a rejected turn leaves no trace.
  void check_turn(const HeadSet& heads, std::optional<std::uint32_t> pointed) const {
    if (!heads.complete()) {
      throw Error(ErrorCode::UntrainedHeads, "all seven heads must be trained first", "heads");
    }
    if (scene_.objects.empty()) throw Error(ErrorCode::EmptyScene, "scene has no objects", "objects");
    if (pointed && !scene_.find(*pointed)) {
      throw Error(ErrorCode::UnknownObject, "pointed object is not in the scene", "point");
    }
  }

  Scene scene_;
  ChainRegistry registry_;
  std::vector<AgentTurn> turns_;
  double threshold_;
  std::uint64_t next_turn_ = 1;
};

}  // namespace voxworld
