#pragma once

// Vocal Markers: the human-supplied tags on a recorded phrase, and the table
// of classification heads that consume them.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voxworld/error.hpp"

namespace voxworld {

enum class WordFunction : std::uint8_t {
  Person,
  Alive,
  Object,
  Action,
  PropertyName,
  ObjectProperty,
  ActionProperty,
  Functor,
  Positive,
  Negative,
  Pointer,
};
inline constexpr std::size_t kWordFunctionCount = 11;

enum class Intonation : std::uint8_t { Statement, Question, Command, Story };
inline constexpr std::size_t kIntonationCount = 4;

inline constexpr std::array<std::string_view, kWordFunctionCount> kWordFunctionNames = {
    "Person",         "Alive",   "Object",   "Action",   "PropertyName", "ObjectProperty",
    "ActionProperty", "Functor", "Positive", "Negative", "Pointer"};
inline constexpr std::array<std::string_view, kIntonationCount> kIntonationNames = {
    "Statement", "Question", "Command", "Story"};

inline std::string_view to_string(WordFunction f) {
  return kWordFunctionNames[static_cast<std::size_t>(f)];
}
inline std::string_view to_string(Intonation i) {
  return kIntonationNames[static_cast<std::size_t>(i)];
}

namespace markers_detail {

/// Accepts either the variant name or its integer code.
template <typename Enum, std::size_t N>
Enum parse_enum(const nlohmann::json& j, const std::array<std::string_view, N>& names,
                const std::string& path) {
  if (j.is_number_integer()) {
    auto v = j.get<long long>();
    if (v >= 0 && static_cast<std::size_t>(v) < N) return static_cast<Enum>(v);
  } else if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (std::size_t i = 0; i < N; ++i) {
      if (names[i] == s) return static_cast<Enum>(i);
    }
  }
  throw Error(ErrorCode::InvalidMarkers, "unrecognised value " + j.dump(), path);
}

}  // namespace markers_detail

struct WordSpan {
  std::uint32_t start_frame = 0;
  std::uint32_t end_frame = 0;  // exclusive
  WordFunction function = WordFunction::Functor;
  Intonation intonation = Intonation::Statement;
  std::uint32_t vocab_id = 0;

  bool operator==(const WordSpan&) const = default;
};

struct TaggedUtterance {
  std::string clip_id;
  std::uint32_t object_id = 0;
  std::uint32_t phrase_pattern_id = 0;
  Intonation phrase_intonation = Intonation::Statement;
  std::uint32_t word_count = 0;
  std::vector<WordSpan> words;

  bool operator==(const TaggedUtterance&) const = default;
};

enum class HeadKind : std::uint8_t {
  Object,
  PhrasePattern,
  WordCount,
  WordIntonation,
  PhraseIntonation,
  WordFunction,
  Vocabulary,
  Emotion,
};

enum class Granularity : std::uint8_t { PerUtterance, PerWord };

struct HeadSpec {
  HeadKind kind;
  std::string_view name;
  std::size_t class_count;
  Granularity granularity;
  bool active = true;

  bool operator==(const HeadSpec&) const = default;
};

inline constexpr std::size_t kHeadCount = 7;

/// The seven recognised parameters in prediction order.
inline constexpr std::array<HeadSpec, kHeadCount> kHeadTable = {{
    {HeadKind::Object, "object", 13, Granularity::PerUtterance},
    {HeadKind::PhrasePattern, "phrase_pattern", 22, Granularity::PerUtterance},
    {HeadKind::WordCount, "word_count", 10, Granularity::PerUtterance},
    {HeadKind::WordIntonation, "word_intonation", 4, Granularity::PerWord},
    {HeadKind::PhraseIntonation, "phrase_intonation", 4, Granularity::PerUtterance},
    {HeadKind::WordFunction, "word_function", 11, Granularity::PerWord},
    {HeadKind::Vocabulary, "vocabulary", 40, Granularity::PerWord},
}};

/// Declared so folders and tooling can name it; it has no label source and
/// no classes until an emotion-level tag exists.
inline constexpr HeadSpec kEmotionHead{HeadKind::Emotion, "emotion", 0, Granularity::PerUtterance,
                                       false};

inline constexpr std::size_t kMaxWords = 10;
inline constexpr std::size_t kObjectClasses = kHeadTable[0].class_count;
inline constexpr std::size_t kPatternClasses = kHeadTable[1].class_count;
inline constexpr std::size_t kVocabularySize = kHeadTable[6].class_count;

inline const HeadSpec& head_spec(HeadKind kind) {
  for (const auto& h : kHeadTable) {
    if (h.kind == kind) return h;
  }
  return kEmotionHead;
}

inline std::size_t head_index(HeadKind kind) {
  for (std::size_t i = 0; i < kHeadTable.size(); ++i) {
    if (kHeadTable[i].kind == kind) return i;
  }
  throw Error(ErrorCode::MissingHead, "head is not in the active table",
              std::string(kEmotionHead.name));
}

inline const HeadSpec& head_by_name(std::string_view name) {
  for (const auto& h : kHeadTable) {
    if (h.name == name) return h;
  }
  if (name == kEmotionHead.name) return kEmotionHead;
  throw Error(ErrorCode::MissingHead, "no head named '" + std::string(name) + "'",
              std::string(name));
}

/// Class index supplied by an utterance (per-utterance heads) or by one of
/// its words (per-word heads).
inline std::uint32_t label_of(HeadKind kind, const TaggedUtterance& u, const WordSpan* word) {
  switch (kind) {
    case HeadKind::Object: return u.object_id;
    case HeadKind::PhrasePattern: return u.phrase_pattern_id;
    case HeadKind::WordCount: return u.word_count - 1;
    case HeadKind::PhraseIntonation: return static_cast<std::uint32_t>(u.phrase_intonation);
    case HeadKind::WordIntonation: return static_cast<std::uint32_t>(word->intonation);
    case HeadKind::WordFunction: return static_cast<std::uint32_t>(word->function);
    case HeadKind::Vocabulary: return word->vocab_id;
    case HeadKind::Emotion: break;
  }
  throw Error(ErrorCode::MissingHead, "head has no label source", "emotion");
}

/// Checks every TaggedUtterance invariant. `frame_limit`, when known, is the
/// clip's frame count and bounds every word span.
inline void validate_markers(const TaggedUtterance& u,
                             std::optional<std::size_t> frame_limit = std::nullopt) {
  auto fail = [](const std::string& msg, const std::string& path) {
    throw Error(ErrorCode::InvalidMarkers, msg, path);
  };
  if (u.clip_id.empty()) fail("clip_id is empty", "clip_id");
  if (u.object_id >= kObjectClasses) fail("object_id out of range", "object_id");
  if (u.phrase_pattern_id >= kPatternClasses) {
    fail("phrase_pattern_id out of range", "phrase_pattern_id");
  }
  if (static_cast<std::size_t>(u.phrase_intonation) >= kIntonationCount) {
    fail("phrase_intonation out of range", "phrase_intonation");
  }
  if (u.word_count < 1 || u.word_count > kMaxWords) fail("word_count must be 1..10", "word_count");
  if (u.words.size() != u.word_count) {
    fail("word_count is " + std::to_string(u.word_count) + " but " +
             std::to_string(u.words.size()) + " word spans were given",
         "words");
  }
  for (std::size_t i = 0; i < u.words.size(); ++i) {
    const auto& w = u.words[i];
    const std::string base = "words[" + std::to_string(i) + "]";
    if (w.start_frame >= w.end_frame) fail("start_frame must precede end_frame", base + ".end_frame");
    if (i > 0 && w.start_frame < u.words[i - 1].end_frame) {
      fail("word spans overlap or are out of order", base + ".start_frame");
    }
    if (frame_limit && w.end_frame > *frame_limit) {
      fail("span ends at frame " + std::to_string(w.end_frame) + " past the clip's " +
               std::to_string(*frame_limit) + " frames",
           base + ".end_frame");
    }
    if (static_cast<std::size_t>(w.function) >= kWordFunctionCount) {
      fail("function out of range", base + ".function");
    }
    if (static_cast<std::size_t>(w.intonation) >= kIntonationCount) {
      fail("intonation out of range", base + ".intonation");
    }
    if (w.vocab_id >= kVocabularySize) fail("vocab_id out of range", base + ".vocab_id");
  }
}

inline void to_json(nlohmann::json& j, const WordSpan& w) {
  j = {{"start_frame", w.start_frame},
       {"end_frame", w.end_frame},
       {"function", to_string(w.function)},
       {"intonation", to_string(w.intonation)},
       {"vocab_id", w.vocab_id}};
}

inline void to_json(nlohmann::json& j, const TaggedUtterance& u) {
  j = {{"clip_id", u.clip_id},
       {"object_id", u.object_id},
       {"phrase_pattern_id", u.phrase_pattern_id},
       {"phrase_intonation", to_string(u.phrase_intonation)},
       {"word_count", u.word_count},
       {"words", u.words}};
}

namespace markers_detail {

inline std::uint32_t get_u32(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) {
    throw Error(ErrorCode::InvalidMarkers, std::string("missing field ") + key, path + key);
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > UINT32_MAX) {
    throw Error(ErrorCode::InvalidMarkers, "expected a non-negative integer", path + key);
  }
  return v.get<std::uint32_t>();
}

}  // namespace markers_detail

/// Parses markers, reporting the path of the first bad field. Does not check
/// cross-field invariants; call validate_markers for those.
inline TaggedUtterance parse_markers(const nlohmann::json& j) {
  using markers_detail::get_u32;
  if (!j.is_object()) throw Error(ErrorCode::InvalidMarkers, "markers must be an object", "");
  TaggedUtterance u;
  if (j.contains("clip_id")) {
    if (!j.at("clip_id").is_string()) {
      throw Error(ErrorCode::InvalidMarkers, "clip_id must be a string", "clip_id");
    }
    u.clip_id = j.at("clip_id").get<std::string>();
  }
  u.object_id = get_u32(j, "object_id", "");
  u.phrase_pattern_id = get_u32(j, "phrase_pattern_id", "");
  if (!j.contains("phrase_intonation")) {
    throw Error(ErrorCode::InvalidMarkers, "missing field phrase_intonation", "phrase_intonation");
  }
  u.phrase_intonation = markers_detail::parse_enum<Intonation>(
      j.at("phrase_intonation"), kIntonationNames, "phrase_intonation");
  u.word_count = get_u32(j, "word_count", "");
  if (!j.contains("words") || !j.at("words").is_array()) {
    throw Error(ErrorCode::InvalidMarkers, "words must be an array", "words");
  }
  const auto& words = j.at("words");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string base = "words[" + std::to_string(i) + "].";
    const auto& wj = words[i];
    if (!wj.is_object()) throw Error(ErrorCode::InvalidMarkers, "word must be an object", base);
    WordSpan w;
    w.start_frame = get_u32(wj, "start_frame", base);
    w.end_frame = get_u32(wj, "end_frame", base);
    if (!wj.contains("function")) {
      throw Error(ErrorCode::InvalidMarkers, "missing field function", base + "function");
    }
    w.function = markers_detail::parse_enum<WordFunction>(wj.at("function"), kWordFunctionNames,
                                                          base + "function");
    if (!wj.contains("intonation")) {
      throw Error(ErrorCode::InvalidMarkers, "missing field intonation", base + "intonation");
    }
    w.intonation = markers_detail::parse_enum<Intonation>(wj.at("intonation"), kIntonationNames,
                                                          base + "intonation");
    w.vocab_id = get_u32(wj, "vocab_id", base);
    u.words.push_back(w);
  }
  return u;
}

}  // namespace voxworld
