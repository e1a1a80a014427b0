#pragma once

// The pushbutton world: objects with properties placed in a flat scene, and
// straight-line agent navigation.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxworld/error.hpp"
#include "voxworld/markers.hpp"

namespace voxworld {

inline constexpr std::size_t kMaxSceneObjects = 10;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

inline double distance(Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); }

enum class PropertyKind : std::uint8_t { Color, Size };

inline std::string_view to_string(PropertyKind k) { return k == PropertyKind::Color ? "color" : "size"; }

/// Values a property can take, each tied to the vocabulary id the speaker
/// uses for it, plus the id of the word naming the property itself.
struct PropertyVocabulary {
  std::optional<std::uint32_t> name_vocab;
  std::map<std::string, std::uint32_t> values;

  std::optional<std::string> value_for(std::uint32_t vocab_id) const {
    for (const auto& [value, id] : values) {
      if (id == vocab_id) return value;
    }
    return std::nullopt;
  }
  bool operator==(const PropertyVocabulary&) const = default;
};

struct SceneObject {
  std::uint32_t object_id = 0;
  std::string name_hint;  // UI label only; the agent never reads it
  Point position;
  std::string color;
  std::string size;
  std::map<std::uint32_t, std::string> answer_clips;  // phrase pattern -> clip id

  const std::string& property(PropertyKind k) const { return k == PropertyKind::Color ? color : size; }
  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  Point agent_position;
  PropertyVocabulary colors;
  PropertyVocabulary sizes;

  const PropertyVocabulary& vocabulary(PropertyKind k) const {
    return k == PropertyKind::Color ? colors : sizes;
  }

  const SceneObject* find(std::uint32_t id) const {
    for (const auto& o : objects) {
      if (o.object_id == id) return &o;
    }
    return nullptr;
  }
  SceneObject* find(std::uint32_t id) {
    for (auto& o : objects) {
      if (o.object_id == id) return &o;
    }
    return nullptr;
  }

  const SceneObject& at(std::uint32_t id) const {
    if (const auto* o = find(id)) return *o;
    throw Error(ErrorCode::UnknownObject, "object " + std::to_string(id) + " is not in the scene",
                "object_id");
  }

  /// Which property, if any, a vocabulary id names a value of.
  std::optional<PropertyKind> property_of_value(std::uint32_t vocab_id) const {
    if (colors.value_for(vocab_id)) return PropertyKind::Color;
    if (sizes.value_for(vocab_id)) return PropertyKind::Size;
    return std::nullopt;
  }
  std::optional<PropertyKind> property_named_by(std::uint32_t vocab_id) const {
    if (colors.name_vocab == vocab_id) return PropertyKind::Color;
    if (sizes.name_vocab == vocab_id) return PropertyKind::Size;
    return std::nullopt;
  }

  void validate() const {
    if (objects.size() > kMaxSceneObjects) {
      throw Error(ErrorCode::InvalidArgument, "a scene holds at most 10 objects", "objects");
    }
    std::set<std::uint32_t> seen;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      const std::string base = "objects[" + std::to_string(i) + "]";
      if (o.object_id >= kObjectClasses) {
        throw Error(ErrorCode::InvalidArgument, "object id out of range", base + ".id");
      }
      if (!seen.insert(o.object_id).second) {
        throw Error(ErrorCode::InvalidArgument, "duplicate object id", base + ".id");
      }
      if (!colors.values.empty() && !colors.values.contains(o.color)) {
        throw Error(ErrorCode::InvalidArgument, "color '" + o.color + "' not in vocabulary",
                    base + ".color");
      }
      if (!sizes.values.empty() && !sizes.values.contains(o.size)) {
        throw Error(ErrorCode::InvalidArgument, "size '" + o.size + "' not in vocabulary",
                    base + ".size");
      }
    }
  }

  bool operator==(const Scene&) const = default;
};

inline void to_json(nlohmann::json& j, const PropertyVocabulary& v) {
  j = {{"name_vocab", v.name_vocab ? nlohmann::json(*v.name_vocab) : nlohmann::json(nullptr)},
       {"values", v.values}};
}

inline void from_json(const nlohmann::json& j, PropertyVocabulary& v) {
  if (j.contains("name_vocab") && !j.at("name_vocab").is_null()) {
    v.name_vocab = j.at("name_vocab").get<std::uint32_t>();
  }
  v.values = j.value("values", std::map<std::string, std::uint32_t>{});
}

inline void to_json(nlohmann::json& j, const Scene& s) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : s.objects) {
    nlohmann::json answers = nlohmann::json::object();
    for (const auto& [pattern, clip] : o.answer_clips) answers[std::to_string(pattern)] = clip;
    objects.push_back({{"id", o.object_id},
                       {"name_hint", o.name_hint},
                       {"position", {o.position.x, o.position.y}},
                       {"color", o.color},
                       {"size", o.size},
                       {"answer_clips", answers}});
  }
  j = {{"objects", objects},
       {"agent", {s.agent_position.x, s.agent_position.y}},
       {"vocabularies", {{"color", s.colors}, {"size", s.sizes}}}};
}

inline void from_json(const nlohmann::json& j, Scene& s) {
  s = Scene{};
  for (const auto& oj : j.at("objects")) {
    SceneObject o;
    o.object_id = oj.at("id").get<std::uint32_t>();
    o.name_hint = oj.value("name_hint", "");
    const auto& pos = oj.at("position");
    o.position = {pos.at(0).get<double>(), pos.at(1).get<double>()};
    o.color = oj.value("color", "");
    o.size = oj.value("size", "");
    if (oj.contains("answer_clips")) {
      for (const auto& [k, v] : oj.at("answer_clips").items()) {
        o.answer_clips[static_cast<std::uint32_t>(std::stoul(k))] = v.get<std::string>();
      }
    }
    s.objects.push_back(std::move(o));
  }
  if (j.contains("agent")) s.agent_position = {j.at("agent").at(0).get<double>(), j.at("agent").at(1).get<double>()};
  if (j.contains("vocabularies")) {
    const auto& v = j.at("vocabularies");
    if (v.contains("color")) s.colors = v.at("color").get<PropertyVocabulary>();
    if (v.contains("size")) s.sizes = v.at("size").get<PropertyVocabulary>();
  }
  s.validate();
}

// Vocabulary ids of the starter world's words.
namespace starter_vocab {
inline constexpr std::uint32_t kThis = 0, kIs = 1, kA = 2, kWhat = 3, kIt = 4, kWhere = 5,
                               kThe = 6, kFind = 7, kHere = 8, kColor = 9, kSize = 10, kYes = 11,
                               kNo = 12, kBlock = 13, kBall = 14, kGreen = 15, kRed = 16,
                               kBig = 17, kSmall = 18;
}  // namespace starter_vocab

/// Two objects, a green big block and a red small ball, with the agent at the
/// origin.
inline Scene preliminary_world() {
  using namespace starter_vocab;
  Scene s;
  s.colors = {kColor, {{"green", kGreen}, {"red", kRed}}};
  s.sizes = {kSize, {{"big", kBig}, {"small", kSmall}}};
  s.objects.push_back({0, "block", {2.0, 3.0}, "green", "big", {}});
  s.objects.push_back({1, "ball", {6.0, 1.0}, "red", "small", {}});
  s.agent_position = {0.0, 0.0};
  return s;
}

/// Straight-line waypoints from the agent to the object, spaced `step` apart
/// and ending exactly on the object. Moves the agent there.
inline std::vector<Point> navigate(Scene& scene, std::uint32_t target, double step = 1.0) {
  const Point goal = scene.at(target).position;
  const Point from = scene.agent_position;
  const double d = distance(from, goal);
  std::vector<Point> path;
  if (d == 0.0) {
    path.push_back(goal);
  } else {
    const auto n = static_cast<std::size_t>(std::ceil(d / step));
    for (std::size_t i = 1; i < n; ++i) {
      const double t = static_cast<double>(i) * step / d;
      path.push_back({from.x + t * (goal.x - from.x), from.y + t * (goal.y - from.y)});
    }
    path.push_back(goal);
  }
  scene.agent_position = goal;
  return path;
}

}  // namespace voxworld
