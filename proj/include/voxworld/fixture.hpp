#pragma once

// Synthetic speaker for the two-object starter world. Each word is a
// three-partial tone keyed by its vocabulary id; the referenced object adds a
// low carrier gliding upward across the whole clip, so every (pattern, object)
// pair has a distinct signature. The carrier must differ in shape, not level:
// per-row min-max normalization erases level differences. Every repetition
// draws its own +-3% pitch and amplitude jitter and its own noise floor.

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "voxworld/agent.hpp"
#include "voxworld/audio.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/features.hpp"
#include "voxworld/markers.hpp"
#include "voxworld/mlp.hpp"
#include "voxworld/world.hpp"

namespace voxworld::fixture {

enum class Slot : std::uint8_t { Fixed, ObjectName, ObjectColor, ObjectSize };

struct WordTemplate {
  WordFunction function;
  std::uint32_t vocab = 0;
  Slot slot = Slot::Fixed;
};

struct PatternTemplate {
  std::uint32_t id;
  std::string_view gloss;
  Intonation intonation;
  std::vector<WordTemplate> words;
  std::optional<ChainRole> role;
};

namespace patterns {
inline constexpr std::uint32_t kName = 0, kWhat = 1, kWhere = 2, kFind = 3, kHere = 4,
                               kColorQuestion = 5, kSizeQuestion = 6, kColorStatement = 7,
                               kSizeStatement = 8, kIsItGreen = 9, kYes = 10, kNo = 11;
}  // namespace patterns

/// Pattern inventory in the order a speaker teaches it: each question is
/// followed by its answer.
inline std::vector<PatternTemplate> pattern_inventory(bool extended) {
  using namespace starter_vocab;
  using WF = WordFunction;
  std::vector<PatternTemplate> out = {
      {patterns::kWhat, "what is it?", Intonation::Question,
       {{WF::Functor, kWhat}, {WF::Functor, kIs}, {WF::Pointer, kIt}}, std::nullopt},
      {patterns::kName, "this is a <obj>", Intonation::Statement,
       {{WF::Pointer, kThis}, {WF::Functor, kIs}, {WF::Functor, kA}, {WF::Object, 0, Slot::ObjectName}},
       std::nullopt},
      {patterns::kWhere, "where is the <obj>?", Intonation::Question,
       {{WF::Functor, kWhere}, {WF::Functor, kIs}, {WF::Functor, kThe}, {WF::Object, 0, Slot::ObjectName}},
       std::nullopt},
  };
  if (extended) {
    out.push_back({patterns::kHere, "here is the <obj>", Intonation::Statement,
                   {{WF::Pointer, kHere}, {WF::Functor, kIs}, {WF::Functor, kThe},
                    {WF::Object, 0, Slot::ObjectName}},
                   ChainRole::HereStatement});
  }
  out.push_back({patterns::kFind, "find the <obj>", Intonation::Command,
                 {{WF::Action, kFind}, {WF::Functor, kThe}, {WF::Object, 0, Slot::ObjectName}},
                 std::nullopt});
  if (extended) {
    const std::vector<PatternTemplate> more = {
        {patterns::kColorQuestion, "what color is it?", Intonation::Question,
         {{WF::Functor, kWhat}, {WF::PropertyName, kColor}, {WF::Functor, kIs}, {WF::Pointer, kIt}},
         std::nullopt},
        {patterns::kColorStatement, "it is <color>", Intonation::Statement,
         {{WF::Pointer, kIt}, {WF::Functor, kIs}, {WF::ObjectProperty, 0, Slot::ObjectColor}},
         std::nullopt},
        {patterns::kSizeQuestion, "what size is it?", Intonation::Question,
         {{WF::Functor, kWhat}, {WF::PropertyName, kSize}, {WF::Functor, kIs}, {WF::Pointer, kIt}},
         std::nullopt},
        {patterns::kSizeStatement, "it is <size>", Intonation::Statement,
         {{WF::Pointer, kIt}, {WF::Functor, kIs}, {WF::ObjectProperty, 0, Slot::ObjectSize}},
         std::nullopt},
        {patterns::kIsItGreen, "is it green?", Intonation::Question,
         {{WF::Functor, kIs}, {WF::Pointer, kIt}, {WF::ObjectProperty, kGreen}}, std::nullopt},
        {patterns::kYes, "yes", Intonation::Statement, {{WF::Positive, kYes}}, std::nullopt},
        {patterns::kNo, "no", Intonation::Statement, {{WF::Negative, kNo}}, std::nullopt},
    };
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

inline const PatternTemplate& find_pattern(const std::vector<PatternTemplate>& inv, std::uint32_t id) {
  for (const auto& p : inv) {
    if (p.id == id) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "pattern not in inventory", "phrase_pattern_id");
}

struct SynthOptions {
  double jitter = 0.03;
  double noise = 0.002;
  double lead_sec = 0.15;
  double gap_sec = 0.08;
};

struct Utterance {
  AudioClip clip;
  TaggedUtterance markers;  // clip_id left empty
};

inline double word_pitch(std::uint32_t vocab) { return 320.0 * std::pow(1.09, vocab); }
inline double carrier_pitch(std::uint32_t object) { return 130.0 + 70.0 * object; }

/// Renders one phrase and its exact markers.
inline Utterance synthesize(const PatternTemplate& pattern, const Scene& scene, std::uint32_t object,
                            std::mt19937_64& rng, const FeatureConfig& cfg = {},
                            const SynthOptions& opt = {}) {
  const double rate = cfg.sample_rate;
  const double pitch = 1.0 + opt.jitter * (2.0 * unit_uniform(rng) - 1.0);
  const double gain = 1.0 + opt.jitter * (2.0 * unit_uniform(rng) - 1.0);
  const auto& obj = scene.at(object);

  Utterance u;
  u.markers.object_id = object;
  u.markers.phrase_pattern_id = pattern.id;
  u.markers.phrase_intonation = pattern.intonation;
  u.markers.word_count = static_cast<std::uint32_t>(pattern.words.size());

  struct Placed {
    std::size_t start, stop;
    std::uint32_t vocab;
    Intonation intonation;
  };
  std::vector<Placed> placed;
  auto cursor = static_cast<std::size_t>(opt.lead_sec * rate);
  for (std::size_t i = 0; i < pattern.words.size(); ++i) {
    const auto& w = pattern.words[i];
    std::uint32_t vocab = w.vocab;
    switch (w.slot) {
      case Slot::Fixed: break;
      case Slot::ObjectName: vocab = starter_vocab::kBlock + object; break;
      case Slot::ObjectColor: vocab = scene.colors.values.at(obj.color); break;
      case Slot::ObjectSize: vocab = scene.sizes.values.at(obj.size); break;
    }
    const bool last = i + 1 == pattern.words.size();
    const auto into = last ? pattern.intonation : Intonation::Statement;
    const auto len = static_cast<std::size_t>((0.20 + 0.02 * (vocab % 4)) * rate);
    placed.push_back({cursor, cursor + len, vocab, into});
    u.markers.words.push_back({0, 0, w.function, into, vocab});
    cursor += len + static_cast<std::size_t>(opt.gap_sec * rate);
  }
  const std::size_t speech_end = placed.back().stop;
  const std::size_t total = speech_end + static_cast<std::size_t>(opt.lead_sec * rate);

  std::vector<double> s(total, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double carrier = carrier_pitch(object) * pitch;
  double carrier_phase = 0.0;
  for (std::size_t n = 0; n < total; ++n) {
    carrier_phase += two_pi * carrier * (1.0 + 0.6 * n / total) / rate;
    s[n] += 0.2 * std::sin(carrier_phase);
  }
  const auto ramp = static_cast<std::size_t>(0.01 * rate);
  for (const auto& p : placed) {
    const double f0 = word_pitch(p.vocab) * pitch;
    const double len = static_cast<double>(p.stop - p.start);
    double phase[3] = {0, 0, 0};
    const double ratios[3] = {1.0, 2.31, 3.73};
    const double amps[3] = {0.5, 0.3, 0.2};
    const double loud = p.intonation == Intonation::Command ? 1.5 : 1.0;
    for (std::size_t n = p.start; n < p.stop; ++n) {
      const double t = (n - p.start) / len;
      double glide = 1.0;
      if (p.intonation == Intonation::Question) glide = 1.0 + 0.25 * t;
      if (p.intonation == Intonation::Command) glide = 1.0 - 0.15 * t;
      const std::size_t k = n - p.start;
      const std::size_t from_end = p.stop - 1 - n;
      double env = 1.0;
      if (k < ramp) env = 0.5 * (1 - std::cos(std::numbers::pi * k / ramp));
      if (from_end < ramp) env = std::min(env, 0.5 * (1 - std::cos(std::numbers::pi * from_end / ramp)));
      for (int h = 0; h < 3; ++h) {
        phase[h] += two_pi * f0 * glide * ratios[h] / rate;
        s[n] += loud * amps[h] * env * std::sin(phase[h]);
      }
    }
  }

  u.clip.sample_rate = cfg.sample_rate;
  u.clip.samples.resize(total);
  for (std::size_t n = 0; n < total; ++n) {
    const double noise = opt.noise * (2.0 * unit_uniform(rng) - 1.0);
    u.clip.samples[n] = static_cast<float>(std::clamp(0.55 * gain * s[n] + noise, -1.0, 1.0));
  }

  const std::size_t frames = frame_count(total, cfg.frame_size, cfg.hop_size);
  for (std::size_t i = 0; i < placed.size(); ++i) {
    auto& w = u.markers.words[i];
    w.start_frame = static_cast<std::uint32_t>(placed[i].start / cfg.hop_size);
    w.end_frame = static_cast<std::uint32_t>(
        std::min(frames, (placed[i].stop + cfg.hop_size - 1) / cfg.hop_size));
  }
  return u;
}

struct FixtureOptions {
  bool extended = false;
  std::size_t repetitions = 5;
  std::uint64_t seed = 2024;
  SynthOptions synth;
};

struct FixtureItem {
  std::string utterance_id;
  std::string clip_id;
  std::uint32_t pattern;
  std::uint32_t object;
  std::size_t repetition;  // 1-based
};

struct Fixture {
  Corpus corpus;
  Agent agent;
  std::vector<FixtureItem> items;
  std::vector<PatternTemplate> inventory;
};

/// The inventory split into chains: each question or command followed by the
/// statements that answer it.
inline std::vector<std::vector<const PatternTemplate*>> chains(const std::vector<PatternTemplate>& inv) {
  std::vector<std::vector<const PatternTemplate*>> out;
  for (const auto& p : inv) {
    if (out.empty() || p.intonation != Intonation::Statement) out.emplace_back();
    out.back().push_back(&p);
  }
  return out;
}

/// Teaches the starter world: for each repetition and object, every chain,
/// registered through the agent so roles and answer pairs are recorded. The
/// first repetition follows inventory order; later ones rotate the chain
/// order, so the every-5th split does not always hold out the same pattern.
inline Fixture make_fixture(const FixtureOptions& opt = {}, const FeatureConfig& cfg = {}) {
  Fixture f{Corpus(cfg), Agent(preliminary_world()), {}, pattern_inventory(opt.extended)};
  std::mt19937_64 rng(opt.seed);
  const auto groups = chains(f.inventory);
  for (std::size_t rep = 1; rep <= opt.repetitions; ++rep) {
    std::vector<const PatternTemplate*> order;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      const auto& g = groups[(c + rep - 1) % groups.size()];
      order.insert(order.end(), g.begin(), g.end());
    }
    for (const auto& obj : f.agent.scene().objects) {
      const auto object = obj.object_id;
      for (const auto* pp : order) {
        const auto& p = *pp;
        auto u = synthesize(p, f.agent.scene(), object, rng, cfg, opt.synth);
        u.markers.clip_id = f.corpus.add_clip(std::move(u.clip));
        const auto id = f.agent.register_training_phrase(f.corpus, u.markers, p.role);
        f.items.push_back({id, u.markers.clip_id, p.id, object, rep});
      }
    }
  }
  return f;
}

}  // namespace voxworld::fixture
