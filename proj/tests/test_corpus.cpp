#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "support.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/dataset.hpp"

using namespace voxworld;
namespace fs = std::filesystem;

namespace {

AudioClip tone(std::mt19937_64& rng, std::size_t n = 8000) {
  std::uniform_real_distribution<float> d(-0.3f, 0.3f);
  AudioClip c{std::vector<float>(n), 16000, ""};
  for (auto& v : c.samples) v = d(rng);
  return c;
}

TaggedUtterance markers_for(const std::string& clip, std::uint32_t object, std::uint32_t pattern,
                            std::uint32_t words = 2) {
  TaggedUtterance u;
  u.clip_id = clip;
  u.object_id = object;
  u.phrase_pattern_id = pattern;
  u.phrase_intonation = Intonation::Question;
  u.word_count = words;
  for (std::uint32_t i = 0; i < words; ++i) {
    u.words.push_back({i * 4, i * 4 + 3, WordFunction::Object, Intonation::Statement, i});
  }
  return u;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

std::string path_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.path();
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

}  // namespace

TEST(Markers, ValidMarkersPass) {
  EXPECT_NO_THROW(validate_markers(markers_for("c", 12, 21, 10), 100));
}

TEST(Markers, EachInvariantReportsItsField) {
  auto bad = [](auto mutate) {
    auto u = markers_for("c", 1, 1, 2);
    mutate(u);
    return path_of([&] { validate_markers(u, 20); });
  };
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.clip_id.clear(); }), "clip_id");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.object_id = 13; }), "object_id");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.phrase_pattern_id = 22; }), "phrase_pattern_id");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.word_count = 3; }), "words");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.words[1].start_frame = 2; }), "words[1].start_frame");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.words[0].end_frame = 0; }), "words[0].end_frame");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.words[1].end_frame = 21; }), "words[1].end_frame");
  EXPECT_EQ(bad([](TaggedUtterance& u) { u.words[0].vocab_id = 40; }), "words[0].vocab_id");
  EXPECT_EQ(bad([](TaggedUtterance& u) {
              u.word_count = 0;
              u.words.clear();
            }),
            "word_count");
  EXPECT_EQ(bad([](TaggedUtterance& u) {
              u.word_count = 11;
              u.words.resize(11);
            }),
            "word_count");
}

TEST(Markers, JsonRoundTripAndParseErrors) {
  const auto u = markers_for("clip-000001", 3, 7, 3);
  const nlohmann::json j = u;
  EXPECT_EQ(parse_markers(j), u);
  auto j2 = j;
  j2["words"][1]["function"] = "Verb";
  EXPECT_EQ(path_of([&] { parse_markers(j2); }), "words[1].function");
  auto j3 = j;
  j3.erase("object_id");
  EXPECT_EQ(code_of([&] { parse_markers(j3); }), ErrorCode::InvalidMarkers);
  auto j4 = j;
  j4["phrase_intonation"] = 2;
  EXPECT_EQ(parse_markers(j4).phrase_intonation, Intonation::Command);
}

TEST(Markers, HeadTableShape) {
  std::vector<std::size_t> classes;
  for (const auto& h : kHeadTable) classes.push_back(h.class_count);
  EXPECT_EQ(classes, (std::vector<std::size_t>{13, 22, 10, 4, 4, 11, 40}));
  EXPECT_FALSE(kEmotionHead.active);
  EXPECT_EQ(code_of([] { head_by_name("mood"); }), ErrorCode::MissingHead);
  EXPECT_EQ(label_of(HeadKind::WordCount, markers_for("c", 0, 0, 3), nullptr), 2u);
}

TEST(Corpus, IdsAndValidation) {
  std::mt19937_64 rng(1);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  EXPECT_EQ(clip, "clip-000001");
  EXPECT_EQ(c.add_utterance(markers_for(clip, 0, 0)), "utt-000001");
  EXPECT_EQ(code_of([&] { c.add_utterance(markers_for("clip-999", 0, 0)); }), ErrorCode::UnknownClip);
  auto too_long = markers_for(clip, 0, 0);
  too_long.words[1].end_frame = static_cast<std::uint32_t>(c.frames_of(clip) + 1);
  EXPECT_EQ(code_of([&] { c.add_utterance(too_long); }), ErrorCode::InvalidMarkers);
  EXPECT_EQ(code_of([&] { c.add_clip(AudioClip{{}, 16000, ""}); }), ErrorCode::EmptyClip);
  EXPECT_EQ(c.records().size(), 1u);
}

TEST(Corpus, ReadinessCrossesThresholdAtFive) {
  std::mt19937_64 rng(2);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  for (int i = 0; i < 4; ++i) c.add_utterance(markers_for(clip, 0, 3));
  EXPECT_EQ(c.readiness()[3].repetitions, 4u);
  EXPECT_FALSE(c.readiness()[3].ready);
  const auto last = c.add_utterance(markers_for(clip, 0, 3));
  EXPECT_TRUE(c.readiness()[3].ready);
  EXPECT_FALSE(c.readiness()[4].ready);
  c.supersede(last);
  EXPECT_FALSE(c.readiness()[3].ready);
  EXPECT_EQ(readiness_json(c).at("patterns").size(), 22u);
}

TEST(Corpus, PendingCorrections) {
  std::mt19937_64 rng(3);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  const auto a = c.add_utterance(markers_for(clip, 0, 1), "", 4);
  const auto b = c.add_utterance(markers_for(clip, 0, 1), "", 5);
  EXPECT_EQ(c.pending_count(), 2u);
  EXPECT_EQ(c.mark_pending_consumed({a}), std::vector<std::string>{a});
  EXPECT_EQ(c.pending_count(), 1u);
  EXPECT_EQ(c.mark_pending_consumed(), std::vector<std::string>{b});
  EXPECT_EQ(c.record(a).source_turn, 4u);
}

TEST(Corpus, DiskRoundTrip) {
  std::mt19937_64 rng(4);
  testutil::TempDir dir("corpus");
  Corpus c;
  for (int i = 0; i < 3; ++i) {
    const auto clip = c.add_clip(tone(rng));
    c.add_utterance(markers_for(clip, i, i + 1), i == 1 ? "answer" : "");
  }
  c.supersede("utt-000002");
  c.add_utterance(markers_for("clip-000001", 5, 5), "", 9);
  save_corpus(c, dir.path());
  const auto back = load_corpus(dir.path());
  EXPECT_EQ(back.records(), c.records());
  EXPECT_EQ(back.config(), c.config());
  ASSERT_EQ(back.clips().size(), c.clips().size());
  for (const auto& [id, clip] : c.clips()) EXPECT_EQ(back.clip(id).samples, clip.samples);
  auto more = back;
  EXPECT_EQ(more.add_clip(tone(rng)), "clip-000004");
}

TEST(Corpus, CorruptManifestIsSchemaMismatch) {
  testutil::TempDir dir("corrupt");
  save_corpus(Corpus{}, dir.path());
  binio::write_text_atomic(dir.path() / "manifest.json", "{\"schema_version\": 1,\n  oops");
  EXPECT_EQ(code_of([&] { load_corpus(dir.path()); }), ErrorCode::SchemaVersionMismatch);
  binio::write_text_atomic(dir.path() / "manifest.json", "{\"schema_version\": 99}");
  EXPECT_EQ(code_of([&] { load_corpus(dir.path()); }), ErrorCode::SchemaVersionMismatch);
}

TEST(Dataset, FiveRepsOfTwoClassesSplitEightTwo) {
  std::mt19937_64 rng(5);
  Corpus c;
  // Interleave the classes so corpus order differs from class order.
  for (int rep = 0; rep < 5; ++rep) {
    for (std::uint32_t obj : {1u, 0u}) c.add_utterance(markers_for(c.add_clip(tone(rng)), obj, 0));
  }
  const auto b = build_dataset(c, head_by_name("object"));
  EXPECT_EQ(b.train_labels, (std::vector<std::uint32_t>{0, 0, 0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(b.test_labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(b.train_data.rows(), 8u);
  EXPECT_EQ(b.train_data.cols(), 53u * 64u);
  EXPECT_EQ(b.test_data.rows(), 2u);
  // The held-out object-0 row is the fifth object-0 clip, i.e. clip 10.
  const auto fifth = clip_grid(c.clip("clip-000010"), FeatureExtractor(c.config())).flatten();
  EXPECT_EQ(std::vector<float>(b.test_data.row(0).begin(), b.test_data.row(0).end()), fifth);
}

TEST(Dataset, SplitSizesForAnyRepetitionCounts) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    Corpus c;
    const auto clip = c.add_clip(tone(rng, 2000));
    std::vector<std::size_t> counts(3);
    for (auto& n : counts) n = 2 + rng() % 9;
    for (std::uint32_t k = 0; k < 3; ++k) {
      for (std::size_t r = 0; r < counts[k]; ++r) c.add_utterance(markers_for(clip, 0, k, 1));
    }
    const auto b = build_dataset(c, head_by_name("phrase_pattern"));
    std::size_t want_test = 0, want_total = 0;
    for (auto n : counts) {
      want_test += n / 5;
      want_total += n;
    }
    EXPECT_EQ(b.test_labels.size(), want_test);
    EXPECT_EQ(b.train_labels.size() + b.test_labels.size(), want_total);
    EXPECT_TRUE(std::is_sorted(b.train_labels.begin(), b.train_labels.end()));
    EXPECT_TRUE(std::is_sorted(b.test_labels.begin(), b.test_labels.end()));
  }
}

TEST(Dataset, PerWordHeadsEmitOneRowPerWord) {
  std::mt19937_64 rng(7);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  for (int i = 0; i < 3; ++i) c.add_utterance(markers_for(clip, 0, 0, 2));
  const auto b = build_dataset(c, head_by_name("vocabulary"));
  EXPECT_EQ(b.train_labels, (std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_TRUE(b.test_labels.empty());
}

TEST(Dataset, SingleRepetitionClassIsInsufficient) {
  std::mt19937_64 rng(8);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  c.add_utterance(markers_for(clip, 0, 0));
  c.add_utterance(markers_for(clip, 0, 0));
  c.add_utterance(markers_for(clip, 1, 0));
  EXPECT_EQ(path_of([&] { build_dataset(c, head_by_name("object")); }), "object.class[1]");
  EXPECT_EQ(code_of([] { build_dataset(Corpus{}, head_by_name("object")); }), ErrorCode::InsufficientData);
  EXPECT_EQ(code_of([&] { build_dataset(c, kEmotionHead); }), ErrorCode::MissingHead);
}

TEST(Bundle, ExactlyFourFilesRoundTripAndDeterministic) {
  std::mt19937_64 rng(9);
  Corpus c;
  for (int rep = 0; rep < 5; ++rep) {
    for (std::uint32_t obj : {0u, 1u}) c.add_utterance(markers_for(c.add_clip(tone(rng)), obj, 0));
  }
  const auto b = build_dataset(c, head_by_name("object"));
  testutil::TempDir a("bundle-a"), z("bundle-b");
  export_bundle(b, a.path());
  export_bundle(build_dataset(c, head_by_name("object")), z.path());
  const std::set<std::string> four = {"train_data.f32", "test_data.f32", "train_labels.u32", "test_labels.u32"};
  EXPECT_EQ(listing(a.path()), four);
  for (const auto& f : four) EXPECT_EQ(testutil::file_bytes(a.path() / f), testutil::file_bytes(z.path() / f)) << f;
  EXPECT_EQ(import_bundle(a.path(), head_by_name("object")), b);
  // Header: magic, version, dtype, rows, cols.
  const auto bytes = testutil::file_bytes(a.path() / "train_labels.u32");
  ASSERT_EQ(bytes.size(), 16u + 8u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FTDS");
  EXPECT_EQ(bytes[8], 8);
  EXPECT_EQ(bytes[12], 1);
}

TEST(Bundle, MissingFileAndBadLabels) {
  std::mt19937_64 rng(10);
  Corpus c;
  const auto clip = c.add_clip(tone(rng));
  for (int i = 0; i < 2; ++i) c.add_utterance(markers_for(clip, 0, 0));
  const auto b = build_dataset(c, head_by_name("object"));
  testutil::TempDir dir("bundle-bad");
  export_bundle(b, dir.path());
  fs::remove(dir.path() / "test_labels.u32");
  EXPECT_EQ(code_of([&] { import_bundle(dir.path(), head_by_name("object")); }), ErrorCode::MissingFile);

  auto wrong = b;
  wrong.train_labels[0] = 13;
  EXPECT_EQ(path_of([&] { export_bundle(wrong, dir.path()); }), "train_labels.u32[0]");
  auto short_labels = b;
  short_labels.train_labels.pop_back();
  EXPECT_EQ(code_of([&] { export_bundle(short_labels, dir.path()); }), ErrorCode::DimensionMismatch);
}
