#pragma once

// Per-head datasets: four arrays (train/test data, train/test labels) built
// from the corpus, and their four-file binary container.
//
// File format, little-endian: "FTDS" | version u16 | dtype u16 (0 = f32,
// 1 = u32) | rows u32 | cols u32 | row-major payload.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "voxworld/binio.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/error.hpp"
#include "voxworld/features.hpp"
#include "voxworld/markers.hpp"
#include "voxworld/matrix.hpp"

namespace voxworld {

inline constexpr std::uint16_t kBundleVersion = 1;
inline constexpr std::size_t kTestEvery = 5;

struct DatasetBundle {
  HeadSpec head;
  Matrix<float> train_data;
  Matrix<float> test_data;
  std::vector<std::uint32_t> train_labels;
  std::vector<std::uint32_t> test_labels;

  bool operator==(const DatasetBundle&) const = default;
};

inline void validate_bundle(const DatasetBundle& b) {
  if (b.train_data.rows() != b.train_labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "train rows disagree with train labels",
                "train_labels.u32");
  }
  if (b.test_data.rows() != b.test_labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "test rows disagree with test labels",
                "test_labels.u32");
  }
  if (b.test_data.rows() > 0 && b.train_data.rows() > 0 &&
      b.test_data.cols() != b.train_data.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "train and test widths differ", "test_data.f32");
  }
  auto check = [&](const std::vector<std::uint32_t>& labels, const char* file) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= b.head.class_count) {
        throw Error(ErrorCode::InvalidArgument,
                    "label " + std::to_string(labels[i]) + " >= class count " +
                        std::to_string(b.head.class_count),
                    std::string(file) + "[" + std::to_string(i) + "]");
      }
    }
  };
  check(b.train_labels, "train_labels.u32");
  check(b.test_labels, "test_labels.u32");
}

/// Rows are ordered by (class, repetition); the repetition index counts, from
/// one, the occurrences of a class in corpus order, and every fifth one is
/// held out for testing. Per-word heads take the word's span columns of the
/// normalized clip matrix, re-fit to the grid width.
inline DatasetBundle build_dataset(const Corpus& corpus, const HeadSpec& head,
                                   const FeatureConfig& cfg) {
  if (!head.active) {
    throw Error(ErrorCode::MissingHead, "head '" + std::string(head.name) + "' is inactive",
                std::string(head.name));
  }
  FeatureExtractor fx(cfg);
  std::map<std::string, FeatureMatrix> normalized;
  auto features_of = [&](const std::string& clip_id) -> const FeatureMatrix& {
    auto it = normalized.find(clip_id);
    if (it == normalized.end()) {
      it = normalized.emplace(clip_id, normalize(fx.extract(corpus.clip(clip_id)))).first;
    }
    return it->second;
  };

  struct Example {
    std::uint32_t label;
    std::size_t repetition;
    std::vector<float> row;
  };
  std::vector<Example> examples;
  std::map<std::uint32_t, std::size_t> reps;
  for (const auto& rec : corpus.records()) {
    if (!rec.active()) continue;
    const auto& u = rec.markers;
    const auto& fm = features_of(u.clip_id);
    if (head.granularity == Granularity::PerUtterance) {
      const auto label = label_of(head.kind, u, nullptr);
      examples.push_back({label, ++reps[label], fit_to_grid(fm, cfg).flatten()});
    } else {
      for (std::size_t i = 0; i < u.words.size(); ++i) {
        const auto& w = u.words[i];
        if (w.end_frame > fm.frames()) {
          throw Error(ErrorCode::InvalidMarkers, "span past end of clip under this config",
                      rec.id + ".words[" + std::to_string(i) + "].end_frame");
        }
        const auto label = label_of(head.kind, u, &w);
        examples.push_back(
            {label, ++reps[label], fit_columns(fm, w.start_frame, w.end_frame, cfg).flatten()});
      }
    }
  }
  if (examples.empty()) {
    throw Error(ErrorCode::InsufficientData, "corpus has no active utterances",
                std::string(head.name));
  }
  for (const auto& [label, count] : reps) {
    if (count < 2) {
      throw Error(ErrorCode::InsufficientData,
                  "class " + std::to_string(label) + " of head '" + std::string(head.name) +
                      "' has " + std::to_string(count) + " repetition(s), need 2",
                  std::string(head.name) + ".class[" + std::to_string(label) + "]");
    }
  }
  std::stable_sort(examples.begin(), examples.end(), [](const Example& a, const Example& b) {
    return a.label != b.label ? a.label < b.label : a.repetition < b.repetition;
  });

  const std::size_t width = cfg.grid_width();
  std::vector<float> train, test;
  DatasetBundle bundle{head, {}, {}, {}, {}};
  for (const auto& e : examples) {
    const bool held_out = e.repetition % kTestEvery == 0;
    auto& data = held_out ? test : train;
    data.insert(data.end(), e.row.begin(), e.row.end());
    (held_out ? bundle.test_labels : bundle.train_labels).push_back(e.label);
  }
  bundle.train_data = Matrix<float>(bundle.train_labels.size(), width, std::move(train));
  bundle.test_data = Matrix<float>(bundle.test_labels.size(), width, std::move(test));
  return bundle;
}

inline DatasetBundle build_dataset(const Corpus& corpus, const HeadSpec& head) {
  return build_dataset(corpus, head, corpus.config());
}

namespace bundle_detail {

inline constexpr const char* kFiles[4] = {"train_data.f32", "test_data.f32", "train_labels.u32",
                                          "test_labels.u32"};

template <typename T>
binio::Bytes encode(std::uint16_t dtype, std::size_t rows, std::size_t cols,
                    const std::vector<T>& values) {
  binio::Bytes out;
  out.reserve(16 + values.size() * 4);
  binio::put_bytes(out, "FTDS");
  binio::put<std::uint16_t>(out, kBundleVersion);
  binio::put<std::uint16_t>(out, dtype);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(cols));
  for (T v : values) binio::put<T>(out, v);
  return out;
}

template <typename T>
std::vector<T> decode(const std::filesystem::path& path, std::uint16_t dtype, std::size_t& rows,
                      std::size_t& cols) {
  const auto name = path.filename().string();
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, name);
  if (bytes.size() < 16 || r.get_string(4) != "FTDS") {
    throw Error(ErrorCode::SchemaVersionMismatch, "bad magic", name);
  }
  if (r.get<std::uint16_t>() != kBundleVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "unsupported version", name);
  }
  if (r.get<std::uint16_t>() != dtype) {
    throw Error(ErrorCode::MalformedContainer, "unexpected element type", name);
  }
  rows = r.get<std::uint32_t>();
  cols = r.get<std::uint32_t>();
  if (r.remaining() != static_cast<std::uint64_t>(rows) * cols * sizeof(T)) {
    throw Error(ErrorCode::MalformedContainer, "payload size disagrees with header", name);
  }
  std::vector<T> values(rows * cols);
  for (auto& v : values) v = r.get<T>();
  return values;
}

}  // namespace bundle_detail

/// Writes exactly the four bundle files into `dir`.
inline void export_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  using namespace bundle_detail;
  validate_bundle(b);
  binio::write_file_atomic(dir / kFiles[0], encode<float>(0, b.train_data.rows(),
                                                          b.train_data.cols(), b.train_data.data()));
  binio::write_file_atomic(dir / kFiles[1], encode<float>(0, b.test_data.rows(),
                                                          b.test_data.cols(), b.test_data.data()));
  binio::write_file_atomic(dir / kFiles[2],
                           encode<std::uint32_t>(1, b.train_labels.size(), 1, b.train_labels));
  binio::write_file_atomic(dir / kFiles[3],
                           encode<std::uint32_t>(1, b.test_labels.size(), 1, b.test_labels));
}

inline DatasetBundle import_bundle(const std::filesystem::path& dir, const HeadSpec& head) {
  using namespace bundle_detail;
  for (const char* f : kFiles) {
    if (!std::filesystem::exists(dir / f)) {
      throw Error(ErrorCode::MissingFile, std::string("bundle is missing ") + f, f);
    }
  }
  DatasetBundle b{head, {}, {}, {}, {}};
  std::size_t rows = 0, cols = 0;
  auto train = decode<float>(dir / kFiles[0], 0, rows, cols);
  b.train_data = Matrix<float>(rows, cols, std::move(train));
  auto test = decode<float>(dir / kFiles[1], 0, rows, cols);
  b.test_data = Matrix<float>(rows, cols, std::move(test));
  b.train_labels = decode<std::uint32_t>(dir / kFiles[2], 1, rows, cols);
  if (cols != 1) throw Error(ErrorCode::MalformedContainer, "labels must be one column", kFiles[2]);
  b.test_labels = decode<std::uint32_t>(dir / kFiles[3], 1, rows, cols);
  if (cols != 1) throw Error(ErrorCode::MalformedContainer, "labels must be one column", kFiles[3]);
  validate_bundle(b);
  return b;
}

}  // namespace voxworld
