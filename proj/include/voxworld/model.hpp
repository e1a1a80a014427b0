#pragma once

// Seven independent per-parameter classifiers over flattened 53 x Z grids.
//
// Head bundle file, little-endian:
//   "FTMH" | version u16 | feature-config SHA-256 (32 bytes) | head count u8
//   per head: name length u8 + bytes | layer count u8 + u32 sizes |
//             float32 w1 (input-major), b1, w2, b2 |
//             f64 train acc | f64 test acc | u32 epochs + f64 loss per epoch

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxworld/binio.hpp"
#include "voxworld/dataset.hpp"
#include "voxworld/error.hpp"
#include "voxworld/features.hpp"
#include "voxworld/hash.hpp"
#include "voxworld/markers.hpp"
#include "voxworld/mlp.hpp"

namespace voxworld {

inline constexpr std::uint16_t kHeadBundleVersion = 1;

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  std::size_t hidden_width = 128;
  double weight_decay = 0.0;
  bool shuffle = true;

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive", "learning_rate");
    }
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1", "epochs");
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1", "batch_size");
    if (hidden_width < 1) {
      throw Error(ErrorCode::InvalidArgument, "hidden_width must be >= 1", "hidden_width");
    }
  }
  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
       {"epochs", c.epochs},               {"batch_size", c.batch_size},
       {"seed", c.seed},                   {"hidden_width", c.hidden_width},
       {"weight_decay", c.weight_decay},   {"shuffle", c.shuffle}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.shuffle = j.value("shuffle", c.shuffle);
}

struct TrainedHead {
  HeadSpec head;
  MlpParams<float> params;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_history;

  std::vector<double> probabilities(std::span<const float> x) const {
    return mlp_predict<float>(params, x);
  }
  std::uint32_t classify(std::span<const float> x) const {
    const auto p = probabilities(x);
    return static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  bool operator==(const TrainedHead&) const = default;
};

struct Evaluation {
  double accuracy = 0.0;
  Matrix<std::uint32_t> confusion;  // row = true class, column = predicted
};

inline Evaluation evaluate(const TrainedHead& head, const Matrix<float>& data,
                           std::span<const std::uint32_t> labels) {
  if (data.rows() > 0 && data.cols() != head.params.inputs) {
    throw Error(ErrorCode::DimensionMismatch,
                "rows have width " + std::to_string(data.cols()) + ", head expects " +
                    std::to_string(head.params.inputs),
                std::string(head.head.name));
  }
  Evaluation e{0.0, Matrix<std::uint32_t>(head.head.class_count, head.head.class_count, 0)};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto predicted = head.classify(data.row(i));
    ++e.confusion(labels[i], predicted);
    if (predicted == labels[i]) ++correct;
  }
  e.accuracy = data.rows() ? static_cast<double>(correct) / data.rows() : 0.0;
  return e;
}

/// Confusion over the bundle's held-out split.
inline Evaluation evaluate(const TrainedHead& head, const DatasetBundle& bundle) {
  if (bundle.head.kind != head.head.kind) {
    throw Error(ErrorCode::DimensionMismatch, "bundle belongs to another head",
                std::string(bundle.head.name));
  }
  return evaluate(head, bundle.test_data, bundle.test_labels);
}

/// Mini-batch SGD with momentum on mean softmax cross-entropy. Weight init and
/// shuffling draw from two generators seeded from cfg.seed, so a given bundle
/// and config always yield the same parameters.
inline TrainedHead train_head(const DatasetBundle& bundle, const TrainConfig& cfg,
                              std::size_t expected_width) {
  cfg.validate();
  validate_bundle(bundle);
  const auto& data = bundle.train_data;
  if (data.rows() == 0) {
    throw Error(ErrorCode::InsufficientData, "training split is empty",
                std::string(bundle.head.name));
  }
  if (data.cols() != expected_width) {
    throw Error(ErrorCode::DimensionMismatch,
                "row width " + std::to_string(data.cols()) + " != " +
                    std::to_string(expected_width),
                std::string(bundle.head.name));
  }

  TrainedHead out{bundle.head, MlpParams<float>(expected_width, cfg.hidden_width,
                                                bundle.head.class_count), 0.0, 0.0, {}};
  std::mt19937_64 init_rng(cfg.seed);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  out.params.initialize(init_rng);

  MlpParams<float> velocity(expected_width, cfg.hidden_width, bundle.head.class_count);
  MlpParams<float> grad = velocity;
  std::vector<std::span<const float>> batch_rows;
  std::vector<std::uint32_t> batch_labels;
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);
  const auto decay = static_cast<float>(cfg.weight_decay);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng() % i]);
      }
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grad.for_each_tensor([](auto& t) { std::fill(t.begin(), t.end(), 0.0f); });
      batch_rows.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < stop; ++k) {
        batch_rows.push_back(data.row(order[k]));
        batch_labels.push_back(bundle.train_labels[order[k]]);
      }
      epoch_loss += mlp_backprop_batch<float>(out.params, batch_rows, batch_labels, grad);
      if (decay != 0.0f) {
        for (std::size_t i = 0; i < grad.w1.size(); ++i) grad.w1[i] += decay * out.params.w1[i];
        for (std::size_t i = 0; i < grad.w2.size(); ++i) grad.w2[i] += decay * out.params.w2[i];
      }
      auto step = [&](std::vector<float>& w, std::vector<float>& v, const std::vector<float>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] - lr * g[i];
          w[i] += v[i];
        }
      };
      step(out.params.w1, velocity.w1, grad.w1);
      step(out.params.b1, velocity.b1, grad.b1);
      step(out.params.w2, velocity.w2, grad.w2);
      step(out.params.b2, velocity.b2, grad.b2);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !out.params.all_finite()) {
      throw Error(ErrorCode::NumericalDivergence,
                  "non-finite loss or parameters at epoch " + std::to_string(epoch + 1),
                  std::string(bundle.head.name) + ".epoch[" + std::to_string(epoch + 1) + "]");
    }
    out.loss_history.push_back(epoch_loss);
  }
  out.train_accuracy = evaluate(out, bundle.train_data, bundle.train_labels).accuracy;
  out.test_accuracy = evaluate(out, bundle.test_data, bundle.test_labels).accuracy;
  return out;
}

/// Per-head probability vectors in head-table order.
struct Prediction {
  std::array<std::vector<double>, kHeadCount> probs;

  const std::vector<double>& of(HeadKind kind) const { return probs[head_index(kind)]; }
  std::uint32_t argmax(HeadKind kind) const {
    const auto& p = of(kind);
    return static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  double confidence(HeadKind kind) const {
    const auto& p = of(kind);
    return *std::max_element(p.begin(), p.end());
  }
};

/// The seven trained heads plus the hash of the feature config they expect.
struct HeadSet {
  Digest feature_hash{};
  std::vector<TrainedHead> heads;

  const TrainedHead* find(HeadKind kind) const {
    for (const auto& h : heads) {
      if (h.head.kind == kind) return &h;
    }
    return nullptr;
  }
  bool complete() const {
    return std::all_of(kHeadTable.begin(), kHeadTable.end(),
                       [&](const HeadSpec& h) { return find(h.kind) != nullptr; });
  }
  bool operator==(const HeadSet&) const = default;
};

inline Prediction predict(const HeadSet& set, const FeatureGrid& grid,
                          const Digest& expected_hash) {
  if (set.feature_hash != expected_hash) {
    throw Error(ErrorCode::ConfigHashMismatch,
                "heads were trained under feature config " + to_hex(set.feature_hash),
                "feature_config_hash");
  }
  const auto x = grid.flatten();
  Prediction p;
  for (std::size_t i = 0; i < kHeadTable.size(); ++i) {
    const auto* head = set.find(kHeadTable[i].kind);
    if (!head) {
      throw Error(ErrorCode::MissingHead, "head '" + std::string(kHeadTable[i].name) + "' missing",
                  std::string(kHeadTable[i].name));
    }
    if (head->params.inputs != x.size()) {
      throw Error(ErrorCode::DimensionMismatch, "grid size does not match head input",
                  std::string(kHeadTable[i].name));
    }
    p.probs[i] = head->probabilities(x);
  }
  return p;
}

inline binio::Bytes encode_heads(const HeadSet& set) {
  binio::Bytes out;
  binio::put_bytes(out, "FTMH");
  binio::put<std::uint16_t>(out, kHeadBundleVersion);
  out.insert(out.end(), set.feature_hash.begin(), set.feature_hash.end());
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(set.heads.size()));
  for (const auto& h : set.heads) {
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(h.head.name.size()));
    binio::put_bytes(out, h.head.name);
    const auto sizes = h.params.layer_sizes();
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(sizes.size()));
    for (auto s : sizes) binio::put<std::uint32_t>(out, s);
    for (const auto* t : {&h.params.w1, &h.params.b1, &h.params.w2, &h.params.b2}) {
      for (float v : *t) binio::put<float>(out, v);
    }
    binio::put<double>(out, h.train_accuracy);
    binio::put<double>(out, h.test_accuracy);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.loss_history.size()));
    for (double l : h.loss_history) binio::put<double>(out, l);
  }
  return out;
}

inline HeadSet decode_heads(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes, "head bundle");
  if (bytes.size() < 4 || r.get_string(4) != "FTMH") {
    throw Error(ErrorCode::SchemaVersionMismatch, "bad head bundle magic", "magic");
  }
  if (r.get<std::uint16_t>() != kHeadBundleVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "unsupported head bundle version", "version");
  }
  HeadSet set;
  const auto hash = r.get_span(32);
  std::copy(hash.begin(), hash.end(), set.feature_hash.begin());
  const auto count = r.get<std::uint8_t>();
  for (std::size_t i = 0; i < count; ++i) {
    const auto name = r.get_string(r.get<std::uint8_t>());
    const HeadSpec& spec = head_by_name(name);
    if (r.get<std::uint8_t>() != 3) {
      throw Error(ErrorCode::SchemaVersionMismatch, "expected three layer sizes", name);
    }
    const auto in = r.get<std::uint32_t>();
    const auto hid = r.get<std::uint32_t>();
    const auto out = r.get<std::uint32_t>();
    if (out != spec.class_count) {
      throw Error(ErrorCode::SchemaVersionMismatch, "class count disagrees with head table", name);
    }
    TrainedHead h{spec, MlpParams<float>(in, hid, out), 0.0, 0.0, {}};
    if (r.remaining() < (h.params.w1.size() + h.params.b1.size() + h.params.w2.size() +
                         h.params.b2.size()) * sizeof(float)) {
      throw Error(ErrorCode::MalformedContainer, "truncated weights", name);
    }
    h.params.for_each_tensor([&](std::vector<float>& t) {
      for (auto& v : t) v = r.get<float>();
    });
    h.train_accuracy = r.get<double>();
    h.test_accuracy = r.get<double>();
    const auto epochs = r.get<std::uint32_t>();
    if (r.remaining() < static_cast<std::size_t>(epochs) * sizeof(double)) {
      throw Error(ErrorCode::MalformedContainer, "truncated loss history", name);
    }
    h.loss_history.resize(epochs);
    for (auto& l : h.loss_history) l = r.get<double>();
    set.heads.push_back(std::move(h));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::MalformedContainer, "trailing bytes after last head", "heads");
  }
  return set;
}

inline void save_heads(const HeadSet& set, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_heads(set));
}

inline HeadSet load_heads(const std::filesystem::path& path) {
  return decode_heads(binio::read_file(path));
}

}  // namespace voxworld
