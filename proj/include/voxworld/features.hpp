#pragma once

// Framing, spectrum, log-mel + MFCC features and the fixed-size classifier
// grid. Every clip becomes a 53 x T matrix: n_mel log-mel band energies
// stacked over n_mfcc cepstral coefficients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voxworld/audio.hpp"
#include "voxworld/error.hpp"
#include "voxworld/fft.hpp"
#include "voxworld/hash.hpp"
#include "voxworld/matrix.hpp"

namespace voxworld {

inline constexpr std::size_t kFeatureRows = 53;

enum class WindowKind { Square, Hann };

inline WindowKind parse_window_kind(std::string_view name) {
  if (name == "square") return WindowKind::Square;
  if (name == "hann") return WindowKind::Hann;
  throw Error(ErrorCode::UnknownWindowKind, "unknown window '" + std::string(name) + "'",
              "window");
}

inline std::string_view to_string(WindowKind kind) {
  return kind == WindowKind::Square ? "square" : "hann";
}

struct FeatureConfig {
  std::uint32_t sample_rate = 16000;
  std::size_t frame_size = 1024;
  std::size_t hop_size = 512;
  std::size_t n_mel = 40;
  std::size_t n_mfcc = 13;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
  std::size_t grid_frames = 64;
  WindowKind window = WindowKind::Square;

  void validate() const {
    auto fail = [](const std::string& msg, const char* field) {
      throw Error(ErrorCode::InvalidArgument, msg, field);
    };
    if (sample_rate == 0) fail("sample_rate must be positive", "sample_rate");
    if (frame_size == 0) fail("frame_size must be positive", "frame_size");
    if (hop_size == 0 || hop_size > frame_size) fail("need 0 < hop_size <= frame_size", "hop_size");
    if (n_mel + n_mfcc != kFeatureRows) fail("n_mel + n_mfcc must equal 53", "n_mfcc");
    if (n_mfcc > n_mel) fail("n_mfcc cannot exceed n_mel", "n_mfcc");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
      fail("need 0 <= fmin < fmax <= sample_rate/2", "fmax");
    }
    if (!(log_floor > 0.0)) fail("log_floor must be positive", "log_floor");
    if (grid_frames == 0) fail("grid_frames must be positive", "grid_frames");
  }

  std::size_t n_bins() const { return frame_size / 2 + 1; }
  std::size_t grid_width() const { return kFeatureRows * grid_frames; }

  bool operator==(const FeatureConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = nlohmann::json{{"sample_rate", c.sample_rate}, {"frame_size", c.frame_size},
                     {"hop_size", c.hop_size},       {"n_mel", c.n_mel},
                     {"n_mfcc", c.n_mfcc},           {"fmin", c.fmin},
                     {"fmax", c.fmax},               {"log_floor", c.log_floor},
                     {"grid_frames", c.grid_frames}, {"window", std::string(to_string(c.window))}};
}

/// Missing keys keep their defaults so partial config files work.
inline void from_json(const nlohmann::json& j, FeatureConfig& c) {
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.frame_size = j.value("frame_size", c.frame_size);
  c.hop_size = j.value("hop_size", c.hop_size);
  c.n_mel = j.value("n_mel", c.n_mel);
  c.n_mfcc = j.value("n_mfcc", c.n_mfcc);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.log_floor = j.value("log_floor", c.log_floor);
  c.grid_frames = j.value("grid_frames", c.grid_frames);
  if (j.contains("window")) c.window = parse_window_kind(j.at("window").get<std::string>());
}

/// SHA-256 of the canonical JSON form; ties datasets and heads to the
/// extraction settings that produced them.
inline Digest config_hash(const FeatureConfig& cfg) {
  return sha256(nlohmann::json(cfg).dump());
}

struct FeatureMatrix {
  Matrix<double> values;  // 53 x T
  std::string clip_id;

  std::size_t frames() const { return values.cols(); }
  bool operator==(const FeatureMatrix&) const = default;
};

struct FeatureGrid {
  Matrix<double> values;  // 53 x Z

  /// Row-major flattening used as classifier input.
  std::vector<float> flatten() const {
    std::vector<float> out(values.size());
    std::transform(values.data().begin(), values.data().end(), out.begin(),
                   [](double v) { return static_cast<float>(v); });
    return out;
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// max(1, ceil((len - frame)/hop) + 1), with a single padded frame for short clips.
inline std::size_t frame_count(std::size_t len, std::size_t frame_size, std::size_t hop_size) {
  if (len <= frame_size) return 1;
  return (len - frame_size + hop_size - 1) / hop_size + 1;
}

/// Frame k starts at k * hop_size; the tail frame is zero-padded.
inline std::vector<std::vector<double>> cut_frames(const AudioClip& clip, const FeatureConfig& cfg) {
  if (clip.samples.empty()) throw Error(ErrorCode::EmptyClip, "clip has no samples", "samples");
  const std::size_t n = clip.samples.size();
  const std::size_t count = frame_count(n, cfg.frame_size, cfg.hop_size);
  std::vector<std::vector<double>> frames(count, std::vector<double>(cfg.frame_size, 0.0));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * cfg.hop_size;
    const std::size_t stop = std::min(n, start + cfg.frame_size);
    for (std::size_t i = start; i < stop; ++i) frames[k][i - start] = clip.samples[i];
  }
  return frames;
}

/// Periodic Hann: w[n] = 0.5 (1 - cos(2 pi n / N)).
inline std::vector<double> window_coefficients(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::Hann) {
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(n)));
    }
  }
  return w;
}

inline std::vector<double> apply_window(std::span<const double> frame, WindowKind kind) {
  std::vector<double> out(frame.begin(), frame.end());
  if (kind == WindowKind::Square) return out;
  const auto w = window_coefficients(kind, frame.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w[i];
  return out;
}

inline std::vector<double> apply_window(std::span<const double> frame, std::string_view kind) {
  return apply_window(frame, parse_window_kind(kind));
}

inline std::vector<double> spectrum(std::span<const double> frame) {
  return magnitude_spectrum<double>(frame);
}

/// Triangular filters with centres equally spaced on the mel scale between
/// fmin and fmax; neighbours overlap by half, so weights of an interior bin
/// sum to one. Weights are evaluated in the mel domain.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_mel, std::size_t n_bins, std::uint32_t sample_rate, double fmin,
                double fmax)
      : weights_(n_mel, n_bins, 0.0), fmin_(fmin), fmax_(fmax) {
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    const double step = (mel_hi - mel_lo) / static_cast<double>(n_mel + 1);
    const std::size_t fft_size = 2 * (n_bins - 1);
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double hz = static_cast<double>(b) * sample_rate / static_cast<double>(fft_size);
      const double m = hz_to_mel(hz);
      for (std::size_t i = 0; i < n_mel; ++i) {
        const double left = mel_lo + step * static_cast<double>(i);
        const double centre = left + step;
        const double right = centre + step;
        if (m > left && m <= centre) {
          weights_(i, b) = (m - left) / step;
        } else if (m > centre && m < right) {
          weights_(i, b) = (right - m) / step;
        }
      }
    }
  }

  explicit MelFilterbank(const FeatureConfig& cfg)
      : MelFilterbank(cfg.n_mel, cfg.n_bins(), cfg.sample_rate, cfg.fmin, cfg.fmax) {}

  const Matrix<double>& weights() const { return weights_; }
  std::size_t bands() const { return weights_.rows(); }
  std::size_t bins() const { return weights_.cols(); }

  /// Filterbank applied to squared magnitudes.
  std::vector<double> energies(std::span<const double> magnitude) const {
    std::vector<double> e(bands(), 0.0);
    for (std::size_t i = 0; i < bands(); ++i) {
      const auto w = weights_.row(i);
      double acc = 0.0;
      for (std::size_t b = 0; b < bins(); ++b) acc += w[b] * magnitude[b] * magnitude[b];
      e[i] = acc;
    }
    return e;
  }

 private:
  Matrix<double> weights_;
  double fmin_;
  double fmax_;
};

/// Rows 0..n_out-1 of the orthonormal DCT-II matrix of size n_in.
inline Matrix<double> dct_matrix(std::size_t n_out, std::size_t n_in) {
  Matrix<double> m(n_out, n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      m(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                 (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return m;
}

/// Holds the per-config tables so a clip's frames share one filterbank and
/// one DCT matrix. Immutable after construction.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        filterbank_(cfg_),
        dct_(dct_matrix(cfg_.n_mfcc, cfg_.n_mel)) {}

  const FeatureConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return filterbank_; }
  const Matrix<double>& dct() const { return dct_; }

  /// [n_mel log-mel energies; n_mfcc cepstra] for one magnitude spectrum.
  std::vector<double> frame_features(std::span<const double> magnitude) const {
    if (magnitude.size() != cfg_.n_bins()) {
      throw Error(ErrorCode::ConfigMismatch,
                  "spectrum has " + std::to_string(magnitude.size()) + " bins, config expects " +
                      std::to_string(cfg_.n_bins()),
                  "spectrum");
    }
    auto energies = filterbank_.energies(magnitude);
    std::vector<double> out(kFeatureRows, 0.0);
    for (std::size_t i = 0; i < cfg_.n_mel; ++i) {
      out[i] = std::log(std::max(cfg_.log_floor, energies[i]));
    }
    for (std::size_t k = 0; k < cfg_.n_mfcc; ++k) {
      const auto row = dct_.row(k);
      double acc = 0.0;
      for (std::size_t i = 0; i < cfg_.n_mel; ++i) acc += row[i] * out[i];
      out[cfg_.n_mel + k] = acc;
    }
    return out;
  }

  /// Raw (unnormalized) 53 x T features. Clips at another rate are resampled
  /// to the configured analysis rate first.
  FeatureMatrix extract(const AudioClip& input) const {
    const AudioClip clip =
        input.sample_rate == cfg_.sample_rate ? input : resample(input, cfg_.sample_rate);
    const auto frames = cut_frames(clip, cfg_);
    FeatureMatrix fm{Matrix<double>(kFeatureRows, frames.size()), input.source_id};
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto col = frame_features(spectrum(apply_window(frames[t], cfg_.window)));
      for (std::size_t r = 0; r < kFeatureRows; ++r) fm.values(r, t) = col[r];
    }
    return fm;
  }

  /// Magnitude spectrogram, bins x T, over the same frames as extract().
  Matrix<double> spectrogram(const AudioClip& input) const {
    const AudioClip clip =
        input.sample_rate == cfg_.sample_rate ? input : resample(input, cfg_.sample_rate);
    const auto frames = cut_frames(clip, cfg_);
    Matrix<double> out(cfg_.n_bins(), frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto mag = spectrum(apply_window(frames[t], cfg_.window));
      for (std::size_t b = 0; b < mag.size(); ++b) out(b, t) = mag[b];
    }
    return out;
  }

 private:
  FeatureConfig cfg_;
  MelFilterbank filterbank_;
  Matrix<double> dct_;
};

inline std::vector<double> frame_features(std::span<const double> magnitude,
                                          const FeatureConfig& cfg) {
  return FeatureExtractor(cfg).frame_features(magnitude);
}

inline FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg) {
  return FeatureExtractor(cfg).extract(clip);
}

/// Per-row min-max scaling to [0, 1]; a constant row becomes all zeros.
inline FeatureMatrix normalize(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t r = 0; r < out.values.rows(); ++r) {
    auto row = out.values.row(r);
    if (row.empty()) continue;
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (double& v : row) v = range > 0.0 ? (v - min) / range : 0.0;
  }
  return out;
}

/// Centre-crops or zero-pads the columns [first, last) of `m` to exactly
/// grid_frames columns. Padding puts the odd column at the back.
inline FeatureGrid fit_columns(const FeatureMatrix& m, std::size_t first, std::size_t last,
                               const FeatureConfig& cfg) {
  const std::size_t z = cfg.grid_frames;
  const std::size_t t = last - first;
  FeatureGrid g{Matrix<double>(m.values.rows(), z, 0.0)};
  if (t >= z) {
    const std::size_t drop_front = (t - z) / 2;
    for (std::size_t r = 0; r < m.values.rows(); ++r) {
      for (std::size_t c = 0; c < z; ++c) g.values(r, c) = m.values(r, first + drop_front + c);
    }
  } else {
    const std::size_t pad_front = (z - t) / 2;
    for (std::size_t r = 0; r < m.values.rows(); ++r) {
      for (std::size_t c = 0; c < t; ++c) g.values(r, pad_front + c) = m.values(r, first + c);
    }
  }
  return g;
}

inline FeatureGrid fit_to_grid(const FeatureMatrix& m, const FeatureConfig& cfg) {
  return fit_columns(m, 0, m.frames(), cfg);
}

/// Classifier input for a whole clip: extract, normalize, fit.
inline FeatureGrid clip_grid(const AudioClip& clip, const FeatureExtractor& fx) {
  return fit_to_grid(normalize(fx.extract(clip)), fx.config());
}

struct VisualizationBundle {
  std::string clip_id;
  std::uint32_t sample_rate = 0;
  std::vector<float> waveform;
  Matrix<double> spectrogram;  // bins x T
  FeatureMatrix normalized;    // 53 x T
};

/// Waveform, magnitude spectrogram and normalized features of one clip, all
/// on the clip's time axis.
inline VisualizationBundle visualization_bundle(const AudioClip& clip, const FeatureConfig& cfg) {
  FeatureExtractor fx(cfg);
  VisualizationBundle v;
  v.clip_id = clip.source_id;
  v.sample_rate = cfg.sample_rate;
  v.waveform =
      clip.sample_rate == cfg.sample_rate ? clip.samples : resample(clip, cfg.sample_rate).samples;
  v.spectrogram = fx.spectrogram(clip);
  v.normalized = normalize(fx.extract(clip));
  return v;
}

template <typename T>
nlohmann::json matrix_json(const Matrix<T>& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.data()}};
}

inline nlohmann::json plot_json(const VisualizationBundle& v) {
  return {{"clip_id", v.clip_id},
          {"sample_rate", v.sample_rate},
          {"waveform", v.waveform},
          {"spectrogram", matrix_json(v.spectrogram)},
          {"normalized", matrix_json(v.normalized.values)}};
}

}  // namespace voxworld
