#pragma once

// Reference implementations written from the formulas alone, plus small test
// utilities. Nothing here calls into the library's DSP code.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// |DFT| bins 0..N/2 by the O(N^2) sum. Twiddles come from a table indexed
/// by (j*k) mod N, evaluated once in long double.
inline std::vector<double> naive_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<long double> c(n), s(n);
  for (std::size_t m = 0; m < n; ++m) {
    const long double angle = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(m) /
                              static_cast<long double>(n);
    c[m] = std::cos(angle);
    s[m] = std::sin(angle);
  }
  std::vector<double> out(n / 2 + 1);
  for (std::size_t j = 0; j <= n / 2; ++j) {
    long double re = 0, im = 0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < n; ++k) {
      re += x[k] * c[m];
      im += x[k] * s[m];
      m += j;
      if (m >= n) m -= n;
    }
    out[j] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return out;
}

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

/// Triangle weights evaluated in the mel domain: n_mel filters whose edges
/// are n_mel + 2 equally spaced mel points spanning [fmin, fmax].
inline std::vector<std::vector<double>> mel_weights(std::size_t n_mel, std::size_t n_fft, double rate,
                                                    double fmin, double fmax) {
  const double lo = mel(fmin), hi = mel(fmax);
  std::vector<double> edge(n_mel + 2);
  for (std::size_t i = 0; i < edge.size(); ++i) edge[i] = lo + (hi - lo) * i / (n_mel + 1);
  std::vector<std::vector<double>> w(n_mel, std::vector<double>(n_fft / 2 + 1, 0.0));
  for (std::size_t f = 0; f < n_mel; ++f) {
    for (std::size_t k = 0; k <= n_fft / 2; ++k) {
      const double m = mel(k * rate / n_fft);
      const double up = (m - edge[f]) / (edge[f + 1] - edge[f]);
      const double down = (edge[f + 2] - m) / (edge[f + 2] - edge[f + 1]);
      w[f][k] = std::max(0.0, std::min(up, down));
    }
  }
  return w;
}

inline std::vector<double> dct2_orthonormal(const std::vector<double>& x, std::size_t n_out) {
  const double n = static_cast<double>(x.size());
  std::vector<double> c(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    c[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return c;
}

/// 40 log-mel energies then 13 cepstral coefficients.
inline std::vector<double> features(const std::vector<double>& magnitude, std::size_t n_fft, double rate,
                                    double fmin, double fmax, double floor_value, std::size_t n_mel = 40,
                                    std::size_t n_mfcc = 13) {
  const auto w = mel_weights(n_mel, n_fft, rate, fmin, fmax);
  std::vector<double> logmel(n_mel);
  for (std::size_t f = 0; f < n_mel; ++f) {
    double e = 0;
    for (std::size_t k = 0; k < magnitude.size(); ++k) e += w[f][k] * magnitude[k] * magnitude[k];
    logmel[f] = std::log(std::max(floor_value, e));
  }
  auto out = logmel;
  const auto c = dct2_orthonormal(logmel, n_mfcc);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

/// Frame starts 0, hop, 2hop, ... while the previous frame did not reach the
/// end of the signal.
inline std::size_t enumerate_frames(std::size_t len, std::size_t frame, std::size_t hop) {
  std::size_t count = 0;
  for (std::size_t start = 0;; start += hop) {
    ++count;
    if (start + frame >= len) break;
  }
  return count;
}

inline double relative_error(double a, double b, double scale) {
  return std::abs(a - b) / std::max(scale, 1e-300);
}

/// Minimal canonical RIFF writer for 16-bit PCM, independent of the library.
inline std::vector<std::uint8_t> pcm16_wav(const std::vector<std::int16_t>& interleaved,
                                           std::uint16_t channels, std::uint32_t rate) {
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF); };
  auto u16 = [&](std::uint16_t v) { b.push_back(v & 0xFF); b.push_back(v >> 8); };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  tag("RIFF");
  u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(rate * channels * 2);
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  tag("data");
  u32(data_bytes);
  for (auto s : interleaved) u16(static_cast<std::uint16_t>(s));
  return b;
}

}  // namespace oracle

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("voxworld-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  std::vector<std::uint8_t> out;
  if (!f) return out;
  std::uint8_t buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.insert(out.end(), buf, buf + n);
  std::fclose(f);
  return out;
}

}  // namespace testutil
