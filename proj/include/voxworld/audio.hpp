#pragma once

// Canonical mono clips: RIFF/WAVE decoding, linear resampling, cropping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxworld/binio.hpp"
#include "voxworld/error.hpp"

namespace voxworld {

/// Mono PCM samples in [-1, 1] at a known rate.
struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = 16000;
  std::string source_id;

  double duration() const {
    return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool operator==(const AudioClip&) const = default;
};

namespace wav_detail {

inline constexpr std::uint16_t kFormatPcm = 0x0001;
inline constexpr std::uint16_t kFormatFloat = 0x0003;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct Format {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

inline Format parse_fmt(std::span<const std::uint8_t> body) {
  binio::Reader r(body, "fmt chunk");
  if (body.size() < 16) {
    throw Error(ErrorCode::MalformedContainer, "fmt chunk shorter than 16 bytes", "fmt");
  }
  Format f;
  f.tag = r.get<std::uint16_t>();
  f.channels = r.get<std::uint16_t>();
  f.sample_rate = r.get<std::uint32_t>();
  r.skip(4);  // byte rate
  f.block_align = r.get<std::uint16_t>();
  f.bits = r.get<std::uint16_t>();
  if (f.tag == kFormatExtensible) {
    if (body.size() < 40) {
      throw Error(ErrorCode::MalformedContainer, "truncated WAVE_FORMAT_EXTENSIBLE", "fmt");
    }
    r.skip(2 + 2 + 4);  // cbSize, valid bits, channel mask
    f.tag = r.get<std::uint16_t>();  // leading two bytes of the sub-format GUID
  }
  return f;
}

}  // namespace wav_detail

/// Decodes a RIFF/WAVE byte stream holding PCM16 or float32 audio with one or
/// two channels. Stereo is mixed to mono by the per-sample arithmetic mean and
/// PCM16 values are divided by 32768.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id = {}) {
  using namespace wav_detail;
  binio::Reader r(bytes, "RIFF header");
  if (bytes.size() < 12 || r.get_string(4) != "RIFF") {
    throw Error(ErrorCode::MalformedContainer, "missing RIFF magic", "riff");
  }
  auto riff_size = r.get<std::uint32_t>();
  if (r.get_string(4) != "WAVE") {
    throw Error(ErrorCode::MalformedContainer, "missing WAVE form type", "riff");
  }
  if (riff_size < 4 || static_cast<std::uint64_t>(riff_size) + 8 > bytes.size()) {
    throw Error(ErrorCode::MalformedContainer,
                "RIFF size " + std::to_string(riff_size) + " inconsistent with file length", "riff");
  }

  std::optional<Format> fmt;
  std::optional<std::span<const std::uint8_t>> data;
  binio::Reader chunks(bytes.subspan(12, riff_size - 4), "chunk list");
  while (chunks.remaining() >= 8) {
    auto id = chunks.get_string(4);
    auto size = chunks.get<std::uint32_t>();
    if (size > chunks.remaining()) {
      throw Error(ErrorCode::MalformedContainer,
                  "chunk '" + id + "' size " + std::to_string(size) + " overruns container", id);
    }
    auto body = chunks.get_span(size);
    if (size % 2 == 1 && chunks.remaining() > 0) chunks.skip(1);
    if (id == "fmt ") {
      fmt = parse_fmt(body);
    } else if (id == "data") {
      data = body;
    }
  }
  if (!fmt) throw Error(ErrorCode::MalformedContainer, "no fmt chunk", "fmt");
  if (!data) throw Error(ErrorCode::MalformedContainer, "no data chunk", "data");

  const bool pcm16 = fmt->tag == kFormatPcm && fmt->bits == 16;
  const bool f32 = fmt->tag == kFormatFloat && fmt->bits == 32;
  if (!pcm16 && !f32) {
    throw Error(ErrorCode::UnsupportedEncoding,
                "format tag " + std::to_string(fmt->tag) + " with " +
                    std::to_string(fmt->bits) + " bits per sample",
                "fmt");
  }
  if (fmt->channels != 1 && fmt->channels != 2) {
    throw Error(ErrorCode::UnsupportedEncoding,
                std::to_string(fmt->channels) + " channels", "fmt.channels");
  }
  if (fmt->sample_rate == 0) {
    throw Error(ErrorCode::MalformedContainer, "zero sample rate", "fmt.sample_rate");
  }
  const std::size_t bytes_per_sample = fmt->bits / 8;
  if (fmt->block_align != bytes_per_sample * fmt->channels) {
    throw Error(ErrorCode::MalformedContainer, "block align disagrees with channel layout",
                "fmt.block_align");
  }

  AudioClip clip;
  clip.sample_rate = fmt->sample_rate;
  clip.source_id = std::move(source_id);
  const std::size_t frames = data->size() / fmt->block_align;
  clip.samples.reserve(frames);
  binio::Reader d(*data, "data chunk");
  auto next = [&]() -> float {
    if (pcm16) return static_cast<float>(d.get<std::int16_t>()) / 32768.0f;
    float v = d.get<float>();
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::MalformedContainer, "non-finite float sample", "data");
    }
    return std::clamp(v, -1.0f, 1.0f);
  };
  for (std::size_t i = 0; i < frames; ++i) {
    if (fmt->channels == 1) {
      clip.samples.push_back(next());
    } else {
      float left = next();
      float right = next();
      clip.samples.push_back((left + right) / 2.0f);
    }
  }
  return clip;
}

namespace wav_detail {

inline binio::Bytes header(std::uint16_t tag, std::uint16_t bits, std::uint32_t rate,
                           std::size_t n_samples) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n_samples * (bits / 8));
  binio::Bytes out;
  binio::put_bytes(out, "RIFF");
  binio::put<std::uint32_t>(out, 36 + data_bytes);
  binio::put_bytes(out, "WAVEfmt ");
  binio::put<std::uint32_t>(out, 16);
  binio::put<std::uint16_t>(out, tag);
  binio::put<std::uint16_t>(out, 1);
  binio::put<std::uint32_t>(out, rate);
  binio::put<std::uint32_t>(out, rate * (bits / 8));
  binio::put<std::uint16_t>(out, bits / 8);
  binio::put<std::uint16_t>(out, bits);
  binio::put_bytes(out, "data");
  binio::put<std::uint32_t>(out, data_bytes);
  return out;
}

}  // namespace wav_detail

/// Mono PCM16 writer; values are rounded to the nearest multiple of 1/32768.
inline binio::Bytes encode_wav_pcm16(const AudioClip& clip) {
  auto out = wav_detail::header(wav_detail::kFormatPcm, 16, clip.sample_rate,
                                clip.samples.size());
  for (float s : clip.samples) {
    long q = std::lround(static_cast<double>(s) * 32768.0);
    binio::put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L)));
  }
  return out;
}

/// Mono float32 writer. Lossless, so it is what the corpus stores.
inline binio::Bytes encode_wav_f32(const AudioClip& clip) {
  auto out = wav_detail::header(wav_detail::kFormatFloat, 32, clip.sample_rate,
                                clip.samples.size());
  for (float s : clip.samples) binio::put<float>(out, s);
  return out;
}

/// Linear-interpolation resampler. Output length is round(n * target / rate),
/// never less than one sample for a non-empty input.
inline AudioClip resample(const AudioClip& clip, std::uint32_t target_rate) {
  if (target_rate == 0) {
    throw Error(ErrorCode::InvalidArgument, "target rate must be positive", "target_rate");
  }
  if (target_rate == clip.sample_rate || clip.samples.empty()) {
    AudioClip same = clip;
    same.sample_rate = target_rate;
    return same;
  }
  const std::size_t n = clip.samples.size();
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto n_out = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) / ratio)));

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double x = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(x), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = x - static_cast<double>(i0);
    const double a = clip.samples[i0];
    const double b = clip.samples[i1];
    out.samples[i] = static_cast<float>(a + frac * (b - a));
  }
  return out;
}

/// Keeps [start_sec, end_sec); a missing end means the end of the clip.
inline AudioClip crop(const AudioClip& clip, double start_sec,
                      std::optional<double> end_sec = std::nullopt) {
  if (start_sec < 0 || (end_sec && *end_sec < start_sec)) {
    throw Error(ErrorCode::InvalidArgument, "crop bounds out of order", "start_time");
  }
  const auto n = clip.samples.size();
  auto first = std::min(n, static_cast<std::size_t>(std::llround(start_sec * clip.sample_rate)));
  auto last = end_sec ? std::min(n, static_cast<std::size_t>(
                                        std::llround(*end_sec * clip.sample_rate)))
                      : n;
  last = std::max(first, last);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(first),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

/// Decode + crop + resample, mirroring a loader with sampleRate/startTime/
/// endTime/downmix parameters.
inline AudioClip load_clip(std::span<const std::uint8_t> wav_bytes, std::uint32_t analysis_rate,
                           std::string source_id = {}, double start_sec = 0.0,
                           std::optional<double> end_sec = std::nullopt) {
  auto clip = decode_wav(wav_bytes, std::move(source_id));
  if (start_sec > 0.0 || end_sec) clip = crop(clip, start_sec, end_sec);
  return resample(clip, analysis_rate);
}

}  // namespace voxworld
