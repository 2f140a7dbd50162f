// Copyright 2026 The prvq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>

#include "prvq/binary_io.hpp"
#include "prvq/error.hpp"
#include "prvq/signal.hpp"

namespace prvq::signal {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw ContractError("audio: sample_rate must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw ContractError("audio: non-finite sample at index " + std::to_string(i));
    }
  }
}

AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(4, "RIFF tag") != "RIFF") throw DecodeError("missing RIFF tag", 0);
  r.get<std::uint32_t>("RIFF size");
  if (r.get_string(4, "WAVE tag") != "WAVE") throw DecodeError("missing WAVE tag", 8);

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::size_t chunk_at = r.position();
    const std::string id = r.get_string(4, "chunk id");
    const auto size = r.get<std::uint32_t>("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw DecodeError("fmt chunk too small", chunk_at);
      format = r.get<std::uint16_t>("format tag");
      channels = r.get<std::uint16_t>("channel count");
      rate = r.get<std::uint32_t>("sample rate");
      r.get<std::uint32_t>("byte rate");
      block_align = r.get<std::uint16_t>("block align");
      bits = r.get<std::uint16_t>("bits per sample");
      std::size_t consumed = 16;
      if (format == kFormatExtensible && size >= 40) {
        r.get<std::uint16_t>("extension size");
        r.get<std::uint16_t>("valid bits");
        r.get<std::uint32_t>("channel mask");
        format = r.get<std::uint16_t>("sub-format");
        r.skip(14, "sub-format guid");
        consumed = 40;
      }
      r.skip(size - consumed + (size & 1u), "fmt padding");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DecodeError("data chunk before fmt chunk", chunk_at);
      if (channels == 0) throw DecodeError("zero channels", chunk_at);
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw DecodeError("unsupported codec (format " + std::to_string(format) + ", " +
                              std::to_string(bits) + " bits)",
                          chunk_at);
      }
      if (block_align != channels * (bits / 8)) throw DecodeError("inconsistent block align", chunk_at);
      const std::size_t frames = size / block_align;
      auto payload = r.get_span(frames * block_align, "sample data");
      AudioBuffer audio;
      audio.sample_rate = int(rate);
      audio.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::uint8_t* p = payload.data() + f * block_align + c * (bits / 8);
          if (pcm16) {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            acc += double(v) / 32768.0;
          } else {
            float v;
            std::memcpy(&v, p, 4);
            acc += double(v);
          }
        }
        audio.samples[f] = acc / double(channels);
      }
      if (rate == 0) throw DecodeError("zero sample rate", chunk_at);
      return audio;
    } else {
      r.skip(size + (size & 1u), "chunk body");
    }
  }
  throw DecodeError("no data chunk", r.position());
}

AudioBuffer load_wav(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("audio file not found: " + path.string());
  try {
    return decode_wav(io::read_file(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding enc) {
  audio.validate();
  const std::uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const auto data_size = std::uint32_t(audio.samples.size() * block);
  io::ByteWriter w;
  w.put_string("RIFF");
  w.put<std::uint32_t>(36 + data_size);
  w.put_string("WAVE");
  w.put_string("fmt ");
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(enc == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(std::uint32_t(audio.sample_rate));
  w.put<std::uint32_t>(std::uint32_t(audio.sample_rate) * block);
  w.put<std::uint16_t>(block);
  w.put<std::uint16_t>(bits);
  w.put_string("data");
  w.put<std::uint32_t>(data_size);
  for (double s : audio.samples) {
    if (enc == WavEncoding::kPcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      w.put<std::int16_t>(std::int16_t(std::clamp(scaled, -32768.0, 32767.0)));
    } else {
      w.put<float>(float(s));
    }
  }
  return w.take();
}

void save_wav(const std::filesystem::path& path, const AudioBuffer& audio, WavEncoding enc) {
  io::write_file_atomic(path, encode_wav(audio, enc));
}

}  // namespace prvq::signal
