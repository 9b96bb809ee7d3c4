// Copyright (c) 2026 The singvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "singvc/wav.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace singvc {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t ReadU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void PutU16(std::string* out, uint16_t v) {
  out->push_back(static_cast<char>(v & 0xFF));
  out->push_back(static_cast<char>(v >> 8));
}

void PutU32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>(v >> (8 * i)));
}

}  // namespace

AudioClip ReadWav(const std::string& path) { return ReadWav(path, 0); }

AudioClip ReadWav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw IoError(path + ": not a RIFF/WAVE file");
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  size_t pcm_size = 0;
  size_t pos = 12;
  while (pos + 8 <= size) {
    const uint32_t chunk = ReadU32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    if (pos + 8 + chunk > size) throw IoError(path + ": truncated chunk");
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk < 16) throw IoError(path + ": short fmt chunk");
      format = ReadU16(body);
      channels = ReadU16(body + 2);
      rate = ReadU32(body + 4);
      bits = ReadU16(body + 14);
      if (format == kFormatExtensible && chunk >= 26) {
        format = ReadU16(body + 24);
      }
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_size = chunk;
    }
    pos += 8 + chunk + (chunk & 1);
  }
  if (pcm == nullptr || channels == 0) {
    throw IoError(path + ": missing fmt or data chunk");
  }
  if (channels != 1) {
    throw IoError(path + ": expected mono audio, got " +
                  std::to_string(channels) + " channels");
  }
  if (expected_rate > 0 && static_cast<int>(rate) != expected_rate) {
    throw IoError(path + ": sample rate " + std::to_string(rate) +
                  " does not match expected " + std::to_string(expected_rate));
  }

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    clip.samples.resize(pcm_size / 2);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
      const auto v = static_cast<int16_t>(ReadU16(pcm + 2 * i));
      clip.samples[i] = v / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    clip.samples.resize(pcm_size / 4);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
      const uint32_t raw = ReadU32(pcm + 4 * i);
      float v;
      std::memcpy(&v, &raw, sizeof(v));
      clip.samples[i] = v;
    }
  } else {
    throw IoError(path + ": unsupported sample format (need PCM16 or float32)");
  }
  clip.Validate();
  return clip;
}

void WriteWav(const std::string& path, const AudioClip& clip) {
  clip.Validate();
  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(&out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(&out, 16);
  PutU16(&out, kFormatPcm);
  PutU16(&out, 1);
  PutU32(&out, static_cast<uint32_t>(clip.sample_rate));
  PutU32(&out, static_cast<uint32_t>(clip.sample_rate * 2));
  PutU16(&out, 2);
  PutU16(&out, 16);
  out += "data";
  PutU32(&out, data_bytes);
  for (double s : clip.samples) {
    // Inverse of the 1/32768 read scaling, so PCM values round-trip exactly.
    const long scaled = std::lrint(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<int16_t>(std::clamp(scaled, -32768L, 32767L));
    PutU16(&out, static_cast<uint16_t>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for " + path);
}

}  // namespace singvc
