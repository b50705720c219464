#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualvq/model/audio.hpp"

namespace dualvq {

class WavFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>(v >> (8 * i)));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

/// Parses a RIFF/WAVE PCM16 mono byte buffer.
inline AudioSignal parse_wav(const std::vector<unsigned char>& bytes, const std::string& what = "wav") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavFormatError(what + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const std::uint32_t size = detail::le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw WavFormatError(what + ": chunk '" + id + "' runs past end of file");
    if (id == "fmt ") {
      if (size < 16) throw WavFormatError(what + ": fmt chunk too short");
      const std::uint16_t format = detail::le16(bytes.data() + body);
      channels = detail::le16(bytes.data() + body + 2);
      rate = detail::le32(bytes.data() + body + 4);
      bits = detail::le16(bytes.data() + body + 14);
      if (format != 1) throw WavFormatError(what + ": format tag " + std::to_string(format) + " is not PCM");
      if (channels != 1) throw WavFormatError(what + ": " + std::to_string(channels) + " channels, expected mono");
      if (bits != 16) throw WavFormatError(what + ": " + std::to_string(bits) + "-bit samples, expected 16-bit");
      if (rate == 0) throw WavFormatError(what + ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavFormatError(what + ": data chunk before fmt chunk");
      AudioSignal a;
      a.sample_rate = rate;
      a.samples.resize(size / 2);
      for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(detail::le16(bytes.data() + body + 2 * i));
        a.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return a;
    }
    pos = body + size + (size & 1);
  }
  throw WavFormatError(what + ": no data chunk");
}

inline AudioSignal read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

inline std::int16_t to_pcm16(double x) {
  return static_cast<std::int16_t>(std::clamp<long>(std::lround(x * 32768.0), -32768, 32767));
}

inline std::string encode_wav(const AudioSignal& a) {
  std::string s;
  const auto data_bytes = static_cast<std::uint32_t>(a.samples.size() * 2);
  s.reserve(44 + data_bytes);
  s += "RIFF";
  detail::put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put32(s, 16);
  detail::put16(s, 1);
  detail::put16(s, 1);
  detail::put32(s, static_cast<std::uint32_t>(a.sample_rate));
  detail::put32(s, static_cast<std::uint32_t>(a.sample_rate * 2));
  detail::put16(s, 2);
  detail::put16(s, 16);
  s += "data";
  detail::put32(s, data_bytes);
  for (double x : a.samples) detail::put16(s, static_cast<std::uint16_t>(to_pcm16(x)));
  return s;
}

inline void write_wav(const AudioSignal& a, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot write " + path.string());
  const std::string bytes = encode_wav(a);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dualvq
