#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualvq/model/audio.hpp"
#include "dualvq/numerics/rng.hpp"

namespace dualvq {

struct SpeakerProfile {
  std::size_t id = 0;
  double f0 = 100.0;
  /// Pole of the one-pole filter colouring the speaker's breath noise, in (-1, 1).
  double tilt = 0.0;
  double formant_shift = 1.0;

  friend bool operator==(const SpeakerProfile&, const SpeakerProfile&) = default;
};

/// A steady tonal phone: one formant tone plus the speaker's f0 component
/// and breath noise. Silence carries the breath noise alone.
struct PhoneTemplate {
  std::size_t id = 0;
  std::string symbol;
  double formant_hz = 0.0;
  bool silent = false;
  double duration_ms = 60.0;
};

struct AlignedPhone {
  std::size_t phone = 0;
  double onset_ms = 0.0;
  double offset_ms = 0.0;
};

struct Utterance {
  std::string id;
  AudioSignal audio;
  std::size_t speaker = 0;
  std::vector<std::size_t> text;
  std::vector<AlignedPhone> alignment;
};

struct SynthParams {
  std::size_t sample_rate = 16000;
  double phone_ms = 60.0;
  double voiced_rms = 0.3;
  double f0_amplitude = 0.5;
  double noise_rms = 0.05;
  double f0_low = 80.0;
  double f0_high = 300.0;
  double min_f0_gap = 10.0;
  double max_tilt = 0.8;
  double max_shift = 0.03;

  friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

/// Eleven tones 300 Hz apart from 500 Hz, then silence.
inline std::vector<PhoneTemplate> default_phones(const SynthParams& sp = {}) {
  static const char* names[] = {"a", "b", "d", "e", "f", "g", "i", "k", "m", "o", "u", "sil"};
  std::vector<PhoneTemplate> out;
  for (std::size_t i = 0; i < 12; ++i) {
    out.push_back({i, names[i], i < 11 ? 500.0 + 300.0 * static_cast<double>(i) : 0.0, i == 11, sp.phone_ms});
  }
  return out;
}

/// Number of f0 slots spaced at least min_f0_gap apart inside [f0_low, f0_high].
inline std::size_t f0_slots(const SynthParams& sp) {
  return static_cast<std::size_t>(std::floor((sp.f0_high - sp.f0_low) / sp.min_f0_gap)) + 1;
}

/// Profile for slot `index` of a corpus. f0 sits on an evenly spaced grid
/// (wrapping once the grid is exhausted); tilt and formant shift are drawn
/// from a generator seeded by (seed, index).
inline SpeakerProfile make_speaker(std::uint64_t seed, std::size_t index, const SynthParams& sp = {}) {
  Rng rng(seed * 0x100000001b3ULL + index * 0x9e3779b97f4a7c15ULL + 1);
  SpeakerProfile p;
  p.id = index;
  p.f0 = sp.f0_low + sp.min_f0_gap * static_cast<double>(index % f0_slots(sp));
  p.tilt = rng.uniform(-sp.max_tilt, sp.max_tilt);
  p.formant_shift = 1.0 + rng.uniform(-sp.max_shift, sp.max_shift);
  return p;
}

/// Random phone sequence without immediate repeats.
inline std::vector<std::size_t> make_text(Rng& rng, std::size_t length, std::size_t n_phones) {
  if (n_phones < 2) throw std::invalid_argument("make_text: need at least two phones");
  std::vector<std::size_t> t;
  while (t.size() < length) {
    const std::size_t p = rng.index(n_phones);
    if (t.empty() || p != t.back()) t.push_back(p);
  }
  return t;
}

/// Renders phones in sequence. Tone phases are continuous across the
/// utterance; breath noise is white noise differenced three times and then
/// coloured by the speaker's one-pole tilt filter.
inline Utterance make_utterance(const SpeakerProfile& spk, const std::vector<std::size_t>& text,
                                const std::vector<PhoneTemplate>& phones, Rng& rng, const SynthParams& sp = {}) {
  if (text.empty()) throw std::invalid_argument("make_utterance: empty phone sequence");
  Utterance u;
  u.speaker = spk.id;
  u.text = text;
  u.audio.sample_rate = sp.sample_rate;
  const double sr = static_cast<double>(sp.sample_rate);
  const double phase_tone = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_f0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tone_gain = sp.voiced_rms / std::sqrt(0.5 * (1.0 + sp.f0_amplitude * sp.f0_amplitude));
  std::size_t t0 = 0;
  for (std::size_t id : text) {
    if (id >= phones.size()) throw std::out_of_range("make_utterance: unknown phone " + std::to_string(id));
    const PhoneTemplate& ph = phones[id];
    const auto n = static_cast<std::size_t>(std::lround(ph.duration_ms * sr / 1000.0));
    std::vector<double> noise(n);
    double d1 = 0, d2 = 0, d3 = 0, y = 0;
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = rng.normal();
      const double a = w - d1;
      const double b = a - d2;
      const double c = b - d3;
      d1 = w;
      d2 = a;
      d3 = b;
      y = c + spk.tilt * y;
      noise[i] = y;
      energy += y * y;
    }
    const double noise_gain = energy > 0.0 ? sp.noise_rms / std::sqrt(energy / static_cast<double>(n)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(t0 + i) / sr;
      double v = noise[i] * noise_gain;
      if (!ph.silent) {
        v += tone_gain * (std::sin(2.0 * std::numbers::pi * ph.formant_hz * spk.formant_shift * t + phase_tone) +
                          sp.f0_amplitude * std::sin(2.0 * std::numbers::pi * spk.f0 * t + phase_f0));
      }
      u.audio.samples.push_back(std::clamp(v, -1.0, 1.0));
    }
    u.alignment.push_back({id, 1000.0 * static_cast<double>(t0) / sr, 1000.0 * static_cast<double>(t0 + n) / sr});
    t0 += n;
  }
  return u;
}

}  // namespace dualvq
