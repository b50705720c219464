#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualvq/model/model.hpp"
#include "dualvq/numerics/rng.hpp"

namespace dualvq {

struct DiarizationSegment {
  std::string file;
  double onset = 0.0;
  double duration = 0.0;
  std::string speaker;

  double end() const { return onset + duration; }
};

struct DERReport {
  double false_alarm = 0.0;
  double miss = 0.0;
  double speaker_error = 0.0;
  double der = 0.0;
  double scored_seconds = 0.0;
};

struct WindowParams {
  double window_s = 2.0;
  double overlap_s = 0.25;
};

/// Speaker label -> multiset of global codes seen over its enrollment windows.
using ReferenceCodes = std::map<std::string, std::multiset<std::size_t>>;

/// Window start samples at hop = window - overlap. A final window is aligned
/// to the end of the signal when the hop grid leaves a remainder.
inline std::vector<std::size_t> window_starts(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw std::invalid_argument("window_starts: window and hop must be positive");
  std::vector<std::size_t> out;
  if (n_samples < window) return out;
  for (std::size_t s = 0; s + window <= n_samples; s += hop) out.push_back(s);
  if (out.back() + window < n_samples) out.push_back(n_samples - window);
  return out;
}

inline std::pair<std::size_t, std::size_t> window_samples(const WindowParams& p, std::size_t sample_rate) {
  if (!(p.window_s > 0.0) || !(p.overlap_s >= 0.0) || p.overlap_s >= p.window_s) {
    throw std::invalid_argument("diarize: need window > overlap >= 0");
  }
  const auto sr = static_cast<double>(sample_rate);
  return {static_cast<std::size_t>(std::lround(p.window_s * sr)),
          static_cast<std::size_t>(std::lround((p.window_s - p.overlap_s) * sr))};
}

/// Global code of every window; utterances shorter than a window count as one window.
inline std::vector<std::size_t> window_codes(Model& model, const AudioSignal& audio, const WindowParams& p) {
  const auto [win, hop] = window_samples(p, audio.sample_rate);
  std::vector<std::size_t> out;
  if (audio.size() < win) {
    out.push_back(model.global_code(audio));
    return out;
  }
  for (std::size_t s : window_starts(audio.size(), win, hop)) out.push_back(model.global_code(audio.slice(s, win)));
  return out;
}

inline ReferenceCodes build_reference_codes(Model& model, const std::map<std::string, std::vector<AudioSignal>>& enrollment,
                                            const WindowParams& p = {}) {
  if (!model.config().dual()) throw std::logic_error("build_reference_codes: model has no global codebook");
  ReferenceCodes ref;
  for (const auto& [speaker, utts] : enrollment) {
    if (utts.empty()) throw std::invalid_argument("build_reference_codes: no enrollment audio for " + speaker);
    for (const AudioSignal& a : utts) {
      for (std::size_t c : window_codes(model, a, p)) ref[speaker].insert(c);
    }
  }
  if (ref.empty()) throw std::invalid_argument("build_reference_codes: empty enrollment");
  return ref;
}

/// Codes that occur in more than one speaker's reference.
inline std::set<std::size_t> ambiguous_codes(const ReferenceCodes& ref) {
  std::map<std::size_t, std::size_t> owners;
  for (const auto& [_, codes] : ref) {
    for (std::size_t c : std::set<std::size_t>(codes.begin(), codes.end())) ++owners[c];
  }
  std::set<std::size_t> out;
  for (const auto& [c, n] : owners) {
    if (n > 1) out.insert(c);
  }
  return out;
}

/// Labels a window from its code: the unique speaker whose reference holds
/// it, else a seeded coin flip between the two speakers.
inline std::string label_window(std::size_t code, const ReferenceCodes& ref, Rng& rng) {
  std::vector<std::string> owners;
  for (const auto& [speaker, codes] : ref) {
    if (codes.count(code) != 0) owners.push_back(speaker);
  }
  if (owners.size() == 1) return owners.front();
  auto it = ref.begin();
  if (rng.coin()) ++it;
  return it->first;
}

/// Adjacent windows split their overlap at its midpoint, so the labelled
/// regions tile [start of first window, end of last window).
inline std::vector<DiarizationSegment> merge_windows(const std::string& file, const std::vector<std::size_t>& starts,
                                                     std::size_t window, const std::vector<std::string>& labels,
                                                     std::size_t sample_rate) {
  std::vector<DiarizationSegment> out;
  const double sr = static_cast<double>(sample_rate);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double b = i == 0 ? static_cast<double>(starts[i])
                            : 0.5 * static_cast<double>(starts[i] + starts[i - 1] + window);
    const double e = i + 1 == starts.size() ? static_cast<double>(starts[i] + window)
                                            : 0.5 * static_cast<double>(starts[i + 1] + starts[i] + window);
    if (!out.empty() && out.back().speaker == labels[i]) {
      out.back().duration = e / sr - out.back().onset;
    } else {
      out.push_back({file, b / sr, (e - b) / sr, labels[i]});
    }
  }
  return out;
}

inline std::vector<DiarizationSegment> diarize(Model& model, const AudioSignal& audio, const ReferenceCodes& ref,
                                               const std::string& file, std::uint64_t seed,
                                               const WindowParams& p = {}) {
  if (ref.size() != 2) {
    throw std::invalid_argument("diarize: exactly two enrolled speakers required, got " + std::to_string(ref.size()));
  }
  const auto [win, hop] = window_samples(p, audio.sample_rate);
  if (audio.size() <= win) throw std::invalid_argument("diarize: audio is not longer than one window");
  Rng rng(seed);
  const std::vector<std::size_t> starts = window_starts(audio.size(), win, hop);
  std::vector<std::string> labels;
  for (std::size_t s : starts) labels.push_back(label_window(model.global_code(audio.slice(s, win)), ref, rng));
  return merge_windows(file, starts, win, labels, audio.sample_rate);
}

/// Time-weighted DER against a reference without collar. Hypothesis labels
/// are mapped onto reference labels by the injective assignment that
/// minimizes speaker error. Fractions are of total reference speech time.
inline DERReport der(const std::vector<DiarizationSegment>& hyp, const std::vector<DiarizationSegment>& ref) {
  std::vector<double> cuts;
  for (const auto* side : {&hyp, &ref}) {
    for (const DiarizationSegment& s : *side) {
      if (!(s.duration > 0.0)) throw std::invalid_argument("der: segment with non-positive duration");
      if (!ref.empty() && s.file != ref.front().file) throw std::invalid_argument("der: segments from different files");
      cuts.push_back(s.onset);
      cuts.push_back(s.end());
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::string> hyp_labels, ref_labels;
  for (const auto& s : hyp) {
    if (std::find(hyp_labels.begin(), hyp_labels.end(), s.speaker) == hyp_labels.end()) hyp_labels.push_back(s.speaker);
  }
  for (const auto& s : ref) {
    if (std::find(ref_labels.begin(), ref_labels.end(), s.speaker) == ref_labels.end()) ref_labels.push_back(s.speaker);
  }
  auto label_at = [](const std::vector<DiarizationSegment>& segs, double t, const std::vector<std::string>& names) -> int {
    int found = -1;
    for (const auto& s : segs) {
      if (s.onset <= t && t < s.end()) {
        if (found >= 0) throw std::invalid_argument("der: overlapping segments are not supported");
        found = static_cast<int>(std::find(names.begin(), names.end(), s.speaker) - names.begin());
      }
    }
    return found;
  };

  // overlap[h][r]: time both hypothesis label h and reference label r are active.
  std::vector<std::vector<double>> overlap(hyp_labels.size(), std::vector<double>(ref_labels.size(), 0.0));
  DERReport r;
  double both = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const int h = label_at(hyp, mid, hyp_labels);
    const int g = label_at(ref, mid, ref_labels);
    if (g >= 0) r.scored_seconds += len;
    if (h >= 0 && g < 0) r.false_alarm += len;
    if (h < 0 && g >= 0) r.miss += len;
    if (h >= 0 && g >= 0) {
      both += len;
      overlap[static_cast<std::size_t>(h)][static_cast<std::size_t>(g)] += len;
    }
  }
  // Best injective mapping of hypothesis labels to reference labels.
  double best_match = 0.0;
  std::vector<char> used(ref_labels.size(), 0);
  auto search = [&](auto&& self, std::size_t h, double acc) -> void {
    if (h == hyp_labels.size()) {
      best_match = std::max(best_match, acc);
      return;
    }
    self(self, h + 1, acc);
    for (std::size_t g = 0; g < ref_labels.size(); ++g) {
      if (used[g]) continue;
      used[g] = 1;
      self(self, h + 1, acc + overlap[h][g]);
      used[g] = 0;
    }
  };
  search(search, 0, 0.0);
  r.speaker_error = both - best_match;
  if (r.scored_seconds > 0.0) {
    r.false_alarm /= r.scored_seconds;
    r.miss /= r.scored_seconds;
    r.speaker_error /= r.scored_seconds;
  }
  r.der = r.false_alarm + r.miss + r.speaker_error;
  return r;
}

/// `SPEAKER <file> 1 <onset> <dur> <NA> <NA> <label> <NA> <NA>`
inline std::string format_rttm(const std::vector<DiarizationSegment>& segs) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  for (const auto& s : segs) {
    os << "SPEAKER " << s.file << " 1 " << s.onset << ' ' << s.duration << " <NA> <NA> " << s.speaker << " <NA> <NA>\n";
  }
  return os.str();
}

}  // namespace dualvq
