#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dualvq/model/model.hpp"
#include "dualvq/synthcorpus/synth.hpp"

namespace dualvq {

struct CodeSequence {
  std::string utterance;
  std::vector<std::size_t> codes;
  double frame_ms = 4.0;
};

struct ExtractedCodes {
  CodeSequence local;
  std::optional<std::size_t> global;
};

inline double frame_ms(const ModelConfig& c) {
  return 1000.0 * static_cast<double>(c.dsf()) / static_cast<double>(c.sample_rate);
}

inline ExtractedCodes extract_codes(Model& model, const AudioSignal& audio, const std::string& id = "") {
  ExtractedCodes out;
  out.local.utterance = id;
  out.local.codes = model.local_codes(audio);
  out.local.frame_ms = frame_ms(model.config());
  if (model.config().dual()) out.global = model.global_code(audio);
  return out;
}

/// `<utt_id> c1 c2 ... cN`
inline std::string format_codes(const CodeSequence& s) {
  std::ostringstream os;
  os << s.utterance;
  for (std::size_t c : s.codes) os << ' ' << c;
  return os.str();
}

inline CodeSequence parse_codes(const std::string& line, double frame = 4.0) {
  std::istringstream is(line);
  CodeSequence s;
  s.frame_ms = frame;
  if (!(is >> s.utterance)) throw std::invalid_argument("codes: empty line");
  std::size_t c;
  while (is >> c) s.codes.push_back(c);
  return s;
}

/// Phone label of each frame: the phone covering the frame's centre sample.
inline std::vector<std::size_t> frame_phone_labels(const std::vector<AlignedPhone>& alignment, std::size_t n_samples,
                                                   std::size_t dsf, std::size_t sample_rate) {
  const std::size_t frames = (n_samples + dsf - 1) / dsf;
  std::vector<std::size_t> out(frames);
  std::size_t k = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t centre = std::min(f * dsf + dsf / 2, n_samples - 1);
    const double ms = 1000.0 * static_cast<double>(centre) / static_cast<double>(sample_rate);
    while (k + 1 < alignment.size() && ms >= alignment[k].offset_ms) ++k;
    out[f] = alignment[k].phone;
  }
  return out;
}

}  // namespace dualvq
