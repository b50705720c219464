#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualvq/synthcorpus/synth.hpp"
#include "dualvq/synthcorpus/wav.hpp"
#include "dualvq/training/train.hpp"

namespace dualvq {

struct CorpusParams {
  std::size_t n_train_speakers = 20;
  std::size_t n_heldout_speakers = 5;
  std::size_t train_utts = 8;      ///< per training speaker
  std::size_t valid_utts = 2;      ///< per training speaker
  std::size_t condition_speakers = 5;
  std::size_t condition_utts = 6;  ///< per speaker in each of C1-C4
  std::size_t seen_texts = 40;
  std::size_t unseen_texts = 20;
  std::size_t text_length = 50;
  std::size_t n_phones = 12;
  std::uint64_t seed = 0;
  SynthParams synth;

  friend bool operator==(const CorpusParams&, const CorpusParams&) = default;
};

inline const std::vector<std::string>& corpus_splits() {
  static const std::vector<std::string> s{"train", "valid", "C1", "C2", "C3", "C4"};
  return s;
}

inline const std::vector<std::string>& test_conditions() {
  static const std::vector<std::string> s{"C1", "C2", "C3", "C4"};
  return s;
}

struct UtteranceSpec {
  std::string id;
  std::size_t speaker = 0;
  std::size_t text = 0;
  bool seen_text = true;
};

/// Everything about a corpus except the rendered audio.
struct CorpusPlan {
  CorpusParams params;
  std::vector<SpeakerProfile> speakers;
  std::vector<std::size_t> train_speakers;
  std::vector<std::size_t> heldout_speakers;
  std::vector<std::vector<std::size_t>> seen_texts;
  std::vector<std::vector<std::size_t>> unseen_texts;
  std::map<std::string, std::vector<UtteranceSpec>> splits;

  const std::vector<std::size_t>& text_of(const UtteranceSpec& u) const {
    return u.seen_text ? seen_texts.at(u.text) : unseen_texts.at(u.text);
  }
};

inline std::string speaker_dir(std::size_t id) {
  std::string s = std::to_string(id);
  return "spk" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// Speaker and text assignment for every split. C1 = seen speakers/seen
/// texts, C2 = seen/unseen, C3 = unseen/seen, C4 = unseen/unseen.
inline CorpusPlan plan_corpus(const CorpusParams& p) {
  if (p.n_train_speakers == 0 || p.n_heldout_speakers == 0) throw std::invalid_argument("corpus: speaker counts must be positive");
  if (p.condition_speakers == 0 || p.condition_speakers > p.n_train_speakers ||
      p.condition_speakers > p.n_heldout_speakers) {
    throw std::invalid_argument("corpus: " + std::to_string(p.condition_speakers) +
                                " speakers per condition cannot be drawn from " + std::to_string(p.n_train_speakers) +
                                " train / " + std::to_string(p.n_heldout_speakers) + " held-out speakers");
  }
  if (p.seen_texts == 0 || p.unseen_texts == 0) throw std::invalid_argument("corpus: both text pools must be non-empty");
  if (p.train_utts == 0 || p.valid_utts == 0 || p.condition_utts == 0) {
    throw std::invalid_argument("corpus: utterance counts must be positive");
  }
  if (p.text_length == 0) throw std::invalid_argument("corpus: text length must be positive");
  if (p.n_phones < 2 || p.n_phones > default_phones(p.synth).size()) {
    throw std::invalid_argument("corpus: phone inventory must hold 2.." + std::to_string(default_phones(p.synth).size()) +
                                " phones");
  }
  CorpusPlan plan;
  plan.params = p;
  const std::size_t n = p.n_train_speakers + p.n_heldout_speakers;
  Rng rng(p.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = i;
    plan.speakers.push_back(make_speaker(p.seed, i, p.synth));
  }
  rng.shuffle(order);
  plan.train_speakers.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p.n_train_speakers));
  plan.heldout_speakers.assign(order.begin() + static_cast<std::ptrdiff_t>(p.n_train_speakers), order.end());
  for (std::size_t i = 0; i < p.seen_texts; ++i) plan.seen_texts.push_back(make_text(rng, p.text_length, p.n_phones));
  for (std::size_t i = 0; i < p.unseen_texts; ++i) plan.unseen_texts.push_back(make_text(rng, p.text_length, p.n_phones));

  auto add = [&](const std::string& split, std::size_t spk, std::size_t count, bool seen) {
    for (std::size_t j = 0; j < count; ++j) {
      UtteranceSpec u;
      u.speaker = spk;
      u.seen_text = seen;
      u.text = rng.index(seen ? p.seen_texts : p.unseen_texts);
      std::string jj = std::to_string(j);
      u.id = split + "_" + speaker_dir(spk) + "_u" + std::string(jj.size() < 2 ? 2 - jj.size() : 0, '0') + jj;
      plan.splits[split].push_back(u);
    }
  };
  for (std::size_t s : plan.train_speakers) add("train", s, p.train_utts, true);
  for (std::size_t s : plan.train_speakers) add("valid", s, p.valid_utts, true);
  for (std::size_t i = 0; i < p.condition_speakers; ++i) {
    add("C1", plan.train_speakers[i], p.condition_utts, true);
    add("C2", plan.train_speakers[i], p.condition_utts, false);
    add("C3", plan.heldout_speakers[i], p.condition_utts, true);
    add("C4", plan.heldout_speakers[i], p.condition_utts, false);
  }
  return plan;
}

struct Corpus {
  CorpusPlan plan;
  std::vector<PhoneTemplate> phones;
  std::map<std::string, std::vector<Utterance>> splits;

  const std::vector<Utterance>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw std::out_of_range("corpus: no split '" + name + "'");
    return it->second;
  }

  /// Classifier label of a speaker: its position among the training speakers.
  std::size_t speaker_label(std::size_t speaker) const {
    const auto& t = plan.train_speakers;
    const auto it = std::find(t.begin(), t.end(), speaker);
    return it == t.end() ? kUnknownSpeaker : static_cast<std::size_t>(it - t.begin());
  }

  std::vector<LabeledAudio> labeled(const std::string& name) const {
    std::vector<LabeledAudio> out;
    for (const Utterance& u : split(name)) out.push_back({u.audio, speaker_label(u.speaker)});
    return out;
  }

  TrainData train_data() const { return {labeled("train"), labeled("valid")}; }
};

/// Renders a planned corpus. Each utterance draws from its own generator, so
/// the result is a pure function of the parameters.
inline Corpus build_corpus(const CorpusParams& params) {
  Corpus c;
  c.plan = plan_corpus(params);
  c.phones = default_phones(params.synth);
  c.phones.resize(params.n_phones);
  if (!c.phones.back().silent && params.n_phones == default_phones(params.synth).size()) {
    throw std::logic_error("corpus: phone inventory lost its silence");
  }
  std::size_t k = 0;
  for (const std::string& split : corpus_splits()) {
    for (const UtteranceSpec& spec : c.plan.splits.at(split)) {
      Rng rng(params.seed * 0x2545f4914f6cdd1dULL + (++k) * 0x9e3779b97f4a7c15ULL);
      Utterance u = make_utterance(c.plan.speakers.at(spec.speaker), c.plan.text_of(spec), c.phones, rng, params.synth);
      u.id = spec.id;
      c.splits[split].push_back(std::move(u));
    }
  }
  return c;
}

inline void to_json(nlohmann::json& j, const SynthParams& s) {
  j = {{"sample_rate", s.sample_rate}, {"phone_ms", s.phone_ms},     {"voiced_rms", s.voiced_rms},
       {"f0_amplitude", s.f0_amplitude}, {"noise_rms", s.noise_rms}, {"f0_low", s.f0_low},
       {"f0_high", s.f0_high},           {"min_f0_gap", s.min_f0_gap}, {"max_tilt", s.max_tilt},
       {"max_shift", s.max_shift}};
}

inline void from_json(const nlohmann::json& j, SynthParams& s) {
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("sample_rate", s.sample_rate);
  get("phone_ms", s.phone_ms);
  get("voiced_rms", s.voiced_rms);
  get("f0_amplitude", s.f0_amplitude);
  get("noise_rms", s.noise_rms);
  get("f0_low", s.f0_low);
  get("f0_high", s.f0_high);
  get("min_f0_gap", s.min_f0_gap);
  get("max_tilt", s.max_tilt);
  get("max_shift", s.max_shift);
}

inline void to_json(nlohmann::json& j, const CorpusParams& p) {
  j = {{"n_train_speakers", p.n_train_speakers},
       {"n_heldout_speakers", p.n_heldout_speakers},
       {"train_utts", p.train_utts},
       {"valid_utts", p.valid_utts},
       {"condition_speakers", p.condition_speakers},
       {"condition_utts", p.condition_utts},
       {"seen_texts", p.seen_texts},
       {"unseen_texts", p.unseen_texts},
       {"text_length", p.text_length},
       {"n_phones", p.n_phones},
       {"seed", p.seed},
       {"synth", p.synth}};
}

inline void from_json(const nlohmann::json& j, CorpusParams& p) {
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("n_train_speakers", p.n_train_speakers);
  get("n_heldout_speakers", p.n_heldout_speakers);
  get("train_utts", p.train_utts);
  get("valid_utts", p.valid_utts);
  get("condition_speakers", p.condition_speakers);
  get("condition_utts", p.condition_utts);
  get("seen_texts", p.seen_texts);
  get("unseen_texts", p.unseen_texts);
  get("text_length", p.text_length);
  get("n_phones", p.n_phones);
  get("seed", p.seed);
  get("synth", p.synth);
}

inline nlohmann::json manifest_json(const Corpus& c) {
  nlohmann::json m;
  m["format"] = "dualvq-corpus-1";
  m["params"] = c.plan.params;
  nlohmann::json spk = nlohmann::json::array();
  for (const SpeakerProfile& s : c.plan.speakers) {
    spk.push_back({{"id", s.id}, {"dir", speaker_dir(s.id)}, {"f0", s.f0}, {"tilt", s.tilt}, {"formant_shift", s.formant_shift}});
  }
  m["speakers"] = spk;
  m["train_speakers"] = c.plan.train_speakers;
  m["heldout_speakers"] = c.plan.heldout_speakers;
  nlohmann::json ph = nlohmann::json::array();
  for (const PhoneTemplate& p : c.phones) {
    ph.push_back({{"id", p.id}, {"symbol", p.symbol}, {"formant_hz", p.formant_hz}, {"silent", p.silent},
                  {"duration_ms", p.duration_ms}});
  }
  m["phones"] = ph;
  m["seen_texts"] = c.plan.seen_texts;
  m["unseen_texts"] = c.plan.unseen_texts;
  nlohmann::json splits;
  for (const auto& [name, specs] : c.plan.splits) {
    nlohmann::json arr = nlohmann::json::array();
    for (const UtteranceSpec& u : specs) {
      arr.push_back({{"id", u.id}, {"speaker", u.speaker}, {"text", u.text}, {"seen_text", u.seen_text}});
    }
    splits[name] = arr;
  }
  m["splits"] = splits;
  return m;
}

inline std::string format_alignment(const Utterance& u, const std::vector<PhoneTemplate>& phones) {
  std::ostringstream os;
  os.precision(10);
  for (const AlignedPhone& a : u.alignment) os << phones.at(a.phone).symbol << ' ' << a.onset_ms << ' ' << a.offset_ms << '\n';
  return os.str();
}

inline std::vector<AlignedPhone> parse_alignment(std::istream& is, const std::vector<PhoneTemplate>& phones) {
  std::vector<AlignedPhone> out;
  std::string sym;
  double on = 0, off = 0;
  while (is >> sym >> on >> off) {
    const auto it = std::find_if(phones.begin(), phones.end(), [&](const PhoneTemplate& p) { return p.symbol == sym; });
    if (it == phones.end()) throw std::invalid_argument("alignment: unknown phone '" + sym + "'");
    out.push_back({it->id, on, off});
  }
  return out;
}

/// Writes `<split>/<speaker>/<utt>.wav` and `.align` for every utterance plus manifest.json.
inline void write_corpus(const Corpus& c, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  for (const auto& [split, utts] : c.splits) {
    for (const Utterance& u : utts) {
      const auto dir = root / split / speaker_dir(u.speaker);
      std::filesystem::create_directories(dir);
      write_wav(u.audio, dir / (u.id + ".wav"));
      std::ofstream(dir / (u.id + ".align")) << format_alignment(u, c.phones);
    }
  }
  std::ofstream(root / "manifest.json") << manifest_json(c).dump(2) << '\n';
}

/// Reads a corpus directory written by write_corpus.
inline Corpus load_corpus(const std::filesystem::path& root) {
  std::ifstream ms(root / "manifest.json");
  if (!ms) throw std::runtime_error("corpus: no manifest.json in " + root.string());
  const nlohmann::json m = nlohmann::json::parse(ms);
  Corpus c;
  c.plan.params = m.at("params").get<CorpusParams>();
  for (const auto& s : m.at("speakers")) {
    c.plan.speakers.push_back({s.at("id").get<std::size_t>(), s.at("f0").get<double>(), s.at("tilt").get<double>(),
                               s.at("formant_shift").get<double>()});
  }
  c.plan.train_speakers = m.at("train_speakers").get<std::vector<std::size_t>>();
  c.plan.heldout_speakers = m.at("heldout_speakers").get<std::vector<std::size_t>>();
  for (const auto& p : m.at("phones")) {
    c.phones.push_back({p.at("id").get<std::size_t>(), p.at("symbol").get<std::string>(),
                        p.at("formant_hz").get<double>(), p.at("silent").get<bool>(), p.at("duration_ms").get<double>()});
  }
  c.plan.seen_texts = m.at("seen_texts").get<std::vector<std::vector<std::size_t>>>();
  c.plan.unseen_texts = m.at("unseen_texts").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& [split, arr] : m.at("splits").items()) {
    for (const auto& e : arr) {
      UtteranceSpec spec{e.at("id").get<std::string>(), e.at("speaker").get<std::size_t>(), e.at("text").get<std::size_t>(),
                         e.at("seen_text").get<bool>()};
      c.plan.splits[split].push_back(spec);
      const auto dir = root / split / speaker_dir(spec.speaker);
      Utterance u;
      u.id = spec.id;
      u.speaker = spec.speaker;
      u.text = c.plan.text_of(spec);
      u.audio = read_wav(dir / (spec.id + ".wav"));
      std::ifstream as(dir / (spec.id + ".align"));
      if (!as) throw std::runtime_error("corpus: missing alignment for " + spec.id);
      u.alignment = parse_alignment(as, c.phones);
      c.splits[split].push_back(std::move(u));
    }
  }
  return c;
}

}  // namespace dualvq
