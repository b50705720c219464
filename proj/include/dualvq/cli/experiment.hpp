#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualvq/cli/config.hpp"
#include "dualvq/tasks/codes.hpp"
#include "dualvq/tasks/diarization.hpp"
#include "dualvq/tasks/metrics.hpp"
#include "dualvq/tasks/phones.hpp"
#include "dualvq/vq/vq.hpp"

namespace dualvq {

// ---------------------------------------------------------------- training

/// Trains the configured variant. Dual variants start from `base` when one is
/// given, otherwise from scratch.
inline std::pair<Checkpoint, TrainReport> train_variant(const ExperimentConfig& cfg, const Corpus& corpus,
                                                        const Checkpoint* base = nullptr) {
  ModelConfig mc = cfg.model;
  mc.n_speakers = corpus.plan.train_speakers.size();
  Checkpoint start = base != nullptr && mc.dual() ? warm_start(*base, mc) : Checkpoint::create(mc);
  TrainConfig tc = cfg.train;
  tc.steps = cfg.steps();
  if (!tc.weights && mc.has_speaker_head()) {
    tc.weights = LossWeights::defaults(mc.variant);
    tc.weights->speaker = cfg.speaker_weight;
  }
  return train(start, corpus.train_data(), tc);
}

// ---------------------------------------------------------------- code statistics

struct SpeakerCodeScores {
  ClusterScore local;
  std::optional<ClusterScore> global;
  std::size_t global_used = 0;
};

/// Global code of every diarization window of every utterance.
inline std::vector<std::size_t> utterance_window_codes(Model& m, const Utterance& u, const WindowParams& w) {
  return window_codes(m, u.audio, w);
}

/// Speaker NMI/purity of local codes (per frame) and global codes (per window).
inline SpeakerCodeScores speaker_code_scores(Model& m, const std::vector<Utterance>& utts, const WindowParams& w = {}) {
  std::vector<std::size_t> lc, ls, gc, gs;
  for (const Utterance& u : utts) {
    for (std::size_t c : m.local_codes(u.audio)) {
      lc.push_back(c);
      ls.push_back(u.speaker);
    }
    if (m.config().dual()) {
      for (std::size_t c : utterance_window_codes(m, u, w)) {
        gc.push_back(c);
        gs.push_back(u.speaker);
      }
    }
  }
  SpeakerCodeScores s;
  s.local = code_label_nmi(lc, ls);
  if (m.config().dual()) {
    s.global = code_label_nmi(gc, gs);
    s.global_used = codebook_stats(gc, m.config().global_K).used;
  }
  return s;
}

inline std::vector<std::string> phone_symbols(const std::vector<std::size_t>& ids, const std::vector<PhoneTemplate>& phones) {
  std::vector<std::string> out;
  for (std::size_t id : ids) out.push_back(phones.at(id).symbol);
  return out;
}

/// Phone label of every local frame.
inline std::vector<std::size_t> utterance_frame_phones(const Utterance& u, const ModelConfig& c) {
  return frame_phone_labels(u.alignment, u.audio.size(), c.dsf(), c.sample_rate);
}

// ---------------------------------------------------------------- eval

struct ConditionMetrics {
  double recon_mse = 0.0;
  std::optional<double> speaker_similarity;
  CodebookStats local_codes;
  std::optional<CodebookStats> global_codes;
  ClusterScore local_phone;
  ClusterScore local_speaker;
  std::optional<ClusterScore> global_speaker;
};

inline ConditionMetrics evaluate_condition(Model& m, const Corpus& corpus, const std::string& condition,
                                           const WindowParams& w = {}) {
  const ModelConfig& mc = m.config();
  ConditionMetrics out;
  std::vector<std::size_t> lc, lp, ls;
  double sim = 0.0;
  const auto& utts = corpus.split(condition);
  for (const Utterance& u : utts) {
    const AudioSignal rec = m.reconstruct(u.audio, corpus.speaker_label(u.speaker));
    double se = 0.0;
    for (std::size_t i = 0; i < u.audio.size(); ++i) se += (rec.samples[i] - u.audio.samples[i]) * (rec.samples[i] - u.audio.samples[i]);
    out.recon_mse += se / static_cast<double>(u.audio.size());
    if (mc.dual()) sim += speaker_similarity(m, u.audio, rec);
    const std::vector<std::size_t> codes = m.local_codes(u.audio);
    const std::vector<std::size_t> phones = utterance_frame_phones(u, mc);
    lc.insert(lc.end(), codes.begin(), codes.end());
    lp.insert(lp.end(), phones.begin(), phones.end());
    ls.insert(ls.end(), codes.size(), u.speaker);
  }
  const double n = static_cast<double>(utts.size());
  out.recon_mse /= n;
  out.local_codes = codebook_stats(lc, mc.local_K);
  out.local_phone = code_label_nmi(lc, lp);
  out.local_speaker = code_label_nmi(lc, ls);
  if (mc.dual()) {
    out.speaker_similarity = sim / n;
    std::vector<std::size_t> gc, gs;
    for (const Utterance& u : utts) {
      for (std::size_t c : utterance_window_codes(m, u, w)) {
        gc.push_back(c);
        gs.push_back(u.speaker);
      }
    }
    out.global_speaker = code_label_nmi(gc, gs);
    out.global_codes = codebook_stats(gc, mc.global_K);
  }
  return out;
}

inline nlohmann::json to_report_json(const ConditionMetrics& c) {
  using nlohmann::json;
  auto stats = [](const std::optional<CodebookStats>& s) -> json {
    if (!s) return nullptr;
    return {{"used", s->used}, {"perplexity", s->perplexity}, {"collapsed", s->collapsed ? 1 : 0}};
  };
  auto score = [](const std::optional<ClusterScore>& s) -> json {
    if (!s) return nullptr;
    return {{"nmi", s->nmi}, {"purity", s->purity}};
  };
  json j;
  j["recon_mse"] = c.recon_mse;
  j["speaker_similarity"] = c.speaker_similarity ? json(*c.speaker_similarity) : json(nullptr);
  j["local_codes"] = stats(c.local_codes);
  j["global_codes"] = stats(c.global_codes);
  j["local_phone"] = score(c.local_phone);
  j["local_speaker"] = score(c.local_speaker);
  j["global_speaker"] = score(c.global_speaker);
  return j;
}

/// Element-wise arithmetic mean of structurally identical JSON objects;
/// numbers are averaged, nulls stay null.
inline nlohmann::json mean_json(const std::vector<nlohmann::json>& items) {
  if (items.empty()) throw std::invalid_argument("mean_json: nothing to average");
  const nlohmann::json& first = items.front();
  if (first.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, _] : first.items()) {
      std::vector<nlohmann::json> sub;
      for (const auto& it : items) sub.push_back(it.at(k));
      out[k] = mean_json(sub);
    }
    return out;
  }
  if (first.is_number()) {
    double s = 0.0;
    for (const auto& it : items) s += it.get<double>();
    return s / static_cast<double>(items.size());
  }
  return first;
}

/// Report keyed by C1..C4 plus their average.
inline nlohmann::json condition_report(const std::map<std::string, nlohmann::json>& per_condition) {
  nlohmann::json out;
  std::vector<nlohmann::json> all;
  for (const std::string& c : test_conditions()) {
    out[c] = per_condition.at(c);
    all.push_back(per_condition.at(c));
  }
  out["Avg"] = mean_json(all);
  return out;
}

inline nlohmann::json evaluate(Model& m, const Corpus& corpus, const WindowParams& w = {}) {
  std::map<std::string, nlohmann::json> per;
  for (const std::string& c : test_conditions()) per[c] = to_report_json(evaluate_condition(m, corpus, c, w));
  return condition_report(per);
}

inline void flatten_json(const nlohmann::json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_null()) {
    out[prefix] = "";
  } else {
    out[prefix] = j.dump();
  }
}

/// `metric,C1,C2,C3,C4,Avg` with one row per leaf metric.
inline std::string condition_report_csv(const nlohmann::json& report) {
  std::vector<std::string> cols = test_conditions();
  cols.push_back("Avg");
  std::map<std::string, std::map<std::string, std::string>> rows;
  for (const std::string& c : cols) {
    std::map<std::string, std::string> flat;
    flatten_json(report.at(c), "", flat);
    for (const auto& [k, v] : flat) rows[k][c] = v;
  }
  std::ostringstream os;
  os << "metric";
  for (const auto& c : cols) os << ',' << c;
  os << '\n';
  for (const auto& [k, vals] : rows) {
    os << k;
    for (const auto& c : cols) os << ',' << (vals.count(c) ? vals.at(c) : "");
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- diarization

/// A concatenated A|B|A file with two utterances per turn, its exact
/// reference segmentation and held-back enrollment audio per speaker.
struct DiarizationFile {
  std::string id;
  AudioSignal audio;
  std::vector<DiarizationSegment> reference;
  std::map<std::string, std::vector<AudioSignal>> enrollment;
};

inline std::vector<DiarizationFile> make_diarization_files(const Corpus& corpus, const std::string& condition,
                                                           std::size_t n_files, std::size_t enroll_utts,
                                                           std::uint64_t seed) {
  std::map<std::size_t, std::vector<const Utterance*>> by_speaker;
  for (const Utterance& u : corpus.split(condition)) by_speaker[u.speaker].push_back(&u);
  std::vector<std::size_t> speakers;
  for (const auto& [s, utts] : by_speaker) {
    if (utts.size() < 4 + enroll_utts) {
      throw std::invalid_argument("diarization: speaker " + speaker_dir(s) + " in " + condition + " has " +
                                  std::to_string(utts.size()) + " utterances, need " + std::to_string(4 + enroll_utts));
    }
    speakers.push_back(s);
  }
  if (speakers.size() < 2) throw std::invalid_argument("diarization: " + condition + " has fewer than two speakers");

  Rng rng(seed);
  std::vector<DiarizationFile> out;
  for (std::size_t f = 0; f < n_files; ++f) {
    std::vector<std::size_t> pick = speakers;
    rng.shuffle(pick);
    const std::size_t spk[2] = {pick[0], pick[1]};
    std::vector<const Utterance*> utts[2];
    for (int k = 0; k < 2; ++k) {
      utts[k] = by_speaker.at(spk[k]);
      rng.shuffle(utts[k]);
    }
    DiarizationFile file;
    file.id = condition + "_file" + std::to_string(f);
    file.audio.sample_rate = corpus.plan.params.synth.sample_rate;
    const double sr = static_cast<double>(file.audio.sample_rate);
    const std::pair<int, std::size_t> turns[3] = {{0, 0}, {1, 0}, {0, 2}};
    for (const auto& [who, first] : turns) {
      const double onset = static_cast<double>(file.audio.size()) / sr;
      for (std::size_t i = first; i < first + 2; ++i) {
        const auto& s = utts[who][i]->audio.samples;
        file.audio.samples.insert(file.audio.samples.end(), s.begin(), s.end());
      }
      file.reference.push_back({file.id, onset, static_cast<double>(file.audio.size()) / sr - onset, speaker_dir(spk[who])});
    }
    for (int k = 0; k < 2; ++k) {
      auto& e = file.enrollment[speaker_dir(spk[k])];
      for (std::size_t i = 0; i < enroll_utts; ++i) e.push_back(utts[k][utts[k].size() - 1 - i]->audio);
    }
    out.push_back(std::move(file));
  }
  return out;
}

struct DiarizationResult {
  DiarizationFile file;
  std::vector<DiarizationSegment> hypothesis;
  DERReport der;
};

struct ConditionDiarization {
  std::vector<DiarizationResult> files;
  DERReport mean;  ///< component-wise mean over files
};

inline ConditionDiarization diarize_condition(Model& m, const Corpus& corpus, const std::string& condition,
                                              const EvalConfig& e) {
  ConditionDiarization out;
  const std::uint64_t seed = e.seed * 1000003ULL + static_cast<std::uint64_t>(condition.back());
  std::size_t k = 0;
  for (DiarizationFile& f : make_diarization_files(corpus, condition, e.diarization_files, e.enroll_utts, seed)) {
    DiarizationResult r;
    const ReferenceCodes ref = build_reference_codes(m, f.enrollment, e.window);
    r.hypothesis = diarize(m, f.audio, ref, f.id, seed + (++k), e.window);
    r.der = der(r.hypothesis, f.reference);
    r.file = std::move(f);
    out.files.push_back(std::move(r));
  }
  const double n = static_cast<double>(out.files.size());
  for (const auto& r : out.files) {
    out.mean.false_alarm += r.der.false_alarm / n;
    out.mean.miss += r.der.miss / n;
    out.mean.speaker_error += r.der.speaker_error / n;
    out.mean.scored_seconds += r.der.scored_seconds;
  }
  out.mean.der = out.mean.false_alarm + out.mean.miss + out.mean.speaker_error;
  return out;
}

inline nlohmann::json to_json(const DERReport& r) {
  return {{"false_alarm", r.false_alarm},
          {"miss", r.miss},
          {"speaker_error", r.speaker_error},
          {"der", r.der},
          {"scored_seconds", r.scored_seconds}};
}

// ---------------------------------------------------------------- phone recognition

struct RecognitionResult {
  CodePhoneMap map;
  std::map<std::string, std::vector<CodeSequence>> codes;  ///< per test condition
  std::map<std::string, PERReport> per_condition;
  PERReport heldout;  ///< C3 and C4 pooled
};

/// Code-to-phone map fitted on the training split, then PER per test condition.
inline RecognitionResult recognize_corpus(Model& m, const Corpus& corpus) {
  const ModelConfig& mc = m.config();
  std::vector<std::vector<std::size_t>> train_codes;
  std::vector<std::vector<std::string>> train_phones;
  for (const Utterance& u : corpus.split("train")) {
    train_codes.push_back(m.local_codes(u.audio));
    train_phones.push_back(phone_symbols(utterance_frame_phones(u, mc), corpus.phones));
  }
  RecognitionResult r;
  r.map = build_code_to_phone_map(train_codes, train_phones);
  for (const std::string& c : test_conditions()) {
    PERReport total;
    for (const Utterance& u : corpus.split(c)) {
      CodeSequence seq{u.id, m.local_codes(u.audio), frame_ms(mc)};
      total += per(recognize_phones(seq.codes, r.map), phone_symbols(u.text, corpus.phones));
      r.codes[c].push_back(std::move(seq));
    }
    r.per_condition[c] = total;
    if (c == "C3" || c == "C4") r.heldout += total;
  }
  return r;
}

inline nlohmann::json to_json(const PERReport& r) {
  return {{"Sub", r.sub},
          {"Ins", r.ins},
          {"Del", r.del},
          {"Total", r.total},
          {"substitutions", r.substitutions},
          {"insertions", r.insertions},
          {"deletions", r.deletions},
          {"reference_length", r.reference_length}};
}

}  // namespace dualvq
