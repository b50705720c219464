#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dualvq/cli/config.hpp"
#include "dualvq/cli/experiment.hpp"
#include "dualvq/cli/svg.hpp"

namespace dualvq {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(is);
}

inline Corpus load_experiment_corpus(const ExperimentConfig& cfg) {
  if (!fs::exists(cfg.corpus_dir() / "manifest.json")) {
    throw std::runtime_error("no corpus at " + cfg.corpus_dir().string() + "; run gen-corpus first");
  }
  return load_corpus(cfg.corpus_dir());
}

inline Checkpoint load_experiment_checkpoint(const ExperimentConfig& cfg) {
  const fs::path p = cfg.checkpoint_path(variant_name(cfg.model));
  if (!fs::exists(p)) throw std::runtime_error("no checkpoint at " + p.string() + "; run train first");
  return load_checkpoint(p);
}

inline nlohmann::json loss_json(const LossBreakdown& l) {
  return {{"L_R", l.L_R},     {"L_VQl", l.L_VQl}, {"L_Cl", l.L_Cl},   {"L_VQg", l.L_VQg},
          {"L_Cg", l.L_Cg},   {"L_spk", l.L_spk}, {"L_adv", l.L_adv}, {"total", l.total}};
}

inline std::string loss_csv_header() { return "step,L_R,L_VQl,L_Cl,L_VQg,L_Cg,L_spk,L_adv,total"; }

inline std::string loss_csv_row(long step, const LossBreakdown& l) {
  std::ostringstream os;
  os.precision(10);
  os << step << ',' << l.L_R << ',' << l.L_VQl << ',' << l.L_Cl << ',' << l.L_VQg << ',' << l.L_Cg << ',' << l.L_spk
     << ',' << l.L_adv << ',' << l.total;
  return os.str();
}

// ---------------------------------------------------------------- gen-corpus

inline fs::path cmd_gen_corpus(const ExperimentConfig& cfg) {
  const Corpus c = build_corpus(cfg.corpus);
  write_corpus(c, cfg.corpus_dir());
  write_text(cfg.output_root() / "config.json", nlohmann::json(cfg).dump(2) + "\n");
  return cfg.corpus_dir();
}

// ---------------------------------------------------------------- train

/// Trains the configured variant and writes `model.ckpt`, `train_report.json`,
/// `loss_curve.csv` and `validation.csv` into the variant's run directory.
inline fs::path cmd_train(const ExperimentConfig& cfg, const std::optional<fs::path>& warm_start_from = std::nullopt) {
  const Corpus corpus = load_experiment_corpus(cfg);
  std::optional<Checkpoint> base;
  if (warm_start_from) {
    if (!cfg.model.dual()) throw std::invalid_argument("--warm-start needs a dual variant");
    base = load_checkpoint(*warm_start_from);
  }
  auto [ck, report] = train_variant(cfg, corpus, base ? &*base : nullptr);

  const std::string name = variant_name(cfg.model);
  const fs::path dir = cfg.run_dir(name);
  fs::create_directories(dir);
  save_checkpoint(ck, cfg.checkpoint_path(name));

  nlohmann::json j;
  j["variant"] = name;
  j["warm_start"] = warm_start_from ? warm_start_from->string() : "";
  j["steps"] = report.curve.size();
  j["best_step"] = report.best_step;
  j["best_valid"] = report.validation.empty() ? nlohmann::json(nullptr) : nlohmann::json(report.best_valid);
  nlohmann::json curve = nlohmann::json::array(), valid = nlohmann::json::array();
  std::string csv = loss_csv_header() + "\n";
  for (std::size_t i = 0; i < report.curve.size(); ++i) {
    curve.push_back(loss_json(report.curve[i]));
    csv += loss_csv_row(static_cast<long>(i + 1), report.curve[i]) + "\n";
  }
  std::string vcsv = loss_csv_header() + ",best_so_far\n";
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [step, l] : report.validation) {
    nlohmann::json v = loss_json(l);
    v["step"] = step;
    valid.push_back(v);
    best = std::min(best, l.total);
    std::ostringstream b;
    b.precision(10);
    b << best;
    vcsv += loss_csv_row(step, l) + "," + b.str() + "\n";
  }
  j["curve"] = curve;
  j["validation"] = valid;
  write_text(dir / "train_report.json", j.dump(2) + "\n");
  write_text(dir / "loss_curve.csv", csv);
  write_text(dir / "validation.csv", vcsv);
  return cfg.checkpoint_path(name);
}

// ---------------------------------------------------------------- eval

inline nlohmann::json cmd_eval(const ExperimentConfig& cfg) {
  const Corpus corpus = load_experiment_corpus(cfg);
  Checkpoint ck = load_experiment_checkpoint(cfg);
  const nlohmann::json report = evaluate(*ck.model, corpus, cfg.eval.window);
  const fs::path dir = cfg.run_dir(variant_name(cfg.model));
  write_text(dir / "eval.json", report.dump(2) + "\n");
  write_text(dir / "eval.csv", condition_report_csv(report));
  return report;
}

// ---------------------------------------------------------------- diarize

/// Writes hypothesis and reference RTTM per file plus `der.json` / `der.csv`.
inline nlohmann::json cmd_diarize(const ExperimentConfig& cfg) {
  if (!cfg.model.dual()) throw std::invalid_argument("diarize needs a variant with a global codebook");
  const Corpus corpus = load_experiment_corpus(cfg);
  Checkpoint ck = load_experiment_checkpoint(cfg);
  const fs::path dir = cfg.run_dir(variant_name(cfg.model)) / "diarization";
  std::map<std::string, nlohmann::json> per;
  nlohmann::json files = nlohmann::json::object();
  for (const std::string& c : test_conditions()) {
    const ConditionDiarization d = diarize_condition(*ck.model, corpus, c, cfg.eval);
    for (const DiarizationResult& r : d.files) {
      write_text(dir / (r.file.id + ".rttm"), format_rttm(r.hypothesis));
      write_text(dir / (r.file.id + ".ref.rttm"), format_rttm(r.file.reference));
      files[r.file.id] = to_json(r.der);
    }
    per[c] = to_json(d.mean);
  }
  nlohmann::json report = condition_report(per);
  write_text(dir / "der.json", report.dump(2) + "\n");
  write_text(dir / "der_files.json", files.dump(2) + "\n");
  write_text(dir / "der.csv", condition_report_csv(report));
  return report;
}

// ---------------------------------------------------------------- recognize

/// Writes code files per condition, the code-to-phone map and `per.json` / `per.csv`.
inline nlohmann::json cmd_recognize(const ExperimentConfig& cfg) {
  const Corpus corpus = load_experiment_corpus(cfg);
  Checkpoint ck = load_experiment_checkpoint(cfg);
  const RecognitionResult r = recognize_corpus(*ck.model, corpus);
  const fs::path dir = cfg.run_dir(variant_name(cfg.model)) / "recognition";
  std::map<std::string, nlohmann::json> per;
  for (const std::string& c : test_conditions()) {
    std::string lines;
    for (const CodeSequence& s : r.codes.at(c)) lines += format_codes(s) + "\n";
    write_text(dir / "codes" / (c + ".txt"), lines);
    per[c] = to_json(r.per_condition.at(c));
  }
  nlohmann::json map = nlohmann::json::object();
  for (const auto& [code, phone] : r.map.table) map[std::to_string(code)] = phone;
  write_text(dir / "code_to_phone.json", map.dump(2) + "\n");
  nlohmann::json report = condition_report(per);
  report["heldout"] = to_json(r.heldout);
  report["used_local_codes"] = r.map.coverage();
  write_text(dir / "per.json", report.dump(2) + "\n");
  nlohmann::json table = report;
  table.erase("heldout");
  table.erase("used_local_codes");
  write_text(dir / "per.csv", condition_report_csv(table));
  return report;
}

// ---------------------------------------------------------------- report

/// SVG plots: loss curves, code usage histograms and, for dual variants, a
/// diarization timeline of the first C1 file.
inline std::vector<fs::path> cmd_report(const ExperimentConfig& cfg) {
  const std::string name = variant_name(cfg.model);
  const fs::path dir = cfg.run_dir(name);
  const fs::path plots = dir / "plots";
  std::vector<fs::path> out;

  const nlohmann::json tr = read_json(dir / "train_report.json");
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::size_t step = 0;
  for (const auto& l : tr.at("curve")) {
    ++step;
    series["train total"].emplace_back(static_cast<double>(step), l.at("total").get<double>());
    series["train L_R"].emplace_back(static_cast<double>(step), l.at("L_R").get<double>());
  }
  for (const auto& l : tr.at("validation")) {
    series["valid total"].emplace_back(l.at("step").get<double>(), l.at("total").get<double>());
  }
  write_text(plots / "loss_curve.svg", svg::line_chart(name + " loss", series, "step", "loss"));
  out.push_back(plots / "loss_curve.svg");

  const Corpus corpus = load_experiment_corpus(cfg);
  Checkpoint ck = load_experiment_checkpoint(cfg);
  Model& m = *ck.model;
  std::vector<std::size_t> local, global;
  for (const std::string& c : test_conditions()) {
    for (const Utterance& u : corpus.split(c)) {
      for (std::size_t k : m.local_codes(u.audio)) local.push_back(k);
      if (m.config().dual()) {
        for (std::size_t k : window_codes(m, u.audio, cfg.eval.window)) global.push_back(k);
      }
    }
  }
  const CodebookStats ls = codebook_stats(local, m.config().local_K);
  write_text(plots / "local_code_usage.svg",
             svg::bar_chart(name + " local codes (" + std::to_string(ls.used) + " used)", ls.histogram, "code"));
  out.push_back(plots / "local_code_usage.svg");
  if (m.config().dual()) {
    const CodebookStats gs = codebook_stats(global, m.config().global_K);
    write_text(plots / "global_code_usage.svg",
               svg::bar_chart(name + " global codes (" + std::to_string(gs.used) + " used)", gs.histogram, "code"));
    out.push_back(plots / "global_code_usage.svg");

    EvalConfig one = cfg.eval;
    one.diarization_files = 1;
    const ConditionDiarization d = diarize_condition(m, corpus, "C1", one);
    const DiarizationResult& r = d.files.front();
    write_text(plots / "diarization_timeline.svg",
               svg::timeline(r.file.id + " (DER " + std::to_string(r.der.der).substr(0, 5) + ")",
                             {{"reference", r.file.reference}, {"hypothesis", r.hypothesis}}));
    out.push_back(plots / "diarization_timeline.svg");
  }
  return out;
}

}  // namespace dualvq
