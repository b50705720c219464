#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualvq {

inline const std::string kUnknownPhone = "<unk>";

struct CodePhoneMap {
  std::map<std::size_t, std::string> table;

  const std::string& lookup(std::size_t code) const {
    auto it = table.find(code);
    return it == table.end() ? kUnknownPhone : it->second;
  }
  std::size_t coverage() const { return table.size(); }
};

/// Maps every observed code to the phone it co-occurs with most often
/// (ties go to the lexicographically smallest phone).
inline CodePhoneMap build_code_to_phone_map(const std::vector<std::vector<std::size_t>>& codes,
                                            const std::vector<std::vector<std::string>>& frame_phones) {
  if (codes.empty()) throw std::invalid_argument("build_code_to_phone_map: no training sequences");
  if (codes.size() != frame_phones.size()) throw std::invalid_argument("build_code_to_phone_map: sequence count mismatch");
  std::map<std::size_t, std::map<std::string, std::size_t>> counts;
  for (std::size_t u = 0; u < codes.size(); ++u) {
    if (codes[u].size() != frame_phones[u].size()) {
      throw std::invalid_argument("build_code_to_phone_map: utterance " + std::to_string(u) + " has " +
                                  std::to_string(codes[u].size()) + " codes but " +
                                  std::to_string(frame_phones[u].size()) + " labels");
    }
    for (std::size_t f = 0; f < codes[u].size(); ++f) ++counts[codes[u][f]][frame_phones[u][f]];
  }
  CodePhoneMap m;
  for (const auto& [code, by_phone] : counts) {
    const std::string* best = nullptr;
    std::size_t top = 0;
    for (const auto& [phone, n] : by_phone) {  // ascending phone order, so strict > keeps the smallest on ties
      if (n > top) {
        top = n;
        best = &phone;
      }
    }
    m.table[code] = *best;
  }
  return m;
}

/// Per-frame lookup, then consecutive repeats collapsed and unknown frames dropped.
inline std::vector<std::string> recognize_phones(const std::vector<std::size_t>& codes, const CodePhoneMap& map) {
  std::vector<std::string> out;
  const std::string* prev = nullptr;
  for (std::size_t c : codes) {
    const std::string& p = map.lookup(c);
    if (prev == nullptr || p != *prev) {
      if (p != kUnknownPhone) out.push_back(p);
    }
    prev = &p;
  }
  return out;
}

struct PERReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;
  double sub = 0.0;  ///< percentages of the reference length
  double ins = 0.0;
  double del = 0.0;
  double total = 0.0;

  PERReport& operator+=(const PERReport& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    reference_length += o.reference_length;
    finalize();
    return *this;
  }

  void finalize() {
    const double n = static_cast<double>(reference_length);
    sub = n > 0 ? 100.0 * static_cast<double>(substitutions) / n : 0.0;
    ins = n > 0 ? 100.0 * static_cast<double>(insertions) / n : 0.0;
    del = n > 0 ? 100.0 * static_cast<double>(deletions) / n : 0.0;
    total = n > 0 ? 100.0 * static_cast<double>(substitutions + insertions + deletions) / n : 0.0;
  }
};

/// Unit-cost Levenshtein alignment. Counts come from one optimal path; the
/// backtrace prefers a substitution (or match), then an insertion, then a deletion.
template <class T>
PERReport per(const std::vector<T>& hyp, const std::vector<T>& ref) {
  if (ref.empty()) throw std::invalid_argument("per: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i][j - 1] + 1, d[i - 1][j] + 1});
    }
  }
  PERReport r;
  r.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
      --i;
      --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++r.insertions;
      --j;
    } else {
      ++r.deletions;
      --i;
    }
  }
  r.finalize();
  return r;
}

}  // namespace dualvq
