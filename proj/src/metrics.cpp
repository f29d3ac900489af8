#include "twist/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>

#include "twist/text.hpp"

namespace twist {

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

NGramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NGramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> bleu_tokenize(std::string_view text) {
  std::string spaced;
  spaced.reserve(text.size() * 2);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool numeric_separator = (c == '.' || c == ',') && i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) &&
                                   is_digit(text[i + 1]);
    if (is_punct(c) && !numeric_separator) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  return split_words(normalize_whitespace(spaced));
}

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, std::size_t max_n) {
  BleuStats stats;
  stats.matches.assign(max_n, 0);
  stats.totals.assign(max_n, 0);
  for (const auto& pair : pairs) {
    if (pair.references.empty()) throw std::invalid_argument("evaluation pair without a reference");
    const auto hyp = bleu_tokenize(pair.hypothesis);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : pair.references) refs.push_back(bleu_tokenize(r));

    stats.hyp_length += hyp.size();
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
      if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) closest = r.size();
    }
    stats.ref_length += closest;

    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hyp_counts = count_ngrams(hyp, n);
      NGramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [gram, c] : count_ngrams(r, n)) max_ref[gram] = std::max(max_ref[gram], c);
      for (const auto& [gram, c] : hyp_counts) {
        stats.totals[n - 1] += c;
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) stats.matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  return stats;
}

double corpus_bleu(const std::vector<EvalPair>& pairs, std::size_t max_n, bool smoothing) {
  if (pairs.empty() || max_n == 0) return 0.0;
  const auto stats = bleu_stats(pairs, max_n);
  if (stats.hyp_length == 0) return 0.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (stats.totals[n] == 0) continue;
    double precision;
    if (stats.matches[n] == 0) {
      if (!smoothing) return 0.0;
      precision = 1.0 / static_cast<double>(stats.totals[n] + 1);
    } else {
      precision = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
    }
    log_sum += std::log(precision);
    ++orders;
  }
  const double hyp = static_cast<double>(stats.hyp_length);
  const double ref = static_cast<double>(stats.ref_length);
  const double brevity = hyp < ref ? std::exp(1.0 - ref / hyp) : 1.0;
  return 100.0 * brevity * std::exp(log_sum / static_cast<double>(orders));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> row(b.size() + 1, 0), prev(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::swap(row, prev);
    for (std::size_t j = 1; j <= b.size(); ++j)
      row[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
  }
  return a.empty() ? 0 : row[b.size()];
}

RougeL rouge_l(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("ROUGE-L needs at least one pair");
  std::vector<double> recalls, precisions, f1s;
  for (const auto& pair : pairs) {
    if (pair.references.empty()) throw std::invalid_argument("evaluation pair without a reference");
    const auto hyp = split_words(normalize_whitespace(pair.hypothesis));
    RougeL best;
    bool first = true;
    for (const auto& r : pair.references) {
      const auto ref = split_words(normalize_whitespace(r));
      const double lcs = static_cast<double>(lcs_length(hyp, ref));
      RougeL s;
      s.recall = ref.empty() ? 0.0 : lcs / static_cast<double>(ref.size());
      s.precision = hyp.empty() ? 0.0 : lcs / static_cast<double>(hyp.size());
      s.f1 = s.recall + s.precision > 0.0 ? 2.0 * s.recall * s.precision / (s.recall + s.precision) : 0.0;
      if (first || s.f1 > best.f1) best = s;
      first = false;
    }
    recalls.push_back(best.recall);
    precisions.push_back(best.precision);
    f1s.push_back(best.f1);
  }
  // Summing in sorted order makes the mean independent of pair order.
  const auto mean = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
  };
  return {mean(recalls), mean(precisions), mean(f1s)};
}

}  // namespace twist
