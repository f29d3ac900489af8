#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace twist {

struct EvalPair {
  std::string hypothesis;
  std::vector<std::string> references;  // at least one
};

/// BLEU's internal tokenizer: whitespace split after separating ASCII
/// punctuation from words. Periods and commas between two digits stay
/// attached ("3.14", "1,000").
std::vector<std::string> bleu_tokenize(std::string_view text);

struct BleuStats {
  std::vector<std::size_t> matches;  // clipped, per order
  std::vector<std::size_t> totals;   // hypothesis n-grams, per order
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;  // closest reference length, shorter on ties
};

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, std::size_t max_n = 4);

/// Corpus BLEU in [0, 100]: geometric mean of clipped n-gram precisions times
/// the brevity penalty. Orders for which the hypotheses contain no n-grams
/// are left out of the mean. With `smoothing`, orders with zero matches use
/// (0 + 1) / (total + 1). An empty corpus scores 0.
double corpus_bleu(const std::vector<EvalPair>& pairs, std::size_t max_n = 4, bool smoothing = false);

struct RougeL {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// LCS-based scores on whitespace tokens. Per pair the reference with the
/// best F1 is used; results are averaged over the corpus.
RougeL rouge_l(const std::vector<EvalPair>& pairs);

}  // namespace twist
